"""Per-class GAN that synthesises learning-slot sensing vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gansense.channel import BUSY, IDLE
from gansense.nn import NetworkSpec, NetworkState, OptimizerSpec, initialize
from gansense.nn import _kernels as K
from gansense.sensing import SampleSet, SensingError, chunk_class, floor_product


class GanError(ValueError):
    pass


@dataclass(frozen=True)
class GanSpec:
    """Generator ``latent -> 3x128 -> width`` and discriminator ``width -> 3x128 -> 1``.

    Both outputs are sigmoid; generator outputs live in (0, 1) and are mapped
    back to sensing values by a :class:`ValueScaler`. Hidden layers default to
    ReLU and Adam to ``beta1=0.5``: all-sigmoid stacks and ``beta1=0.9``
    routinely collapse or saturate on a handful of training slots. Real values
    are scaled into ``[scaler_margin, 1 - scaler_margin]``; 0.25 keeps the
    observed extremes off the flat ends of the output sigmoid, which would
    otherwise thin out the generated tails.
    """

    output_width: int = 17
    latent_dim: int = 16
    hidden: tuple[int, ...] = (128, 128, 128)
    hidden_activation: str = "relu"
    real_label: float = 1.0
    iterations: int = 2000
    batch_size: int = 32
    learning_rate: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    scaler_margin: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.scaler_margin < 0.5:
            raise GanError("scaler_margin must be in [0, 0.5)")
        if self.output_width < 1 or self.latent_dim < 1:
            raise GanError("widths must be positive")
        if self.iterations < 0 or self.batch_size < 1:
            raise GanError("iterations must be >= 0 and batch_size >= 1")

    @property
    def optimizer(self) -> OptimizerSpec:
        return OptimizerSpec.adam(self.learning_rate, self.beta1, self.beta2, self.epsilon)

    @property
    def generator(self) -> NetworkSpec:
        return NetworkSpec.mlp([self.latent_dim, *self.hidden, self.output_width], self.hidden_activation, "sigmoid",
                               loss="sigmoid-cross-entropy", optimizer=self.optimizer)

    @property
    def discriminator(self) -> NetworkSpec:
        return NetworkSpec.mlp([self.output_width, *self.hidden, 1], self.hidden_activation, "sigmoid",
                               loss="sigmoid-cross-entropy", optimizer=self.optimizer)


@dataclass(frozen=True)
class ValueScaler:
    """Affine map of ``[low, high]`` onto ``[margin, 1 - margin]``."""

    low: float
    high: float
    margin: float = 0.1

    @classmethod
    def fit(cls, values, margin: float = 0.1) -> "ValueScaler":
        values = np.asarray(values, dtype=np.float64)
        lo, hi = float(values.min()), float(values.max())
        if hi <= lo:
            hi = lo + 1.0
        return cls(lo, hi, margin)

    @property
    def _scale(self) -> float:
        return (1.0 - 2.0 * self.margin) / (self.high - self.low)

    def forward(self, x):
        return self.margin + (np.asarray(x, dtype=np.float64) - self.low) * self._scale

    def inverse(self, y):
        return self.low + (np.asarray(y, dtype=np.float64) - self.margin) / self._scale


@dataclass(frozen=True)
class AugmentPlan:
    """``n`` synthetic slots per class, worth ``floor(n*S*p_s/F)`` samples each."""

    n: int
    S: int = 20
    p_s: float = 0.85
    F: int = 5

    def __post_init__(self):
        if self.n < 0:
            raise GanError("n must be >= 0")

    @property
    def synthetic_sample_count(self) -> int:
        return floor_product(self.n, self.S, self.p_s, divisor=self.F)

    def slots_to_generate(self, slot_width: int) -> int:
        """Generated vectors needed to cut ``synthetic_sample_count`` samples."""
        return math.ceil(self.synthetic_sample_count * self.F / slot_width)


@dataclass
class GanModel:
    spec: GanSpec
    generator: NetworkState
    discriminator: NetworkState
    scaler: ValueScaler
    d_losses: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    g_losses: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def discriminate(self, slots) -> np.ndarray:
        """Probability that each slot vector is real."""
        return self.discriminator.predict(self.scaler.forward(slots))[:, 0]


def train_gan(spec: GanSpec, real_slots, seed) -> GanModel:
    """Fit one GAN to the real slot vectors of a single class."""
    real = np.asarray(real_slots, dtype=np.float64)
    if real.ndim != 2 or real.shape[0] == 0:
        raise GanError("train_gan needs at least one real slot")
    if real.shape[1] != spec.output_width:
        raise GanError(f"slots have {real.shape[1]} values, GAN expects {spec.output_width}")
    if not np.all(np.isfinite(real)):
        raise GanError("real slots must be finite")
    ss = np.random.SeedSequence(seed)
    g_seed, d_seed, run_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    gen = initialize(spec.generator, g_seed)
    disc = initialize(spec.discriminator, d_seed)
    scaler = ValueScaler.fit(real, spec.scaler_margin)
    model = GanModel(spec, gen, disc, scaler)
    if spec.iterations == 0:
        return model
    scaled = np.ascontiguousarray(scaler.forward(real))
    rng = np.random.default_rng(run_seed)
    it, b = spec.iterations, spec.batch_size
    real_idx = rng.integers(0, real.shape[0], (it, b))
    noise_d = rng.standard_normal((it, b, spec.latent_dim))
    noise_g = rng.standard_normal((it, b, spec.latent_dim))
    gp, dp = gen.plan, disc.plan
    d_losses, g_losses, step = K.gan_train(
        gen.params, gen.first_moment, gen.second_moment, gp.dims, gp.acts, gp.keep, gp.w_off, gp.b_off,
        disc.params, disc.first_moment, disc.second_moment, dp.dims, dp.acts, dp.keep, dp.w_off, dp.b_off,
        0, scaled, real_idx, noise_d, noise_g, spec.real_label,
        spec.learning_rate, spec.beta1, spec.beta2, spec.epsilon)
    gen.step = disc.step = int(step)
    if not (np.all(np.isfinite(gen.params)) and np.all(np.isfinite(disc.params))):
        raise GanError("GAN training diverged")
    model.d_losses, model.g_losses = d_losses, g_losses
    return model


def generate_slots(model: GanModel, n: int, seed) -> np.ndarray:
    """``n`` synthetic slot vectors in the sensing-value domain."""
    if n < 0:
        raise GanError("n must be >= 0")
    if n == 0:
        return np.empty((0, model.spec.output_width))
    z = np.random.default_rng(seed).standard_normal((n, model.spec.latent_dim))
    return model.scaler.inverse(model.generator.predict(z))


def discriminator_accuracy(model: GanModel, real_slots, synthetic_slots) -> float:
    """Fraction of a real/synthetic mix the discriminator labels correctly."""
    real_ok = model.discriminate(real_slots) > 0.5
    fake_ok = model.discriminate(synthetic_slots) <= 0.5
    return float((real_ok.sum() + fake_ok.sum()) / (real_ok.size + fake_ok.size))


def augment(real_samples: SampleSet, synthetic_slots: dict[int, np.ndarray], F: int,
            per_class: int | None = None) -> SampleSet:
    """Append chunked synthetic slots (flagged ``synthetic``) to the real samples.

    Synthetic slots are cut into F-value samples exactly like real ones; with
    ``per_class`` set, exactly that many samples are taken for each class that
    has synthetic slots.
    """
    parts = [real_samples]
    for label in (IDLE, BUSY):
        slots = synthetic_slots.get(label)
        if slots is None or np.size(slots) == 0:
            continue
        chunks = chunk_class(slots, F, per_class)
        if per_class is not None and chunks.shape[0] < per_class:
            raise SensingError(f"{chunks.shape[0]} synthetic samples available, {per_class} requested")
        parts.append(SampleSet(chunks, np.full(chunks.shape[0], label), np.ones(chunks.shape[0], dtype=bool),
                               real_samples.label_source))
    return SampleSet.concat(*parts)
