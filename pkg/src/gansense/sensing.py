"""Learning-phase labelling, sample construction, the detector network and its metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Protocol

import numpy as np

from gansense.channel import BUSY, IDLE, ChannelModel, OccupancyProcess, draw_occupancy, sense_slots
from gansense.nn import Batch, NetworkSpec, NetworkState, OptimizerSpec, one_hot, train


class SensingError(ValueError):
    pass


class LabelSource(str, Enum):
    GROUND_TRUTH = "ground-truth"
    PROBE = "probe-inferred"


def exact_fraction(x) -> Fraction:
    """Decimal-exact rational for ints, floats (via repr) and Fractions."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(repr(float(x)))


def floor_product(*factors, divisor=1) -> int:
    """``floor(prod(factors) / divisor)`` without binary rounding surprises."""
    value = Fraction(1)
    for f in factors:
        value *= exact_fraction(f)
    return math.floor(value / exact_fraction(divisor))


@dataclass(frozen=True)
class FrameConfig:
    T: int = 20000
    S: int = 20
    F: int = 5
    L: int = 25
    p_s: float = 0.85
    p_B: float = 0.5
    threshold: float = 5.0
    label_source: LabelSource = LabelSource.PROBE

    def __post_init__(self):
        object.__setattr__(self, "label_source", LabelSource(self.label_source))
        if self.T < 1 or self.S < 1 or self.L < 0:
            raise SensingError("T and S must be positive and L non-negative")
        if self.L * self.S > self.T:
            raise SensingError(f"learning phase L*S={self.L * self.S} exceeds the frame T={self.T}")
        if not 1 <= self.F <= self.S:
            raise SensingError(f"need 1 <= F <= S, got F={self.F}, S={self.S}")
        if not 0.0 < self.p_s < 1.0:
            raise SensingError(f"p_s must be in (0, 1), got {self.p_s}")
        if not 0.0 <= self.p_B <= 1.0:
            raise SensingError(f"p_B must be in [0, 1], got {self.p_B}")
        if self.sensing_per_slot < self.F:
            raise SensingError("a learning slot must hold at least F sensing values")

    @property
    def sensing_per_slot(self) -> int:
        """Sensing values collected in one learning slot, floor(S * p_s)."""
        return floor_product(self.S, self.p_s)

    @property
    def probe_units(self) -> int:
        return self.S - self.sensing_per_slot

    @property
    def slots_per_frame(self) -> int:
        return self.T // self.S

    @property
    def transmission_slots(self) -> int:
        return self.slots_per_frame - self.L

    def with_learning(self, L: int) -> "FrameConfig":
        return replace(self, L=L)


@dataclass(frozen=True)
class LabeledSample:
    values: np.ndarray
    label: int
    label_source: LabelSource = LabelSource.PROBE
    synthetic: bool = False


@dataclass
class SampleSet:
    """Samples stored column-wise: ``values`` is ``(N, F)``."""

    values: np.ndarray
    labels: np.ndarray
    synthetic: np.ndarray = None
    label_source: LabelSource = LabelSource.PROBE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values.reshape(0, 0) if self.values.size == 0 else self.values.reshape(1, -1)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.synthetic is None:
            self.synthetic = np.zeros(self.labels.shape[0], dtype=bool)
        self.synthetic = np.asarray(self.synthetic, dtype=bool).reshape(-1)
        if not (self.values.shape[0] == self.labels.shape[0] == self.synthetic.shape[0]):
            raise SensingError("values, labels and synthetic flags disagree in length")
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise SensingError("sample values must be finite")

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __iter__(self) -> Iterator[LabeledSample]:
        for v, lab, syn in zip(self.values, self.labels, self.synthetic):
            yield LabeledSample(v, int(lab), self.label_source, bool(syn))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def count(self, label: int) -> int:
        return int(np.sum(self.labels == label))

    @classmethod
    def concat(cls, *sets: "SampleSet") -> "SampleSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            return cls(np.empty((0, 0)), np.empty(0, dtype=np.int64))
        return cls(np.vstack([s.values for s in sets]),
                   np.concatenate([s.labels for s in sets]),
                   np.concatenate([s.synthetic for s in sets]),
                   sets[0].label_source)


@dataclass(frozen=True)
class ClassifierMetrics:
    p_fa: float
    p_md: float
    accuracy: float
    n_idle: int
    n_busy: int
    false_alarms: int
    misdetections: int


class Classifier(Protocol):
    def predict(self, values: np.ndarray) -> np.ndarray: ...


@dataclass
class NetworkClassifier:
    """Busy/idle decision = argmax of the softmax output (class 1 is busy)."""

    state: NetworkState

    def predict(self, values) -> np.ndarray:
        return np.argmax(self.state.predict(values), axis=1).astype(np.int64)


@dataclass(frozen=True)
class ThresholdDetector:
    """Declares busy when the mean of a sample exceeds ``threshold``."""

    threshold: float = 1.5

    def predict(self, values) -> np.ndarray:
        return (np.asarray(values).mean(axis=1) > self.threshold).astype(np.int64)


@dataclass(frozen=True)
class ConstantClassifier:
    label: int = BUSY

    def predict(self, values) -> np.ndarray:
        return np.full(np.asarray(values).shape[0], self.label, dtype=np.int64)


@dataclass(frozen=True)
class TrainingConfig:
    """Detector architecture and schedule; defaults follow the classifier table."""

    hidden: tuple[int, ...] = (128, 64, 32)
    dropout: float = 0.2
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-7

    def network_spec(self, input_width: int) -> NetworkSpec:
        return NetworkSpec.mlp(
            [input_width, *self.hidden, 2], "relu", "softmax", dropout=self.dropout,
            loss="categorical-cross-entropy",
            optimizer=OptimizerSpec.rmsprop(self.learning_rate, self.rho, self.epsilon))


def simulate_probes(config: FrameConfig, truths, seed) -> np.ndarray:
    """Successful probe units per learning slot.

    A probe unit succeeds when the incumbent is idle and the receiver noise
    stays at or below the threshold.
    """
    truths = np.asarray(truths, dtype=np.int64)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = rng.standard_normal((truths.shape[0], config.probe_units))
    ok = (noise <= config.threshold) & (truths[:, None] == IDLE)
    return ok.sum(axis=1)


def acquire_labels(config: FrameConfig, truths, probe_outcomes) -> np.ndarray:
    """Idle when at least half of a slot's probes got through, else busy."""
    truths = np.asarray(truths, dtype=np.int64)
    if config.label_source is LabelSource.GROUND_TRUTH:
        return truths.copy()
    successes = np.asarray(probe_outcomes, dtype=np.int64)
    if successes.shape != truths.shape:
        raise SensingError("need one probe outcome per learning slot")
    if config.probe_units == 0:
        raise SensingError("no probe time left in a learning slot")
    return np.where(2 * successes >= config.probe_units, IDLE, BUSY).astype(np.int64)


def chunk_class(values, F: int, limit: int | None = None) -> np.ndarray:
    """Pool slot rows in order and cut consecutive F-value samples.

    Values that do not fill a final sample are dropped.
    """
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    count = flat.shape[0] // F
    if limit is not None:
        count = min(count, limit)
    return flat[:count * F].reshape(count, F)


def build_samples(config: FrameConfig, slot_values, labels, synthetic: bool = False) -> SampleSet:
    """Group learning-slot sensing values by class into F-sized samples."""
    slot_values = np.asarray(slot_values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if slot_values.ndim != 2 or slot_values.shape[0] == 0:
        raise SensingError("build_samples needs at least one slot")
    if slot_values.shape[0] != labels.shape[0]:
        raise SensingError("one label per slot required")
    parts, part_labels = [], []
    for label in (IDLE, BUSY):
        chunks = chunk_class(slot_values[labels == label], config.F)
        parts.append(chunks)
        part_labels.append(np.full(chunks.shape[0], label, dtype=np.int64))
    values = np.vstack(parts) if any(p.size for p in parts) else np.empty((0, config.F))
    labels_out = np.concatenate(part_labels)
    return SampleSet(values, labels_out, np.full(labels_out.shape[0], synthetic), config.label_source)


def train_classifier(samples: SampleSet, training: TrainingConfig = TrainingConfig(), seed: int = 0) -> NetworkClassifier:
    if samples.count(IDLE) == 0 or samples.count(BUSY) == 0:
        raise SensingError("training data must contain both busy and idle samples")
    spec = training.network_spec(samples.width)
    state = train(spec, Batch(samples.values, one_hot(samples.labels)),
                  epochs=training.epochs, batch_size=training.batch_size, seed=seed)
    return NetworkClassifier(state)


def evaluate(classifier: Classifier, samples: SampleSet) -> ClassifierMetrics:
    idle = samples.labels == IDLE
    busy = samples.labels == BUSY
    n_idle, n_busy = int(idle.sum()), int(busy.sum())
    if n_idle == 0 or n_busy == 0:
        raise SensingError("evaluation set must contain both classes")
    pred = np.asarray(classifier.predict(samples.values))
    fa = int(np.sum(pred[idle] == BUSY))
    md = int(np.sum(pred[busy] == IDLE))
    return ClassifierMetrics(fa / n_idle, md / n_busy, 1.0 - (fa + md) / (n_idle + n_busy),
                             n_idle, n_busy, fa, md)


def make_eval_set(model: ChannelModel, per_class: int, seed, F: int = 5) -> SampleSet:
    """``per_class`` idle then ``per_class`` busy samples, one slot each."""
    if per_class < 1:
        raise SensingError("per_class must be >= 1")
    truths = np.repeat(np.array([IDLE, BUSY], dtype=np.int64), per_class)
    values = sense_slots(model, truths, F, seed)
    return SampleSet(values, truths, label_source=LabelSource.GROUND_TRUTH)


@dataclass
class LearningPhase:
    """Raw outcome of the learning slots of one frame."""

    truths: np.ndarray
    labels: np.ndarray
    slot_values: np.ndarray
    samples: SampleSet = field(repr=False)

    def slots_of(self, label: int) -> np.ndarray:
        return self.slot_values[self.labels == label]


def run_learning_phase(config: FrameConfig, model: ChannelModel, seed, frame_gain: float | None = None) -> LearningPhase:
    rng = np.random.default_rng(seed)
    occ_seed, sense_seed, probe_seed = rng.spawn(3)
    truths = draw_occupancy(OccupancyProcess(config.p_B), config.L, occ_seed)
    values = sense_slots(model, truths, config.sensing_per_slot, sense_seed, frame_gain)
    labels = acquire_labels(config, truths, simulate_probes(config, truths, probe_seed))
    samples = build_samples(config, values, labels) if config.L else SampleSet(
        np.empty((0, config.F)), np.empty(0, dtype=np.int64))
    return LearningPhase(truths, labels, values, samples)


SAMPLE_FIELDS = ("label", "synthetic")


def write_samples_csv(path, samples: SampleSet) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"v{i}" for i in range(samples.width)] + list(SAMPLE_FIELDS))
        for v, lab, syn in zip(samples.values, samples.labels, samples.synthetic):
            w.writerow([f"{x:.10g}" for x in v] + [int(lab), int(syn)])


def read_samples_csv(path) -> SampleSet:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return SampleSet(np.empty((0, 0)), np.empty(0, dtype=np.int64))
    cols = [k for k in rows[0] if k.startswith("v")]
    return SampleSet(np.array([[float(r[c]) for c in cols] for r in rows]),
                     np.array([int(r["label"]) for r in rows]),
                     np.array([r["synthetic"] == "1" for r in rows]))


METRIC_FIELDS = ("p_FA", "p_MD", "accuracy", "n_idle", "n_busy", "false_alarms", "misdetections")


def write_metrics_csv(path, records) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_FIELDS)
        for m in records:
            w.writerow([f"{m.p_fa:.10g}", f"{m.p_md:.10g}", f"{m.accuracy:.10g}",
                        m.n_idle, m.n_busy, m.false_alarms, m.misdetections])
