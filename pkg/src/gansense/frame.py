"""One coherence frame: learning phase, optional GAN augmentation, transmission phase."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from gansense.channel import (
    BUSY,
    IDLE,
    ChannelModel,
    FadingGranularity,
    OccupancyProcess,
    TransmissionModel,
    draw_occupancy,
    sense_slots,
    transmission_failure_probability,
)
from gansense.gan import AugmentPlan, GanModel, GanSpec, augment, generate_slots, train_gan
from gansense.sensing import (
    Classifier,
    ClassifierMetrics,
    ConstantClassifier,
    FrameConfig,
    SensingError,
    TrainingConfig,
    evaluate,
    make_eval_set,
    run_learning_phase,
    train_classifier,
)


def analytic_throughput(config: FrameConfig, p_fa: float, p_n: float, learning_slots: int | None = None) -> float:
    """Expected useful transmission time in a frame.

    ``(T - L*S) (1 - p_B) (1 - p_FA) ((S - F) / S) (1 - p_N)``; pass
    ``learning_slots`` to override ``config.L`` (e.g. the shortened GAN phase).
    """
    L = config.L if learning_slots is None else learning_slots
    if L * config.S > config.T:
        raise SensingError("learning phase longer than the frame")
    for name, p in (("p_fa", p_fa), ("p_n", p_n)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {p}")
    return ((config.T - L * config.S) * (1.0 - config.p_B) * (1.0 - p_fa)
            * ((config.S - config.F) / config.S) * (1.0 - p_n))


@dataclass(frozen=True)
class GanPlan:
    n: int
    spec: GanSpec | None = None


@dataclass(frozen=True)
class ThroughputReport:
    channel: str
    L: int
    n: int
    seed: int
    analytic_r: float
    empirical_r: float
    p_FA: float
    p_MD: float
    p_N: float
    transmission_slots: int
    idle_transmissions: int
    collisions: int
    busy_slots: int
    idle_slots: int
    inframe_p_FA: float
    inframe_p_MD: float
    learning_time: int
    transmission_time: int
    degenerate: bool = False

    CSV_FIELDS = ("channel", "L", "n", "seed", "analytic_r", "empirical_r", "p_FA", "p_MD", "p_N")

    def csv_row(self) -> list[str]:
        return [self.channel, str(self.L), str(self.n), str(self.seed),
                *(f"{getattr(self, k):.10g}" for k in self.CSV_FIELDS[4:])]

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(self.CSV_FIELDS)
        w.writerow(self.csv_row())
        return buf.getvalue()

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class FrameSeeds:
    """Independent random streams of one frame.

    ``learning`` drives occupancy, sensing and probes of the learning slots
    and the GAN fit; the others belong to the cell being simulated.
    """

    master: int
    learning: np.random.SeedSequence
    training: np.random.SeedSequence
    generation: np.random.SeedSequence
    evaluation: np.random.SeedSequence
    transmission: np.random.SeedSequence
    gan: dict[int, int] = field(default_factory=dict)

    @classmethod
    def derive(cls, master: int, learning_seed: int | None = None, eval_seed: int | None = None) -> "FrameSeeds":
        training, generation, evaluation, transmission, learning = np.random.SeedSequence(master).spawn(5)
        if learning_seed is not None:
            learning = np.random.SeedSequence(learning_seed)
        if eval_seed is not None:
            evaluation = np.random.SeedSequence(eval_seed)
        phase, g_idle, g_busy, fading = learning.spawn(4)
        seeds = cls(master, phase, training, generation, evaluation, transmission)
        seeds.gan = {IDLE: int(g_idle.generate_state(1)[0]), BUSY: int(g_busy.generate_state(1)[0])}
        seeds.fading = fading
        return seeds


def _int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def fit_gans(learning, config: FrameConfig, spec: GanSpec, seeds: FrameSeeds) -> dict[int, GanModel]:
    """One GAN per class that has at least one learning slot."""
    models = {}
    for label in (IDLE, BUSY):
        slots = learning.slots_of(label)
        if slots.shape[0]:
            models[label] = train_gan(spec, slots, seeds.gan[label])
    return models


def run_frame(config: FrameConfig, channel: ChannelModel, gan_plan: GanPlan | None = None,
              master_seed: int = 0, *, training: TrainingConfig = TrainingConfig(),
              learning_seed: int | None = None, eval_seed: int | None = None,
              eval_per_class: int = 2000, classifier: Classifier | None = None,
              transmission: TransmissionModel | None = None,
              gan_cache: dict | None = None) -> tuple[ThroughputReport, ClassifierMetrics]:
    """Simulate one frame and report analytic and counted throughput.

    ``config.L`` is the number of real learning slots (the shortened phase when
    ``gan_plan`` is given). ``classifier`` bypasses learning entirely.
    ``gan_cache`` memoises fitted GANs by learning seed, so cells that share a
    learning phase but differ in ``n`` fit the GANs once.
    """
    seeds = FrameSeeds.derive(master_seed, learning_seed, eval_seed)
    tx_model = transmission or TransmissionModel(config.threshold, channel.noise_std)
    frame_gain = None
    if channel.fading_granularity is FadingGranularity.PER_FRAME:
        frame_gain = float(channel.draw_gains(1, np.random.default_rng(seeds.fading))[0])
    n_syn = gan_plan.n if gan_plan else 0
    degenerate = False

    if classifier is None:
        learning = run_learning_phase(config, channel, seeds.learning, frame_gain)
        samples = learning.samples
        if gan_plan is not None and gan_plan.n > 0:
            spec = gan_plan.spec or GanSpec(output_width=config.sensing_per_slot)
            key = (learning_seed if learning_seed is not None else master_seed, config, channel, spec)
            if gan_cache is not None and key in gan_cache:
                models = gan_cache[key]
            else:
                models = fit_gans(learning, config, spec, seeds)
                if gan_cache is not None:
                    gan_cache[key] = models
            plan = AugmentPlan(gan_plan.n, config.S, config.p_s, config.F)
            gen_rng = np.random.default_rng(seeds.generation)
            synthetic = {}
            for label, model in models.items():
                k = plan.slots_to_generate(model.spec.output_width)
                synthetic[label] = generate_slots(model, k, gen_rng.spawn(1)[0])
            samples = augment(samples, synthetic, config.F, plan.synthetic_sample_count)
        if samples.count(IDLE) and samples.count(BUSY):
            classifier = train_classifier(samples, training, _int_seed(seeds.training))
        else:
            # a single observed class cannot be learned; stay off the channel
            classifier = ConstantClassifier(BUSY)
            degenerate = True

    eval_set = make_eval_set(channel, eval_per_class, seeds.evaluation, config.F)
    metrics = evaluate(classifier, eval_set)

    rng = np.random.default_rng(seeds.transmission)
    n_tx = config.transmission_slots
    truths = draw_occupancy(OccupancyProcess(config.p_B), n_tx, rng)
    values = sense_slots(channel, truths, config.F, rng, frame_gain)
    decisions = np.asarray(classifier.predict(values)) if n_tx else np.empty(0, dtype=np.int64)
    tx_units = config.S - config.F
    p_n = transmission_failure_probability(tx_model, tx_units) if tx_units else 0.0
    transmit = decisions == IDLE
    good = transmit & (truths == IDLE)
    delivered = good & (rng.random(n_tx) >= p_n)
    idle_slots = int(np.sum(truths == IDLE))
    busy_slots = n_tx - idle_slots
    collisions = int(np.sum(transmit & (truths == BUSY)))

    report = ThroughputReport(
        channel=channel.kind.value,
        L=config.L,
        n=n_syn,
        seed=master_seed,
        analytic_r=analytic_throughput(config, metrics.p_fa, p_n),
        empirical_r=float(tx_units * delivered.sum()),
        p_FA=metrics.p_fa,
        p_MD=metrics.p_md,
        p_N=p_n,
        transmission_slots=n_tx,
        idle_transmissions=int(good.sum()),
        collisions=collisions,
        busy_slots=busy_slots,
        idle_slots=idle_slots,
        inframe_p_FA=float(np.sum(~transmit & (truths == IDLE)) / idle_slots) if idle_slots else 0.0,
        inframe_p_MD=collisions / busy_slots if busy_slots else 0.0,
        learning_time=config.L * config.S,
        transmission_time=n_tx * config.S,
        degenerate=degenerate,
    )
    return report, metrics
