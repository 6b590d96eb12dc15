"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that ``conftest.py`` prints in the
terminal summary. The sweep-based criteria (5-9) share one set of runs;
set ``GANSENSE_ACCEPTANCE_DIR`` to keep the trial CSVs between sessions
(sweeps resume), otherwise a fresh temporary directory is used.
"""

from __future__ import annotations

import filecmp
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest

from gansense.channel import ChannelKind, ChannelModel, TransmissionModel, sense_slots, transmission_failure_probability
from gansense.frame import analytic_throughput
from gansense.gan import AugmentPlan, augment
from gansense.harness import (
    Mode,
    SweepSpec,
    aggregate,
    best_overall,
    improvement_curve,
    reference_cells,
    run_sweep,
    select_best,
    trials_path,
)
from gansense.nn import Batch, NetworkSpec, OptimizerSpec, forward, initialize, loss_and_gradient, one_hot
from gansense.sensing import FrameConfig, SampleSet, chunk_class

from .oracles import central_difference

RESULTS: list[str] = []
SEEDS = 10


def record(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory) -> Path:
    env = os.environ.get("GANSENSE_ACCEPTANCE_DIR")
    if env:
        path = Path(env)
        path.mkdir(parents=True, exist_ok=True)
        return path
    return tmp_path_factory.mktemp("acceptance")


def _jobs() -> int:
    return int(os.environ.get("GANSENSE_JOBS", os.cpu_count() or 1))


def _sweep(workdir: Path, channel: ChannelKind, mode: Mode, seeds: int = SEEDS, cells=None, sub: str = "main"):
    out = workdir / sub
    spec = SweepSpec(channel, mode, cells or reference_cells(channel, mode), seeds=seeds,
                     output=trials_path(out, channel, mode))
    return run_sweep(spec, jobs=_jobs())


@pytest.fixture(scope="module")
def awgn(workdir):
    plain = _sweep(workdir, ChannelKind.AWGN, Mode.NO_GAN)
    gan = _sweep(workdir, ChannelKind.AWGN, Mode.GAN)
    return aggregate(gan, plain)


@pytest.fixture(scope="module")
def rayleigh(workdir):
    plain = _sweep(workdir, ChannelKind.RAYLEIGH, Mode.NO_GAN)
    gan = _sweep(workdir, ChannelKind.RAYLEIGH, Mode.GAN)
    return aggregate(gan, plain)


def test_criterion_01_formula_exactness():
    cfg = FrameConfig(L=15)
    r = analytic_throughput(cfg, 0.0, 0.0)
    r_fa = analytic_throughput(cfg, 1.0, 0.0)
    r_full = analytic_throughput(FrameConfig(L=1000), 0.0, 0.0)
    ok = r == 7387.5 and r_fa == 0.0 and r_full == 0.0
    record(1, ok, f"r={r!r}, r(p_FA=1)={r_fa!r}, r(L*S=T)={r_full!r}")
    assert ok


def test_criterion_02_synthetic_count():
    t0 = time.perf_counter()
    cfg = FrameConfig()
    empty = SampleSet(np.empty((0, cfg.F)), np.empty(0, dtype=int))
    counts = {}
    for n in (15, 5):
        plan = AugmentPlan(n, cfg.S, cfg.p_s, cfg.F)
        slots = np.zeros((plan.slots_to_generate(cfg.sensing_per_slot), cfg.sensing_per_slot))
        out = augment(empty, {0: slots, 1: slots + 1}, cfg.F, plan.synthetic_sample_count)
        counts[n] = (out.count(0), out.count(1))
    rng = random.Random(20260415)
    failures = 0
    for _ in range(1000):
        n, S, F = rng.randint(0, 500), rng.randint(1, 60), rng.randint(1, 20)
        p_s = rng.randint(1, 100) / 100
        plan = AugmentPlan(n, S, p_s, F)
        # exact integer oracle: p_s = k/100, so floor(n*S*k / (100*F))
        expected = (n * S * round(p_s * 100)) // (100 * F)
        width = max(1, int(S * p_s))
        slots = np.zeros((plan.slots_to_generate(width), width))
        got = chunk_class(slots, F, expected).shape[0] if expected else 0
        failures += plan.synthetic_sample_count != expected or got != expected
    elapsed = time.perf_counter() - t0
    ok = counts == {15: (51, 51), 5: (17, 17)} and failures == 0 and elapsed < 1.0
    record(2, ok, f"per-class counts n=15 {counts[15]}, n=5 {counts[5]}; "
                  f"{failures} sweep failures; {elapsed:.2f}s")
    assert ok


def _random_net(rng: np.random.Generator, case: int):
    depth = int(rng.integers(1, 4))
    widths = [int(rng.integers(2, 6)) for _ in range(depth + 1)]
    hidden = ("relu", "sigmoid", "linear")[case % 3]
    if case % 2:
        widths[-1] = max(widths[-1], 2)
        spec = NetworkSpec.mlp(widths, hidden, "softmax", loss="categorical-cross-entropy",
                               optimizer=OptimizerSpec.rmsprop())
        targets = one_hot(rng.integers(0, widths[-1], 7), widths[-1])
    else:
        spec = NetworkSpec.mlp(widths, hidden, "sigmoid", loss="sigmoid-cross-entropy",
                               optimizer=OptimizerSpec.adam())
        targets = rng.uniform(0, 1, (7, widths[-1]))
    x = rng.normal(0, 1, (7, widths[0]))
    return spec, Batch(x, targets)


def _off_kink_state(spec, batch, rng):
    """Random nonzero parameters whose ReLU pre-activations all sit at least
    1e-3 from zero, so a 1e-5 central difference never straddles the kink."""
    state = initialize(spec, 0)
    while True:
        state.params[:] = rng.normal(0, 0.7, state.params.size)
        _, cache = forward(state, batch.inputs)
        zs = [z for z, layer in zip(cache["zs"], spec.layers) if layer.activation.value == "relu"]
        if all(np.abs(z).min() > 1e-3 for z in zs):
            return state


def test_criterion_03_gradient_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for case in range(50):
        spec, batch = _random_net(rng, case)
        state = _off_kink_state(spec, batch, rng)
        _, grads = loss_and_gradient(state, batch)
        analytic = np.concatenate([g.ravel() for g in grads])
        numeric = central_difference(state, batch, 1e-5)
        rel = np.abs(analytic - numeric) / np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
        worst = max(worst, float(rel.max()))
    ok = worst < 1e-4
    record(3, ok, f"max relative error {worst:.2e} over 50 networks")
    assert ok


def test_criterion_04_channel_moments():
    n = 1_000_000
    idle = np.zeros(n, dtype=np.int64)
    busy = np.ones(n, dtype=np.int64)
    a_idle = sense_slots(ChannelModel.awgn(), idle, 1, 41)[:, 0]
    a_busy = sense_slots(ChannelModel.awgn(), busy, 1, 42)[:, 0]
    r_idle = sense_slots(ChannelModel.rayleigh(), idle, 1, 43)[:, 0]
    r_busy = sense_slots(ChannelModel.rayleigh(), busy, 1, 44)[:, 0]
    rayleigh_mean = 3.0 * np.sqrt(np.pi) / 2.0
    checks = {
        "awgn idle": abs(a_idle.mean()) < 0.01 and abs(a_idle.var() - 1) < 0.02,
        "awgn busy": abs(a_busy.mean() - 3) < 0.01 and abs(a_busy.var() - 2) < 0.02,
        "rayleigh idle": abs(r_idle.mean()) < 0.01 and abs(r_idle.var() - 1) < 0.02,
        "rayleigh busy": abs(r_busy.mean() - rayleigh_mean) < 0.02,
    }
    p_n = transmission_failure_probability(TransmissionModel(5.0), 15)
    checks["p_N"] = abs(p_n / 4.30e-6 - 1) < 0.01
    ok = all(checks.values())
    record(4, ok, f"means {a_idle.mean():.4f}/{a_busy.mean():.4f}/{r_idle.mean():.4f}/{r_busy.mean():.4f}, "
                  f"vars {a_idle.var():.4f}/{a_busy.var():.4f}/{r_idle.var():.4f}, p_N={p_n:.4e}"
                  + ("" if ok else f"; failed {[k for k, v in checks.items() if not v]}"))
    assert ok


@pytest.mark.slow
def test_criterion_05_simulation_consistency(workdir):
    rows = _sweep(workdir, ChannelKind.AWGN, Mode.NO_GAN, seeds=20, cells=[(25, 0)], sub="c5")
    emp = np.mean([r.empirical_r for r in rows])
    ana = np.mean([r.analytic_r for r in rows])
    dev = abs(emp - ana) / ana
    ok = len(rows) == 20 and dev <= 0.05
    record(5, ok, f"mean empirical_r={emp:.1f}, mean analytic_r={ana:.1f}, deviation {100 * dev:.2f}%")
    assert ok


@pytest.mark.slow
def test_criterion_06_awgn_baseline(awgn):
    cell = next(r for r in awgn if r.mode == "no-gan" and r.L == 25)
    dev = (cell.r_mean - 6928) / 6928
    ok = abs(dev) <= 0.05 and cell.p_MD_mean <= 0.20
    record(6, ok, f"L=25 mean r={cell.r_mean:.1f} ({100 * dev:+.2f}% vs 6928), mean p_MD={100 * cell.p_MD_mean:.2f}%")
    assert ok


@pytest.mark.slow
def test_criterion_07_awgn_trend(awgn):
    curve = {r.budget: r for r in improvement_curve(awgn)}
    late = {b: r.improvement for b, r in curve.items() if b >= 50}
    ok = bool(late) and all(v > 0 for v in late.values()) and curve[200].improvement >= 10.0
    worst = min(late, key=late.get)
    record(7, ok, f"improvement at 200 = {curve[200].improvement:.2f}% "
                  f"({curve[200].L}+{curve[200].n}); min over budgets>=50 = {late[worst]:.2f}% at {worst}")
    assert ok


def _relative_pairs(awgn_curve: dict, ray_curve: dict):
    """Pair each Rayleigh budget with the AWGN budget at the nearest
    fraction of that channel's largest budget."""
    a_max, r_max = max(awgn_curve), max(ray_curve)
    pairs = []
    for b in sorted(ray_curve):
        a = min(awgn_curve, key=lambda x: (abs(x / a_max - b / r_max), x))
        pairs.append((b, a))
    return pairs


@pytest.mark.slow
def test_criterion_08_rayleigh_trend(awgn, rayleigh):
    ray = {r.budget: r.improvement for r in improvement_curve(rayleigh)}
    awg = {r.budget: r.improvement for r in improvement_curve(awgn)}
    pairs = _relative_pairs(awg, ray)
    beaten = [(b, a) for b, a in pairs if ray[b] > awg[a]]
    ok = ray[500] >= 25.0 and len(beaten) == len(pairs)
    detail = ", ".join(f"{b}:{ray[b]:.1f}% vs {a}:{awg[a]:.1f}%" for b, a in pairs)
    record(8, ok, f"Rayleigh improvement at 500 = {ray[500]:.2f}%; matched (Rayleigh vs AWGN) {detail}")
    assert ok


@pytest.mark.slow
def test_criterion_09_protection(awgn, rayleigh):
    parts, ok = [], True
    for name, rows in (("awgn", awgn), ("rayleigh", rayleigh)):
        top = best_overall(select_best(rows, 0.10))
        if top is None:
            ok = False
            parts.append(f"{name}: no cell under the ceiling")
            continue
        good = top.p_MD_mean <= top.matched_p_MD
        ok &= good
        parts.append(f"{name}: {top.L}+{top.n} p_MD_hat={100 * top.p_MD_mean:.2f}% "
                     f"vs L={top.budget} p_MD={100 * top.matched_p_MD:.2f}%")
    record(9, ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_10_determinism(workdir, tmp_path):
    cells = {Mode.NO_GAN: [(15, 0), (20, 0)], Mode.GAN: [(10, 5), (10, 10)]}
    same = []
    for channel in ChannelKind:
        for mode, grid in cells.items():
            files = []
            for run, jobs in (("a", 1), ("b", 2)):
                spec = SweepSpec(channel, mode, grid, seeds=2, master_seed=11,
                                 output=trials_path(tmp_path / run, channel, mode))
                run_sweep(spec, jobs=jobs)
                files.append(spec.output)
            same.append(filecmp.cmp(*files, shallow=False))
    ok = all(same)
    record(10, ok, f"{sum(same)}/{len(same)} sweep CSV pairs byte-identical (serial vs 2 workers)")
    assert ok
