"""Compare the numba and numpy backends of the training kernels.

Each backend runs in its own interpreter (the backend is fixed at import
time by ``GANSENSE_JIT``), after one warm-up call so compilation is excluded.

    python benchmarks/bench_kernels.py            # both backends
    python benchmarks/bench_kernels.py --worker   # current backend only
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, repeat=3):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_worker() -> dict:
    from gansense import _accel
    from gansense.channel import ChannelModel, sense_slots
    from gansense.gan import GanSpec, train_gan
    from gansense.nn import Batch, one_hot, train
    from gansense.sensing import TrainingConfig

    rng = np.random.default_rng(0)
    spec = TrainingConfig().network_spec(5)
    results = {"backend": _accel.BACKEND}
    for n in (50, 170, 680, 2000):
        labels = rng.integers(0, 2, n)
        x = rng.normal(0, 1, (n, 5)) + 3.0 * labels[:, None]
        batch = Batch(x, one_hot(labels))
        results[f"classifier_train_N{n}_20ep"] = _time(lambda: train(spec, batch, epochs=20, seed=1))
    real = sense_slots(ChannelModel.awgn(), np.zeros(10, dtype=int), 17, 0)
    gan_spec = GanSpec(iterations=300)
    results["gan_train_300it"] = _time(lambda: train_gan(gan_spec, real, 1), repeat=2)
    return results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--worker", action="store_true")
    args = ap.parse_args(argv)
    if args.worker:
        print(json.dumps(run_worker()))
        return
    rows = {}
    for flag in ("1", "0"):
        env = dict(os.environ, GANSENSE_JIT=flag)
        out = subprocess.run([sys.executable, __file__, "--worker"], env=env,
                             capture_output=True, text=True, check=True)
        res = json.loads(out.stdout.strip().splitlines()[-1])
        rows[res.pop("backend")] = res
    keys = list(next(iter(rows.values())))
    print(f"{'case':32s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for k in keys:
        a, b = rows["numba"][k], rows["numpy"][k]
        print(f"{k:32s} {a:10.4f} {b:10.4f} {b / a:8.2f}")


if __name__ == "__main__":
    main()
