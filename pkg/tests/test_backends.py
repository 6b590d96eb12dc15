"""The numba kernels and their pure-numpy fallback must agree bit for bit."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from gansense import _accel

SCRIPT = r"""
import json, numpy as np
from gansense import _accel
from gansense.channel import ChannelModel, sense_slots
from gansense.gan import GanSpec, train_gan, generate_slots
from gansense.nn import Batch, NetworkSpec, one_hot, train
rng = np.random.default_rng(0)
y = rng.integers(0, 2, 64)
x = rng.normal(size=(64, 5)) + 3 * y[:, None]
state = train(NetworkSpec.mlp([5, 16, 8, 2], "relu", "softmax", dropout=0.2), Batch(x, one_hot(y)), epochs=3, seed=1)
real = sense_slots(ChannelModel.awgn(), np.zeros(4, dtype=int), 17, 2)
gan = train_gan(GanSpec(iterations=10), real, 3)
print(json.dumps({"backend": _accel.BACKEND, "clf": state.params.tolist(),
                  "gen": generate_slots(gan, 3, 4).tolist()}))
"""


def run(flag):
    env = dict(os.environ, GANSENSE_JIT=flag)
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
def test_backends_agree():
    jit, py = run("1"), run("0")
    assert jit["backend"] == "numba" and py["backend"] == "numpy"
    assert np.allclose(jit["clf"], py["clf"], rtol=1e-10, atol=1e-12)
    assert np.allclose(jit["gen"], py["gen"], rtol=1e-10, atol=1e-12)


def test_flag_parsing():
    for flag in ("0", "false", "numpy", "off"):
        assert run(flag)["backend"] == "numpy"
