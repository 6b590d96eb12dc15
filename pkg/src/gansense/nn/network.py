"""Dense feed-forward networks: specs, parameter state, training."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from gansense.nn import _kernels as K


class NetworkError(ValueError):
    """Invalid network specification or incompatible inputs."""


class Activation(str, Enum):
    LINEAR = "linear"
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"


class Loss(str, Enum):
    CATEGORICAL = "categorical-cross-entropy"
    SIGMOID = "sigmoid-cross-entropy"


class OptimizerKind(str, Enum):
    RMSPROP = "rmsprop"
    ADAM = "adam"


_ACT_CODES = {
    Activation.LINEAR: K.ACT_LINEAR,
    Activation.RELU: K.ACT_RELU,
    Activation.SIGMOID: K.ACT_SIGMOID,
    Activation.SOFTMAX: K.ACT_SOFTMAX,
}
_LOSS_CODES = {Loss.CATEGORICAL: K.LOSS_CATEGORICAL, Loss.SIGMOID: K.LOSS_SIGMOID}
_OPT_CODES = {OptimizerKind.RMSPROP: K.OPT_RMSPROP, OptimizerKind.ADAM: K.OPT_ADAM}


@dataclass(frozen=True)
class LayerSpec:
    input_width: int
    output_width: int
    activation: Activation = Activation.RELU
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.input_width < 1 or self.output_width < 1:
            raise NetworkError(f"layer widths must be >= 1, got {self.input_width}->{self.output_width}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise NetworkError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")
        object.__setattr__(self, "activation", Activation(self.activation))


@dataclass(frozen=True)
class OptimizerSpec:
    """Optimizer hyperparameters.

    For RMSprop ``beta2`` is the squared-gradient decay (rho) and ``beta1`` is
    unused.
    """

    kind: OptimizerKind = OptimizerKind.RMSPROP
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.9
    epsilon: float = 1e-7

    def __post_init__(self):
        object.__setattr__(self, "kind", OptimizerKind(self.kind))
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise NetworkError("learning rate and epsilon must be positive")

    @classmethod
    def rmsprop(cls, learning_rate=0.001, rho=0.9, epsilon=1e-7):
        return cls(OptimizerKind.RMSPROP, learning_rate, 0.0, rho, epsilon)

    @classmethod
    def adam(cls, learning_rate=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return cls(OptimizerKind.ADAM, learning_rate, beta1, beta2, epsilon)


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    loss: Loss = Loss.CATEGORICAL
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec.rmsprop)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "loss", Loss(self.loss))
        if not layers:
            raise NetworkError("a network needs at least one layer")
        for i, (a, b) in enumerate(zip(layers, layers[1:])):
            if a.output_width != b.input_width:
                raise NetworkError(
                    f"layer {i} outputs {a.output_width} but layer {i + 1} expects {b.input_width}")
        for layer in layers[:-1]:
            if layer.activation is Activation.SOFTMAX:
                raise NetworkError("softmax is only allowed on the final layer")
        last = layers[-1]
        if last.dropout_rate > 0:
            raise NetworkError("dropout on the output layer is not supported")
        if self.loss is Loss.CATEGORICAL and last.activation is not Activation.SOFTMAX:
            raise NetworkError("categorical cross-entropy requires a softmax output")
        if self.loss is Loss.SIGMOID and last.activation not in (Activation.SIGMOID, Activation.LINEAR):
            raise NetworkError("sigmoid cross-entropy requires a sigmoid or linear output")

    @classmethod
    def mlp(cls, widths: Sequence[int], hidden: Activation | str, output: Activation | str,
            dropout: float = 0.0, loss: Loss | str = Loss.CATEGORICAL,
            optimizer: OptimizerSpec | None = None) -> "NetworkSpec":
        """Chain ``widths`` into layers; dropout applies after hidden layers only."""
        n = len(widths) - 1
        layers = tuple(
            LayerSpec(widths[i], widths[i + 1],
                      output if i == n - 1 else hidden,
                      0.0 if i == n - 1 else dropout)
            for i in range(n))
        return cls(layers, Loss(loss), optimizer or OptimizerSpec.rmsprop())

    @property
    def input_width(self) -> int:
        return self.layers[0].input_width

    @property
    def output_width(self) -> int:
        return self.layers[-1].output_width

    @property
    def has_dropout(self) -> bool:
        return any(layer.dropout_rate > 0 for layer in self.layers)

    def plan(self) -> "_Plan":
        return _Plan.from_spec(self)


@dataclass(frozen=True)
class _Plan:
    """Integer/array form of a spec as consumed by the kernels."""

    dims: np.ndarray
    acts: np.ndarray
    keep: np.ndarray
    w_off: np.ndarray
    b_off: np.ndarray
    size: int
    unit_count: int

    @classmethod
    def from_spec(cls, spec: NetworkSpec) -> "_Plan":
        dims = np.array([spec.layers[0].input_width] + [l.output_width for l in spec.layers], dtype=np.int64)
        acts = np.array([_ACT_CODES[l.activation] for l in spec.layers], dtype=np.int64)
        keep = np.array([1.0 - l.dropout_rate for l in spec.layers])
        w_off, b_off = [], []
        pos = 0
        for din, dout in zip(dims[:-1], dims[1:]):
            w_off.append(pos)
            pos += int(din * dout)
            b_off.append(pos)
            pos += int(dout)
        return cls(dims, acts, keep, np.array(w_off, dtype=np.int64),
                   np.array(b_off, dtype=np.int64), pos, int(dims[1:].sum()))


@dataclass
class NetworkState:
    """Learned parameters plus optimizer accumulators for one network.

    ``params`` is a flat vector; :attr:`weights` and :attr:`biases` are views
    into it. ``first_moment`` is only used by Adam.
    """

    spec: NetworkSpec
    params: np.ndarray
    first_moment: np.ndarray
    second_moment: np.ndarray
    step: int = 0
    loss_history: list[float] = field(default_factory=list)

    @property
    def plan(self) -> _Plan:
        return self.spec.plan()

    @property
    def weights(self) -> list[np.ndarray]:
        p = self.plan
        return [self.params[p.w_off[i]:p.w_off[i] + p.dims[i] * p.dims[i + 1]].reshape(p.dims[i], p.dims[i + 1])
                for i in range(len(self.spec.layers))]

    @property
    def biases(self) -> list[np.ndarray]:
        p = self.plan
        return [self.params[p.b_off[i]:p.b_off[i] + p.dims[i + 1]] for i in range(len(self.spec.layers))]

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases interleaved: ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "NetworkState":
        return copy.deepcopy(self)

    def predict(self, inputs) -> np.ndarray:
        outputs, _ = forward(self, inputs)
        return outputs


@dataclass
class Batch:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(np.atleast_2d(np.asarray(self.inputs, dtype=np.float64)))
        targets = np.asarray(self.targets, dtype=np.float64)
        if targets.ndim == 1:
            targets = targets.reshape(-1, 1)
        self.targets = np.ascontiguousarray(targets)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise NetworkError(
                f"{self.inputs.shape[0]} input rows but {self.targets.shape[0]} target rows")

    def __len__(self):
        return self.inputs.shape[0]


def one_hot(labels, num_classes: int = 2) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def initialize(spec: NetworkSpec, seed: int) -> NetworkState:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    plan = spec.plan()
    rng = np.random.default_rng(seed)
    params = np.zeros(plan.size)
    for i in range(len(spec.layers)):
        din, dout = int(plan.dims[i]), int(plan.dims[i + 1])
        bound = 1.0 / np.sqrt(din)
        params[plan.w_off[i]:plan.w_off[i] + din * dout] = rng.uniform(-bound, bound, din * dout)
    return NetworkState(spec, params, np.zeros(plan.size), np.zeros(plan.size))


def _check_inputs(state: NetworkState, inputs) -> np.ndarray:
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(inputs, dtype=np.float64)))
    if x.shape[1] != state.spec.input_width:
        raise NetworkError(f"network expects {state.spec.input_width} features, got {x.shape[1]}")
    return x


def _dropout_draws(spec: NetworkSpec, rows: int, rng: np.random.Generator | None) -> np.ndarray:
    if rng is None or not spec.has_dropout:
        return np.empty((rows, 0))
    return rng.random((rows, spec.plan().unit_count))


def forward(state: NetworkState, inputs, mode: str = "infer", seed=None):
    """Run the network; returns ``(outputs, cache)``.

    In ``"train"`` mode dropout masks are drawn from ``seed`` (an int or a
    ``numpy.random.Generator``) with inverted scaling, so inference needs no
    rescaling. ``cache`` holds pre-activations, layer outputs and masks.
    """
    if mode not in ("train", "infer"):
        raise NetworkError(f"unknown mode {mode!r}")
    x = _check_inputs(state, inputs)
    p = state.plan
    rng = np.random.default_rng(seed) if mode == "train" else None
    u = _dropout_draws(state.spec, x.shape[0], rng)
    zs, hs, masks = K.forward(state.params, p.dims, p.acts, p.keep, p.w_off, p.b_off, x, u)
    return hs[-1], {"zs": list(zs), "hs": list(hs), "masks": list(masks)}


def _unflatten(state: NetworkState, flat: np.ndarray) -> list[np.ndarray]:
    view = NetworkState(state.spec, flat, flat, flat)
    return [a.copy() for a in view.parameters()]


def _flatten(state: NetworkState, grads: Sequence[np.ndarray]) -> np.ndarray:
    shapes = [a.shape for a in state.parameters()]
    if len(grads) != len(shapes) or any(np.shape(g) != s for g, s in zip(grads, shapes)):
        raise NetworkError("gradient shapes do not match the network parameters")
    return np.concatenate([np.asarray(g, dtype=np.float64).ravel() for g in grads])


def loss_and_gradient(state: NetworkState, batch: Batch, mode: str = "infer", seed=None):
    """Batch-mean loss and its exact gradient ``[dW0, db0, dW1, db1, ...]``.

    In train mode the gradient is taken with the dropout mask drawn from
    ``seed`` held fixed.
    """
    if mode not in ("train", "infer"):
        raise NetworkError(f"unknown mode {mode!r}")
    x = _check_inputs(state, batch.inputs)
    if batch.targets.shape[1] != state.spec.output_width:
        raise NetworkError("target width does not match network output")
    p = state.plan
    rng = np.random.default_rng(seed) if mode == "train" else None
    u = _dropout_draws(state.spec, x.shape[0], rng)
    value, grad = K.loss_and_grad(state.params, p.dims, p.acts, p.keep, p.w_off, p.b_off,
                                  x, batch.targets, u, _LOSS_CODES[state.spec.loss])
    return float(value), _unflatten(state, grad)


def optimizer_step(state: NetworkState, gradients: Sequence[np.ndarray]) -> NetworkState:
    """Return a new state after one optimizer update."""
    flat = _flatten(state, gradients)
    if not np.all(np.isfinite(flat)):
        raise NetworkError("non-finite gradient")
    new = state.copy()
    opt = state.spec.optimizer
    new.step += 1
    K.optimizer_update(new.params, flat, new.first_moment, new.second_moment, new.step,
                       _OPT_CODES[opt.kind], opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon)
    return new


def train(spec: NetworkSpec, batch: Batch, epochs: int = 200, batch_size: int = 32,
          seed: int = 0, state: NetworkState | None = None) -> NetworkState:
    """Minibatch training with seeded init, shuffling and dropout.

    ``state.loss_history`` receives the mean training loss of every epoch.
    """
    if len(batch) == 0:
        raise NetworkError("empty training set")
    if batch_size < 1 or epochs < 0:
        raise NetworkError("batch_size must be >= 1 and epochs >= 0")
    init_seed, run_seed = np.random.SeedSequence(seed).spawn(2)
    if state is None:
        state = initialize(spec, int(init_seed.generate_state(1)[0]))
    else:
        state = state.copy()
    if epochs == 0:
        return state
    x = _check_inputs(state, batch.inputs)
    y = batch.targets
    if y.shape[1] != spec.output_width:
        raise NetworkError("target width does not match network output")
    p = state.plan
    opt = spec.optimizer
    loss_code, opt_code = _LOSS_CODES[spec.loss], _OPT_CODES[opt.kind]
    rng = np.random.default_rng(run_seed)
    for _ in range(epochs):
        perm = rng.permutation(x.shape[0])
        u = _dropout_draws(spec, x.shape[0], rng)
        mean_loss, state.step = K.train_epoch(
            state.params, state.first_moment, state.second_moment, state.step,
            p.dims, p.acts, p.keep, p.w_off, p.b_off, x, y, perm, u, batch_size,
            loss_code, opt_code, opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon)
        state.loss_history.append(float(mean_loss))
    if not np.all(np.isfinite(state.params)):
        raise NetworkError("training diverged (non-finite parameters)")
    return state
