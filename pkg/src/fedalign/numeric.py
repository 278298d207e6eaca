"""Dense feed-forward substrate with hand-derived gradients.

Everything model-related builds on this: parameter container, forward pass
with a replay tape, exact backward pass, SGD updates, and a central
finite-difference oracle used by the test suites. Heavy array work is routed
through the selected kernel backend.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fedalign import backend
from fedalign.errors import ConfigError, DivergenceError, InternalError

ACTIVATIONS = ("identity", "relu", "tanh")


@dataclass
class MlpParams:
    """Feed-forward network parameters.

    ``weights[k]`` has shape (out_k, in_k) and ``biases[k]`` shape (out_k,).
    The activation is applied after every layer except the last. Layer
    dimensions must chain; the last output dimension is the representation
    dimension.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ConfigError("weights and biases must be non-empty and parallel")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ConfigError(f"layer {k}: weight/bias shapes do not agree")
            if k > 0 and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ConfigError(f"layer {k}: input dim does not chain")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


@dataclass
class MlpGrads:
    """Gradient container mirroring the shapes of an MlpParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class ForwardTape:
    """Activation record from a forward pass, sufficient for exact replay."""

    params: MlpParams
    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)


def init_mlp(dims: list[int], activation: str, rng: np.random.Generator) -> MlpParams:
    """Random network with the given layer widths, e.g. [in, hidden, out]."""
    if len(dims) < 2:
        raise ConfigError("need at least an input and an output dimension")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, activation)


def mlp_forward_batch(params: MlpParams, X: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """Forward a batch (rows of X); returns outputs and the replay tape."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.in_dim:
        raise ConfigError(
            f"input dim {X.shape[-1] if X.ndim else '?'} does not match "
            f"encoder input dim {params.in_dim}"
        )
    k = backend.kernels()
    code = backend.ACTIVATION_CODES[params.activation]
    tape = ForwardTape(params)
    a = X
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        tape.inputs.append(a)
        p = k.linear_forward(a, W, b)
        tape.preacts.append(p)
        a = p if i == last else k.act_forward(code, p)
    return a, tape


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """Forward a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigError("mlp_forward expects a 1-D input vector")
    out, tape = mlp_forward_batch(params, x[None, :])
    return out[0], tape


def mlp_backward_batch(
    tape: ForwardTape, grad_output: np.ndarray
) -> tuple[MlpGrads, np.ndarray]:
    """Exact gradients for the forward recorded in ``tape``.

    ``grad_output`` holds one row per batch row; parameter gradients are
    summed over the batch (scale the rows beforehand for means).
    """
    params = tape.params
    grad_output = np.ascontiguousarray(grad_output, dtype=np.float64)
    nlayers = len(params.weights)
    if len(tape.inputs) != nlayers or len(tape.preacts) != nlayers:
        raise InternalError("tape does not match its parameters")
    if grad_output.ndim != 2 or grad_output.shape != tape.preacts[-1].shape:
        raise InternalError("grad_output shape does not match the taped forward")
    k = backend.kernels()
    code = backend.ACTIVATION_CODES[params.activation]
    gw: list[np.ndarray] = [None] * nlayers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * nlayers  # type: ignore[list-item]
    g = grad_output
    for i in range(nlayers - 1, -1, -1):
        if i < nlayers - 1:
            g = k.act_backward(code, tape.preacts[i], g)
        if tape.inputs[i].shape[1] != params.weights[i].shape[1]:
            raise InternalError(f"tape layer {i} is stale for these parameters")
        gw[i], gb[i], g = k.linear_backward(tape.inputs[i], params.weights[i], g)
    return MlpGrads(gw, gb), g


def mlp_backward(tape: ForwardTape, grad_output: np.ndarray) -> tuple[MlpGrads, np.ndarray]:
    """Backward for a single-vector forward."""
    grad_output = np.asarray(grad_output, dtype=np.float64)
    if grad_output.ndim != 1:
        raise InternalError("mlp_backward expects a 1-D output gradient")
    grads, gx = mlp_backward_batch(tape, grad_output[None, :])
    return grads, gx[0]


def sgd_step(params, grads, lr: float):
    """One gradient-descent step, p <- p - lr * g. Functional, shapes must match.

    Accepts either (MlpParams, MlpGrads) or a bare ndarray pair.
    """
    if isinstance(params, np.ndarray):
        g = np.asarray(grads)
        if g.shape != params.shape:
            raise ConfigError("gradient shape does not match parameter shape")
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient in sgd_step")
        return params - lr * g
    if isinstance(params, MlpParams):
        new_w, new_b = [], []
        for W, b, gW, gb in zip(params.weights, params.biases, grads.weights, grads.biases):
            if gW.shape != W.shape or gb.shape != b.shape:
                raise ConfigError("gradient shapes do not match parameter shapes")
            if not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gb))):
                raise DivergenceError("non-finite gradient in sgd_step")
            new_w.append(W - lr * gW)
            new_b.append(b - lr * gb)
        return MlpParams(new_w, new_b, params.activation)
    raise ConfigError(f"unsupported parameter type {type(params).__name__}")


def params_to_vector(params: MlpParams) -> np.ndarray:
    parts = []
    for W, b in zip(params.weights, params.biases):
        parts.append(W.ravel())
        parts.append(b)
    return np.concatenate(parts)


def vector_to_params(vec: np.ndarray, like: MlpParams) -> MlpParams:
    weights, biases = [], []
    pos = 0
    for W, b in zip(like.weights, like.biases):
        weights.append(vec[pos : pos + W.size].reshape(W.shape).copy())
        pos += W.size
        biases.append(vec[pos : pos + b.size].copy())
        pos += b.size
    if pos != vec.size:
        raise ConfigError("vector length does not match parameter count")
    return MlpParams(weights, biases, like.activation)


def grads_to_vector(grads: MlpGrads) -> np.ndarray:
    parts = []
    for W, b in zip(grads.weights, grads.biases):
        parts.append(W.ravel())
        parts.append(b)
    return np.concatenate(parts)


def finite_diff_grad(scalar_fn, params, eps: float = 1e-5):
    """Central finite differences of ``scalar_fn`` at ``params``.

    Test oracle: deliberately independent of the backward pass. Works on a
    bare ndarray (returns an ndarray) or an MlpParams (returns MlpGrads).
    """
    if isinstance(params, np.ndarray):
        grad = np.zeros_like(params, dtype=np.float64)
        flat = params.ravel()
        gflat = grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = scalar_fn(params)
            flat[i] = orig - eps
            lo = scalar_fn(params)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        return grad

    if isinstance(params, MlpParams):
        vec = params_to_vector(params)

        def on_vector(v: np.ndarray) -> float:
            return scalar_fn(vector_to_params(v, params))

        gvec = finite_diff_grad(on_vector, vec, eps)
        g = vector_to_params(gvec, params)
        return MlpGrads(g.weights, g.biases)

    raise ConfigError(f"unsupported parameter type {type(params).__name__}")
