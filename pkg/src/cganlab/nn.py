"""Tiny dense networks with hand-rolled reverse mode and the Adam optimizer.

Hidden layers use a leaky rectifier with slope 0.2; the output layer is
identity (generator) or logistic (discriminator).  No graph machinery: the
forward pass records the activations needed for one exact backward pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

LEAKY_SLOPE = 0.2
_OUTPUTS = ("identity", "logistic")


@dataclass
class Mlp:
    weights: list
    biases: list
    output: str = "identity"

    def __post_init__(self):
        if self.output not in _OUTPUTS:
            raise ValidationError(f"output activation must be one of {_OUTPUTS}")
        if len(self.weights) < 1 or len(self.weights) != len(self.biases):
            raise ValidationError("weights and biases must pair up layer by layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.asarray(w, dtype=float)
            b = np.asarray(b, dtype=float)
            if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[1]:
                raise ValidationError(f"layer {i}: weight/bias shapes disagree")
            if i > 0 and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValidationError(f"layer {i}: input width {w.shape[0]} does not "
                                      f"match previous output {self.weights[i-1].shape[1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {i}: parameters must be finite")
            self.weights[i] = w
            self.biases[i] = b

    @property
    def layer_sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]


def init_mlp(layer_sizes, output: str = "identity",
             rng: np.random.Generator | None = None) -> Mlp:
    """Glorot-uniform weights, zero biases, drawn from ``rng``."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValidationError("layer_sizes needs at least an input and output width")
    rng = np.random.default_rng(0) if rng is None else rng
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        a = math.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-a, a, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return Mlp(weights=weights, biases=biases, output=output)


def logistic(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Tape:
    """Activation record from one forward pass, sufficient for backward."""

    x: np.ndarray
    pre: list
    post: list
    squeeze: bool


def forward(net: Mlp, x) -> tuple:
    """Run the network; returns (output, tape).  Accepts a single vector or
    a (batch, features) matrix."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    batch = x[None, :] if squeeze else x
    if batch.ndim != 2 or batch.shape[1] != net.weights[0].shape[0]:
        raise ValidationError(f"input width must be {net.weights[0].shape[0]}")
    pre, post = [], []
    a = batch
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        pre.append(z)
        if i < last:
            a = np.where(z > 0, z, LEAKY_SLOPE * z)
        elif net.output == "logistic":
            a = logistic(z)
        else:
            a = z
        post.append(a)
    out = post[-1][0] if squeeze else post[-1]
    return out, Tape(x=batch, pre=pre, post=post, squeeze=squeeze)


@dataclass
class Gradients:
    weights: list
    biases: list
    wrt_input: np.ndarray

    def as_list(self) -> list:
        return list(self.weights) + list(self.biases)


def backward(net: Mlp, tape: Tape, out_grad) -> Gradients:
    """Exact reverse-mode gradients of the scalar loss whose output gradient
    is supplied; also returns the gradient with respect to the input."""
    n_layers = len(net.weights)
    if len(tape.pre) != n_layers or tape.x.shape[1] != net.weights[0].shape[0]:
        raise ValidationError("tape does not match this network")
    g = np.asarray(out_grad, dtype=float)
    if tape.squeeze and g.ndim == 1:
        g = g[None, :]
    if g.shape != tape.post[-1].shape:
        raise ValidationError("output gradient shape does not match the forward output")

    if net.output == "logistic":
        y = tape.post[-1]
        delta = g * y * (1.0 - y)
    else:
        delta = g

    w_grads = [None] * n_layers
    b_grads = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        a_prev = tape.post[i - 1] if i > 0 else tape.x
        w_grads[i] = a_prev.T @ delta
        b_grads[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i].T
        if i > 0:
            delta = delta * np.where(tape.pre[i - 1] > 0, 1.0, LEAKY_SLOPE)
    wrt_input = delta[0] if tape.squeeze else delta
    return Gradients(weights=w_grads, biases=b_grads, wrt_input=wrt_input)


def parameters(net: Mlp) -> list:
    return list(net.weights) + list(net.biases)


def set_parameters(net: Mlp, params: list) -> None:
    n = len(net.weights)
    if len(params) != 2 * n:
        raise ValidationError("parameter list length does not match the network")
    net.weights = [np.asarray(p, dtype=float) for p in params[:n]]
    net.biases = [np.asarray(p, dtype=float) for p in params[n:]]


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the parameter list."""

    m: list
    v: list
    t: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 2e-4

    @classmethod
    def for_params(cls, params: list, lr: float = 2e-4, beta1: float = 0.5) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], lr=lr, beta1=beta1)


def adam_step(params: list, grads: list, state: AdamState) -> tuple:
    """One bias-corrected Adam update; returns (new params, new state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValidationError("params, grads, and state must have matching structure")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise ValidationError("gradient shape does not match its parameter")
    t = state.t + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_m.append(m)
        new_v.append(v)
        new_p.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return new_p, AdamState(m=new_m, v=new_v, t=t, beta1=state.beta1,
                            beta2=state.beta2, eps=state.eps, lr=state.lr)


@dataclass(frozen=True)
class LatentSpec:
    """Standard-normal latent input for the generator."""

    dimension: int = 4

    def __post_init__(self):
        if self.dimension < 1:
            raise ValidationError("latent dimension must be >= 1")

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.dimension))


def to_checkpoint(net: Mlp) -> dict:
    return {
        "layer_sizes": net.layer_sizes,
        "output": net.output,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def mlp_from_checkpoint(doc: dict) -> Mlp:
    for key in ("layer_sizes", "output", "weights", "biases"):
        if key not in doc:
            raise ValidationError(f"checkpoint is missing field {key!r}")
    net = Mlp(weights=[np.asarray(w, dtype=float) for w in doc["weights"]],
              biases=[np.asarray(b, dtype=float) for b in doc["biases"]],
              output=doc["output"])
    if net.layer_sizes != list(doc["layer_sizes"]):
        raise ValidationError("checkpoint shape header disagrees with its tensors")
    return net
