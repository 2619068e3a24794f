"""Dense feed-forward networks with exact reverse-mode gradients.

Just enough machinery for small actor/critic networks: forward pass,
analytic backward pass, an adaptive-moment optimizer, soft target-network
blending, and a bit-exact JSON checkpoint format.  64-bit floats
throughout; the gradient-check tolerances rely on that.
"""

from __future__ import annotations

import json
import math

import numpy as np

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")


class GradientError(ValueError):
    """Non-finite gradient entries."""


def _apply(act: str, z: np.ndarray) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    if act == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if act == "identity":
        return z
    raise ValueError(f"unknown activation {act!r}")


def _derivative_from_output(act: str, a: np.ndarray) -> np.ndarray:
    # All supported activations have derivatives expressible from outputs.
    if act == "relu":
        return (a > 0.0).astype(float)
    if act == "tanh":
        return 1.0 - a * a
    if act == "sigmoid":
        return a * (1.0 - a)
    if act == "identity":
        return np.ones_like(a)
    raise ValueError(f"unknown activation {act!r}")


class Mlp:
    """Weights (out x in), biases, and one activation name per layer."""

    def __init__(self, weights, biases, activations):
        if not (len(weights) == len(biases) == len(activations) >= 1):
            raise ValueError("weights, biases and activations must align")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.activations = list(activations)
        for k, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {k}: weight/bias shapes do not chain")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k}: input dim {w.shape[1]} does not match "
                                 f"previous output {self.weights[k - 1].shape[0]}")

    @classmethod
    def init(cls, dims, activations, rng) -> "Mlp":
        """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
        if len(dims) != len(activations) + 1:
            raise ValueError("need one activation per layer")
        weights, biases = [], []
        for fan_in, fan_out in zip(dims, dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, list(activations))

    @property
    def dims(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], list(self.activations))

    def forward(self, x) -> np.ndarray:
        """Single input (d,) -> (out,) or batch (B, d) -> (B, out)."""
        a = np.asarray(x, dtype=float)
        if a.ndim == 1 and a.shape[0] != self.weights[0].shape[1]:
            raise ValueError(f"input length {a.shape[0]} != first layer "
                             f"{self.weights[0].shape[1]}")
        for w, b, act in zip(self.weights, self.biases, self.activations):
            a = _apply(act, a @ w.T + b)
        return a

    def forward_trace(self, x):
        """Layer outputs [input, a1, ..., aL] for the backward pass."""
        a = np.asarray(x, dtype=float)
        trace = [a]
        for w, b, act in zip(self.weights, self.biases, self.activations):
            a = _apply(act, a @ w.T + b)
            trace.append(a)
        return trace

    def params_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and \
            all(np.all(np.isfinite(b)) for b in self.biases)


def backward(net: Mlp, x, upstream, trace=None):
    """Exact gradients of sum(output * upstream) w.r.t. parameters and input.

    Batched inputs (B, d) with upstream (B, out) accumulate parameter
    gradients over the batch; the returned input gradient keeps the batch
    shape.  A ``forward_trace`` for the same input may be passed to skip
    the recomputation.  Returns (grads, input_grad) with grads a list of
    (dW, db).
    """
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    G = upstream[None, :] if upstream.ndim == 1 else upstream
    if trace is None:
        trace = net.forward_trace(X)
    grads = [None] * len(net.weights)
    delta = G
    for k in range(len(net.weights) - 1, -1, -1):
        delta = delta * _derivative_from_output(net.activations[k], trace[k + 1])
        grads[k] = (delta.T @ trace[k], delta.sum(axis=0))
        delta = delta @ net.weights[k]
    return grads, (delta[0] if single else delta)


class Adam:
    """Adaptive-moment optimizer over an Mlp's parameter list."""

    def __init__(self, net: Mlp, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = [(np.zeros_like(w), np.zeros_like(b))
                  for w, b in zip(net.weights, net.biases)]
        self.v = [(np.zeros_like(w), np.zeros_like(b))
                  for w, b in zip(net.weights, net.biases)]

    def step(self, net: Mlp, grads):
        """One in-place update; raises GradientError on non-finite gradients."""
        check = 0.0
        for dw, db in grads:
            check += float(dw.sum()) + float(db.sum())
        if not math.isfinite(check):
            raise GradientError("non-finite gradient entries")
        self.step_count += 1
        t = self.step_count
        scale = self.lr / (1.0 - self.beta1 ** t)
        vfix = 1.0 / math.sqrt(1.0 - self.beta2 ** t)
        for k, (dw, db) in enumerate(grads):
            for idx, (param, g) in enumerate(((net.weights[k], dw), (net.biases[k], db))):
                m = self.m[k][idx]
                v = self.v[k][idx]
                m *= self.beta1
                m += (1 - self.beta1) * g
                v *= self.beta2
                v += (1 - self.beta2) * (g * g)
                param -= scale * m / (np.sqrt(v) * vfix + self.eps)


def soft_update(target: Mlp, main: Mlp, varsigma: float) -> Mlp:
    """Blend target <- varsigma * main + (1 - varsigma) * target, in place."""
    if not 0.0 <= varsigma <= 1.0:
        raise ValueError(f"soft-update factor must lie in [0, 1], got {varsigma}")
    for tw, mw in zip(target.weights, main.weights):
        tw *= 1.0 - varsigma
        tw += varsigma * mw
    for tb, mb in zip(target.biases, main.biases):
        tb *= 1.0 - varsigma
        tb += varsigma * mb
    return target


def to_checkpoint(net: Mlp) -> dict:
    """JSON-ready checkpoint: dims, activation names, row-major flat params."""
    return {
        "dims": net.dims,
        "activations": list(net.activations),
        "weights": [w.reshape(-1).tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def from_checkpoint(doc: dict) -> Mlp:
    dims = doc["dims"]
    weights = [
        np.asarray(flat, dtype=float).reshape(dims[k + 1], dims[k])
        for k, flat in enumerate(doc["weights"])
    ]
    biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
    return Mlp(weights, biases, doc["activations"])


def save_checkpoint(net: Mlp, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_checkpoint(net), fh)


def load_checkpoint(path) -> Mlp:
    with open(path, encoding="utf-8") as fh:
        return from_checkpoint(json.load(fh))
