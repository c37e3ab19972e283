"""Single-hidden-layer scalar-output learner with exact gradients.

forward(x) = b2 + w2 . elu(W1 x + b1). Gradients with respect to both the
parameters and the input are derived by hand; finite differences are the
independent oracle in the test suite.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .manifold import elu, elu_prime
from .numerics import RngState

CHECKPOINT_FORMAT_VERSION = 1

PARAM_FIELDS = ("W1", "b1", "w2", "b2")


@dataclass
class NetworkParams:
    W1: np.ndarray  # (n_hidden, d_in)
    b1: np.ndarray  # (n_hidden,)
    w2: np.ndarray  # (n_hidden,)
    b2: float

    @property
    def d_in(self) -> int:
        return self.W1.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W1.shape[0]


@dataclass
class NetworkGrads:
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float


def init_network(rng: RngState, d_in: int, n_hidden: int) -> NetworkParams:
    """Normal/sqrt(fan-in) weights, zero biases. Draw order: W1, w2."""
    if d_in < 1 or n_hidden < 1:
        raise ValueError("init_network: dimensions must be >= 1")
    W1 = rng.standard_normal((n_hidden, d_in)) / np.sqrt(d_in)
    w2 = rng.standard_normal(n_hidden) / np.sqrt(n_hidden)
    return NetworkParams(W1=W1, b1=np.zeros(n_hidden), w2=w2, b2=0.0)


def forward(params: NetworkParams, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (params.d_in,):
        raise ValueError(
            f"forward: expected input of shape ({params.d_in},), got {x.shape}")
    return float(params.b2 + params.w2 @ elu(params.W1 @ x + params.b1))


def forward_batch(params: NetworkParams, xs: np.ndarray) -> np.ndarray:
    """Row-wise forward for xs of shape (n, d_in)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != params.d_in:
        raise ValueError(
            f"forward_batch: expected (n, {params.d_in}), got {xs.shape}")
    return elu(xs @ params.W1.T + params.b1) @ params.w2 + params.b2


def backward(params: NetworkParams, x: np.ndarray, upstream: float) -> NetworkGrads:
    """Gradients of upstream * forward(params, x) w.r.t. every parameter."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.d_in,):
        raise ValueError(
            f"backward: expected input of shape ({params.d_in},), got {x.shape}")
    pre = params.W1 @ x + params.b1
    hidden_grad = upstream * params.w2 * elu_prime(pre)
    return NetworkGrads(
        W1=hidden_grad[:, None] * x[None, :],
        b1=hidden_grad,
        w2=upstream * elu(pre),
        b2=float(upstream))


def backward_batch(params: NetworkParams, xs: np.ndarray,
                   upstream: np.ndarray) -> NetworkGrads:
    """Gradients of sum_i upstream[i] * forward(params, xs[i])."""
    xs = np.asarray(xs, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != params.d_in:
        raise ValueError(
            f"backward_batch: expected (n, {params.d_in}), got {xs.shape}")
    if upstream.shape != (xs.shape[0],):
        raise ValueError("backward_batch: upstream must have one entry per row")
    pre = xs @ params.W1.T + params.b1          # (n, n_hidden)
    slope_u = elu_prime(pre) * upstream[:, None]  # (n, n_hidden)
    return NetworkGrads(
        W1=params.w2[:, None] * (slope_u.T @ xs),
        b1=params.w2 * (slope_u.sum(axis=0)),
        w2=elu(pre).T @ upstream,
        b2=float(upstream.sum()))


def input_jacobian(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Gradient of forward with respect to the input, shape (d_in,)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.d_in,):
        raise ValueError(
            f"input_jacobian: expected input of shape ({params.d_in},), got {x.shape}")
    pre = params.W1 @ x + params.b1
    return params.W1.T @ (params.w2 * elu_prime(pre))


def input_jacobian_batch(params: NetworkParams, xs: np.ndarray) -> np.ndarray:
    """Row-wise input gradients, shape (n, d_in)."""
    xs = np.asarray(xs, dtype=float)
    pre = xs @ params.W1.T + params.b1
    return (params.w2 * elu_prime(pre)) @ params.W1


# --- parameter-block arithmetic -------------------------------------------

def params_copy(p: NetworkParams) -> NetworkParams:
    return NetworkParams(W1=p.W1.copy(), b1=p.b1.copy(), w2=p.w2.copy(),
                         b2=float(p.b2))


def zero_grads(p: NetworkParams) -> NetworkGrads:
    return NetworkGrads(W1=np.zeros_like(p.W1), b1=np.zeros_like(p.b1),
                        w2=np.zeros_like(p.w2), b2=0.0)


def grads_add(a: NetworkGrads, b: NetworkGrads) -> NetworkGrads:
    return NetworkGrads(W1=a.W1 + b.W1, b1=a.b1 + b.b1, w2=a.w2 + b.w2,
                        b2=a.b2 + b.b2)


def grads_scale(g: NetworkGrads, s: float) -> NetworkGrads:
    return NetworkGrads(W1=s * g.W1, b1=s * g.b1, w2=s * g.w2, b2=s * g.b2)


def params_axpy(p: NetworkParams, a: float, g: NetworkGrads) -> NetworkParams:
    """p + a * g as a fresh parameter block."""
    return NetworkParams(W1=p.W1 + a * g.W1, b1=p.b1 + a * g.b1,
                         w2=p.w2 + a * g.w2, b2=float(p.b2 + a * g.b2))


def params_distance(a: NetworkParams, b: NetworkParams) -> float:
    """Euclidean distance between two parameter blocks."""
    return float(np.sqrt(
        np.sum((a.W1 - b.W1) ** 2) + np.sum((a.b1 - b.b1) ** 2)
        + np.sum((a.w2 - b.w2) ** 2) + (a.b2 - b.b2) ** 2))


def params_norm(p: NetworkParams) -> float:
    return float(np.sqrt(np.sum(p.W1 ** 2) + np.sum(p.b1 ** 2)
                         + np.sum(p.w2 ** 2) + p.b2 ** 2))


def params_to_vector(p: NetworkParams) -> np.ndarray:
    """Flatten in the fixed order W1 (row-major), b1, w2, b2."""
    return np.concatenate([p.W1.ravel(), p.b1, p.w2, [p.b2]])


def vector_to_params(vec: np.ndarray, like: NetworkParams) -> NetworkParams:
    vec = np.asarray(vec, dtype=float)
    n, d = like.W1.shape
    expected = n * d + n + n + 1
    if vec.shape != (expected,):
        raise ValueError(
            f"vector_to_params: expected {expected} entries, got {vec.shape}")
    offset = n * d
    return NetworkParams(W1=vec[:offset].reshape(n, d).copy(),
                         b1=vec[offset:offset + n].copy(),
                         w2=vec[offset + n:offset + 2 * n].copy(),
                         b2=float(vec[-1]))


def grads_to_vector(g: NetworkGrads) -> np.ndarray:
    return np.concatenate([g.W1.ravel(), g.b1, g.w2, [g.b2]])


# --- checkpoint format: <prefix>.json header + <prefix>.bin flat params ----

def save_checkpoint(params: NetworkParams, prefix: str) -> None:
    os.makedirs(os.path.dirname(prefix) or ".", exist_ok=True)
    header = {"format_version": CHECKPOINT_FORMAT_VERSION,
              "d_in": params.d_in, "n_hidden": params.n_hidden,
              "nonlinearity": "elu", "dtype": "<f8",
              "layout": "W1 row-major, b1, w2, b2"}
    with open(prefix + ".json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    with open(prefix + ".bin", "wb") as fh:
        fh.write(params_to_vector(params).astype("<f8").tobytes())


def load_checkpoint(prefix: str) -> NetworkParams:
    with open(prefix + ".json") as fh:
        header = json.load(fh)
    if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"load_checkpoint: unsupported format version {header.get('format_version')}")
    with open(prefix + ".bin", "rb") as fh:
        vec = np.frombuffer(fh.read(), dtype=header["dtype"])
    like = NetworkParams(W1=np.zeros((header["n_hidden"], header["d_in"])),
                         b1=np.zeros(header["n_hidden"]),
                         w2=np.zeros(header["n_hidden"]), b2=0.0)
    return vector_to_params(vec, like)
