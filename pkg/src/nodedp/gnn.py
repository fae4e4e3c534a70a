"""Minimal one-layer message-passing classifiers with manual gradients.

Three aggregators over a sub-graph's in-edges feed a shared head:

* GCN:  a_u = sum_{j in NB(u) ∪ {u}} x_j / sqrt(d_j d_u), degrees counted
        inside the sub-graph plus a self-loop,
* GIN:  a_u = sum_{j in NB(u)} x_j + (1 + lambda) x_u,
* SAGE: a_u = (sum_{j in NB(u)} x_j + x_u) / (|NB(u)| + 1)  (mean),

then h = elu(W1 a + b1), logits = W2 h + c, softmax cross-entropy on the
central node's label. One aggregation hop matches the 1-hop sub-graphs the
sampler emits.

The batched path computes every sub-graph's gradient norm without
materializing per-sub-graph weight gradients: for a rank-1 per-example
weight gradient dW_i = a_i (dz_i)^T the Frobenius norm factors as
|a_i| |dz_i|, so clipping scales fold into two matrix products. The
per-sub-graph reference path (`loss_and_grad`) computes the same things
explicitly and the two are tested against each other.

The clip threshold is the fixed constant 0.5: the privacy accountant's
sensitivity constants (0.5 per added sub-graph, 1.0 per replaced one) are
derived from it, so it is deliberately not configurable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError
from .graph import Graph
from .sampler import SubGraph, SubGraphBatch

ARCH_GCN = "gcn"
ARCH_GIN = "gin"
ARCH_SAGE = "sage"
ARCHS = (ARCH_GCN, ARCH_GIN, ARCH_SAGE)

CLIP_THRESHOLD = 0.5


@dataclass
class ModelParams:
    arch: str
    W1: np.ndarray  # (d_in, d_hid)
    b1: np.ndarray  # (d_hid,)
    W2: np.ndarray  # (d_hid, C)
    b2: np.ndarray  # (C,)
    gin_lambda: float = 0.0

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown architecture {self.arch!r}")
        d_in, d_hid = self.W1.shape
        if self.b1.shape != (d_hid,) or self.W2.shape[0] != d_hid:
            raise ConfigError("parameter shapes inconsistent")
        if self.b2.shape != (self.W2.shape[1],):
            raise ConfigError("parameter shapes inconsistent")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.W1.shape[0], self.W1.shape[1], self.W2.shape[1])

    @property
    def num_params(self) -> int:
        d, h, c = self.dims
        return d * h + h + h * c + c + (1 if self.arch == ARCH_GIN else 0)

    def to_vector(self) -> np.ndarray:
        parts = [self.W1.ravel(), self.b1, self.W2.ravel(), self.b2]
        if self.arch == ARCH_GIN:
            parts.append(np.array([self.gin_lambda]))
        return np.concatenate(parts)

    def replace_vector(self, vec: np.ndarray) -> "ModelParams":
        d, h, c = self.dims
        if vec.shape != (self.num_params,):
            raise ConfigError(f"vector length {vec.shape} != {self.num_params}")
        o = 0
        W1 = vec[o : o + d * h].reshape(d, h).copy()
        o += d * h
        b1 = vec[o : o + h].copy()
        o += h
        W2 = vec[o : o + h * c].reshape(h, c).copy()
        o += h * c
        b2 = vec[o : o + c].copy()
        o += c
        lam = float(vec[o]) if self.arch == ARCH_GIN else self.gin_lambda
        return ModelParams(self.arch, W1, b1, W2, b2, lam)


@dataclass
class GradientVector:
    """Flat gradient with the shape metadata of the model it belongs to."""

    flat: np.ndarray
    arch: str
    dims: tuple[int, int, int]

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat))

    def __add__(self, other: "GradientVector") -> "GradientVector":
        return GradientVector(self.flat + other.flat, self.arch, self.dims)


def init_params(
    arch: str, d_in: int, d_hid: int, num_classes: int, rng: np.random.Generator,
    gin_lambda: float = 0.0,
) -> ModelParams:
    """Uniform(-a, a) weights with a = sqrt(6/(fan_in+fan_out)); zero biases."""
    if arch not in ARCHS:
        raise ConfigError(f"unknown architecture {arch!r}")

    def xavier(fan_in, fan_out):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_in, fan_out))

    return ModelParams(
        arch=arch,
        W1=xavier(d_in, d_hid),
        b1=np.zeros(d_hid),
        W2=xavier(d_hid, num_classes),
        b2=np.zeros(num_classes),
        gin_lambda=gin_lambda,
    )


def _elu(x):
    return np.where(x > 0.0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(x):
    return np.where(x > 0.0, 1.0, np.exp(np.minimum(x, 0.0)))


def _log_softmax(z):
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.sum(np.exp(z - m), axis=-1, keepdims=True))


# -- batched aggregation ---------------------------------------------------


def _central_aggregate(params: ModelParams, batch: SubGraphBatch) -> np.ndarray:
    """(B, d_in) aggregated inputs for each sub-graph's central node."""
    B = batch.num_subgraphs
    d_in = params.W1.shape[0]
    total = len(batch.members)
    indeg = np.bincount(batch.edge_dst, minlength=total) if total else np.zeros(0, int)
    deg = indeg + 1.0  # self-loop
    central_rows = batch.offsets[:-1] + batch.central_pos
    row_sub = np.full(total, -1, dtype=np.int64)
    row_sub[central_rows] = np.arange(B)

    into_central = row_sub[batch.edge_dst] >= 0 if len(batch.edge_dst) else np.zeros(0, bool)
    src = batch.edge_src[into_central]
    dst = batch.edge_dst[into_central]
    sub = row_sub[dst]

    if params.arch == ARCH_GCN:
        coef = 1.0 / np.sqrt(deg[src] * deg[dst])
        self_coef = 1.0 / deg[central_rows]
    elif params.arch == ARCH_GIN:
        coef = np.ones(len(src))
        self_coef = np.full(B, 1.0 + params.gin_lambda)
    else:  # SAGE mean
        coef = 1.0 / deg[dst]
        self_coef = 1.0 / deg[central_rows]

    agg = np.zeros((B, d_in))
    if len(src):
        _kernels.scatter_rows(agg, sub, src, coef, batch.features)
    agg += self_coef[:, None] * batch.features[central_rows]
    return agg


def _head_forward(params: ModelParams, agg: np.ndarray):
    Z1 = agg @ params.W1 + params.b1
    H1 = _elu(Z1)
    Z2 = H1 @ params.W2 + params.b2
    return Z1, H1, Z2


def batch_forward(params: ModelParams, batch: SubGraphBatch) -> np.ndarray:
    """(B, C) central-node logits."""
    if batch.features.shape[1] != params.W1.shape[0]:
        raise ConfigError(
            f"feature dim {batch.features.shape[1]} != model d_in {params.W1.shape[0]}"
        )
    agg = _central_aggregate(params, batch)
    _, _, Z2 = _head_forward(params, agg)
    return Z2


def batch_losses_and_clipped_sum(params: ModelParams, batch: SubGraphBatch):
    """Per-sub-graph losses, the sum of clipped per-sub-graph gradients,
    and the per-sub-graph unclipped gradient norms.

    Returns (losses (B,), clipped_sum GradientVector, norms (B,)).
    """
    if batch.features.shape[1] != params.W1.shape[0]:
        raise ConfigError(
            f"feature dim {batch.features.shape[1]} != model d_in {params.W1.shape[0]}"
        )
    B = batch.num_subgraphs
    d, h, c = params.dims
    if B == 0:
        zero = GradientVector(np.zeros(params.num_params), params.arch, params.dims)
        return np.zeros(0), zero, np.zeros(0)
    agg = _central_aggregate(params, batch)
    Z1, H1, Z2 = _head_forward(params, agg)
    logp = _log_softmax(Z2)
    losses = -logp[np.arange(B), batch.labels]

    dZ2 = np.exp(logp)
    dZ2[np.arange(B), batch.labels] -= 1.0  # (B, C)
    dH1 = dZ2 @ params.W2.T
    dZ1 = dH1 * _elu_grad(Z1)  # (B, H)

    central_rows = batch.offsets[:-1] + batch.central_pos
    if params.arch == ARCH_GIN:
        xc = batch.features[central_rows]  # (B, d)
        dlam = np.sum(dZ1 * (xc @ params.W1), axis=1)  # (B,)
    else:
        dlam = np.zeros(B)

    n_dz2 = np.linalg.norm(dZ2, axis=1)
    n_dz1 = np.linalg.norm(dZ1, axis=1)
    n_h1 = np.linalg.norm(H1, axis=1)
    n_agg = np.linalg.norm(agg, axis=1)
    sq = (
        n_dz2**2 * (n_h1**2 + 1.0)  # dW2 and db2
        + n_dz1**2 * (n_agg**2 + 1.0)  # dW1 and db1
        + dlam**2
    )
    norms = np.sqrt(sq)
    scale = np.ones(B)
    big = norms > CLIP_THRESHOLD
    scale[big] = CLIP_THRESHOLD / norms[big]

    sdZ1 = dZ1 * scale[:, None]
    sdZ2 = dZ2 * scale[:, None]
    gW1 = agg.T @ sdZ1
    gb1 = sdZ1.sum(axis=0)
    gW2 = H1.T @ sdZ2
    gb2 = sdZ2.sum(axis=0)
    parts = [gW1.ravel(), gb1, gW2.ravel(), gb2]
    if params.arch == ARCH_GIN:
        parts.append(np.array([np.sum(dlam * scale)]))
    flat = np.concatenate(parts)
    return losses, GradientVector(flat, params.arch, params.dims), norms


# -- per-sub-graph reference path ------------------------------------------


def _subgraph_aggregate(params: ModelParams, sub: SubGraph) -> np.ndarray:
    n = len(sub.members)
    indeg = np.bincount(sub.local_edges[:, 1], minlength=n) if len(sub.local_edges) else np.zeros(n, int)
    deg = indeg + 1.0
    c = sub.central_pos
    mask = sub.local_edges[:, 1] == c if len(sub.local_edges) else np.zeros(0, bool)
    srcs = sub.local_edges[mask, 0] if len(sub.local_edges) else np.zeros(0, int)
    x = sub.features
    if params.arch == ARCH_GCN:
        msg = np.sum(x[srcs] / np.sqrt(deg[srcs] * deg[c])[:, None], axis=0) if len(srcs) else 0.0
        return msg + x[c] / deg[c]
    if params.arch == ARCH_GIN:
        msg = x[srcs].sum(axis=0) if len(srcs) else 0.0
        return msg + (1.0 + params.gin_lambda) * x[c]
    msg = x[srcs].sum(axis=0) if len(srcs) else 0.0
    return (msg + x[c]) / deg[c]


def forward(params: ModelParams, sub: SubGraph):
    """Central-node logits and cached activations for one sub-graph."""
    if sub.features.shape[1] != params.W1.shape[0]:
        raise ConfigError(
            f"feature dim {sub.features.shape[1]} != model d_in {params.W1.shape[0]}"
        )
    a = _subgraph_aggregate(params, sub)
    z1 = a @ params.W1 + params.b1
    h1 = _elu(z1)
    z2 = h1 @ params.W2 + params.b2
    return z2, {"agg": a, "z1": z1, "h1": h1, "z2": z2}


def loss_and_grad(params: ModelParams, sub: SubGraph):
    """Cross-entropy of the central node and its exact parameter gradient."""
    z2, cache = forward(params, sub)
    logp = _log_softmax(z2)
    loss = float(-logp[sub.label])
    dz2 = np.exp(logp)
    dz2[sub.label] -= 1.0
    dh1 = params.W2 @ dz2
    dz1 = dh1 * _elu_grad(cache["z1"])
    gW2 = np.outer(cache["h1"], dz2)
    gb2 = dz2
    gW1 = np.outer(cache["agg"], dz1)
    gb1 = dz1
    parts = [gW1.ravel(), gb1, gW2.ravel(), gb2]
    if params.arch == ARCH_GIN:
        xc = sub.features[sub.central_pos]
        parts.append(np.array([float(np.dot(dz1, xc @ params.W1))]))
    return loss, GradientVector(np.concatenate(parts), params.arch, params.dims)


def clip_gradient(grad: GradientVector) -> GradientVector:
    """Scale to norm at most 0.5, preserving direction."""
    n = grad.norm()
    if n <= CLIP_THRESHOLD or n == 0.0:
        return GradientVector(grad.flat.copy(), grad.arch, grad.dims)
    return GradientVector(grad.flat * (CLIP_THRESHOLD / n), grad.arch, grad.dims)


# -- whole-graph (non-private) routine -------------------------------------


def full_graph_aggregate(params: ModelParams, g: Graph) -> np.ndarray:
    """(n, d_in) aggregation of every node over the whole graph."""
    n = g.num_nodes
    deg = g.in_degrees + 1.0
    src = g.edge_array()[:, 0] if g.num_edges else np.zeros(0, int)
    dst = g.out_idx
    if params.arch == ARCH_GCN:
        coef = 1.0 / np.sqrt(deg[src] * deg[dst])
        self_coef = 1.0 / deg
    elif params.arch == ARCH_GIN:
        coef = np.ones(len(src))
        self_coef = np.full(n, 1.0 + params.gin_lambda)
    else:
        coef = 1.0 / deg[dst]
        self_coef = 1.0 / deg
    agg = np.zeros((n, params.W1.shape[0]))
    if len(src):
        _kernels.scatter_rows(agg, dst, src, coef, g.features)
    agg += self_coef[:, None] * g.features
    return agg


def full_graph_loss_and_grad(params: ModelParams, g: Graph):
    """Mean cross-entropy over all nodes and its exact gradient (the
    non-private whole-graph training objective)."""
    n = g.num_nodes
    agg = full_graph_aggregate(params, g)
    Z1, H1, Z2 = _head_forward(params, agg)
    logp = _log_softmax(Z2)
    loss = float(-logp[np.arange(n), g.labels].mean())
    dZ2 = np.exp(logp)
    dZ2[np.arange(n), g.labels] -= 1.0
    dZ2 /= n
    dH1 = dZ2 @ params.W2.T
    dZ1 = dH1 * _elu_grad(Z1)
    gW1 = agg.T @ dZ1
    gb1 = dZ1.sum(axis=0)
    gW2 = H1.T @ dZ2
    gb2 = dZ2.sum(axis=0)
    parts = [gW1.ravel(), gb1, gW2.ravel(), gb2]
    if params.arch == ARCH_GIN:
        parts.append(np.array([np.sum(dZ1 * (g.features @ params.W1))]))
    return loss, GradientVector(np.concatenate(parts), params.arch, params.dims)


# -- checkpoints -----------------------------------------------------------


def save_params(params: ModelParams, path_prefix: str) -> None:
    """Flat little-endian float64 blob plus a JSON shape header."""
    vec = params.to_vector().astype("<f8")
    with open(path_prefix + ".bin", "wb") as f:
        f.write(vec.tobytes())
    d, h, c = params.dims
    header = {
        "arch": params.arch,
        "d_in": d,
        "d_hid": h,
        "num_classes": c,
        "num_params": params.num_params,
        "dtype": "<f8",
    }
    with open(path_prefix + ".json", "w") as f:
        json.dump(header, f, indent=2)
        f.write("\n")


def load_params(path_prefix: str) -> ModelParams:
    with open(path_prefix + ".json") as f:
        header = json.load(f)
    vec = np.frombuffer(open(path_prefix + ".bin", "rb").read(), dtype=header["dtype"])
    if len(vec) != header["num_params"]:
        raise ConfigError(
            f"checkpoint length {len(vec)} != header count {header['num_params']}"
        )
    d, h, c = header["d_in"], header["d_hid"], header["num_classes"]
    template = ModelParams(
        header["arch"], np.zeros((d, h)), np.zeros(h), np.zeros((h, c)), np.zeros(c)
    )
    return template.replace_vector(np.asarray(vec, dtype=np.float64))
