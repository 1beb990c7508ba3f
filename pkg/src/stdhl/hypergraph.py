"""Hypergraph structure and static/dynamic hypergraph convolution."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numerics import (
    Module,
    ShapeError,
    Tensor,
    as_tensor,
    einsum,
    glorot,
    matmul,
    pairwise_distance,
    parameter,
    sigmoid,
    softmax,
)


class SingularDegreeError(ValueError):
    """A node or hyperedge has zero degree, so its normalisation is undefined."""


@dataclass(frozen=True)
class HypergraphStructure:
    """Incidence matrix ``H`` (nodes x hyperedges) with positive hyperedge weights."""

    incidence: np.ndarray
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        h = np.asarray(self.incidence, dtype=np.float64)
        if h.ndim != 2:
            raise ShapeError(f"incidence must be 2-D, got shape {h.shape}")
        if not np.all((h == 0) | (h == 1)):
            raise ValueError("incidence entries must be 0 or 1")
        w = np.ones(h.shape[1]) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        if w.shape != (h.shape[1],):
            raise ShapeError(f"expected {h.shape[1]} hyperedge weights, got shape {w.shape}")
        if np.any(w <= 0):
            raise ValueError("hyperedge weights must be positive")
        empty = np.flatnonzero(h.sum(axis=0) == 0)
        if empty.size:
            raise ValueError(f"hyperedge {int(empty[0])} contains no nodes")
        h.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "incidence", h)
        object.__setattr__(self, "weights", w)

    @property
    def n_nodes(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_hyperedges(self) -> int:
        return self.incidence.shape[1]

    @property
    def node_degrees(self) -> np.ndarray:
        """Diagonal ``D_v`` with ``D_v(i, i) = sum_j W_j H(i, j)``."""
        return np.diag(self.incidence @ self.weights)

    @property
    def hyperedge_degrees(self) -> np.ndarray:
        """Diagonal ``D_e`` with ``D_e(j, j) = sum_i H(i, j)``."""
        return np.diag(self.incidence.sum(axis=0))

    def _node_scale(self) -> np.ndarray:
        deg = self.incidence @ self.weights
        zero = np.flatnonzero(deg <= 0)
        if zero.size:
            raise SingularDegreeError(f"node {int(zero[0])} belongs to no hyperedge (zero degree)")
        return 1.0 / np.sqrt(deg)

    def node_to_edge(self) -> np.ndarray:
        """Stage-one operator ``W D_e^-1 H^T D_v^-1/2`` of shape ``(I, N)``."""
        dv = self._node_scale()
        de = self.incidence.sum(axis=0)
        return (self.weights / de)[:, None] * self.incidence.T * dv[None, :]

    def edge_to_node(self) -> np.ndarray:
        """Stage-two operator ``D_v^-1/2 H`` of shape ``(N, I)``."""
        return self._node_scale()[:, None] * self.incidence

    def operator(self) -> np.ndarray:
        """The one-shot propagation matrix ``D_v^-1/2 H W D_e^-1 H^T D_v^-1/2``."""
        dv = np.diag(self._node_scale())
        de_inv = np.diag(1.0 / self.incidence.sum(axis=0))
        return dv @ self.incidence @ np.diag(self.weights) @ de_inv @ self.incidence.T @ dv


def incidence_from_hyperedges(
    n_nodes: int, hyperedges: Sequence[Sequence[int]], weights: Sequence[float] | None = None
) -> HypergraphStructure:
    """Build a hypergraph from zero-based node-index sets, one per hyperedge."""
    h = np.zeros((n_nodes, len(hyperedges)))
    for j, members in enumerate(hyperedges):
        members = list(members)
        if not members:
            raise ValueError(f"hyperedge {j} is empty")
        for i in members:
            if not 0 <= i < n_nodes:
                raise IndexError(f"node index {i} in hyperedge {j} is outside [0, {n_nodes})")
            h[i, j] = 1.0
    return HypergraphStructure(h, None if weights is None else np.asarray(weights, dtype=np.float64))


def normalized_laplacian(h: HypergraphStructure) -> np.ndarray:
    """``I - D_v^-1/2 H W D_e^-1 H^T D_v^-1/2``; symmetric with spectrum in [0, 2]."""
    lap = np.eye(h.n_nodes) - h.operator()
    return 0.5 * (lap + lap.T)


def static_hyperconv(x, h: HypergraphStructure, theta=None) -> Tensor:
    """Two-stage hypergraph convolution: nodes to hyperedges, then back to nodes.

    Args:
        x: node signal with nodes on the second-to-last axis, e.g. ``(N, T)`` or
            ``(B, C, N, T)``.
        h: the fixed hypergraph.
        theta: optional learnable transform. A ``(C_out, C)`` matrix mixes the
            channel axis of a 4-D input; a scalar scales the output.
    """
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-2] != h.n_nodes:
        raise ShapeError(f"expected {h.n_nodes} nodes on axis -2, got shape {x.shape}")
    edge_features = matmul(Tensor(h.node_to_edge()), x)
    out = matmul(Tensor(h.edge_to_node()), edge_features)
    if theta is None:
        return out
    theta = as_tensor(theta)
    if theta.ndim == 2:
        if out.ndim != 4:
            raise ShapeError("a matrix theta needs a (B, C, N, T) input")
        return einsum("oc,bcnt->bont", theta, out)
    return out * theta


def chebyshev_eval(k: int, a: float) -> float:
    """Chebyshev polynomial ``T_k(a)`` by the three-term recurrence."""
    if k < 0:
        raise ValueError("order must be non-negative")
    prev, cur = 1.0, float(a)
    if k == 0:
        return prev
    for _ in range(k - 1):
        prev, cur = cur, 2.0 * a * cur - prev
    return cur


def default_hyperedge_count(n_nodes: int) -> int:
    return max(1, math.ceil(0.5 * n_nodes))


def _batched(x) -> tuple[Tensor, bool]:
    x = as_tensor(x)
    if x.ndim == 3:
        return x.reshape(1, *x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected (C, N, T) or (B, C, N, T), got {x.shape}")
    return x, False


def hypergraph_mix(x: Tensor, h_e, h_n, alpha) -> Tensor:
    """``alpha * H_n @ H_e @ x + (1 - alpha) * x`` applied to every channel.

    ``x`` is ``(B, C, N, T)``; ``h_e`` is ``(B, I, N)`` or ``(I, N)`` and ``h_n``
    is ``(B, N, I)`` or ``(N, I)``.
    """
    h_e, h_n, alpha = as_tensor(h_e), as_tensor(h_n), as_tensor(alpha)
    if h_e.ndim == 2:
        edge_features = einsum("in,bcnt->bcit", h_e, x)
    else:
        edge_features = einsum("bin,bcnt->bcit", h_e, x)
    if h_n.ndim == 2:
        mixed = einsum("ni,bcit->bcnt", h_n, edge_features)
    else:
        mixed = einsum("bni,bcit->bcnt", h_n, edge_features)
    return alpha * mixed + (1.0 - alpha) * x


class DynamicHypergraphLayer(Module):
    """Hypergraph convolution whose incidence is inferred from the current window.

    Node embeddings come from a linear map of each node's flattened ``C x T``
    features. Hyperedge embeddings are a free table plus a projection of the
    mean node embedding. Soft incidence rows are ``softmax(-distance)``.
    """

    kind = "dyn-hypergraph"

    def __init__(
        self,
        n_nodes: int,
        n_channels: int,
        n_steps: int,
        n_hyperedges: int | None = None,
        embedding_dim: int = 16,
        rng: np.random.Generator | None = None,
        self_loop_logit: float = 0.0,
    ):
        rng = np.random.default_rng(0) if rng is None else rng
        self.n_nodes = n_nodes
        self.n_channels = n_channels
        self.n_steps = n_steps
        self.n_hyperedges = n_hyperedges or default_hyperedge_count(n_nodes)
        self.embedding_dim = embedding_dim
        fan_in = n_channels * n_steps
        self.node_weight = glorot(rng, (fan_in, embedding_dim), fan_in, embedding_dim)
        self.node_bias = parameter(np.zeros(embedding_dim))
        self.edge_base = parameter(rng.normal(0.0, 1.0, size=(self.n_hyperedges, embedding_dim)))
        self.edge_proj = glorot(rng, (embedding_dim, embedding_dim), embedding_dim, embedding_dim)
        self.self_loop_logit = parameter(float(self_loop_logit))

    @property
    def alpha(self) -> Tensor:
        return sigmoid(self.self_loop_logit)

    def node_embeddings(self, x: Tensor) -> Tensor:
        b, c, n, t = x.shape
        if (c, n, t) != (self.n_channels, self.n_nodes, self.n_steps):
            raise ShapeError(
                f"layer expects (C, N, T) = {(self.n_channels, self.n_nodes, self.n_steps)}, got {(c, n, t)}"
            )
        flat = x.transpose(0, 2, 1, 3).reshape(b, n, c * t)
        return matmul(flat, self.node_weight) + self.node_bias

    def incidence(self, x: Tensor) -> tuple[Tensor, Tensor]:
        nodes = self.node_embeddings(x)
        edges = self.edge_base + matmul(nodes.mean(axis=1, keepdims=True), self.edge_proj)
        dist = pairwise_distance(edges, nodes)  # (B, I, N)
        h_e = softmax(-dist, axis=-1)
        h_n = softmax(-dist.transpose(0, 2, 1), axis=-1)
        return h_e, h_n

    def forward(self, x: Tensor) -> Tensor:
        h_e, h_n = self.incidence(x)
        return hypergraph_mix(x, h_e, h_n, self.alpha)

    __call__ = forward

    def transfer_matrix(self, x: Tensor) -> np.ndarray:
        h_e, h_n = self.incidence(x)
        a = self.alpha.item()
        return a * (h_n.data @ h_e.data) + (1.0 - a) * np.eye(self.n_nodes)


def dynamic_incidence(layer: DynamicHypergraphLayer, x) -> tuple[Tensor, Tensor]:
    """Soft incidence pair ``(H_e, H_n)``: ``(I, N)`` and ``(N, I)``, rows summing to one."""
    xb, single = _batched(x)
    h_e, h_n = layer.incidence(xb)
    if single:
        return h_e.reshape(h_e.shape[1:]), h_n.reshape(h_n.shape[1:])
    return h_e, h_n


def dynamic_hyperconv(layer: DynamicHypergraphLayer, x) -> Tensor:
    xb, single = _batched(x)
    out = layer.forward(xb)
    return out.reshape(out.shape[1:]) if single else out


def transfer_matrix(layer, x) -> np.ndarray:
    """Effective node-to-node operator ``alpha * H_n H_e + (1 - alpha) I`` for one window."""
    xb, single = _batched(x)
    m = layer.transfer_matrix(xb)
    return m[0] if single else m


class StaticHypergraphLayer(Module):
    """Fixed-incidence hypergraph convolution with a learnable channel transform."""

    kind = "static-hypergraph"

    def __init__(self, structure: HypergraphStructure, n_channels: int):
        self.structure = structure
        self.theta = parameter(np.eye(n_channels))

    def forward(self, x: Tensor) -> Tensor:
        return static_hyperconv(x, self.structure, self.theta)

    __call__ = forward

    def transfer_matrix(self, x: Tensor) -> np.ndarray:
        op = self.structure.operator()
        return np.broadcast_to(op, (x.shape[0],) + op.shape).copy()


def write_matrix_csv(path, matrix: np.ndarray, labels: Sequence[str]) -> None:
    """Write an ``N x N`` matrix with a header row of node labels."""
    matrix = np.asarray(matrix)
    if matrix.shape != (len(labels), len(labels)):
        raise ShapeError(f"matrix shape {matrix.shape} does not match {len(labels)} labels")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(labels))
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])
