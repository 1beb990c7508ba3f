"""STDHL model assembly, graph-layer variants, baselines and checkpoints."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .encdec import (
    DEFAULT_LEVELS,
    ChannelMix,
    ForecastDecoder,
    ForecastQuantiles,
    SpatioTemporalEncoder,
)
from .hypergraph import (
    DynamicHypergraphLayer,
    HypergraphStructure,
    StaticHypergraphLayer,
    default_hyperedge_count,
)
from .numerics import (
    Module,
    ShapeError,
    Tensor,
    as_tensor,
    concatenate,
    einsum,
    glorot,
    matmul,
    no_grad,
    parameter,
    relu,
    softmax,
)

SPATIAL_KINDS = ("dyn-hypergraph", "static-graph", "dyn-graph", "static-hypergraph", "none")

#: model name -> spatial layer kind
MODEL_KINDS = {
    "stdhl": "dyn-hypergraph",
    "stsgl": "static-graph",
    "stdgl": "dyn-graph",
    "stshl": "static-hypergraph",
}
TRAINABLE_MODELS = tuple(MODEL_KINDS) + ("linear",)
BUILTIN_MODELS = ("persistence", "mechanism")


@dataclass
class ModelConfig:
    n_nodes: int = 10
    look_back: int = 12
    horizon: int = 4
    nwp_extension: int = 4
    measured_features: int = 6
    nwp_features: int = 6
    hidden: int = 32
    adjust_width: int = 32
    n_blocks: int = 2
    kernel_width: int = 3
    embedding_dim: int = 16
    levels: tuple[float, ...] = DEFAULT_LEVELS
    n_hyperedges: int | None = None
    spatial: str = "dyn-hypergraph"
    pearson_mode: str = "clip"
    linear_hidden: int = 64
    seed: int = 0

    def __post_init__(self):
        self.levels = tuple(float(u) for u in self.levels)
        if self.look_back < 1 or self.horizon < 1 or self.nwp_extension < 0:
            raise ValueError("need look_back >= 1, horizon >= 1, nwp_extension >= 0")
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be positive")
        if self.spatial not in SPATIAL_KINDS:
            raise ValueError(f"unknown spatial kind '{self.spatial}'; choose from {SPATIAL_KINDS}")
        if self.pearson_mode not in ("clip", "abs"):
            raise ValueError("pearson_mode must be 'clip' or 'abs'")
        if self.n_hyperedges is None:
            self.n_hyperedges = default_hyperedge_count(self.n_nodes)

    @property
    def measured_channels(self) -> int:
        return 1 + self.measured_features

    @property
    def nwp_steps(self) -> int:
        return self.horizon + 2 * self.nwp_extension

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


# -- static graph (Pearson) ---------------------------------------------------------


def pearson_adjacency(history: np.ndarray, mode: str = "clip") -> np.ndarray:
    """Pairwise Pearson coefficients of node histories with self-loops set to 1.

    Negative coefficients are clipped to 0 (``mode="clip"``) or folded by
    absolute value (``mode="abs"``). Constant series correlate only with themselves.
    """
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 2 or history.shape[1] < 2:
        raise ValueError("history must be (N, T) with at least 2 steps")
    centred = history - history.mean(axis=1, keepdims=True)
    norms = np.sqrt((centred**2).sum(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = (centred @ centred.T) / np.outer(norms, norms)
    corr[~np.isfinite(corr)] = 0.0
    corr = np.clip(corr, -1.0, 1.0)
    corr = np.maximum(corr, 0.0) if mode == "clip" else np.abs(corr)
    np.fill_diagonal(corr, 1.0)
    return 0.5 * (corr + corr.T)


def normalized_graph_operator(adjacency: np.ndarray) -> np.ndarray:
    """``D^-1/2 A D^-1/2`` for a symmetric non-negative adjacency with positive degrees."""
    deg = adjacency.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError(f"node {int(np.flatnonzero(deg <= 0)[0])} has zero degree")
    s = 1.0 / np.sqrt(deg)
    op = s[:, None] * adjacency * s[None, :]
    return 0.5 * (op + op.T)


class StaticGraphLayer(Module):
    """First-order graph convolution with a fixed operator and learnable channel transform."""

    kind = "static-graph"

    def __init__(self, operator: np.ndarray, n_channels: int):
        self.operator = np.asarray(operator, dtype=np.float64)
        self.theta = parameter(np.eye(n_channels))

    def forward(self, x: Tensor) -> Tensor:
        mixed = einsum("nm,bcmt->bcnt", Tensor(self.operator), x)
        return einsum("oc,bcnt->bont", self.theta, mixed)

    __call__ = forward

    def transfer_matrix(self, x: Tensor) -> np.ndarray:
        return np.broadcast_to(self.operator, (x.shape[0],) + self.operator.shape).copy()


def stsgl_layer(history: np.ndarray, n_channels: int = 1, mode: str = "clip") -> StaticGraphLayer:
    return StaticGraphLayer(normalized_graph_operator(pearson_adjacency(history, mode)), n_channels)


# -- dynamic graph -----------------------------------------------------------------


class DynamicGraphLayer(Module):
    """Graph convolution with an ``N x N`` row-softmax operator produced per window.

    A dense layer embeds each node's flattened window; query/key projections of
    the embedding give the operator logits directly, with no hyperedge bottleneck.
    """

    kind = "dyn-graph"

    def __init__(self, n_nodes: int, n_channels: int, n_steps: int, embedding_dim: int = 16,
                 rng: np.random.Generator | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.n_nodes, self.n_channels, self.n_steps = n_nodes, n_channels, n_steps
        fan_in = n_channels * n_steps
        self.embed_weight = glorot(rng, (fan_in, embedding_dim), fan_in, embedding_dim)
        self.embed_bias = parameter(np.zeros(embedding_dim))
        self.query = glorot(rng, (embedding_dim, embedding_dim), embedding_dim, embedding_dim)
        self.key = glorot(rng, (embedding_dim, embedding_dim), embedding_dim, embedding_dim)
        self.scale = 1.0 / math.sqrt(embedding_dim)

    def operator(self, x: Tensor) -> Tensor:
        b, c, n, t = x.shape
        if (c, n, t) != (self.n_channels, self.n_nodes, self.n_steps):
            raise ShapeError(f"layer expects {(self.n_channels, self.n_nodes, self.n_steps)}, got {(c, n, t)}")
        flat = x.transpose(0, 2, 1, 3).reshape(b, n, c * t)
        h = relu(matmul(flat, self.embed_weight) + self.embed_bias)
        logits = matmul(matmul(h, self.query), matmul(h, self.key).transpose(0, 2, 1))
        return softmax(logits * self.scale, axis=-1)

    def forward(self, x: Tensor) -> Tensor:
        return einsum("bnm,bcmt->bcnt", self.operator(x), x)

    __call__ = forward

    def transfer_matrix(self, x: Tensor) -> np.ndarray:
        return self.operator(x).data


def stdgl_layer(config: ModelConfig, n_channels: int, n_steps: int,
                rng: np.random.Generator | None = None) -> DynamicGraphLayer:
    return DynamicGraphLayer(config.n_nodes, n_channels, n_steps, config.embedding_dim, rng)


# -- static hypergraph via Gaussian mixture ---------------------------------------------


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator, n_iter: int = 50) -> np.ndarray:
    # k-means++ seeding, then Lloyd iterations
    centres = [points[rng.integers(len(points))]]
    for _ in range(1, k):
        d2 = np.min(((points[:, None, :] - np.array(centres)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        idx = rng.integers(len(points)) if total <= 0 else rng.choice(len(points), p=d2 / total)
        centres.append(points[idx])
    centres = np.array(centres)
    for _ in range(n_iter):
        labels = ((points[:, None, :] - centres[None]) ** 2).sum(-1).argmin(axis=1)
        new = np.array([points[labels == j].mean(0) if np.any(labels == j) else centres[j] for j in range(k)])
        if np.allclose(new, centres):
            break
        centres = new
    return centres


@dataclass
class GaussianMixtureFit:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    responsibilities: np.ndarray
    log_likelihood: float
    n_iter: int


def fit_diagonal_gmm(
    points: np.ndarray,
    n_components: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-6,
    var_floor: float = 1e-6,
) -> GaussianMixtureFit:
    """Diagonal-covariance Gaussian mixture fitted by expectation-maximisation."""
    x = np.asarray(points, dtype=np.float64)
    n, dim = x.shape
    if not 1 <= n_components <= n:
        raise ValueError(f"need 1 <= components <= {n} points, got {n_components}")
    rng = np.random.default_rng(seed)
    means = _kmeans(x, n_components, rng)
    labels = ((x[:, None, :] - means[None]) ** 2).sum(-1).argmin(axis=1)
    variances = np.empty_like(means)
    for j in range(n_components):
        members = x[labels == j]
        variances[j] = members.var(axis=0) if len(members) > 1 else x.var(axis=0)
    variances = np.maximum(variances, var_floor)
    weights = np.full(n_components, 1.0 / n_components)
    prev = -np.inf
    ll = -np.inf
    it = 0
    for it in range(1, max_iter + 1):
        log_p = (
            -0.5 * (((x[:, None, :] - means[None]) ** 2) / variances[None]).sum(-1)
            - 0.5 * np.log(2 * np.pi * variances).sum(-1)[None]
            + np.log(weights)[None]
        )
        top = log_p.max(axis=1, keepdims=True)
        log_norm = top[:, 0] + np.log(np.exp(log_p - top).sum(axis=1))
        resp = np.exp(log_p - log_norm[:, None])
        ll = float(log_norm.sum())
        nk = resp.sum(axis=0) + 1e-12
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        variances = np.maximum((resp.T @ (x**2)) / nk[:, None] - means**2, var_floor)
        if np.isfinite(prev) and abs(ll - prev) <= tol * abs(prev):
            break
        prev = ll
    log_p = (
        -0.5 * (((x[:, None, :] - means[None]) ** 2) / variances[None]).sum(-1)
        - 0.5 * np.log(2 * np.pi * variances).sum(-1)[None]
        + np.log(weights)[None]
    )
    top = log_p.max(axis=1, keepdims=True)
    resp = np.exp(log_p - top)
    resp /= resp.sum(axis=1, keepdims=True)
    return GaussianMixtureFit(weights, means, variances, resp, ll, it)


def gmm_hypergraph(history: np.ndarray, n_hyperedges: int, seed: int = 0) -> HypergraphStructure:
    """Hyperedges from mixture responsibilities above ``1 / I``, unit weights.

    Nodes left uncovered join their most responsible component; a component left
    empty takes the node with the highest responsibility for it.
    """
    history = np.asarray(history, dtype=np.float64)
    if n_hyperedges > history.shape[0]:
        raise ValueError("more hyperedges than nodes")
    fit = fit_diagonal_gmm(history, n_hyperedges, seed=seed)
    resp = fit.responsibilities
    h = (resp > 1.0 / n_hyperedges).astype(np.float64)
    for i in np.flatnonzero(h.sum(axis=1) == 0):
        h[i, resp[i].argmax()] = 1.0
    for j in np.flatnonzero(h.sum(axis=0) == 0):
        h[resp[:, j].argmax(), j] = 1.0
    return HypergraphStructure(h)


def stshl_layer(history: np.ndarray, n_hyperedges: int, n_channels: int = 1, seed: int = 0) -> StaticHypergraphLayer:
    return StaticHypergraphLayer(gmm_hypergraph(history, n_hyperedges, seed), n_channels)


class IdentitySpatial(Module):
    kind = "none"

    def forward(self, x: Tensor) -> Tensor:
        return x

    __call__ = forward

    def transfer_matrix(self, x: Tensor) -> np.ndarray:
        return np.broadcast_to(np.eye(x.shape[2]), (x.shape[0], x.shape[2], x.shape[2])).copy()


# -- forecasters ---------------------------------------------------------------------


class Forecaster:
    """Shared contract: ``predict(measured, nwp, speed100)`` -> ForecastQuantiles.

    Inputs are batched arrays ``(B, 1+F', N, T')`` and ``(B, F, N, T+2tau)``;
    ``speed100`` is the raw 100 m NWP speed over the target window ``(B, N, T)``.
    """

    name = "forecaster"
    trainable = False

    def __init__(self, config: ModelConfig):
        self.config = config

    @property
    def levels(self) -> tuple[float, ...]:
        return self.config.levels

    def check_inputs(self, measured, nwp) -> None:
        c = self.config
        want_m = (c.measured_channels, c.n_nodes, c.look_back)
        want_n = (c.nwp_features, c.n_nodes, c.nwp_steps)
        if tuple(measured.shape[1:]) != want_m:
            raise ShapeError(f"measured input: expected (B, {want_m}), got {tuple(measured.shape)}")
        if tuple(nwp.shape[1:]) != want_n:
            raise ShapeError(f"NWP input: expected (B, {want_n}), got {tuple(nwp.shape)}")

    def predict(self, measured, nwp, speed100=None) -> ForecastQuantiles:
        raise NotImplementedError


class NeuralForecaster(Forecaster, Module):
    trainable = True

    def forward_raw(self, measured, nwp) -> Tensor:
        raise NotImplementedError

    def predict(self, measured, nwp, speed100=None) -> ForecastQuantiles:
        measured = np.asarray(getattr(measured, "data", measured))
        nwp = np.asarray(getattr(nwp, "data", nwp))
        single = measured.ndim == 3
        if single:
            measured, nwp = measured[None], nwp[None]
        with no_grad():
            raw = self.forward_raw(Tensor(measured), Tensor(nwp)).data
        return ForecastQuantiles.from_raw(raw[0] if single else raw, self.levels)

    def buffers(self) -> dict[str, np.ndarray]:
        return {}


class StdhlModel(NeuralForecaster):
    """Measured-data encoder (causal) and NWP encoder (non-causal) feeding a quantile decoder.

    ``config.spatial`` selects the spatial layer: the dynamic hypergraph gives
    STDHL proper, the other kinds give the graph-variant ablations. Static
    variants need ``history`` (``N x T_hist`` training power) or saved ``buffers``.
    """

    def __init__(self, config: ModelConfig, history: np.ndarray | None = None,
                 buffers: dict[str, np.ndarray] | None = None):
        Forecaster.__init__(self, config)
        c = config
        self.name = {v: k for k, v in MODEL_KINDS.items()}.get(c.spatial, "stdhl-" + c.spatial)
        rng = np.random.default_rng(c.seed)
        self._buffers: dict[str, np.ndarray] = {}
        buffers = buffers or {}
        if c.spatial == "static-graph":
            if "graph_operator" in buffers:
                op = np.asarray(buffers["graph_operator"], dtype=np.float64)
            elif history is not None:
                op = normalized_graph_operator(pearson_adjacency(history, c.pearson_mode))
            else:
                raise ValueError("static-graph variant needs training history")
            self._buffers["graph_operator"] = op
            factory = lambda ch, steps, r: StaticGraphLayer(op, ch)  # noqa: E731
        elif c.spatial == "static-hypergraph":
            if "incidence" in buffers:
                structure = HypergraphStructure(np.asarray(buffers["incidence"]))
            elif history is not None:
                structure = gmm_hypergraph(history, c.n_hyperedges, c.seed)
            else:
                raise ValueError("static-hypergraph variant needs training history")
            self._buffers["incidence"] = structure.incidence.copy()
            factory = lambda ch, steps, r: StaticHypergraphLayer(structure, ch)  # noqa: E731
        elif c.spatial == "dyn-graph":
            factory = lambda ch, steps, r: DynamicGraphLayer(c.n_nodes, ch, steps, c.embedding_dim, r)  # noqa: E731
        elif c.spatial == "dyn-hypergraph":
            factory = lambda ch, steps, r: DynamicHypergraphLayer(  # noqa: E731
                c.n_nodes, ch, steps, c.n_hyperedges, c.embedding_dim, r
            )
        else:
            factory = lambda ch, steps, r: IdentitySpatial()  # noqa: E731

        self.measured_encoder = SpatioTemporalEncoder(
            c.n_nodes, c.measured_channels, c.look_back, factory, c.hidden, c.n_blocks, "causal", c.kernel_width, rng
        )
        self.nwp_encoder = SpatioTemporalEncoder(
            c.n_nodes, c.nwp_features, c.nwp_steps, factory, c.hidden, c.n_blocks, "noncausal", c.kernel_width, rng
        )
        self.measured_adjust = ChannelMix(c.hidden, c.adjust_width, rng)
        self.nwp_adjust = ChannelMix(c.hidden, c.adjust_width, rng)
        self.decoder = ForecastDecoder(
            c.n_nodes, c.adjust_width, c.look_back, c.nwp_steps, c.horizon, c.n_levels, c.hidden, c.kernel_width, rng
        )

    def buffers(self) -> dict[str, np.ndarray]:
        return dict(self._buffers)

    def forward_raw(self, measured, nwp) -> Tensor:
        measured, nwp = as_tensor(measured), as_tensor(nwp)
        self.check_inputs(measured, nwp)
        x_m = self.measured_adjust(self.measured_encoder(measured))
        x_n = self.nwp_adjust(self.nwp_encoder(nwp))
        return self.decoder(x_m, x_n)

    def transfer_matrices(self, measured, nwp, encoder: str = "measured", block: int = 0) -> np.ndarray:
        """Effective ``N x N`` operator of one spatial layer for each window in the batch."""
        enc = self.measured_encoder if encoder == "measured" else self.nwp_encoder
        x = as_tensor(measured if encoder == "measured" else nwp)
        with no_grad():
            inputs = enc.block_inputs(x)
            return enc.spatial[block].transfer_matrix(inputs[block])


def stdhl_forward(model: StdhlModel, measured, nwp) -> ForecastQuantiles:
    """Quantile forecasts ``(Q, N, T)`` for one window (or a batch)."""
    return model.predict(measured, nwp)


class LinearForecaster(NeuralForecaster):
    """Three dense layers over all flattened covariates."""

    name = "linear"

    def __init__(self, config: ModelConfig):
        Forecaster.__init__(self, config)
        c = config
        rng = np.random.default_rng(c.seed)
        d_in = c.measured_channels * c.n_nodes * c.look_back + c.nwp_features * c.n_nodes * c.nwp_steps
        d_out = c.n_levels * c.n_nodes * c.horizon
        h = c.linear_hidden
        self.w1 = glorot(rng, (d_in, h), d_in, h)
        self.b1 = parameter(np.zeros(h))
        self.w2 = glorot(rng, (h, h), h, h)
        self.b2 = parameter(np.zeros(h))
        self.w3 = glorot(rng, (h, d_out), h, d_out)
        self.b3 = parameter(np.zeros(d_out))

    def forward_raw(self, measured, nwp) -> Tensor:
        measured, nwp = as_tensor(measured), as_tensor(nwp)
        self.check_inputs(measured, nwp)
        b = measured.shape[0]
        c = self.config
        flat = concatenate([measured.reshape(b, -1), nwp.reshape(b, -1)], axis=1)
        h = relu(matmul(flat, self.w1) + self.b1)
        h = relu(matmul(h, self.w2) + self.b2)
        out = matmul(h, self.w3) + self.b3
        return out.reshape(b, c.n_levels, c.n_nodes, c.horizon)


def linear_forecast(model: LinearForecaster, measured, nwp) -> ForecastQuantiles:
    return model.predict(measured, nwp)


def persistence_forecast(y_hist, horizon: int) -> np.ndarray:
    """Repeat the last observed power ``y[:, t0]`` over the next ``horizon`` steps."""
    y_hist = np.asarray(y_hist, dtype=np.float64)
    if y_hist.ndim < 1 or y_hist.shape[-1] == 0:
        raise ValueError("persistence needs at least one observation")
    last = y_hist[..., -1:]
    return np.repeat(last, horizon, axis=-1)


class PersistenceForecaster(Forecaster):
    name = "persistence"

    def predict(self, measured, nwp=None, speed100=None) -> ForecastQuantiles:
        measured = np.asarray(measured)
        point = persistence_forecast(measured[..., 0, :, :], self.config.horizon)
        return ForecastQuantiles.point(np.clip(point, 0.0, 1.0), self.levels)


@dataclass(frozen=True)
class PowerCurve:
    """Monotone piecewise-linear turbine curve, speed (m/s) to per-unit power."""

    speeds: np.ndarray
    powers: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.speeds, dtype=np.float64)
        p = np.asarray(self.powers, dtype=np.float64)
        if s.ndim != 1 or s.shape != p.shape or s.size < 2:
            raise ValueError("power curve needs matching 1-D speed/power arrays with >= 2 points")
        if np.any(np.diff(s) <= 0):
            raise ValueError("power curve speeds must be strictly increasing")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("power curve values must lie in [0, 1]")
        object.__setattr__(self, "speeds", s)
        object.__setattr__(self, "powers", p)

    @classmethod
    def load(cls, path=None) -> "PowerCurve":
        if path is None:
            text = resources.files("stdhl").joinpath("resources/ge15_power_curve.csv").read_text()
        else:
            text = Path(path).read_text()
        rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        data = np.array([[float(v) for v in ln.split(",")] for ln in rows[1:]])
        return cls(data[:, 0], data[:, 1])

    @property
    def cut_in(self) -> float:
        return float(self.speeds[0])

    @property
    def cut_out(self) -> float:
        return float(self.speeds[-1])

    @property
    def rated_speed(self) -> float:
        return float(self.speeds[np.argmax(self.powers >= self.powers.max())])

    def __call__(self, speed) -> np.ndarray:
        speed = np.asarray(speed, dtype=np.float64)
        power = np.interp(speed, self.speeds, self.powers)
        return np.where((speed < self.cut_in) | (speed > self.cut_out), 0.0, power)

    def inverse(self, power) -> np.ndarray:
        """Smallest speed on the rising section that yields ``power``."""
        power = np.clip(np.asarray(power, dtype=np.float64), 0.0, self.powers.max())
        top = int(np.argmax(self.powers >= self.powers.max()))
        return np.interp(power, self.powers[: top + 1], self.speeds[: top + 1])


def mechanism_forecast(nwp_speed100, curve: PowerCurve | None = None) -> np.ndarray:
    """Per-unit power from forecast 100 m wind speed through the turbine curve."""
    curve = PowerCurve.load() if curve is None else curve
    speed = np.asarray(nwp_speed100, dtype=np.float64)
    if np.any(speed < 0):
        raise ValueError("wind speeds must be non-negative")
    return curve(speed)


class MechanismForecaster(Forecaster):
    name = "mechanism"

    def __init__(self, config: ModelConfig, curve: PowerCurve | None = None):
        super().__init__(config)
        self.curve = PowerCurve.load() if curve is None else curve

    def predict(self, measured=None, nwp=None, speed100=None) -> ForecastQuantiles:
        if speed100 is None:
            raise ValueError("mechanism model needs the raw 100 m NWP speed for the target window")
        return ForecastQuantiles.point(mechanism_forecast(speed100, self.curve), self.levels)


def build_forecaster(name: str, config: ModelConfig, history: np.ndarray | None = None) -> Forecaster:
    """Instantiate a model by roster name (``stdhl``, ``stsgl``, ``stdgl``, ``stshl``, ``linear``,
    ``persistence``, ``mechanism``)."""
    if name in MODEL_KINDS:
        cfg = ModelConfig.from_dict({**config.to_dict(), "spatial": MODEL_KINDS[name]})
        return StdhlModel(cfg, history=history)
    if name == "linear":
        return LinearForecaster(config)
    if name == "persistence":
        return PersistenceForecaster(config)
    if name == "mechanism":
        return MechanismForecaster(config)
    raise ValueError(f"unknown model '{name}'; valid names: {', '.join(TRAINABLE_MODELS + BUILTIN_MODELS)}")


# -- checkpoints ------------------------------------------------------------------------

CHECKPOINT_FORMAT = "stdhl-checkpoint"


def _encode_array(a: np.ndarray) -> dict[str, Any]:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": [float(v) for v in a.reshape(-1)]}


def _decode_array(d: dict[str, Any]) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def save_checkpoint(path, model: Forecaster, extra: dict[str, Any] | None = None) -> None:
    """Write config, quantile levels, buffers and parameters to one JSON file.

    Floats are written with ``repr`` precision, so loading is bit-exact.
    """
    doc: dict[str, Any] = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "model": model.name,
        "config": model.config.to_dict(),
        "levels": list(model.levels),
        "buffers": {},
        "parameters": {},
        "extra": extra or {},
    }
    if isinstance(model, NeuralForecaster):
        doc["buffers"] = {k: _encode_array(v) for k, v in model.buffers().items()}
        doc["parameters"] = {k: _encode_array(v) for k, v in model.state_dict().items()}
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[Forecaster, dict[str, Any]]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    config = ModelConfig.from_dict(doc["config"])
    name = doc["model"]
    buffers = {k: _decode_array(v) for k, v in doc.get("buffers", {}).items()}
    if name in MODEL_KINDS:
        model: Forecaster = StdhlModel(config, buffers=buffers)
    else:
        model = build_forecaster(name, config)
    if isinstance(model, NeuralForecaster):
        model.load_state_dict({k: _decode_array(v) for k, v in doc["parameters"].items()})
    return model, doc.get("extra", {})
