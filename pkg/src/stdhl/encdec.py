"""Attention filter, spatio-temporal encoder, forecast decoder and quantile loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numerics import (
    Module,
    ShapeError,
    Tensor,
    as_tensor,
    concatenate,
    einsum,
    glorot,
    parameter,
    sigmoid,
    softmax,
    tanh,
    where_scale,
)
from .temporal import GroupedTemporalLayer

DEFAULT_LEVELS = tuple(round(0.05 * k, 2) for k in range(1, 20))

_SQUASH = {"tanh": tanh, "sigmoid": sigmoid}


def _batched(x) -> tuple[Tensor, bool]:
    x = as_tensor(x)
    if x.ndim == 3:
        return x.reshape(1, *x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected (C, N, T) or (B, C, N, T), got {x.shape}")
    return x, False


class ChannelMix(Module):
    """1x1 convolution over channels, shared by all nodes and time steps."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        self.weight = glorot(rng, (out_channels, in_channels), in_channels, out_channels)
        self.bias = parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return einsum("oc,bcnt->bont", self.weight, x) + self.bias.reshape(1, -1, 1, 1)

    __call__ = forward


class AttentionFilter(Module):
    """Position-wise linear scores, squashed and softmaxed over time, gating the input."""

    def __init__(self, n_channels: int, rng: np.random.Generator, activation: str = "tanh"):
        if activation not in _SQUASH:
            raise ValueError(f"unknown activation '{activation}'")
        self.activation = activation
        self.weight = glorot(rng, (n_channels, n_channels), n_channels, n_channels)
        self.bias = parameter(np.zeros(n_channels))

    def weights(self, x: Tensor) -> Tensor:
        scores = einsum("oc,bcnt->bont", self.weight, x) + self.bias.reshape(1, -1, 1, 1)
        return softmax(_SQUASH[self.activation](scores), axis=-1)

    def forward(self, x: Tensor) -> Tensor:
        return self.weights(x) * x

    __call__ = forward


def attention_forward(f: AttentionFilter, x) -> Tensor:
    xb, single = _batched(x)
    out = f.forward(xb)
    return out.reshape(out.shape[1:]) if single else out


SpatialFactory = Callable[[int, int, np.random.Generator], Module]


class SpatioTemporalEncoder(Module):
    """Attention, then blocks of (spatial layer -> grouped TCN) with a residual per block.

    ``spatial_factory(channels, steps, rng)`` builds the spatial layer of each
    block, which lets the same encoder host every graph variant.
    """

    def __init__(
        self,
        n_nodes: int,
        in_channels: int,
        n_steps: int,
        spatial_factory: SpatialFactory,
        hidden: int = 32,
        n_blocks: int = 2,
        mode: str = "causal",
        kernel_width: int = 3,
        rng: np.random.Generator | None = None,
    ):
        rng = np.random.default_rng(0) if rng is None else rng
        self.mode = mode
        self.n_nodes = n_nodes
        self.in_channels = in_channels
        self.n_steps = n_steps
        self.hidden = hidden
        self.attention = AttentionFilter(in_channels, rng)
        self.spatial = []
        self.temporal = []
        self.residual = []
        for b in range(n_blocks):
            c_in = in_channels if b == 0 else hidden
            self.spatial.append(spatial_factory(c_in, n_steps, rng))
            self.temporal.append(
                GroupedTemporalLayer(
                    n_nodes, c_in, hidden, kernel_width, dilation=2**b, mode=mode, rng=rng
                )
            )
            self.residual.append(ChannelMix(c_in, hidden, rng) if c_in != hidden else None)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1:] != (self.in_channels, self.n_nodes, self.n_steps):
            raise ShapeError(
                f"encoder expects (B, {self.in_channels}, {self.n_nodes}, {self.n_steps}), got {x.shape}"
            )
        h = self.attention(x)
        for spatial, temporal, residual in zip(self.spatial, self.temporal, self.residual):
            out = temporal(spatial(h))
            h = out + (h if residual is None else residual(h))
        return h

    __call__ = forward

    def block_inputs(self, x: Tensor) -> list[Tensor]:
        """Input of each block's spatial layer, for transfer-matrix export."""
        h = self.attention(x)
        inputs = []
        for spatial, temporal, residual in zip(self.spatial, self.temporal, self.residual):
            inputs.append(h)
            out = temporal(spatial(h))
            h = out + (h if residual is None else residual(h))
        return inputs


def encoder_forward(e: SpatioTemporalEncoder, x) -> Tensor:
    xb, single = _batched(x)
    out = e.forward(xb)
    return out.reshape(out.shape[1:]) if single else out


class TimeProjection(Module):
    """Per-node linear map of the time axis, ``T_in -> T_out``."""

    def __init__(self, n_nodes: int, in_steps: int, out_steps: int, rng: np.random.Generator):
        self.weight = glorot(rng, (n_nodes, in_steps, out_steps), in_steps, out_steps)
        self.bias = parameter(np.zeros((n_nodes, out_steps)))

    def forward(self, x: Tensor) -> Tensor:
        return einsum("bcnt,nts->bcns", x, self.weight) + self.bias.reshape(1, 1, *self.bias.shape)

    __call__ = forward


@dataclass(frozen=True)
class ForecastQuantiles:
    """Quantile forecasts ``values[..., q, node, t]`` at strictly increasing ``levels``."""

    levels: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if levels.ndim != 1 or levels.size == 0:
            raise ValueError("levels must be a non-empty 1-D sequence")
        if np.any(levels <= 0) or np.any(levels >= 1) or np.any(np.diff(levels) <= 0):
            raise ValueError("levels must be strictly increasing inside (0, 1)")
        if values.ndim < 3 or values.shape[-3] != levels.size:
            raise ShapeError(f"values shape {values.shape} does not carry {levels.size} levels on axis -3")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_raw(cls, raw, levels) -> "ForecastQuantiles":
        """Sort across levels (rearrangement) and clip to per-unit range."""
        raw = raw.data if isinstance(raw, Tensor) else np.asarray(raw, dtype=np.float64)
        return cls(levels, np.clip(np.sort(raw, axis=-3), 0.0, 1.0))

    @classmethod
    def point(cls, forecast: np.ndarray, levels=DEFAULT_LEVELS) -> "ForecastQuantiles":
        """A point-mass forecast: every level carries the same value."""
        forecast = np.asarray(forecast, dtype=np.float64)
        values = np.repeat(forecast[..., None, :, :], len(levels), axis=-3)
        return cls(levels, values)

    @property
    def n_levels(self) -> int:
        return self.levels.size

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values, axis=-3) >= 0))

    def median(self) -> np.ndarray:
        """Deterministic forecast: the 0.5 level, or interpolated if absent."""
        hit = np.flatnonzero(np.isclose(self.levels, 0.5))
        if hit.size:
            return self.values[..., hit[0], :, :]
        moved = np.moveaxis(self.values, -3, -1)
        flat = moved.reshape(-1, self.n_levels)
        med = np.array([np.interp(0.5, self.levels, row) for row in flat])
        return med.reshape(moved.shape[:-1])


class ForecastDecoder(Module):
    """Maps encoded measured and NWP features to raw quantile outputs ``(B, Q, N, T)``.

    Each stream's time axis is first projected per node onto the horizon so the
    two streams can be concatenated along channels; a grouped TCN then produces
    one channel per quantile level.
    """

    def __init__(
        self,
        n_nodes: int,
        width: int,
        measured_steps: int,
        nwp_steps: int,
        horizon: int,
        n_quantiles: int,
        hidden: int = 32,
        kernel_width: int = 3,
        rng: np.random.Generator | None = None,
    ):
        rng = np.random.default_rng(0) if rng is None else rng
        self.n_nodes = n_nodes
        self.width = width
        self.horizon = horizon
        self.measured_time = TimeProjection(n_nodes, measured_steps, horizon, rng)
        self.nwp_time = TimeProjection(n_nodes, nwp_steps, horizon, rng)
        self.hidden_layer = GroupedTemporalLayer(
            n_nodes, 2 * width, hidden, kernel_width, 1, "noncausal", "relu", rng
        )
        self.output_layer = GroupedTemporalLayer(
            n_nodes, hidden, n_quantiles, kernel_width, 1, "noncausal", "identity", rng
        )

    def forward(self, x_m: Tensor, x_n: Tensor) -> Tensor:
        if x_m.shape[2] != self.n_nodes or x_n.shape[2] != self.n_nodes:
            raise ShapeError(f"node mismatch: measured {x_m.shape}, NWP {x_n.shape}, expected {self.n_nodes}")
        if x_m.shape[1] != self.width or x_n.shape[1] != self.width:
            raise ShapeError(f"decoder expects {self.width} channels per stream, got {x_m.shape[1]}, {x_n.shape[1]}")
        fused = concatenate([self.measured_time(x_m), self.nwp_time(x_n)], axis=1)
        return self.output_layer(self.hidden_layer(fused))

    __call__ = forward


def decoder_forward(d: ForecastDecoder, x_m, x_n, levels=DEFAULT_LEVELS) -> ForecastQuantiles:
    xm, single = _batched(x_m)
    xn, _ = _batched(x_n)
    raw = d.forward(xm, xn).data
    return ForecastQuantiles.from_raw(raw[0] if single else raw, levels)


def pinball_loss(pred, y, levels) -> Tensor:
    """Mean quantile loss of raw predictions ``(..., Q, N, T)`` against ``y`` ``(..., N, T)``."""
    pred = as_tensor(pred)
    y = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    if pred.shape[-3] != levels.size or pred.shape[:-3] + pred.shape[-2:] != y.shape:
        raise ShapeError(f"prediction {pred.shape} incompatible with target {y.shape} and {levels.size} levels")
    err = Tensor(y[..., None, :, :]) - pred
    u = levels.reshape(-1, 1, 1)
    return where_scale(err, err.data >= 0, u, u - 1.0).mean()


def quantile_loss(y, q: ForecastQuantiles) -> float:
    """Quantile (pinball) loss averaged over levels, nodes and steps; always >= 0."""
    return pinball_loss(Tensor(q.values), y, q.levels).item()
