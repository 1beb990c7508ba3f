"""Grouped temporal convolution: one dilated convolution stack per node."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .numerics import Module, ShapeError, Tensor, as_tensor, conv1d_nodes, parameter, relu

ACTIVATIONS: dict[str, Callable[[Tensor], Tensor] | None] = {
    "relu": relu,
    "identity": None,
}


class GroupedTemporalLayer(Module):
    """Per-node dilated convolution ``(B, C, N, T) -> (B, C', N, T)``.

    Each node owns its own ``(C', C, W)`` kernel and ``C'`` biases; no weights
    are shared across nodes, so spatial mixing happens only elsewhere.
    """

    def __init__(
        self,
        n_nodes: int,
        in_channels: int,
        out_channels: int,
        kernel_width: int = 3,
        dilation: int = 1,
        mode: str = "causal",
        activation: str = "relu",
        rng: np.random.Generator | None = None,
    ):
        if mode not in ("causal", "noncausal"):
            raise ValueError(f"unknown mode '{mode}'")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation '{activation}'; choose from {sorted(ACTIVATIONS)}")
        if dilation < 1:
            raise ValueError("dilation must be >= 1")
        rng = np.random.default_rng(0) if rng is None else rng
        self.n_nodes = n_nodes
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_width = kernel_width
        self.dilation = dilation
        self.mode = mode
        self.activation = activation
        fan_in = in_channels * kernel_width
        # He-uniform per node keeps ReLU stacks from collapsing at init
        limit = np.sqrt(6.0 / fan_in) if activation == "relu" else np.sqrt(3.0 / fan_in)
        self.kernel = parameter(
            rng.uniform(-limit, limit, size=(n_nodes, out_channels, in_channels, kernel_width))
        )
        self.bias = parameter(np.zeros((n_nodes, out_channels)))

    def forward(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != self.in_channels or x.shape[2] != self.n_nodes:
            raise ShapeError(
                f"grouped TCN expects (B, {self.in_channels}, {self.n_nodes}, T), got {x.shape}"
            )
        out = conv1d_nodes(x, self.kernel, self.bias, self.dilation, self.mode)
        act = ACTIVATIONS[self.activation]
        return out if act is None else act(out)

    __call__ = forward


def grouped_tcn_forward(layer: GroupedTemporalLayer, x) -> Tensor:
    """Apply ``layer`` to a ``(C, N, T)`` window or a ``(B, C, N, T)`` batch."""
    x = as_tensor(x)
    if x.ndim == 3:
        out = layer.forward(x.reshape(1, *x.shape))
        return out.reshape(out.shape[1:])
    return layer.forward(x)
