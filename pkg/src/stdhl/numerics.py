"""Dense double-precision tensors with tape-based reverse-mode differentiation.

Every operation builds a node that remembers its parents and a closure mapping
the output gradient to parent gradients. ``backward`` orders the nodes reachable
from a scalar loss into a :class:`GradTape` and replays it in reverse.

Layers in this package work on batched ``(B, C, N, T)`` arrays; the operations
here are shape-generic where numpy broadcasting makes that free.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GradTape",
    "ShapeError",
    "as_tensor",
    "no_grad",
    "is_grad_enabled",
    "matmul",
    "einsum",
    "exp",
    "log",
    "relu",
    "sigmoid",
    "tanh",
    "softmax",
    "concatenate",
    "where_scale",
    "conv1d_nodes",
    "conv1d_grouped",
    "pairwise_distance",
    "backward",
    "finite_diff_check",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """A float64 array that can take part in reverse-mode differentiation.

    Leaves created with ``requires_grad=True`` receive ``.grad`` after
    :func:`backward`. Intermediate tensors keep references to their parents only
    while gradient recording is enabled.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"

    # -- construction helpers -------------------------------------------------
    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward_fn, op: str):
        out = cls(data)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward_fn
            out.op = op
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- elementwise arithmetic ----------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._from_op(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
            "add",
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._from_op(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
            "sub",
        )

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._from_op(
            a * b,
            (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._from_op(
            a / b,
            (self, other),
            lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)),
            "div",
        )

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        a = self.data
        p = float(exponent)
        return Tensor._from_op(
            a**p, (self,), lambda g: (g * p * a ** (p - 1.0),), "pow"
        )

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(as_tensor(other), self)

    def abs(self) -> "Tensor":
        a = self.data
        return Tensor._from_op(np.abs(a), (self,), lambda g: (g * np.sign(a),), "abs")

    # -- shape manipulation ---------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._from_op(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(old),), "reshape"
        )

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor._from_op(
            self.data.transpose(axes),
            (self,),
            lambda g: (g.transpose(inverse),),
            "transpose",
        )

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    def __getitem__(self, index) -> "Tensor":
        shape = self.shape

        def grad_fn(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._from_op(self.data[index], (self,), grad_fn, "getitem")

    # -- reductions -------------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def grad_fn(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._from_op(
            self.data.sum(axis=axis, keepdims=keepdims), (self,), grad_fn, "sum"
        )

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- linear algebra ------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with numpy's batch broadcasting rules."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return Tensor._from_op(ad @ bd, (a, b), grad_fn, "matmul")


def einsum(subscripts: str, *operands) -> Tensor:
    """Explicit-output einsum without ellipsis or repeated indices per operand."""
    operands = [as_tensor(op) for op in operands]
    if "->" not in subscripts or "." in subscripts:
        raise ValueError("einsum requires explicit output and no ellipsis")
    inputs, output = subscripts.replace(" ", "").split("->")
    in_subs = inputs.split(",")
    if len(in_subs) != len(operands):
        raise ValueError("einsum operand count mismatch")
    for sub, op in zip(in_subs, operands):
        if len(set(sub)) != len(sub):
            raise ValueError(f"repeated index in einsum operand '{sub}'")
        if len(sub) != op.ndim:
            raise ShapeError(f"einsum operand '{sub}' does not match shape {op.shape}")
    arrays = [op.data for op in operands]
    try:
        result = np.einsum(subscripts, *arrays, optimize=True)
    except ValueError as exc:
        raise ShapeError(f"einsum '{subscripts}' failed for shapes {[a.shape for a in arrays]}") from exc

    def grad_fn(g):
        grads = []
        for i, sub in enumerate(in_subs):
            if not operands[i].requires_grad:
                grads.append(None)
                continue
            other_subs = [s for j, s in enumerate(in_subs) if j != i]
            other_arrays = [a for j, a in enumerate(arrays) if j != i]
            available = set(output).union(*other_subs) if other_subs else set(output)
            target = "".join(c for c in sub if c in available)
            expr = ",".join([output] + other_subs) + "->" + target
            r = np.einsum(expr, g, *other_arrays, optimize=True)
            if target != sub:
                shape = [arrays[i].shape[k] if c in available else 1 for k, c in enumerate(sub)]
                r = np.broadcast_to(r.reshape(shape), arrays[i].shape).copy()
            grads.append(r)
        return grads

    return Tensor._from_op(np.asarray(result, dtype=np.float64), operands, grad_fn, "einsum")


# -- elementwise nonlinearities ------------------------------------------------


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return Tensor._from_op(y, (x,), lambda g: (g * y,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    a = x.data
    return Tensor._from_op(np.log(a), (x,), lambda g: (g / a,), "log")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    # np.maximum keeps NaN so divergence stays visible downstream
    return Tensor._from_op(np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    a = x.data
    # split by sign to avoid overflow in exp
    y = np.empty_like(a)
    pos = a >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    y[~pos] = ea / (1.0 + ea)
    return Tensor._from_op(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return Tensor._from_op(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def softmax(x, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``."""
    x = as_tensor(x)
    if not -x.ndim <= axis < max(x.ndim, 1):
        raise ValueError(f"axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(y, (x,), grad_fn, "softmax")


def where_scale(x, mask: np.ndarray, if_true, if_false) -> Tensor:
    """Multiply ``x`` by ``if_true`` where ``mask`` holds and ``if_false`` elsewhere.

    The scale factors are constants, so the gradient is piecewise constant with
    the kink placed wherever ``mask`` flips.
    """
    x = as_tensor(x)
    scale = np.where(mask, if_true, if_false).astype(np.float64)
    return x * Tensor(scale)


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return np.split(g, bounds, axis=axis)

    return Tensor._from_op(
        np.concatenate([t.data for t in tensors], axis=axis), tensors, grad_fn, "concatenate"
    )


# -- convolution ----------------------------------------------------------------


def _conv_padding(width: int, dilation: int, mode: str) -> tuple[int, int]:
    total = dilation * (width - 1)
    if mode == "causal":
        return total, 0
    if mode == "noncausal":
        left = total // 2
        return left, total - left
    raise ValueError(f"unknown convolution mode '{mode}' (expected 'causal' or 'noncausal')")


def conv1d_nodes(x, kernel, bias=None, dilation: int = 1, mode: str = "causal") -> Tensor:
    """Dilated 1-D convolution with an independent kernel per node.

    Args:
        x: input of shape ``(B, C, N, T)``.
        kernel: per-node kernels of shape ``(N, C_out, C, W)``.
        bias: optional per-node bias of shape ``(N, C_out)``.
        dilation: spacing between kernel taps, at least 1.
        mode: ``"causal"`` pads only on the left so output ``t`` sees inputs
            ``<= t``; ``"noncausal"`` pads symmetrically, extra tap on the right.

    Returns:
        Tensor of shape ``(B, C_out, N, T)``.
    """
    if int(dilation) != dilation or dilation < 1:
        raise ValueError(f"dilation must be a positive integer, got {dilation}")
    dilation = int(dilation)
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv1d_nodes expects x (B,C,N,T) and kernel (N,C',C,W); got {x.shape}, {kernel.shape}")
    n_batch, n_in, n_nodes, n_steps = x.shape
    if kernel.shape[0] != n_nodes or kernel.shape[2] != n_in:
        raise ShapeError(f"kernel {kernel.shape} incompatible with input {x.shape}")
    width = kernel.shape[3]
    if width < 1:
        raise ValueError("kernel width must be at least 1")
    left, right = _conv_padding(width, dilation, mode)
    n_out = kernel.shape[1]
    xp = np.pad(x.data, ((0, 0), (0, 0), (0, 0), (left, right)))
    # tap w looks back dilation * w steps from the newest sample in its window
    offsets = [dilation * (width - 1 - w) for w in range(width)]
    taps = np.stack([xp[..., o : o + n_steps] for o in offsets], axis=-1)  # (B, C, N, T, W)
    # per-node batched matmul: (N, B*T, C*W) @ (N, C*W, C')
    cols = taps.transpose(2, 0, 3, 1, 4).reshape(n_nodes, n_batch * n_steps, n_in * width)
    k = kernel.data
    k_mat = k.reshape(n_nodes, n_out, n_in * width).transpose(0, 2, 1)
    out = (cols @ k_mat).reshape(n_nodes, n_batch, n_steps, n_out).transpose(1, 3, 0, 2)
    parents = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (n_nodes, n_out):
            raise ShapeError(f"bias shape {bias.shape} != {(n_nodes, n_out)}")
        out = out + bias.data.T[None, :, :, None]
        parents.append(bias)

    def grad_fn(g):
        grads = [None, None, None]
        g_mat = g.transpose(2, 0, 3, 1).reshape(n_nodes, n_batch * n_steps, n_out)
        if x.requires_grad:
            dcols = (g_mat @ k_mat.transpose(0, 2, 1)).reshape(n_nodes, n_batch, n_steps, n_in, width)
            dtaps = dcols.transpose(1, 3, 0, 2, 4)
            dxp = np.zeros_like(xp)
            for w, o in enumerate(offsets):
                dxp[..., o : o + n_steps] += dtaps[..., w]
            grads[0] = dxp[..., left : left + n_steps]
        if kernel.requires_grad:
            dk = cols.transpose(0, 2, 1) @ g_mat  # (N, C*W, C')
            grads[1] = dk.transpose(0, 2, 1).reshape(k.shape)
        if bias is not None:
            grads[2] = g.sum(axis=(0, 3)).T
        return grads[: len(parents)]

    return Tensor._from_op(out, parents, grad_fn, "conv1d_nodes")


def conv1d_grouped(x, kernel, bias=None, dilation: int = 1, mode: str = "causal") -> Tensor:
    """Single-group dilated convolution of a ``(C, T)`` signal with a ``(C', C, W)`` kernel.

    ``out[o, t] = sum_c sum_w kernel[o, c, w] * x[c, t - dilation * w]`` in causal
    mode (zeros before the start); non-causal mode shifts the window forward by
    half the receptive field. The time extent is preserved in both modes.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 2 or kernel.ndim != 3:
        raise ShapeError(f"conv1d_grouped expects x (C,T) and kernel (C',C,W); got {x.shape}, {kernel.shape}")
    n_in, n_steps = x.shape
    n_out = kernel.shape[0]
    x4 = x.reshape(1, n_in, 1, n_steps)
    k4 = kernel.reshape(1, *kernel.shape)
    b2 = None if bias is None else as_tensor(bias).reshape(1, n_out)
    return conv1d_nodes(x4, k4, b2, dilation, mode).reshape(n_out, n_steps)


# -- distances ------------------------------------------------------------------


def pairwise_distance(a, b) -> Tensor:
    """Euclidean distances between rows: ``(..., P, D)`` x ``(..., Q, D)`` -> ``(..., P, Q)``.

    The gradient at zero distance is taken as zero.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"embedding widths differ: {a.shape} vs {b.shape}")
    diff = a.data[..., :, None, :] - b.data[..., None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))

    def grad_fn(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(dist > 0, g / dist, 0.0)
        weighted = diff * scale[..., None]
        ga = weighted.sum(axis=-2)
        gb = -weighted.sum(axis=-3)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._from_op(dist, (a, b), grad_fn, "pairwise_distance")


# -- reverse pass -------------------------------------------------------------------


class GradTape:
    """Operations reachable from an output, in execution (topological) order."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "GradTape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def operations(self) -> list[Tensor]:
        return [n for n in self.nodes if not n.is_leaf]

    def backward(self, seed: np.ndarray) -> None:
        if not self.nodes:
            return
        grads: dict[int, np.ndarray] = {id(self.nodes[-1]): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    GradTape.from_output(loss).backward(np.ones_like(loss.data))


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-5,
    skip: Callable[[np.ndarray], np.ndarray] | None = None,
    atol: float = 1e-8,
) -> float:
    """Max relative error between the analytic gradient of ``f`` at ``x`` and central differences.

    ``skip`` may return a boolean mask of coordinates to leave out (kinks).
    The error is ``|a - n| / max(|a|, |n|, atol)``: relative for ordinary
    gradients, absolute for those below ``atol`` where differencing is noise.
    """
    leaf = Tensor(x.data.copy(), requires_grad=True)
    loss = f(leaf)
    backward(loss)
    analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
    flat = leaf.data.reshape(-1)
    numeric = np.zeros(flat.size)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f(Tensor(flat.reshape(leaf.shape).copy())).item()
            flat[i] = orig - eps
            down = f(Tensor(flat.reshape(leaf.shape).copy())).item()
            flat[i] = orig
            numeric[i] = (up - down) / (2 * eps)
    a = analytic.reshape(-1)
    err = np.abs(a - numeric) / np.maximum(np.maximum(np.abs(a), np.abs(numeric)), atol)
    if skip is not None:
        err = err[~np.asarray(skip(x.data), dtype=bool).reshape(-1)]
    return float(err.max()) if err.size else 0.0


def parameters_check(
    loss_fn: Callable[[], Tensor],
    params: Iterable[Tensor],
    eps: float = 1e-5,
    atol: float = 1e-8,
    per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Relative gradient error of ``loss_fn`` with respect to parameter tensors mutated in place.

    The error is ``|a - n| / max(|a|, |n|, atol)``, as in :func:`finite_diff_check`.
    ``per_tensor`` limits the check to that many randomly drawn coordinates of
    each tensor, which keeps large models affordable.
    """
    params = list(params)
    rng = np.random.default_rng(0) if rng is None else rng
    for p in params:
        p.grad = None
    backward(loss_fn())
    worst = 0.0
    with no_grad():
        for p in params:
            analytic = np.zeros_like(p.data) if p.grad is None else p.grad
            flat = p.data.reshape(-1)
            coords = range(flat.size)
            if per_tensor is not None and flat.size > per_tensor:
                coords = rng.choice(flat.size, per_tensor, replace=False)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + eps
                up = loss_fn().item()
                flat[i] = orig - eps
                down = loss_fn().item()
                flat[i] = orig
                num = (up - down) / (2 * eps)
                a = analytic.reshape(-1)[i]
                worst = max(worst, abs(a - num) / max(abs(a), abs(num), atol))
    for p in params:
        p.grad = None
    return worst


# -- parameter containers ---------------------------------------------------------


class Module:
    """Base class that discovers parameters on attributes.

    Parameters are ``Tensor`` attributes with ``requires_grad``; child modules
    may be attributes or lists of modules. Non-trainable constants that must be
    checkpointed are registered as buffers via ``self.buffers``.
    """

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = []
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((full, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(full + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{full}.{i}."))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch; missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(f"parameter {name}: expected {p.shape}, got {value.shape}")
            p.data = value.copy()


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-limit, limit, size=shape))
