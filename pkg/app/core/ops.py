"""
Dense Tensor Ops

Forward functions and their analytic vector-Jacobian products (VJPs) for every
op the network is built from. Feature tensors are row-major [T, H, W, C];
convolution weights are [kt, kh, kw, Cin, Cout].

Each op comes as a pair:
- ``<op>(*inputs, **attrs) -> output``
- ``<op>_vjp(upstream, output, *inputs, **attrs) -> tuple of input gradients``

Convolutions use an im2col / col2im formulation: the padded input is unfolded
into a [To, Ho, Wo, kt, kh, kw, C] patch tensor with one strided slice per
kernel offset, which turns the convolution into a single tensordot. The
transposed convolution is the exact adjoint: col2im of the input contracted
with the same weights.

All functions are pure; with a single BLAS thread the results are bitwise
reproducible.
"""
import contextlib
import contextvars
from typing import Dict, Iterator, Optional, Sequence, Tuple

import einops
import numpy as np

from app.core.convSpec import ConvSpec
from app.errors import ShapeError

# Multiply-accumulate counter used to instrument attention projections and
# score/value products (see app/net/flops.py)
_mac_counter: contextvars.ContextVar[Optional[Dict[str, int]]] = contextvars.ContextVar("mac_counter", default=None)


@contextlib.contextmanager
def count_macs() -> Iterator[Dict[str, int]]:
    """Accumulate multiply-accumulates of linear and matmul ops executed inside the block."""
    counts = {"linear": 0, "matmul": 0}
    token = _mac_counter.set(counts)
    try:
        yield counts
    finally:
        _mac_counter.reset(token)


def _record_macs(kind: str, amount: int) -> None:
    counts = _mac_counter.get()
    if counts is not None:
        counts[kind] += int(amount)


# =============================================================================
# Convolution helpers
# =============================================================================


def _im2col(padded: np.ndarray, kernel: Sequence[int], stride: Sequence[int], out_ext: Sequence[int]) -> np.ndarray:
    kt, kh, kw = kernel
    st, sh, sw = stride
    to, ho, wo = out_ext
    cols = np.empty((to, ho, wo, kt, kh, kw, padded.shape[-1]), dtype=padded.dtype)
    for i in range(kt):
        for j in range(kh):
            for k in range(kw):
                cols[:, :, :, i, j, k, :] = padded[
                    i : i + st * (to - 1) + 1 : st,
                    j : j + sh * (ho - 1) + 1 : sh,
                    k : k + sw * (wo - 1) + 1 : sw,
                ]
    return cols


def _col2im(cols: np.ndarray, padded_ext: Sequence[int], kernel: Sequence[int], stride: Sequence[int]) -> np.ndarray:
    to, ho, wo, kt, kh, kw, channels = cols.shape
    st, sh, sw = stride
    padded = np.zeros((*padded_ext, channels), dtype=cols.dtype)
    for i in range(kt):
        for j in range(kh):
            for k in range(kw):
                padded[
                    i : i + st * (to - 1) + 1 : st,
                    j : j + sh * (ho - 1) + 1 : sh,
                    k : k + sw * (wo - 1) + 1 : sw,
                ] += cols[:, :, :, i, j, k, :]
    return padded


def _check_conv_operands(x: np.ndarray, w: np.ndarray, b: np.ndarray, spec: ConvSpec, channels: int, name: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{name}: expected [T,H,W,C] input, got shape {x.shape}")
    if x.shape[-1] != channels:
        raise ShapeError(f"{name}: input has {x.shape[-1]} channels, spec expects {channels}")
    if w.shape != spec.weight_shape:
        raise ShapeError(f"{name}: weight shape {w.shape} does not match spec {spec.weight_shape}")
    expected_bias = spec.in_channels if name == "transposed_conv3d" else spec.out_channels
    if b.shape != (expected_bias,):
        raise ShapeError(f"{name}: bias shape {b.shape} != ({expected_bias},)")


def _pad_widths(padding: Sequence[int]) -> Tuple[Tuple[int, int], ...]:
    return tuple((p, p) for p in padding) + ((0, 0),)


# =============================================================================
# conv3d
# =============================================================================


def conv3d(x: np.ndarray, w: np.ndarray, b: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """
    3D cross-correlation (no kernel flip).

    Output extents follow floor((n + 2*pad - kernel) / stride) + 1 per axis.

    Raises:
        ShapeError: channel / weight mismatch, or a padded extent smaller than the kernel
    """
    _check_conv_operands(x, w, b, spec, spec.in_channels, "conv3d")
    padded_ext = [n + 2 * p for n, p in zip(x.shape[:3], spec.padding)]
    if any(n < k for n, k in zip(padded_ext, spec.kernel)):
        raise ShapeError(f"conv3d: padded extents {tuple(padded_ext)} smaller than kernel {spec.kernel}")
    out_ext = spec.output_extents(x.shape[:3])
    cols = _im2col(np.pad(x, _pad_widths(spec.padding)), spec.kernel, spec.stride, out_ext)
    return np.tensordot(cols, w, axes=([3, 4, 5, 6], [0, 1, 2, 3])) + b


def conv3d_vjp(g: np.ndarray, out: np.ndarray, x: np.ndarray, w: np.ndarray, b: np.ndarray, spec: ConvSpec):
    out_ext = g.shape[:3]
    padded = np.pad(x, _pad_widths(spec.padding))
    cols = _im2col(padded, spec.kernel, spec.stride, out_ext)
    gw = np.tensordot(cols, g, axes=([0, 1, 2], [0, 1, 2]))
    gcols = np.tensordot(g, w, axes=([3], [4]))
    gpadded = _col2im(gcols, padded.shape[:3], spec.kernel, spec.stride)
    pt, ph, pw = spec.padding
    t, h, wd = x.shape[:3]
    gx = gpadded[pt : pt + t, ph : ph + h, pw : pw + wd]
    return gx, gw, g.sum(axis=(0, 1, 2))


# =============================================================================
# transposed_conv3d
# =============================================================================


def transposed_conv3d(y: np.ndarray, w: np.ndarray, b: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """
    Adjoint of conv3d under the same spec and weights.

    Consumes ``spec.out_channels`` channels and produces ``spec.in_channels``;
    output extents are (n - 1)*stride - 2*pad + kernel + output_padding.
    With zero bias, <conv3d(x), y> == <x, transposed_conv3d(y)>.
    """
    _check_conv_operands(y, w, b, spec, spec.out_channels, "transposed_conv3d")
    out_ext = spec.transposed_output_extents(y.shape[:3])
    if any(n < 1 for n in out_ext):
        raise ShapeError(f"transposed_conv3d: non-positive output extents {out_ext}")
    buffer_ext = [n + 2 * p for n, p in zip(out_ext, spec.padding)]
    cols = np.tensordot(y, w, axes=([3], [4]))
    buffer = _col2im(cols, buffer_ext, spec.kernel, spec.stride)
    pt, ph, pw = spec.padding
    to, ho, wo = out_ext
    return buffer[pt : pt + to, ph : ph + ho, pw : pw + wo] + b


def transposed_conv3d_vjp(g: np.ndarray, out: np.ndarray, y: np.ndarray, w: np.ndarray, b: np.ndarray, spec: ConvSpec):
    buffer = np.zeros((*(n + 2 * p for n, p in zip(g.shape[:3], spec.padding)), g.shape[-1]), dtype=g.dtype)
    pt, ph, pw = spec.padding
    to, ho, wo = g.shape[:3]
    buffer[pt : pt + to, ph : ph + ho, pw : pw + wo] = g
    gcols = _im2col(buffer, spec.kernel, spec.stride, y.shape[:3])
    gy = np.tensordot(gcols, w, axes=([3, 4, 5, 6], [0, 1, 2, 3]))
    gw = np.moveaxis(np.tensordot(y, gcols, axes=([0, 1, 2], [0, 1, 2])), 0, -1)
    return gy, gw, g.sum(axis=(0, 1, 2))


# =============================================================================
# Activations
# =============================================================================


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in (0, 1), got {slope}")
    return np.where(x >= 0, x, slope * x)


def leaky_relu_vjp(g, out, x, slope):
    return (g * np.where(x >= 0, 1.0, slope).astype(x.dtype),)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_vjp(g, out, x, axis=-1):
    # Accumulate in 64-bit; the row sum cancels badly in 32-bit
    p = softmax(x.astype(np.float64), axis=axis)
    g64 = g.astype(np.float64)
    return ((p * (g64 - (g64 * p).sum(axis=axis, keepdims=True))).astype(x.dtype),)


# =============================================================================
# Products
# =============================================================================


def linear(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """x[..., d] @ w[d, d'] -> [..., d']"""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    _record_macs("linear", int(np.prod(x.shape[:-1])) * w.shape[0] * w.shape[1])
    return x @ w


def linear_vjp(g, out, x, w):
    gw = x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    return g @ w.T, gw


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched a[..., n, k] @ b[..., k, m] with equal batch dims."""
    if a.ndim < 2 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    _record_macs("matmul", int(np.prod(a.shape[:-1])) * a.shape[-1] * b.shape[-1])
    return a @ b


def matmul_vjp(g, out, a, b):
    return g @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ g


# =============================================================================
# Elementwise and structural
# =============================================================================


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return a + b
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")


def add_vjp(g, out, a, b):
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def scale(x: np.ndarray, factor: float) -> np.ndarray:
    return x * x.dtype.type(factor)


def scale_vjp(g, out, x, factor):
    return (g * g.dtype.type(factor),)


def identity(x: np.ndarray) -> np.ndarray:
    return x.copy()


def identity_vjp(g, out, x):
    return (g,)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Per-token zero-mean, unit-variance normalization over the last axis."""
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(f"layer_norm: scale {gamma.shape} / shift {beta.shape} vs channels {x.shape[-1]}")
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def layer_norm_vjp(g, out, x, gamma, beta, eps=1e-5):
    # Accumulate in 64-bit; the mean-subtracted terms cancel badly in 32-bit
    x64, g64 = x.astype(np.float64), g.astype(np.float64)
    n = x.shape[-1]
    mu = x64.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(x64.var(axis=-1, keepdims=True) + eps)
    xhat = (x64 - mu) * inv
    gxhat = g64 * gamma.astype(np.float64)
    gx = inv / n * (n * gxhat - gxhat.sum(axis=-1, keepdims=True) - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True))
    lead = tuple(range(x.ndim - 1))
    return gx.astype(x.dtype), (g64 * xhat).sum(axis=lead).astype(gamma.dtype), g64.sum(axis=lead).astype(beta.dtype)


def _reverse_pattern(pattern: str) -> str:
    lhs, rhs = pattern.split("->")
    return f"{rhs.strip()} -> {lhs.strip()}"


def rearrange(x: np.ndarray, pattern: str, axes: Optional[Dict[str, int]] = None) -> np.ndarray:
    """einops rearrange; ``axes`` must name every composite-axis length needed to invert it."""
    try:
        return einops.rearrange(x, pattern, **(axes or {})).copy()
    except einops.EinopsError as e:
        raise ShapeError(f"rearrange {pattern!r} on shape {x.shape}: {e}")


def rearrange_vjp(g, out, x, pattern, axes=None):
    return (einops.rearrange(g, _reverse_pattern(pattern), **(axes or {})).copy(),)


def concat(*xs: np.ndarray, axis: int = -1) -> np.ndarray:
    try:
        return np.concatenate(xs, axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}")


def concat_vjp(g, out, *xs, axis=-1):
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return tuple(np.split(g, bounds, axis=axis))


def slice_axis(x: np.ndarray, axis: int, start: int, stop: int) -> np.ndarray:
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis of length {x.shape[axis]}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    return x[tuple(index)].copy()


def slice_axis_vjp(g, out, x, axis, start, stop):
    grad = np.zeros_like(x)
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    grad[tuple(index)] = g
    return (grad,)


def mse(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"mse: shapes {a.shape} and {b.shape} differ")
    diff = a - b
    return np.asarray(np.mean(diff * diff), dtype=a.dtype)


def mse_vjp(g, out, a, b):
    ga = (2.0 / a.size) * (a - b) * g
    return ga.astype(a.dtype), (-ga).astype(b.dtype)
