"""Differentiable operations.

Elementwise binary ops require identical shapes.  The only broadcasting in the
engine is the bias add inside :func:`dense` and :func:`conv2d`, plus Python
scalars, which act as constants.
"""

from __future__ import annotations

import numpy as np

from padkit.numcore import _kernels
from padkit.numcore.tensor import ConfigurationError, DimensionError, Tensor

_make = Tensor._make


def _as_operand(x, like: Tensor):
    """Return (array, tensor-or-None) for a binary-op operand."""
    if isinstance(x, Tensor):
        if x.shape != like.shape:
            raise DimensionError(f"shape mismatch {like.shape} vs {x.shape}")
        return x.data, x
    if np.isscalar(x):
        return like.data.dtype.type(x), None
    arr = np.asarray(x, dtype=like.dtype)
    if arr.shape != like.shape:
        raise DimensionError(f"shape mismatch {like.shape} vs {arr.shape}")
    return arr, None


# --------------------------------------------------------------------- arithmetic
def add(a: Tensor, b) -> Tensor:
    bd, bt = _as_operand(b, a)
    parents = (a, bt) if bt is not None else (a,)
    return _make(a.data + bd, parents, lambda g: (g, g))


def sub(a: Tensor, b) -> Tensor:
    bd, bt = _as_operand(b, a)
    parents = (a, bt) if bt is not None else (a,)
    return _make(a.data - bd, parents, lambda g: (g, -g))


def mul(a: Tensor, b) -> Tensor:
    bd, bt = _as_operand(b, a)
    ad = a.data
    parents = (a, bt) if bt is not None else (a,)
    return _make(ad * bd, parents, lambda g: (g * bd, g * ad))


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def scale_by(a: Tensor, s: Tensor) -> Tensor:
    """Multiply ``a`` by a scalar tensor ``s`` (shape ``()`` or ``(1,)``)."""
    if s.size != 1:
        raise DimensionError(f"scale_by needs a scalar multiplier, got {s.shape}")
    sv = s.data.reshape(())
    ad = a.data

    def bw(g):
        return g * sv, np.asarray(np.sum(g * ad), dtype=s.dtype).reshape(s.shape)

    return _make(ad * sv, (a, s), bw)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    with np.errstate(invalid="ignore", divide="ignore"):  # reported as NumericError
        out = np.log(ad)
    return _make(out, (a,), lambda g: (g / ad,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2 * g * ad,))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    bd, bt = _as_operand(b, a)
    pick_a = a.data <= bd
    parents = (a, bt) if bt is not None else (a,)
    return _make(np.where(pick_a, a.data, bd), parents, lambda g: (g * pick_a, g * ~pick_a))


# -------------------------------------------------------------------- reductions
def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    out = np.sum(a.data, axis=axis)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(a.dtype, copy=True),)

    return _make(np.asarray(out, dtype=a.dtype), (a,), bw)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


# ------------------------------------------------------------------ shape changes
def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def flatten(a: Tensor) -> Tensor:
    return reshape(a, (a.shape[0], -1))


def columns(a: Tensor, start: int, stop: int) -> Tensor:
    """Columns ``start:stop`` of a 2-d tensor."""
    if a.data.ndim != 2 or not 0 <= start < stop <= a.shape[1]:
        raise DimensionError(f"cannot take columns {start}:{stop} of {a.shape}")
    shape = a.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, start:stop] = g
        return (full,)

    return _make(np.ascontiguousarray(a.data[:, start:stop]), (a,), bw)


def concat(tensors, axis: int = 1) -> Tensor:
    shapes = [t.shape for t in tensors]
    ref = list(shapes[0])
    for s in shapes[1:]:
        if len(s) != len(ref) or any(x != y for k, (x, y) in enumerate(zip(s, ref)) if k != axis % len(ref)):
            raise DimensionError(f"cannot concatenate shapes {shapes} on axis {axis}")
    sizes = [s[axis] for s in shapes]
    cuts = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, cuts, axis=axis)))


# ------------------------------------------------------------------- activations
def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1 - out * out),))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / np.sum(e, axis=axis, keepdims=True)

    def bw(g):
        return (p * (g - np.sum(g * p, axis=axis, keepdims=True)),)

    return _make(p, (a,), bw)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - np.max(a.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * np.sum(g, axis=axis, keepdims=True),)

    return _make(out, (a,), bw)


# ------------------------------------------------------------------------ layers
def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight + bias`` with ``x: (N, D)``, ``weight: (D, M)``, ``bias: (M,)``."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"dense: cannot multiply {x.shape} by {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"dense: bias {bias.shape} does not match output width {weight.shape[1]}")
    xd, wd = x.data, weight.data
    out = xd @ wd + bias.data

    def bw(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return _make(out, (x, weight, bias), bw)


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    """Number of window positions along one axis.

    A stride that does not tile the padded input exactly is accepted only when
    the rows left over after the last window are all padding; if real input
    pixels would be silently skipped the geometry is rejected.
    """
    span = size + 2 * padding - k
    if span < 0 or span % stride > padding:
        raise ConfigurationError(
            f"conv geometry: size {size}, kernel {k}, stride {stride}, padding {padding} "
            "does not give an integer output size"
        )
    return span // stride + 1


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x: (N, C, H, W)`` with ``kernel: (F, C, kh, kw)``."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise DimensionError(f"conv2d expects 4-d input and kernel, got {x.shape}, {kernel.shape}")
    n, c, h, w = x.shape
    f, kc, kh, kw = kernel.shape
    if kc != c:
        raise DimensionError(f"conv2d: input has {c} channels, kernel expects {kc}")
    if bias.shape != (f,):
        raise DimensionError(f"conv2d: bias {bias.shape} does not match {f} filters")
    if stride < 1 or padding < 0:
        raise ConfigurationError("stride must be >= 1 and padding >= 0")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)

    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _kernels.im2col(xp, kh, kw, stride, ho, wo)
    wmat = kernel.data.reshape(f, -1)
    out = (wmat @ cols).reshape(f, n, ho, wo) + bias.data.reshape(f, 1, 1, 1)
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    xshape = xp.shape

    def bw(g):
        gmat = g.transpose(1, 0, 2, 3).reshape(f, -1)
        gk = (gmat @ cols.T).reshape(kernel.shape)
        gb = gmat.sum(axis=1)
        gx = None
        if x.requires_grad:
            gx = _kernels.col2im(wmat.T @ gmat, xshape, kh, kw, stride, ho, wo)
            if padding:
                gx = gx[:, :, padding:-padding, padding:-padding]
        return gx, gk, gb

    return _make(out, (x, kernel, bias), bw)
