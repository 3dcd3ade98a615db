"""Differentiable operations over Tensor nodes.

Each op computes its forward value with numpy (or a kernels.py hot path)
and attaches the analytic vector-Jacobian closure. Parent gradients are
only materialized for parents that require them, so frozen weights cost
nothing on the backward sweep.

Ops accept Tensor or Param arguments; raw arrays become constant leaves.
"""

import numpy as np
from scipy.special import erf

from . import kernels
from .errors import DimensionError
from .tensor import Param, Tensor

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    if isinstance(x, Param):
        return x.value
    return Tensor(np.asarray(x, dtype=np.float64))


def constant(x):
    return Tensor(np.asarray(x, dtype=np.float64))


def _same_shape(a, b, what):
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{what}: shapes {a.data.shape} and {b.data.shape} differ")


# --------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return Tensor(a.data + b.data, parents=(a, b), vjp=lambda g: (g, g))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return Tensor(a.data - b.data, parents=(a, b), vjp=lambda g: (g, -g))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return Tensor(ad * bd, parents=(a, b), vjp=lambda g: (g * bd, g * ad))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "div")
    ad, bd = a.data, b.data
    return Tensor(ad / bd, parents=(a, b), vjp=lambda g: (g / bd, -g * ad / (bd * bd)))


def abs_(x):
    x = as_tensor(x)
    sgn = np.sign(x.data)
    return Tensor(np.abs(x.data), parents=(x,), vjp=lambda g: (g * sgn,))


def maximum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "maximum")
    take_a = a.data >= b.data
    return Tensor(
        np.maximum(a.data, b.data),
        parents=(a, b),
        vjp=lambda g: (g * take_a, g * ~take_a),
    )


def minimum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "minimum")
    take_a = a.data <= b.data
    return Tensor(
        np.minimum(a.data, b.data),
        parents=(a, b),
        vjp=lambda g: (g * take_a, g * ~take_a),
    )


def clamp_min(x, c):
    x = as_tensor(x)
    mask = x.data > c
    return Tensor(np.maximum(x.data, c), parents=(x,), vjp=lambda g: (g * mask,))


def scale(x, c):
    """Multiply by a python constant."""
    x = as_tensor(x)
    c = float(c)
    return Tensor(x.data * c, parents=(x,), vjp=lambda g: (g * c,))


def shift(x, c):
    """Add a python constant."""
    x = as_tensor(x)
    return Tensor(x.data + float(c), parents=(x,), vjp=lambda g: (g,))


def scale_by(x, s):
    """Multiply a tensor by a scalar graph node (shape () or (1,))."""
    x, s = as_tensor(x), as_tensor(s)
    if s.data.size != 1:
        raise DimensionError(f"scale_by: scalar expected, got shape {s.data.shape}")
    sval = float(s.data.reshape(()))
    xd = x.data

    def vjp(g):
        return (g * sval, np.sum(g * xd).reshape(s.data.shape))

    return Tensor(xd * sval, parents=(x, s), vjp=vjp)


# ---------------------------------------------------------------- structural


def reshape(x, shape):
    x = as_tensor(x)
    old = x.data.shape
    return Tensor(x.data.reshape(shape), parents=(x,), vjp=lambda g: (g.reshape(old),))


def concat0(parts):
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[0] for p in parts]
    offs = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[offs[i] : offs[i + 1]] for i in range(len(parts)))

    return Tensor(np.concatenate([p.data for p in parts], axis=0), parents=tuple(parts), vjp=vjp)


def slice0(x, start, stop):
    x = as_tensor(x)
    shp = x.data.shape

    def vjp(g):
        out = np.zeros(shp)
        out[start:stop] = g
        return (out,)

    return Tensor(x.data[start:stop].copy(), parents=(x,), vjp=vjp)


def gather_cell(x, i, j):
    """Pick the [C] fiber at grid cell (i, j) of a [C,H,W] map."""
    x = as_tensor(x)
    shp = x.data.shape

    def vjp(g):
        out = np.zeros(shp)
        out[:, i, j] = g
        return (out,)

    return Tensor(x.data[:, i, j].copy(), parents=(x,), vjp=vjp)


def take_scalar(x, idx):
    x = as_tensor(x)
    shp = x.data.shape

    def vjp(g):
        out = np.zeros(shp)
        out.flat[idx] = g
        return (out,)

    return Tensor(np.float64(x.data.flat[idx]), parents=(x,), vjp=vjp)


def heads_split(x, heads):
    """[L,D] -> [heads, L, D/heads]."""
    x = as_tensor(x)
    L, D = x.data.shape
    dh = D // heads
    y = np.ascontiguousarray(x.data.reshape(L, heads, dh).transpose(1, 0, 2))
    return Tensor(y, parents=(x,), vjp=lambda g: (g.transpose(1, 0, 2).reshape(L, D),))


def heads_merge(x):
    """[heads, L, dh] -> [L, heads*dh]."""
    x = as_tensor(x)
    h, L, dh = x.data.shape
    y = np.ascontiguousarray(x.data.transpose(1, 0, 2).reshape(L, h * dh))
    return Tensor(y, parents=(x,), vjp=lambda g: (g.reshape(L, h, dh).transpose(1, 0, 2),))


def transpose_last2(x):
    x = as_tensor(x)
    return Tensor(
        np.ascontiguousarray(x.data.swapaxes(-1, -2)),
        parents=(x,),
        vjp=lambda g: (g.swapaxes(-1, -2),),
    )


def tokens_to_grid(x, gh, gw):
    """Row-major tokens [gh*gw, D] -> channels-first grid [D, gh, gw]."""
    x = as_tensor(x)
    n, d = x.data.shape
    if n != gh * gw:
        raise DimensionError(f"tokens_to_grid: {n} tokens cannot fill a {gh}x{gw} grid")
    y = np.ascontiguousarray(x.data.reshape(gh, gw, d).transpose(2, 0, 1))
    return Tensor(y, parents=(x,), vjp=lambda g: (g.transpose(1, 2, 0).reshape(n, d),))


def grid_to_tokens(x):
    """[D, gh, gw] -> row-major tokens [gh*gw, D]."""
    x = as_tensor(x)
    d, gh, gw = x.data.shape
    y = np.ascontiguousarray(x.data.transpose(1, 2, 0).reshape(gh * gw, d))
    return Tensor(y, parents=(x,), vjp=lambda g: (g.reshape(gh, gw, d).transpose(2, 0, 1),))


# ------------------------------------------------------------ linear algebra


def bmatmul(a, b):
    """Batched matmul over the leading axis: [B,n,k] @ [B,k,m]."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.shape[0] != bd.shape[0] or ad.shape[2] != bd.shape[1]:
        raise DimensionError(f"bmatmul: shapes {ad.shape} x {bd.shape} disagree")
    return Tensor(
        np.matmul(ad, bd),
        parents=(a, b),
        vjp=lambda g: (np.matmul(g, bd.swapaxes(-1, -2)), np.matmul(ad.swapaxes(-1, -2), g)),
    )


def linear(x, w, b=None):
    """y = x @ w (+ b). x:[n,d_in], w:[d_in,d_out], b:[d_out]."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.shape[-1] != w.data.shape[0]:
        raise DimensionError(
            f"linear: input shape {x.data.shape} does not match weight shape {w.data.shape}"
        )
    xd, wd = x.data, w.data
    if b is None:
        return Tensor(xd @ wd, parents=(x, w), vjp=lambda g: (g @ wd.T, xd.T @ g))
    b = as_tensor(b)
    if b.data.shape != (w.data.shape[1],):
        raise DimensionError(
            f"linear: bias shape {b.data.shape} does not match weight shape {w.data.shape}"
        )

    def vjp(g):
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.T @ g if w.requires_grad else None
        gb = g.sum(axis=tuple(range(g.ndim - 1))) if b.requires_grad else None
        return (gx, gw, gb)

    return Tensor(xd @ wd + b.data, parents=(x, w, b), vjp=vjp)


# -------------------------------------------------------------------- neural


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if eps <= 0:
        raise DimensionError(f"layer_norm: eps must be positive, got {eps}")
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise DimensionError(
            f"layer_norm: affine shapes {gamma.data.shape}/{beta.data.shape} do not match width {d}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gamma.data + beta.data

    def vjp(g):
        gxhat = g * gamma.data
        if x.requires_grad:
            m1 = gxhat.mean(axis=-1, keepdims=True)
            m2 = (gxhat * xhat).mean(axis=-1, keepdims=True)
            gx = inv * (gxhat - m1 - xhat * m2)
        else:
            gx = None
        lead = tuple(range(g.ndim - 1))
        gg = (g * xhat).sum(axis=lead) if gamma.requires_grad else None
        gb = g.sum(axis=lead) if beta.requires_grad else None
        return (gx, gg, gb)

    return Tensor(y, parents=(x, gamma, beta), vjp=vjp)


def softmax(x):
    """Stable softmax along the last axis; rows sum to one."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return Tensor(y, parents=(x,), vjp=vjp)


def gelu(x):
    """Exact Gaussian-error-linear unit."""
    x = as_tensor(x)
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / _SQRT2))
    y = xd * cdf

    def vjp(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)
        return (g * (cdf + xd * pdf),)

    return Tensor(y, parents=(x,), vjp=vjp)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return Tensor(x.data * mask, parents=(x,), vjp=lambda g: (g * mask,))


def sigmoid(x):
    x = as_tensor(x)
    xd = x.data
    y = np.empty_like(xd)
    pos = xd >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    y[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return (g * y * (1.0 - y),)

    return Tensor(y, parents=(x,), vjp=vjp)


def conv2d(x, w, b, padding=1):
    """3x3 cross-correlation with zero padding 1, spatial extents preserved."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if padding != 1:
        raise DimensionError(f"conv2d: only padding=1 is supported, got {padding}")
    if x.data.ndim != 3 or w.data.ndim != 4 or w.data.shape[2:] != (3, 3):
        raise DimensionError(
            f"conv2d: expected x [c,h,w] and w [co,ci,3,3], got {x.data.shape} and {w.data.shape}"
        )
    if x.data.shape[0] != w.data.shape[1]:
        raise DimensionError(
            f"conv2d: input channels {x.data.shape} do not match kernel {w.data.shape}"
        )
    xd, wd = x.data, w.data
    y = kernels.conv2d_fwd(xd, wd, b.data)

    def vjp(g):
        g = np.ascontiguousarray(g)
        gx = kernels.conv2d_bwd_x(g, wd) if x.requires_grad else None
        gw = kernels.conv2d_bwd_w(g, xd) if w.requires_grad else None
        gb = g.sum(axis=(1, 2)) if b.requires_grad else None
        return (gx, gw, gb)

    return Tensor(y, parents=(x, w, b), vjp=vjp)


# ---------------------------------------------------------------- reductions


def sum_all(x):
    x = as_tensor(x)
    shp = x.data.shape
    return Tensor(np.float64(x.data.sum()), parents=(x,), vjp=lambda g: (np.full(shp, float(g)),))


def mean0(x):
    """Mean over axis 0 (token pooling)."""
    x = as_tensor(x)
    n = x.data.shape[0]
    shp = x.data.shape
    return Tensor(
        x.data.mean(axis=0),
        parents=(x,),
        vjp=lambda g: (np.broadcast_to(g / n, shp).copy(),),
    )
