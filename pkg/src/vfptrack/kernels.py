"""Hot numeric kernels: 3x3 convolution and DFT inner loops.

Every kernel exists twice, as numba @njit loops and as vectorized numpy.
The public names (conv2d_fwd, conv2d_bwd_x, conv2d_bwd_w, dft_block,
ct_combine) are bound to one variant at import time via backend.USE_NUMBA.
Both variants stay importable so the benchmark can race them.

Twiddle angles are reduced mod N in integer arithmetic before the division
so long transforms do not lose precision to huge cos/sin arguments.
"""

import numpy as np

from .backend import HAVE_NUMBA, USE_NUMBA

# ---------------------------------------------------------------- numpy path


def conv2d_fwd_numpy(x, w, b):
    """3x3 cross-correlation, zero padding 1. x:[ci,h,w] w:[co,ci,3,3] -> [co,h,w]."""
    c_in, h, wd = x.shape
    c_out = w.shape[0]
    xp = np.zeros((c_in, h + 2, wd + 2), dtype=np.float64)
    xp[:, 1 : h + 1, 1 : wd + 1] = x
    y = np.empty((c_out, h, wd), dtype=np.float64)
    y[:] = b[:, None, None]
    for ki in range(3):
        for kj in range(3):
            y += np.tensordot(w[:, :, ki, kj], xp[:, ki : ki + h, kj : kj + wd], axes=(1, 0))
    return y


def conv2d_bwd_x_numpy(g, w):
    c_out, h, wd = g.shape
    c_in = w.shape[1]
    gp = np.zeros((c_in, h + 2, wd + 2), dtype=np.float64)
    for ki in range(3):
        for kj in range(3):
            gp[:, ki : ki + h, kj : kj + wd] += np.tensordot(w[:, :, ki, kj], g, axes=(0, 0))
    return gp[:, 1 : h + 1, 1 : wd + 1]


def conv2d_bwd_w_numpy(g, x):
    c_out, h, wd = g.shape
    c_in = x.shape[0]
    xp = np.zeros((c_in, h + 2, wd + 2), dtype=np.float64)
    xp[:, 1 : h + 1, 1 : wd + 1] = x
    gw = np.empty((c_out, c_in, 3, 3), dtype=np.float64)
    for ki in range(3):
        for kj in range(3):
            gw[:, :, ki, kj] = np.tensordot(g, xp[:, ki : ki + h, kj : kj + wd], axes=([1, 2], [1, 2]))
    return gw


def dft_block_numpy(a):
    """Full DFT of each row of a:[batch,n] complex. Used at prime lengths."""
    n = a.shape[1]
    k = np.arange(n, dtype=np.int64)
    expo = (k[:, None] * k[None, :]) % n
    w = np.exp((-2j * np.pi / n) * expo)
    return a @ w


def ct_combine_numpy(subs, n):
    """Cooley-Tukey recombination: out[b,k] = sum_r tw(rk) subs[r,b,k%m]."""
    f, bsz, m = subs.shape
    k = np.arange(n, dtype=np.int64)
    out = np.zeros((bsz, n), dtype=np.complex128)
    src = k % m
    for r in range(f):
        tw = np.exp((-2j * np.pi / n) * ((r * k) % n))
        out += subs[r][:, src] * tw[None, :]
    return out


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def conv2d_fwd_numba(x, w, b):
        c_in, h, wd = x.shape
        c_out = w.shape[0]
        y = np.empty((c_out, h, wd), dtype=np.float64)
        for o in range(c_out):
            for i in range(h):
                for j in range(wd):
                    acc = b[o]
                    for c in range(c_in):
                        for ki in range(3):
                            ii = i + ki - 1
                            if ii < 0 or ii >= h:
                                continue
                            for kj in range(3):
                                jj = j + kj - 1
                                if 0 <= jj < wd:
                                    acc += w[o, c, ki, kj] * x[c, ii, jj]
                    y[o, i, j] = acc
        return y

    @njit(cache=True)
    def conv2d_bwd_x_numba(g, w):
        c_out, h, wd = g.shape
        c_in = w.shape[1]
        gx = np.zeros((c_in, h, wd), dtype=np.float64)
        for o in range(c_out):
            for i in range(h):
                for j in range(wd):
                    gv = g[o, i, j]
                    for c in range(c_in):
                        for ki in range(3):
                            ii = i + ki - 1
                            if ii < 0 or ii >= h:
                                continue
                            for kj in range(3):
                                jj = j + kj - 1
                                if 0 <= jj < wd:
                                    gx[c, ii, jj] += w[o, c, ki, kj] * gv
        return gx

    @njit(cache=True)
    def conv2d_bwd_w_numba(g, x):
        c_out, h, wd = g.shape
        c_in = x.shape[0]
        gw = np.zeros((c_out, c_in, 3, 3), dtype=np.float64)
        for o in range(c_out):
            for i in range(h):
                for j in range(wd):
                    gv = g[o, i, j]
                    for c in range(c_in):
                        for ki in range(3):
                            ii = i + ki - 1
                            if ii < 0 or ii >= h:
                                continue
                            for kj in range(3):
                                jj = j + kj - 1
                                if 0 <= jj < wd:
                                    gw[o, c, ki, kj] += gv * x[c, ii, jj]
        return gw

    @njit(cache=True)
    def dft_block_numba(a):
        bsz, n = a.shape
        tw = np.empty(n, dtype=np.complex128)
        for r in range(n):
            ang = -2.0 * np.pi * r / n
            tw[r] = complex(np.cos(ang), np.sin(ang))
        out = np.empty((bsz, n), dtype=np.complex128)
        for b in range(bsz):
            for k in range(n):
                acc = 0.0 + 0.0j
                for j in range(n):
                    acc += a[b, j] * tw[(k * j) % n]
                out[b, k] = acc
        return out

    @njit(cache=True)
    def ct_combine_numba(subs, n):
        f, bsz, m = subs.shape
        tw = np.empty(n, dtype=np.complex128)
        for r in range(n):
            ang = -2.0 * np.pi * r / n
            tw[r] = complex(np.cos(ang), np.sin(ang))
        out = np.zeros((bsz, n), dtype=np.complex128)
        for k in range(n):
            s = k % m
            for r in range(f):
                w = tw[(r * k) % n]
                for b in range(bsz):
                    out[b, k] += w * subs[r, b, s]
        return out


if USE_NUMBA:
    conv2d_fwd = conv2d_fwd_numba
    conv2d_bwd_x = conv2d_bwd_x_numba
    conv2d_bwd_w = conv2d_bwd_w_numba
    dft_block = dft_block_numba
    ct_combine = ct_combine_numba
else:
    conv2d_fwd = conv2d_fwd_numpy
    conv2d_bwd_x = conv2d_bwd_x_numpy
    conv2d_bwd_w = conv2d_bwd_w_numpy
    dft_block = dft_block_numpy
    ct_combine = ct_combine_numpy
