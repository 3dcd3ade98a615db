"""Discrete Fourier transforms for frequency-domain prompt tokens.

`fft_1d` is a mixed-radix Cooley-Tukey transform (prime factors handled by
a direct DFT block), so any prompt count works, not just powers of two.
`dft_1d_naive` is the O(N^2) double-loop oracle it is tested against; the
two share no code path.

`fourier_prompt` realizes the two-pass transform used on prompt rows:
a 1D FFT along the channel axis, then along the token axis, then either
the real part (default) or the magnitude of the result. The real-part
composite is linear in its input and self-adjoint up to conjugation, so
its backward pass is the forward map applied to the upstream gradient.
"""

import numpy as np

from . import kernels
from .errors import DimensionError
from .ops import as_tensor
from .tensor import Tensor

FFT_MODES = ("channel-only", "spatial-only", "both")
FFT_OUTPUTS = ("real", "magnitude")


class ComplexTensor:
    """Split-complex array: matching float64 real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re, im=None):
        self.re = np.ascontiguousarray(re, dtype=np.float64)
        if im is None:
            im = np.zeros_like(self.re)
        self.im = np.ascontiguousarray(im, dtype=np.float64)
        if self.re.shape != self.im.shape:
            raise DimensionError(
                f"ComplexTensor: re shape {self.re.shape} != im shape {self.im.shape}"
            )

    @property
    def shape(self):
        return self.re.shape

    def to_complex(self):
        return self.re + 1j * self.im

    @classmethod
    def from_complex(cls, z):
        z = np.asarray(z, dtype=np.complex128)
        return cls(z.real.copy(), z.imag.copy())


def dft_1d_naive(x, axis=-1):
    """Direct-summation DFT along one axis: X[k] = sum_j x[j] e^{-2pi i kj/N}
    by an explicit double loop. Oracle only; O(N^2)."""
    z = x.to_complex()
    z = np.moveaxis(z, axis, -1)
    lead = z.shape[:-1]
    n = z.shape[-1]
    flat = z.reshape(-1, n)
    out = np.zeros_like(flat)
    tw = [complex(np.cos(-2.0 * np.pi * r / n), np.sin(-2.0 * np.pi * r / n)) for r in range(n)]
    for b in range(flat.shape[0]):
        row = flat[b].tolist()
        for k in range(n):
            acc = 0j
            for j in range(n):
                acc += row[j] * tw[(k * j) % n]
            out[b, k] = acc
    return ComplexTensor.from_complex(np.moveaxis(out.reshape(*lead, n), -1, axis))


def _smallest_factor(n):
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


def _fft_rows(z):
    """FFT along the last axis of a (batch, n) complex array."""
    n = z.shape[1]
    if n == 1:
        return z.copy()
    f = _smallest_factor(n)
    if f == n:
        return kernels.dft_block(np.ascontiguousarray(z))
    subs = np.stack([_fft_rows(np.ascontiguousarray(z[:, r::f])) for r in range(f)], axis=0)
    return kernels.ct_combine(np.ascontiguousarray(subs), n)


def _fft_axis(z, axis):
    z = np.moveaxis(np.asarray(z, dtype=np.complex128), axis, -1)
    lead = z.shape[:-1]
    n = z.shape[-1]
    out = _fft_rows(np.ascontiguousarray(z.reshape(-1, n)))
    return np.moveaxis(out.reshape(*lead, n), -1, axis)


def fft_1d(x, axis=-1):
    """Mixed-radix FFT along one axis of a ComplexTensor."""
    return ComplexTensor.from_complex(_fft_axis(x.to_complex(), axis))


def _prompt_spectrum(arr, mode):
    """Channel-axis FFT, then token-axis FFT, per the selected mode."""
    if mode not in FFT_MODES:
        raise DimensionError(f"unknown fft mode {mode!r}, expected one of {FFT_MODES}")
    z = np.asarray(arr, dtype=np.complex128)
    if z.ndim != 2:
        raise DimensionError(f"prompt transform expects a [tokens, channels] matrix, got {z.shape}")
    if mode in ("channel-only", "both"):
        z = _fft_axis(z, axis=1)
    if mode in ("spatial-only", "both"):
        z = _fft_axis(z, axis=0)
    return z


def fourier_prompt_variant(t, mode="both", output="real"):
    """Differentiable frequency transform of prompt rows [m, c] -> [m, c]."""
    if output not in FFT_OUTPUTS:
        raise DimensionError(f"unknown fft output {output!r}, expected one of {FFT_OUTPUTS}")
    t = as_tensor(t)
    z = _prompt_spectrum(t.data, mode)
    if output == "real":
        y = np.ascontiguousarray(z.real)

        def vjp(g):
            # Re-part composite is linear with a conjugate-symmetric matrix,
            # so the adjoint is the forward transform of the gradient.
            return (np.ascontiguousarray(_prompt_spectrum(g, mode).real),)

    else:
        mag = np.abs(z)
        y = mag

        def vjp(g):
            safe = np.where(mag > 0.0, mag, 1.0)
            phase = np.where(mag > 0.0, z / safe, 0.0)  # subgradient 0 at the origin
            return (np.ascontiguousarray(_prompt_spectrum(np.conj(g * phase), mode).real),)

    return Tensor(y, parents=(t,), vjp=vjp)


def fourier_prompt(t):
    """Default prompt transform: both axes, real part."""
    return fourier_prompt_variant(t, mode="both", output="real")
