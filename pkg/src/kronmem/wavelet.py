"""Periodized orthonormal Daubechies wavelet transform and coefficient selection.

Coefficient layout for a depth-``J`` decomposition of a length-``n`` signal:
``[a_J, d_J, d_{J-1}, ..., d_1]`` where ``a_J`` holds ``n / 2**J`` scaling
coefficients and ``d_j`` holds ``n / 2**j`` detail coefficients.  Transforms
act along axis 0 so a (time x channels) matrix is transformed channel-wise in
one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from numpy.polynomial import polynomial as P


@lru_cache(maxsize=None)
def _daubechies_lowpass(taps):
    if taps < 2 or taps % 2:
        raise ValueError(f"Daubechies filters have an even number of taps >= 2, got {taps}")
    p = taps // 2
    # |Q|^2 = sum_k C(p-1+k, k) y**k with y = sin^2(w/2); each root y_i maps to
    # the pair z + 1/z = 2 - 4 y_i, of which the root inside the unit circle is kept
    ycoef = [float(comb(p - 1 + k, k)) for k in range(p)]
    ys = P.polyroots(ycoef) if p > 1 else np.array([])
    inside = []
    for y in ys:
        b = 2.0 - 4.0 * y
        z = (b + np.sqrt(b * b - 4.0 + 0j)) / 2.0
        inside.append(z if abs(z) < 1.0 else 1.0 / z)
    q = np.real(P.polyfromroots(inside)) if inside else np.ones(1)
    h = P.polymul(q, [float(comb(p, i)) for i in range(p + 1)])
    h = np.real(h)[::-1]
    h *= np.sqrt(2.0) / h.sum()
    return h


def daubechies_filter(taps):
    """Orthonormal Daubechies lowpass filter with ``taps`` coefficients.

    Built by spectral factorization (minimum-phase root choice), so
    ``sum(h) == sqrt(2)``, ``sum(h**2) == 1`` and the filter has
    ``taps / 2`` vanishing moments.
    """
    return _daubechies_lowpass(int(taps)).copy()


def _highpass(h):
    N = len(h)
    return np.array([(-1) ** m * h[N - 1 - m] for m in range(N)])


def next_pow2(n):
    return 1 << max(0, int(n - 1).bit_length())


@dataclass(frozen=True)
class WaveletConfig:
    taps: int = 6
    levels: int | None = None
    padded_length: int = 256

    def __post_init__(self):
        n = self.padded_length
        if n < 1 or n & (n - 1):
            raise ValueError(f"padded_length must be a power of two, got {n}")
        if self.taps < 2 or self.taps % 2:
            raise ValueError(f"taps must be even and >= 2, got {self.taps}")
        max_levels = n.bit_length() - 1
        levels = max_levels if self.levels is None else self.levels
        if not 0 <= levels <= max_levels:
            raise ValueError(f"levels must lie in [0, {max_levels}], got {levels}")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def for_length(cls, n_times, taps=6, levels=None):
        """Config padding ``n_times`` samples to the next power of two."""
        return cls(taps=taps, levels=levels, padded_length=next_pow2(n_times))


def _pad(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[0] > n:
        raise ValueError(f"signal length {x.shape[0]} exceeds padded length {n}")
    if x.shape[0] == n:
        return x.copy()
    pad = [(0, n - x.shape[0])] + [(0, 0)] * (x.ndim - 1)
    return np.pad(x, pad)


def dwt_forward(signal, cfg):
    """Zero-pad along axis 0 and apply the periodized orthonormal DWT."""
    x = _pad(signal, cfg.padded_length)
    h = daubechies_filter(cfg.taps)
    g = _highpass(h)
    m = np.arange(len(h))
    out = np.empty_like(x)
    a = x
    end = cfg.padded_length
    for _ in range(cfg.levels):
        n = a.shape[0]
        idx = (2 * np.arange(n // 2)[:, None] + m[None, :]) % n
        blocks = a[idx]
        out[end - n // 2:end] = np.tensordot(blocks, g, axes=([1], [0]))
        a = np.tensordot(blocks, h, axes=([1], [0]))
        end -= n // 2
    out[:end] = a
    return out


def dwt_inverse(coeffs, cfg):
    """Exact inverse of :func:`dwt_forward` (without removing the padding)."""
    c = np.asarray(coeffs, dtype=float)
    n_total = cfg.padded_length
    if c.shape[0] != n_total:
        raise ValueError(f"expected {n_total} coefficients, got {c.shape[0]}")
    h = daubechies_filter(cfg.taps)
    g = _highpass(h)
    m = np.arange(len(h))
    n = n_total >> cfg.levels
    a = c[:n].copy()
    while n < n_total:
        d = c[n:2 * n]
        n2 = 2 * n
        idx = ((2 * np.arange(n)[:, None] + m[None, :]) % n2).ravel()
        contrib = (
            np.multiply.outer(h, a).swapaxes(0, 1) + np.multiply.outer(g, d).swapaxes(0, 1)
        ).reshape((n * len(h),) + a.shape[1:])
        up = np.zeros((n2,) + a.shape[1:])
        np.add.at(up, idx, contrib)
        a = up
        n = n2
    return a


def coefficient_levels(cfg):
    """Return ``(level, shift)`` arrays for every coefficient position.

    Scaling coefficients carry level ``cfg.levels``; the coefficient at
    ``(level, shift)`` is built from input samples starting at
    ``2**level * shift``.
    """
    n = cfg.padded_length
    level = np.empty(n, dtype=int)
    shift = np.empty(n, dtype=int)
    na = n >> cfg.levels
    level[:na] = cfg.levels
    shift[:na] = np.arange(na)
    start = na
    for j in range(cfg.levels, 0, -1):
        size = n >> j
        level[start:start + size] = j
        shift[start:start + size] = np.arange(size)
        start += size
    return level, shift


def boundary_mask(n_times, cfg):
    """Flag coefficients affected by zero padding or periodic wrap-around.

    A level-``j`` coefficient with shift ``k`` depends on the unwrapped
    sample range ``[2**j k, 2**j k + (2**j - 1)(taps - 1)]``.  It is flagged
    when that range reaches index ``n_times`` or beyond, i.e. it touches the
    padded region or wraps past the end of the periodic grid.
    """
    if not 0 <= n_times <= cfg.padded_length:
        raise ValueError("n_times must lie in [0, padded_length]")
    level, shift = coefficient_levels(cfg)
    scale = 2 ** level
    hi = scale * shift + (scale - 1) * (cfg.taps - 1)
    return hi >= n_times


@dataclass(frozen=True)
class CoefficientSelection:
    indices: tuple
    padded_length: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError("selected indices must be distinct")
        if any(i < 0 or i >= self.padded_length for i in idx):
            raise ValueError("selected index out of range")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    @property
    def index_array(self):
        return np.asarray(self.indices, dtype=int)


def select_coefficients(coeffs, mask, L):
    """Pick the ``L`` unmasked positions with the largest average energy.

    ``coeffs`` has shape ``(n_trials, padded_length, n_channels)`` (a 2-D
    array is taken as a single trial).  Energy is averaged over trials and
    channels; ties go to the lower index.  Indices are returned in
    ascending order.
    """
    C = np.asarray(coeffs, dtype=float)
    if C.ndim == 2:
        C = C[None]
    n = C.shape[1]
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise ValueError("mask length does not match coefficient count")
    free = np.flatnonzero(~mask)
    if L > free.size:
        raise ValueError(f"cannot select {L} coefficients, only {free.size} unmasked")
    energy = np.mean(C ** 2, axis=(0, 2))
    order = np.lexsort((free, -energy[free]))
    chosen = np.sort(free[order[:L]])
    return CoefficientSelection(tuple(chosen), n)


def extract_coefficients(coeffs, sel):
    return np.asarray(coeffs, dtype=float)[sel.index_array]


def embed_coefficients(selected, sel):
    """Place the rows of ``selected`` at ``sel.indices``; zeros elsewhere."""
    W = np.asarray(selected, dtype=float)
    if W.shape[0] != len(sel):
        raise ValueError(f"expected {len(sel)} rows, got {W.shape[0]}")
    out = np.zeros((sel.padded_length,) + W.shape[1:])
    out[sel.index_array] = W
    return out


def analysis_matrix(cfg):
    """Orthonormal ``n x n`` matrix whose product with a padded signal is its DWT."""
    return dwt_forward(np.eye(cfg.padded_length), cfg)
