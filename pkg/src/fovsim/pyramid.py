"""Multi-scale decomposition feeding the texture statistics.

Lowpass chain: 5-tap binomial filter + dyadic downsample (clamp-to-edge),
four levels L0..L3. At each of the first three scales the highpass
residual L_s - upsample(L_{s+1}) is split into four oriented bands by
steerable filters built from negated second-derivative-of-Gaussian
kernels. The four band filters are constructed to sum exactly to the
identity kernel, so the residual equals the band sum and the decomposition
reconstructs the input to floating-point roundoff.

All arrays here are 2-D float64. Every linear step has a hand-written
adjoint (used by the statistics gradients), verified against finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import correlate as nd_correlate
from scipy.signal import convolve2d

from .errors import BadChannelCount, TooSmall
from .imagekit import Image

N_LOWPASS = 4                       # L0..L3
N_BAND_SCALES = 3                   # bands at scales 0..2
ORIENTATIONS = (0, 45, 90, 135)     # derivative direction, degrees from x-axis

_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
_FILTER_SIGMA = 1.0
_FILTER_RADIUS = 3
_ORIENT_GAIN = 0.5


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1)
def oriented_kernels() -> tuple[np.ndarray, ...]:
    """Four 7x7 band filters that sum exactly to the identity kernel.

    Each kernel is delta/4 plus the deviation of a (negated, zero-DC)
    second-derivative-of-Gaussian from the orientation average, scaled by a
    fixed gain. The deviations sum to zero over orientations by
    construction, which is what makes the band sum reproduce the residual.
    """
    r = _FILTER_RADIUS
    sig2 = _FILTER_SIGMA ** 2
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
    envelope = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sig2))
    raw = []
    for deg in ORIENTATIONS:
        t = np.deg2rad(deg)
        u = xx * np.cos(t) + yy * np.sin(t)
        k = (1.0 - u ** 2 / sig2) * envelope
        raw.append(k - k.mean())
    mean_k = sum(raw) / len(raw)
    deviations = [k - mean_k for k in raw]
    norm = np.abs(deviations[0]).sum()
    delta = np.zeros((2 * r + 1, 2 * r + 1))
    delta[r, r] = 1.0
    kernels = tuple(delta / 4.0 + _ORIENT_GAIN * d / norm for d in deviations)
    return kernels


# ---------------------------------------------------------------------------
# Linear building blocks and their adjoints
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _binom_matrix(n: int) -> np.ndarray:
    """Clamp-to-edge 5-tap binomial filtering along one axis as an (n, n) matrix."""
    m = np.zeros((n, n))
    for i in range(n):
        for t in range(-2, 3):
            m[i, min(max(i + t, 0), n - 1)] += _BINOMIAL[t + 2]
    return m


@lru_cache(maxsize=32)
def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Half-pixel-centered bilinear interpolation as an (n_out, n_in) matrix."""
    m = np.zeros((n_out, n_in))
    x = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1.0)
    lo = np.floor(x).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = x - lo
    for i in range(n_out):
        m[i, lo[i]] += 1.0 - frac[i]
        m[i, hi[i]] += frac[i]
    return m


def down2(x: np.ndarray) -> np.ndarray:
    """Binomial blur then keep every second sample (ceil(n/2) outputs)."""
    bh = _binom_matrix(x.shape[0])
    bw = _binom_matrix(x.shape[1])
    return (bh @ x @ bw.T)[::2, ::2]


def down2_adjoint(g: np.ndarray, orig_shape: tuple[int, int]) -> np.ndarray:
    z = np.zeros(orig_shape)
    z[::2, ::2] = g
    bh = _binom_matrix(orig_shape[0])
    bw = _binom_matrix(orig_shape[1])
    return bh.T @ z @ bw


def up_to(x: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    rr = _interp_matrix(out_shape[0], x.shape[0])
    rc = _interp_matrix(out_shape[1], x.shape[1])
    return rr @ x @ rc.T


def up_to_adjoint(g: np.ndarray, in_shape: tuple[int, int]) -> np.ndarray:
    rr = _interp_matrix(g.shape[0], in_shape[0])
    rc = _interp_matrix(g.shape[1], in_shape[1])
    return rr.T @ g @ rc


def corr2_clamped(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2-D cross-correlation with clamp-to-edge boundary handling."""
    return nd_correlate(x, kernel, mode="nearest")


def _fold_pad_adjoint(gp: np.ndarray, r: int) -> np.ndarray:
    """Adjoint of edge-replication padding by r on both axes."""
    h = gp.shape[0] - 2 * r
    rows = gp[r : r + h].copy()
    rows[0] += gp[:r].sum(axis=0)
    rows[h - 1] += gp[r + h :].sum(axis=0)
    w = rows.shape[1] - 2 * r
    out = rows[:, r : r + w].copy()
    out[:, 0] += rows[:, :r].sum(axis=1)
    out[:, w - 1] += rows[:, r + w :].sum(axis=1)
    return out


def corr2_clamped_adjoint(g: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    r = kernel.shape[0] // 2
    return _fold_pad_adjoint(convolve2d(g, kernel, mode="full"), r)


# ---------------------------------------------------------------------------
# Pyramid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pyramid:
    """Lowpass chain L0..L3 plus oriented bands B[scale][orientation]."""

    lowpass: tuple[np.ndarray, ...]
    bands: tuple[tuple[np.ndarray, ...], ...]

    @property
    def input_shape(self) -> tuple[int, int]:
        return self.lowpass[0].shape


def build_pyramid(gray: Image) -> Pyramid:
    """Decompose a single-channel image (min dimension 16) into the pyramid."""
    if gray.channels != 1:
        raise BadChannelCount("build_pyramid expects a single-channel image")
    if min(gray.height, gray.width) < 16:
        raise TooSmall(f"minimum dimension is 16, got {gray.height}x{gray.width}")
    return _build_pyramid_array(gray.data[:, :, 0].astype(np.float64))


def _build_pyramid_array(l0: np.ndarray) -> Pyramid:
    lowpass = [l0]
    for _ in range(N_LOWPASS - 1):
        lowpass.append(down2(lowpass[-1]))
    kernels = oriented_kernels()
    bands = []
    for s in range(N_BAND_SCALES):
        residual = lowpass[s] - up_to(lowpass[s + 1], lowpass[s].shape)
        bands.append(tuple(corr2_clamped(residual, k) for k in kernels))
    return Pyramid(lowpass=tuple(lowpass), bands=tuple(bands))


def reconstruct(pyr: Pyramid) -> np.ndarray:
    """Invert the decomposition: band sums recover residuals exactly."""
    x = pyr.lowpass[-1]
    for s in range(N_BAND_SCALES - 1, -1, -1):
        x = up_to(x, pyr.lowpass[s].shape) + sum(pyr.bands[s])
    return x


def pyramid_backward(
    d_lowpass: list[np.ndarray | None],
    d_bands: list[list[np.ndarray | None]],
    shapes: list[tuple[int, int]],
) -> np.ndarray:
    """Accumulate adjoints on lowpass levels/bands back to the input image.

    d_lowpass[s] / d_bands[s][o] may be None when nothing flowed into that
    array; shapes lists the lowpass level shapes L0..L3.
    """
    kernels = oriented_kernels()
    dl = [np.zeros(shape) for shape in shapes]
    for s, g in enumerate(d_lowpass):
        if g is not None:
            dl[s] += g
    for s in range(N_BAND_SCALES - 1, -1, -1):
        dh = None
        for o, gb in enumerate(d_bands[s]):
            if gb is None:
                continue
            contrib = corr2_clamped_adjoint(gb, kernels[o])
            dh = contrib if dh is None else dh + contrib
        if dh is not None:
            dl[s] += dh
            dl[s + 1] -= up_to_adjoint(dh, shapes[s + 1])
        dl[s] += down2_adjoint(dl[s + 1], shapes[s])
    return dl[0]
