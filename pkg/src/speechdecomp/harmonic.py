"""Harmonic (voiced) model: Fourier matrices, NLS pitch, order selection, amplitudes.

Frequencies are normalized (cycles/sample).  A segment of ``L`` harmonics
at pitch ``f0`` is ``v = Z(f0) @ alpha`` with the columns of ``Z``
alternating ``z(l f0)`` and its conjugate, so ``alpha`` comes in
conjugate pairs and ``v`` is real.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .core import EPS


@dataclass(frozen=True)
class PitchSearchConfig:
    f0_min: float = 60.0 / 8000
    f0_max: float = 400.0 / 8000
    grid_resolution: float | None = None  # None -> 0.1 / N
    max_order: int = 15

    def __post_init__(self):
        if not 0 < self.f0_min < self.f0_max < 0.5:
            raise ValueError("need 0 < f0_min < f0_max < 0.5")
        if self.grid_resolution is not None and self.grid_resolution <= 0:
            raise ValueError("grid_resolution must be positive")
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")

    @classmethod
    def from_hz(cls, f0_min_hz, f0_max_hz, sample_rate, max_order=15):
        return cls(f0_min_hz / sample_rate, f0_max_hz / sample_rate, None, max_order)

    def resolution(self, n):
        return self.grid_resolution if self.grid_resolution else 0.1 / n


@dataclass(frozen=True)
class HarmonicEstimate:
    """Pitch, number of harmonics and the conjugate-paired amplitude vector."""

    f0: float
    order: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if amps.size != 2 * self.order:
            raise ValueError(f"expected {2 * self.order} amplitudes, got {amps.size}")
        if self.order and not (0 < self.f0 and self.order * self.f0 < 0.5):
            raise ValueError("harmonics must lie strictly between 0 and Nyquist")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def unvoiced(cls):
        return cls(0.0, 0, np.zeros(0, dtype=complex))

    @property
    def voiced(self):
        return self.order > 0

    @property
    def real_amplitudes(self):
        """A_l = 2 |alpha_l| for l = 1..L."""
        return 2.0 * np.abs(self.amplitudes[0::2])

    @property
    def phases(self):
        return np.angle(self.amplitudes[0::2])


@dataclass(frozen=True)
class NlsResult:
    """Best pitch and projection cost for each order L = 1..max_order.

    ``cost[L-1]`` is ``-inf`` when no grid pitch admits L harmonics below
    Nyquist.
    """

    f0: np.ndarray
    cost: np.ndarray
    energy: float
    n: int

    @property
    def max_order(self):
        return self.cost.size


def fourier_matrix(f0, order, m):
    """M x 2L matrix with columns z(l f0), conj(z(l f0)), l = 1..L."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if order * f0 >= 0.5 or f0 <= 0:
        raise ValueError(f"harmonic {order} of f0={f0} is at or above Nyquist")
    if m < 2 * order:
        raise ValueError(f"M={m} rows cannot identify {2 * order} columns")
    n = np.arange(m)
    z = np.exp(2j * np.pi * f0 * np.outer(n, np.arange(1, order + 1)))
    out = np.empty((m, 2 * order), dtype=complex)
    out[:, 0::2] = z
    out[:, 1::2] = np.conj(z)
    return out


def _dirichlet(theta, n):
    """sum_{k=0}^{n-1} exp(j theta k), elementwise."""
    theta = np.asarray(theta, dtype=float)
    half = np.sin(theta / 2)
    small = np.abs(half) < 1e-12
    safe = np.where(small, 1.0, half)
    val = np.exp(0.5j * theta * (n - 1)) * np.sin(n * theta / 2) / safe
    # theta a multiple of 2 pi: a sum of ones
    return np.where(small, n + 0j, val)


def _real_gram(f0, order, n):
    """Gram matrix of the real basis [cos(w1 n), sin(w1 n), cos(w2 n), ...].

    ``f0`` may be an array; the result has shape (..., 2L, 2L).
    """
    f0 = np.asarray(f0, dtype=float)[..., None, None]
    ls = np.arange(1, order + 1)
    wl = 2 * np.pi * f0 * ls[:, None]
    wm = 2 * np.pi * f0 * ls[None, :]
    dm = _dirichlet(wl - wm, n)
    dp = _dirichlet(wl + wm, n)
    cc = 0.5 * (dm.real + dp.real)
    ss = 0.5 * (dm.real - dp.real)
    cs = 0.5 * (dp.imag - dm.imag)
    gram = np.empty(f0.shape[:-2] + (2 * order, 2 * order))
    gram[..., 0::2, 0::2] = cc
    gram[..., 1::2, 1::2] = ss
    gram[..., 0::2, 1::2] = cs
    gram[..., 1::2, 0::2] = np.swapaxes(cs, -1, -2)
    return gram


def _whitening_factor(gram, valid):
    """Inverse Cholesky factors of the masked Gram matrices.

    ``w = F @ proj`` gives coordinates in an orthonormal basis built
    harmonic by harmonic, so ``cumsum(w**2)`` yields the projection
    energy of every nested order at once.  Invalid (above-Nyquist)
    harmonics are decoupled so that they contribute nothing.
    """
    two_k = gram.shape[-1]
    mask = np.repeat(valid, 2, axis=1)
    gram = gram.copy()
    outer = mask[:, :, None] & mask[:, None, :]
    eye = np.broadcast_to(np.eye(two_k, dtype=bool), gram.shape)
    gram[~outer & ~eye] = 0.0
    gram[~mask[:, :, None] & eye] = 1.0
    scale = np.trace(gram, axis1=1, axis2=2)[:, None, None] / two_k
    gram = gram + 1e-10 * scale * np.eye(two_k)
    chol = np.linalg.cholesky(gram)
    factor = np.linalg.inv(chol)
    factor[~np.broadcast_to(mask[:, :, None], factor.shape)] = 0.0
    return factor


def _nested_costs(factor, proj, valid):
    w = np.einsum("gij,gj->gi", factor, proj)
    energy = np.cumsum(w * w, axis=1)[:, 1::2]
    return np.where(valid, energy, -np.inf)


@lru_cache(maxsize=64)
def _grid_basis(n, nfft, g_lo, g_hi, kmax):
    grid_idx = np.arange(g_lo, g_hi + 1)
    f0_grid = grid_idx / nfft
    harm_bins = grid_idx[:, None] * np.arange(1, kmax + 1)[None, :]
    valid = 2 * harm_bins < nfft
    factor = _whitening_factor(_real_gram(f0_grid, kmax, n), valid)
    harm_bins = np.where(valid, harm_bins, 0)
    for arr in (f0_grid, valid, factor, harm_bins):
        arr.setflags(write=False)
    return f0_grid, valid, factor, harm_bins


def _fft_size(n, resolution):
    return int(2 ** np.ceil(np.log2(max(1.0 / resolution, 2 * n))))


def nls_cost(y, f0, order):
    """Projection energy of y onto the span of the L-harmonic basis at f0."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if order * f0 >= 0.5 or f0 <= 0:
        return -np.inf
    ph = 2 * np.pi * f0 * np.outer(np.arange(n), np.arange(1, order + 1))
    basis = np.empty((n, 2 * order))
    basis[:, 0::2] = np.cos(ph)
    basis[:, 1::2] = np.sin(ph)
    proj = y @ basis
    return float(proj @ np.linalg.solve(basis.T @ basis, proj))


def nls_pitch(y, config=None, refine=True):
    """Nonlinear least-squares pitch estimate for every order L = 1..max_order.

    The coarse grid sits on the bins of a zero-padded FFT (spacing at most
    ``config.resolution(N)``), which makes every harmonic ``l*f0`` an
    exact DFT bin.  With ``refine`` the coarse peak of each order is
    polished by a bounded scalar search within one grid step.
    """
    config = config or PitchSearchConfig()
    y = np.asarray(y, dtype=float)
    n = y.size
    kmax = config.max_order
    if n < 2 * kmax + 1:
        raise ValueError(f"segment of {n} samples too short for {kmax} harmonics")
    energy = float(y @ y)
    if energy == 0.0:
        return NlsResult(np.full(kmax, config.f0_min), np.zeros(kmax), 0.0, n)

    nfft = _fft_size(n, config.resolution(n))
    step = 1.0 / nfft
    g_lo = int(np.ceil(config.f0_min * nfft))
    g_hi = int(np.floor(config.f0_max * nfft))
    f0_grid, valid, factor, harm_bins = _grid_basis(n, nfft, g_lo, g_hi, kmax)

    spec = np.fft.fft(y, nfft)
    dft = spec[harm_bins]
    # y . cos(wn) = Re(Y), y . sin(wn) = -Im(Y) with Y = sum y e^{-jwn}
    proj = np.empty((f0_grid.size, 2 * kmax))
    proj[:, 0::2] = dft.real
    proj[:, 1::2] = -dft.imag

    costs = _nested_costs(factor, proj, valid)
    best = np.argmax(costs, axis=0)
    f0 = f0_grid[best]
    cost = costs[best, np.arange(kmax)]

    if refine:
        for order in range(1, kmax + 1):
            if np.isfinite(cost[order - 1]):
                f0[order - 1], cost[order - 1] = refine_pitch(
                    y, f0[order - 1], order, step, config, cost[order - 1])
    return NlsResult(f0, cost, energy, n)


def refine_pitch(y, f0, order, step, config=None, start_cost=None):
    """Polish a coarse pitch within +-step by bounded Brent search."""
    config = config or PitchSearchConfig()
    lo = max(config.f0_min, f0 - step)
    hi = min(config.f0_max, f0 + step, (0.5 - 1e-9) / order)
    if start_cost is None:
        start_cost = nls_cost(y, f0, order)
    if hi <= lo:
        return f0, start_cost
    res = minimize_scalar(lambda f: -nls_cost(y, f, order), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-8})
    if -res.fun > start_cost:
        return float(res.x), float(-res.fun)
    return f0, start_cost


def order_criterion(rss, n, order):
    """Penalized cost (N/2) ln(RSS/N) [+ 3/2 ln N + L ln N for L >= 1]."""
    penalty = (1.5 + order) * np.log(n) if order else 0.0
    return 0.5 * n * np.log(rss / n) + penalty


def select_order(y, nls, n=None):
    """Pick the number of harmonics, 0 meaning not voiced.

    The residual energy of order L is ``|y|^2 - cost(L)``; it is floored
    at a tiny fraction of ``|y|^2`` because the subtraction cancels
    catastrophically on exactly harmonic data.
    """
    y = np.asarray(y, dtype=float)
    n = n or y.size
    energy = float(y @ y)
    if energy <= 0.0:
        return 0
    floor = max(EPS * energy, np.finfo(float).tiny)
    best_order = 0
    best = order_criterion(energy, n, 0)
    for order in range(1, nls.max_order + 1):
        c = nls.cost[order - 1]
        if not np.isfinite(c):
            continue
        crit = order_criterion(max(energy - c, floor), n, order)
        if crit < best:
            best, best_order = crit, order
    return best_order


def ls_amplitudes(y, z):
    """Least-squares amplitudes ``(Z^H Z)^-1 Z^H y`` with conjugate pairing enforced."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z)
    gram = z.conj().T @ z
    if np.linalg.cond(gram) > 1e10:
        raise np.linalg.LinAlgError(
            "Z^H Z is ill-conditioned; use fewer harmonics or a longer segment")
    alpha = np.linalg.solve(gram, z.conj().T @ y)
    paired = 0.5 * (alpha[0::2] + np.conj(alpha[1::2]))
    alpha[0::2] = paired
    alpha[1::2] = np.conj(paired)
    return alpha


def synthesize(est, length):
    """Real samples of the harmonic model over ``length`` samples."""
    if not est.voiced:
        return np.zeros(length)
    v = fourier_matrix(est.f0, est.order, max(length, 2 * est.order)) @ est.amplitudes
    v = v[:length]
    if np.max(np.abs(v.imag), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(v.real))):
        raise ValueError("amplitudes are not conjugate paired")
    return v.real


def estimate_harmonics(y, f0, order):
    """Fit amplitudes at a given pitch and return the estimate."""
    if order == 0:
        return HarmonicEstimate.unvoiced()
    z = fourier_matrix(f0, order, len(y))
    return HarmonicEstimate(f0, order, ls_amplitudes(y, z))


def harmonic_covariance(est, m):
    """Real M x M covariance ``Z P Z^H`` with P = diag(A_l^2 / 4) per column."""
    if not est.voiced:
        return np.zeros((m, m))
    lags = np.arange(m)
    power = 0.5 * est.real_amplitudes ** 2
    r = np.cos(2 * np.pi * est.f0 * np.outer(lags, np.arange(1, est.order + 1))) @ power
    i, j = np.meshgrid(lags, lags, indexing="ij")
    return r[np.abs(i - j)]
