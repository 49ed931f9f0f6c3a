"""Shared types and basic spectral operations.

AR polynomials follow the convention ``A(z) = 1 + sum_i a_i z^-i``, so a
process ``u(n) = 0.9 u(n-1) + e(n)`` has ``coeffs == [-0.9]``.
Spectra are plain 1-D arrays of power values on the uniform grid
``w_k = 2*pi*k/K``, k = 0..K-1.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

DEFAULT_BINS = 512
EPS = 1e-12


@dataclass(frozen=True)
class SignalBuffer:
    """Mono audio samples with their sample rate."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("SignalBuffer holds mono (1-D) audio only")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    def with_samples(self, samples):
        return SignalBuffer(samples, self.sample_rate)


@dataclass(frozen=True)
class ArModel:
    """All-pole model ``sigma^2 / |A(e^jw)|^2``.

    ``silent`` marks models fitted on zero-energy data.
    """

    coeffs: np.ndarray
    excitation_variance: float
    silent: bool = field(default=False)

    def __post_init__(self):
        coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if self.excitation_variance < 0:
            raise ValueError("excitation_variance must be non-negative")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def order(self):
        return self.coeffs.size

    @property
    def polynomial(self):
        return np.concatenate(([1.0], self.coeffs))

    def is_stable(self):
        return is_stable(self.coeffs)


def is_stable(coeffs):
    """True if every root of ``1 + sum a_i z^-i`` lies strictly inside the unit circle."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0 or not np.any(coeffs):
        return True
    # step-down recursion: stable iff every reflection coefficient has |k| < 1
    a = coeffs.copy()
    while a.size:
        k = a[-1]
        if not abs(k) < 1.0:
            return False
        a = (a[:-1] - k * a[-2::-1]) / (1.0 - k * k)
    return True


def autocorrelation(x, max_lag):
    """Biased autocorrelation estimate r[0..max_lag] (divided by len(x))."""
    x = np.asarray(x, dtype=float)
    n = x.size
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1))) if n > 1 else 1
    spec = np.fft.rfft(x, nfft)
    r = np.fft.irfft(spec * np.conj(spec), nfft)[: max_lag + 1] / n
    if r.size < max_lag + 1:
        r = np.concatenate((r, np.zeros(max_lag + 1 - r.size)))
    return r


def levinson(r, order):
    """Levinson-Durbin recursion.

    Returns ``(a, error, k)``: the predictor polynomial coefficients
    (without the leading 1), the final prediction error power and the
    reflection coefficients.
    """
    r = np.asarray(r, dtype=float)
    a = np.zeros(order)
    k = np.zeros(order)
    err = r[0]
    for m in range(order):
        if err <= 0:
            break
        acc = r[m + 1] + np.dot(a[:m], r[m:0:-1])
        km = -acc / err
        if abs(km) >= 1.0:
            # numerically singular; keep the stable lower-order solution
            break
        k[m] = km
        a[:m] = a[:m] + km * a[:m][::-1]
        a[m] = km
        err *= 1.0 - km * km
    return a, err, k


def ar_fit(x, order):
    """Fit an AR model with the autocorrelation (Yule-Walker) method.

    The biased autocorrelation makes the normal equations positive
    definite, so the returned polynomial is minimum phase.  A zero-energy
    slice returns zero coefficients with zero variance and ``silent=True``.
    """
    x = np.asarray(x, dtype=float)
    if order < 1:
        raise ValueError(f"AR order must be >= 1, got {order}")
    if x.size <= order:
        raise ValueError(f"slice of length {x.size} too short for AR order {order}")
    r = autocorrelation(x, order)
    if r[0] <= 0.0 or not np.isfinite(r[0]):
        return ArModel(np.zeros(order), 0.0, silent=True)
    # tiny white-noise correction keeps the Toeplitz system well conditioned
    r = r.copy()
    r[0] *= 1.0 + 1e-9
    a, err, _ = levinson(r, order)
    return ArModel(a, max(float(err), 0.0))


def ar_response(coeffs, bins):
    """|A(e^jw_k)|^2 on the ``bins``-point uniform grid."""
    poly = np.concatenate(([1.0], np.asarray(coeffs, dtype=float)))
    if poly.size > bins:
        # wrap-around (aliasing) would corrupt the DFT; evaluate directly
        w = 2 * np.pi * np.arange(bins) / bins
        resp = np.exp(-1j * np.outer(w, np.arange(poly.size))) @ poly
    else:
        resp = np.fft.fft(poly, bins)
    return np.abs(resp) ** 2


def ar_psd(model, bins=DEFAULT_BINS):
    """Power spectrum ``sigma^2 / |A(e^jw_k)|^2`` of an AR model."""
    if bins < 2:
        raise ValueError("need at least 2 frequency bins")
    denom = ar_response(model.coeffs, bins)
    if model.order and (np.min(denom) < 1e-14 or not model.is_stable()):
        raise ValueError("AR model is unstable (pole on or outside the unit circle)")
    return model.excitation_variance / denom


def itakura_saito(reference, model):
    """Bin-averaged Itakura-Saito distance d(reference || model)."""
    reference = np.asarray(reference, dtype=float)
    model = np.asarray(model, dtype=float)
    if reference.shape != model.shape:
        raise ValueError(
            f"spectra live on different grids: {reference.shape} vs {model.shape}")
    if np.any(model <= 0):
        raise ValueError("model spectrum must be strictly positive")
    ratio = np.maximum(reference, np.finfo(float).tiny) / model
    return float(np.mean(ratio - np.log(ratio) - 1.0))


def power_spectrum(x, bins=DEFAULT_BINS):
    """Periodogram ``|DFT(x)|^2 / N`` zero-padded (or truncated) to ``bins``."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty slice")
    return np.abs(np.fft.fft(x, bins)) ** 2 / x.size


def ar_autocovariance(model, max_lag):
    """Theoretical autocovariance r[0..max_lag] of a stable AR process.

    Solves the Yule-Walker equations for r[0..P] given the model, then
    extends with the AR recursion.
    """
    a = model.coeffs
    p = a.size
    sigma2 = model.excitation_variance
    if p == 0 or not np.any(a):
        r = np.zeros(max_lag + 1)
        r[0] = sigma2
        return r
    if not model.is_stable():
        raise ValueError("autocovariance undefined for an unstable AR model")
    poly = model.polynomial
    # r[k] + sum_i a_i r[|k-i|] = sigma2 * delta[k], k = 0..p
    A = np.zeros((p + 1, p + 1))
    for k in range(p + 1):
        for i in range(p + 1):
            A[k, abs(k - i)] += poly[i]
    rhs = np.zeros(p + 1)
    rhs[0] = sigma2
    r_head = np.linalg.solve(A, rhs)
    r = np.zeros(max(max_lag, p) + 1)
    r[: p + 1] = r_head
    for k in range(p + 1, r.size):
        r[k] = -np.dot(a, r[k - 1::-1][:p])
    return r[: max_lag + 1]


def ar_covariance(model, size):
    """``size x size`` Toeplitz covariance matrix of an AR process."""
    if size < 1:
        raise ValueError("matrix size must be >= 1")
    return toeplitz(ar_autocovariance(model, size - 1))
