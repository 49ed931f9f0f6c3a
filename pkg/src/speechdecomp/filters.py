"""Voiced extraction by the joint-diagonalization Wiener matrix and
unvoiced extraction by a frequency-domain Wiener gain."""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .core import ar_response
from .harmonic import harmonic_covariance
from .joint import residual_covariance


@dataclass(frozen=True)
class EigenPair:
    """Generalized eigenvectors (columns of ``B``) and eigenvalues, descending."""

    B: np.ndarray
    lambdas: np.ndarray


def _symmetric(r):
    r = np.asarray(r, dtype=float)
    return 0.5 * (r + r.T)


def joint_diagonalize(r_v, r_x):
    """Solve ``R_v b = lambda R_x b`` with ``B^T R_x B = I``."""
    r_v, r_x = _symmetric(r_v), _symmetric(r_x)
    if r_v.shape != r_x.shape:
        raise ValueError("covariance matrices differ in size")
    m = r_x.shape[0]
    if np.linalg.eigvalsh(r_x)[0] < 1e-10 * np.trace(r_x) / m or np.trace(r_x) <= 0:
        raise ValueError("R_x is not positive definite")
    lambdas, B = eigh(r_v, r_x)
    order = np.argsort(lambdas)[::-1]
    return EigenPair(B[:, order], np.maximum(lambdas[order], 0.0))


def vslf_wiener(r_v, pair):
    """Wiener matrix ``R_v sum_q b_q b_q^T / (1 + lambda_q)``."""
    B = pair.B
    return _symmetric(r_v) @ (B / (1.0 + pair.lambdas)) @ B.T


def regularize(r_x):
    """Add ``1e-10 * trace / M`` to the diagonal; a silent R_x becomes a tiny identity."""
    m = r_x.shape[0]
    load = 1e-10 * np.trace(r_x) / m
    if load <= 0:
        load = 1e-20
    return r_x + load * np.eye(m)


def voiced_filter(fit, m):
    """M x M Wiener matrix for one segment's harmonic fit, or None if not voiced."""
    if not fit.harmonic.voiced:
        return None
    r_v = harmonic_covariance(fit.harmonic, m)
    r_x = regularize(residual_covariance(fit.residual_model, m))
    return vslf_wiener(r_v, joint_diagonalize(r_v, r_x))


def triangular_window(m, hop):
    """Synthesis window whose hop-shifted copies sum to one (M = 2 * hop)."""
    n = np.arange(m)
    return np.minimum(n + 0.5, m - n - 0.5) / hop


def _frame_starts(lo, hi, m, hop):
    if hi - lo <= m:
        return [lo]
    starts = list(range(lo, hi - m + 1, hop))
    if starts[-1] + m < hi:
        starts.append(hi - m)
    return starts


def apply_segment_filters(y, blocks, m=40, hop=20):
    """Frame-wise matrix filtering with weighted overlap-add.

    ``blocks`` is a list of ``(start, stop, H)``; ``H`` None means the
    block outputs zeros.  Frames stay inside their block and the output
    is normalized by the accumulated synthesis window, so unit ``H`` gives
    back the input.
    """
    y = np.asarray(y, dtype=float)
    out = np.zeros(y.size)
    norm = np.zeros(y.size)
    win = triangular_window(m, hop)
    for lo, hi, h in blocks:
        for s in _frame_starts(lo, hi, m, hop):
            seg = y[s:s + m]
            w = win[:seg.size]
            norm[s:s + seg.size] += w
            if h is None:
                continue
            if seg.size < m:
                frame = h @ np.concatenate((seg, np.zeros(m - seg.size)))
                frame = frame[:seg.size]
            else:
                frame = h @ seg
            out[s:s + seg.size] += w * frame
    covered = norm > 0
    out[covered] /= norm[covered]
    return out


def extract_voiced(y, bounds, fits, m=40, hop=20):
    """Voiced component from per-segment fits.

    ``bounds`` lists ``(start, stop)`` sample ranges and ``fits`` the
    matching SegmentFit objects; segments without harmonics yield zeros.
    """
    samples = y.samples if hasattr(y, "samples") else np.asarray(y, dtype=float)
    blocks = [(lo, hi, voiced_filter(fit, m)) for (lo, hi), fit in zip(bounds, fits)]
    out = apply_segment_filters(samples, blocks, m, hop)
    return y.with_samples(out) if hasattr(y, "with_samples") else out


def wiener_unvoiced_gain(sigma_u2, shape_u, sigma_c2, shape_c):
    """Per-bin gain ``Phi_u / (Phi_u + Phi_c)``; 0 where both vanish."""
    phi_u = sigma_u2 * np.asarray(shape_u, dtype=float)
    phi_c = sigma_c2 * np.asarray(shape_c, dtype=float)
    total = phi_u + phi_c
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(total > 0, phi_u / total, 0.0)
    return np.clip(gain, 0.0, 1.0)


def match_gain(match, cb_u, cb_c, bins):
    """Wiener gain of a codebook match on a ``bins``-point grid."""
    if match.silent:
        return np.zeros(bins)
    shape_u = 1.0 / ar_response(cb_u.entries[match.i_star], bins)
    shape_c = 1.0 / ar_response(cb_c.entries[match.j_star], bins)
    return wiener_unvoiced_gain(match.sigma_u2, shape_u, match.sigma_c2, shape_c)


def sqrt_hann(n):
    return np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n))


def stft_filter(x, bounds, gains, frame=256, hop=128):
    """Apply per-segment spectral gains by square-root-Hann STFT overlap-add.

    ``gains[k]`` is a full-grid gain vector (any length) for the samples
    in ``bounds[k]``; each frame uses the window-energy-weighted blend of
    the gains of the segments it overlaps, resampled to the rfft grid.
    All-unit gains reconstruct ``x`` exactly (Hann is COLA at hop N/2).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if frame != 2 * hop:
        raise ValueError("square-root-Hann overlap-add needs hop = frame / 2")
    win = sqrt_hann(frame)
    pad_front = hop
    n_frames = int(np.ceil((n + pad_front) / hop))
    padded = np.zeros(n_frames * hop + frame)
    padded[pad_front:pad_front + n] = x
    seg_id = np.full(padded.size, -1)
    for k, (lo, hi) in enumerate(bounds):
        seg_id[pad_front + lo:pad_front + hi] = k
    w_bins = np.linspace(0, np.pi, frame // 2 + 1)
    rgains = [np.interp(w_bins, 2 * np.pi * np.arange(g.size) / g.size, g) for g in gains]
    energy = win ** 2
    out = np.zeros(padded.size)
    for f in range(n_frames + 1):
        s = f * hop
        ids = seg_id[s:s + frame]
        weights = np.bincount(ids[ids >= 0], weights=energy[ids >= 0], minlength=len(gains))
        if weights.sum() == 0:
            continue
        gain = sum(wt * rgains[k] for k, wt in enumerate(weights) if wt > 0) / weights.sum()
        spec = np.fft.rfft(padded[s:s + frame] * win)
        out[s:s + frame] += win * np.fft.irfft(spec * gain, frame)
    return out[pad_front:pad_front + n]


def extract_unvoiced(x, bounds, matches, cb_u, cb_c, frame=256, hop=128, bins=512):
    """Unvoiced component of the residual from per-segment codebook matches."""
    samples = x.samples if hasattr(x, "samples") else np.asarray(x, dtype=float)
    gains = [match_gain(mt, cb_u, cb_c, bins) for mt in matches]
    out = stft_filter(samples, bounds, gains, frame, hop)
    return x.with_samples(out) if hasattr(x, "with_samples") else out
