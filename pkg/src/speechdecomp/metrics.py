"""Evaluation metrics and noise mixing."""
import numpy as np

from .core import SignalBuffer

SEGSNR_FLOOR = -10.0
SEGSNR_CEIL = 35.0
ACTIVITY_DBFS = -60.0
LSD_EPS = 1e-12


def _samples(sig):
    return sig.samples if isinstance(sig, SignalBuffer) else np.asarray(sig, dtype=float)


def _frames(ref, est, frame):
    if ref.size != est.size:
        raise ValueError(f"signals differ in length: {ref.size} vs {est.size}")
    n_frames = ref.size // frame
    if n_frames == 0:
        raise ValueError("signal shorter than one frame")
    cut = n_frames * frame
    return ref[:cut].reshape(n_frames, frame), est[:cut].reshape(n_frames, frame)


def _active(ref_frames):
    power = np.mean(ref_frames ** 2, axis=1)
    with np.errstate(divide="ignore"):
        level = 10 * np.log10(power)
    active = level >= ACTIVITY_DBFS
    if not np.any(active):
        raise ValueError("no active reference frames; metric undefined")
    return active


def seg_snr(reference, estimate, frame_ms=20.0, sample_rate=None):
    """Mean per-frame SNR in dB, clamped to [-10, 35], over active frames.

    Frames whose reference power is below -60 dBFS are skipped.
    """
    fs = sample_rate or getattr(reference, "sample_rate", 8000)
    ref, est = _samples(reference), _samples(estimate)
    rf, ef = _frames(ref, est, int(round(frame_ms * 1e-3 * fs)))
    active = _active(rf)
    sig = np.sum(rf[active] ** 2, axis=1)
    err = np.sum((rf[active] - ef[active]) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        snr = 10 * np.log10(sig / err)
    return float(np.mean(np.clip(snr, SEGSNR_FLOOR, SEGSNR_CEIL)))


def lsd(reference, estimate, frame_ms=20.0, bins=256, sample_rate=None):
    """Mean over active frames of the RMS dB difference of the power spectra."""
    fs = sample_rate or getattr(reference, "sample_rate", 8000)
    ref, est = _samples(reference), _samples(estimate)
    rf, ef = _frames(ref, est, int(round(frame_ms * 1e-3 * fs)))
    active = _active(rf)
    pr = np.abs(np.fft.rfft(rf[active], bins, axis=1)) ** 2
    pe = np.abs(np.fft.rfft(ef[active], bins, axis=1)) ** 2
    diff = 10 * np.log10(np.maximum(pr, LSD_EPS) / np.maximum(pe, LSD_EPS))
    return float(np.mean(np.sqrt(np.mean(diff ** 2, axis=1))))


def mix_at_isnr(clean, noise, isnr_db, offset=0, wrap=False):
    """Add ``noise`` (from ``offset``) scaled to the requested input SNR."""
    c, nz = _samples(clean), _samples(noise)
    if wrap:
        idx = (offset + np.arange(c.size)) % nz.size
        nz = nz[idx]
    else:
        if nz.size - offset < c.size:
            raise ValueError("noise shorter than the clean signal (enable wrap)")
        nz = nz[offset:offset + c.size]
    p_clean = float(np.mean(c ** 2))
    p_noise = float(np.mean(nz ** 2))
    if p_clean == 0 or p_noise == 0:
        raise ValueError("cannot mix a silent clean or noise signal")
    gain = np.sqrt(p_clean / (p_noise * 10 ** (isnr_db / 10)))
    mixed = c + gain * nz
    fs = getattr(clean, "sample_rate", 8000)
    return SignalBuffer(mixed, fs)
