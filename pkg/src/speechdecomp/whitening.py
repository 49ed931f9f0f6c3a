"""Noise-statistics initialization and AR pre-whitening."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .core import ArModel, SignalBuffer, ar_fit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Whitener:
    """FIR inverse filter ``A(z) / sigma`` of an AR noise model."""

    model: ArModel

    def __post_init__(self):
        if not self.model.is_stable():
            raise ValueError("whitening polynomial must be stable")

    @classmethod
    def identity(cls):
        return cls(ArModel(np.zeros(0), 1.0))

    @property
    def silent(self):
        return self.model.silent or self.model.excitation_variance == 0.0

    def apply(self, x):
        """Whiten a raw sample array (zero initial conditions)."""
        x = np.asarray(x, dtype=float)
        if self.silent:
            return x.copy()
        b = self.model.polynomial / np.sqrt(self.model.excitation_variance)
        if b.size == 1:
            return x * b[0]
        return lfilter(b, [1.0], x)


def prewhiten(y, whitener):
    """Filter a SignalBuffer with the whitener; the output keeps the input length."""
    if whitener.silent:
        log.warning("silent whitener model; passing the signal through unchanged")
    return y.with_samples(whitener.apply(y.samples))


def frame_energies(x, frame):
    n_frames = x.size // frame
    frames = x[: n_frames * frame].reshape(n_frames, frame)
    return frames, np.sum(frames ** 2, axis=1)


def initial_noise_estimate(y, frame_ms=20.0, fraction=0.1, order=14, reference=None):
    """AR noise model from the lowest-energy frames of a recording.

    ``reference`` (a SignalBuffer of noise only) overrides the
    minimum-energy heuristic.
    """
    if reference is not None:
        return ar_fit(reference.samples, order)
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    frame = int(round(frame_ms * 1e-3 * y.sample_rate))
    if frame <= order:
        raise ValueError(f"{frame_ms} ms frames too short for AR order {order}")
    if len(y) <= 10 * frame:
        raise ValueError("recording must be longer than 10 analysis frames")
    frames, energy = frame_energies(y.samples, frame)
    if not np.any(energy > 0):
        return ArModel(np.zeros(order), 0.0, silent=True)
    n_keep = max(1, int(round(fraction * len(energy))))
    # stable sort keeps the selection deterministic among equal energies
    keep = np.sort(np.argsort(energy, kind="stable")[:n_keep])
    return ar_fit(frames[keep].ravel(), order)
