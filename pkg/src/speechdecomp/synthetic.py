"""Synthetic test material with known voiced/unvoiced/noise components."""
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .core import SignalBuffer


def ar_noise(rng, coeffs, n, variance=1.0, burn_in=500):
    """Samples of ``A(z) x = e`` driven by white noise of the given variance."""
    e = rng.normal(scale=np.sqrt(variance), size=n + burn_in)
    return lfilter([1.0], np.concatenate(([1.0], coeffs)), e)[burn_in:]


def harmonic_tone(f0, amplitudes, phases, n, start=0):
    """Real sum of harmonics of ``f0`` (cycles/sample) starting at sample index ``start``."""
    idx = np.arange(start, start + n)
    out = np.zeros(n)
    for l, (a, p) in enumerate(zip(amplitudes, phases), start=1):
        out += a * np.cos(2 * np.pi * l * f0 * idx + p)
    return out


def random_stable_ar(rng, order, max_reflection=0.9):
    """AR polynomial built from uniform reflection coefficients (always stable)."""
    a = np.zeros(0)
    for k in rng.uniform(-max_reflection, max_reflection, order):
        a = np.concatenate((a + k * a[::-1], [k]))
    return a


# fricative-like (high-pass / band-pass) and noise-like (low-pass) families
UNVOICED_FAMILIES = (
    np.array([0.9]),
    np.array([0.5, 0.6]),
    np.array([1.2, 0.7]),
    np.array([-0.2, 0.5]),
)
NOISE_FAMILIES = (
    np.array([-0.9]),
    np.array([-1.3, 0.6]),
)


@dataclass
class Utterance:
    clean: SignalBuffer
    voiced: SignalBuffer
    unvoiced: SignalBuffer
    noise: SignalBuffer
    noisy: SignalBuffer
    pitch_track: list


def make_utterance(rng, duration=0.8, fs=8000, isnr_db=10.0, noise_coeffs=None,
                   lead_silence=0.1):
    """Piecewise-constant-pitch harmonic segments, AR unvoiced bursts and colored noise.

    Voiced regions last 60-200 ms at a constant pitch of 90-260 Hz with
    3-8 harmonics; unvoiced bursts of 30-80 ms sit between them.  The
    first ``lead_silence`` seconds hold noise only.
    """
    n = int(duration * fs)
    voiced = np.zeros(n)
    unvoiced = np.zeros(n)
    track = []
    pos = int(lead_silence * fs)
    while pos < n - int(0.03 * fs):
        if rng.random() < 0.6:
            length = min(int(rng.uniform(0.06, 0.2) * fs), n - pos)
            f0 = rng.uniform(90, 260) / fs
            order = int(rng.integers(3, 9))
            amps = rng.uniform(0.3, 1.0) / np.arange(1, order + 1) ** rng.uniform(0.3, 1.0)
            phases = rng.uniform(0, 2 * np.pi, order)
            taper = np.ones(length)
            ramp = min(40, length // 4)
            taper[:ramp] = np.linspace(0, 1, ramp)
            taper[-ramp:] = np.linspace(1, 0, ramp)
            voiced[pos:pos + length] = harmonic_tone(f0, amps, phases, length) * taper
            track.append((pos, pos + length, f0 * fs))
        else:
            length = min(int(rng.uniform(0.03, 0.08) * fs), n - pos)
            family = UNVOICED_FAMILIES[rng.integers(len(UNVOICED_FAMILIES))]
            burst = ar_noise(rng, family, length)
            burst *= rng.uniform(0.05, 0.2) / np.std(burst)
            unvoiced[pos:pos + length] = burst * np.hanning(length)
        pos += length + int(rng.uniform(0.0, 0.03) * fs)
    clean = voiced + unvoiced
    if noise_coeffs is None:
        noise_coeffs = NOISE_FAMILIES[rng.integers(len(NOISE_FAMILIES))]
    noise = ar_noise(rng, noise_coeffs, n)
    noise *= np.sqrt(np.mean(clean ** 2) / (np.mean(noise ** 2) * 10 ** (isnr_db / 10)))
    buf = lambda x: SignalBuffer(x, fs)  # noqa: E731
    return Utterance(buf(clean), buf(voiced), buf(unvoiced), buf(noise), buf(clean + noise),
                     track)


def training_material(rng, kind, count=60, length=800):
    """Synthetic training segments for the unvoiced or noise codebook."""
    families = UNVOICED_FAMILIES if kind == "unvoiced" else NOISE_FAMILIES
    out = []
    for k in range(count):
        base = families[k % len(families)]
        jitter = base + rng.normal(scale=0.03, size=base.size)
        out.append(ar_noise(rng, jitter, length))
    return out
