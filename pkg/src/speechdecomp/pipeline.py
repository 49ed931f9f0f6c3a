"""Offline decomposition of noisy speech into voiced, unvoiced and noise parts.

The driver runs six stages: global pre-whitening, voiced cost table and
optimal segmentation, voiced Wiener extraction, residual assembly,
stochastic cost table and segmentation, and unvoiced Wiener extraction.
"""
import configparser
import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .codebook import Codebook, CodebookMatch
from .core import SignalBuffer, ar_fit
from .filters import extract_unvoiced, extract_voiced
from .harmonic import PitchSearchConfig
from .joint import JointConfig, _unvoiced_fit, joint_estimate
from .segmentation import (SegmentGrid, build_stochastic_cost_table, build_voiced_cost_table,
                           dp_segment, fixed_segmentation, map_cost_voiced,
                           StochasticFit, stochastic_segment_cost)
from .whitening import Whitener, initial_noise_estimate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    sample_rate: int = 8000
    n_min_ms: float = 5.0
    voiced_ms: tuple = (20.0, 50.0)
    stochastic_ms: tuple = (15.0, 40.0)
    frame_size: int = 40
    frame_hop: int = 20
    f0_hz: tuple = (60.0, 400.0)
    max_harmonics: int = 15
    whitener_order: int = 14
    residual_order: int = 14
    codebook_order: int = 14
    residual_fit_order: int = 28
    max_iters: int = 10
    rel_tol: float = 1e-3
    noise_fraction: float = 0.1
    noise_frame_ms: float = 20.0
    spectral_bins: int = 512
    stft_frame: int = 256
    stft_hop: int = 128
    fixed_segmentation_ms: float | None = None

    def __post_init__(self):
        n_min = self.n_min
        for lo, hi in (self.voiced_ms, self.stochastic_ms):
            if lo > hi:
                raise ValueError("segment range lower bound exceeds upper bound")
            for ms in (lo, hi):
                if abs(ms / self.n_min_ms - round(ms / self.n_min_ms)) > 1e-9:
                    raise ValueError(f"{ms} ms is not a multiple of n_min ({self.n_min_ms} ms)")
        for b in range(self.voiced_b[0], self.voiced_b[1] + 1):
            if (b * n_min) % self.frame_size:
                raise ValueError(
                    f"frame size {self.frame_size} does not divide segment length {b * n_min}")
        if self.fixed_segmentation_ms is not None:
            b = self.fixed_segmentation_ms / self.n_min_ms
            if abs(b - round(b)) > 1e-9:
                raise ValueError("fixed segment length must be a multiple of n_min")

    @property
    def n_min(self):
        return int(round(self.n_min_ms * 1e-3 * self.sample_rate))

    def _b_range(self, ms):
        return int(round(ms[0] / self.n_min_ms)), int(round(ms[1] / self.n_min_ms))

    @property
    def voiced_b(self):
        return self._b_range(self.voiced_ms)

    @property
    def stochastic_b(self):
        return self._b_range(self.stochastic_ms)

    @property
    def fixed_b(self):
        if self.fixed_segmentation_ms is None:
            return None
        return int(round(self.fixed_segmentation_ms / self.n_min_ms))

    def joint(self):
        pitch = PitchSearchConfig.from_hz(self.f0_hz[0], self.f0_hz[1], self.sample_rate,
                                          self.max_harmonics)
        return JointConfig(pitch, self.residual_order, self.max_iters, self.rel_tol)

    @classmethod
    def from_file(cls, path, **overrides):
        """Read ``key = value`` lines (``#`` comments); tuples as comma lists."""
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.read_string("[config]\n" + Path(path).read_text())
        kwargs = {}
        types = {f.name: f for f in fields(cls)}
        for key, raw in parser["config"].items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            default = types[key].default
            raw = raw.strip()
            if isinstance(default, tuple):
                kwargs[key] = tuple(float(v) for v in raw.split(","))
            elif raw.lower() in ("none", ""):
                kwargs[key] = None
            elif isinstance(default, int) and not isinstance(default, bool):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)


@dataclass
class DecompositionReport:
    sample_rate: int
    length: int
    voiced_segments: list
    stochastic_segments: list
    noise_model: dict
    config: dict
    output_scaling: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)

    def to_dict(self, include_runtime=False):
        d = asdict(self)
        if not include_runtime:
            d.pop("runtime")
        return d

    def to_json(self, include_runtime=False):
        return json.dumps(self.to_dict(include_runtime), indent=1, sort_keys=True)


@dataclass
class Decomposition:
    voiced: SignalBuffer
    unvoiced: SignalBuffer
    noise: SignalBuffer
    residual: SignalBuffer
    report: DecompositionReport
    voiced_bounds: list
    stochastic_bounds: list
    cost_tables: dict = field(default_factory=dict)


@dataclass
class VoicedStage:
    whitened: np.ndarray
    bounds: list
    fits: list
    costs: list
    voiced: np.ndarray
    residual: np.ndarray
    noise_model: object
    table: object = None


def _segment_bounds(markers, n_min, length, covered):
    bounds = [(s * n_min, (s + b) * n_min) for s, b in markers]
    if covered < length:
        bounds.append((covered, length))
    return bounds


def _fit_tail(y, config, whitener):
    jc = config.joint()
    if y.size < 2 * jc.pitch.max_order + 1 or y.size <= jc.residual_order:
        return _unvoiced_fit(y, jc, 0)
    return joint_estimate(y, whitener, jc)


def noise_whitener(y, config, noise_ref=None):
    """Global whitener from a noise reference or the quietest frames."""
    try:
        model = initial_noise_estimate(y, config.noise_frame_ms, config.noise_fraction,
                                       config.whitener_order, reference=noise_ref)
    except ValueError:
        # too short for the frame heuristic: fall back to the whole signal
        model = ar_fit(y.samples, min(config.whitener_order, len(y) - 1))
    whitener = Whitener.identity() if model.silent else Whitener(model)
    return model, whitener


def voiced_stage(y, config=None, noise_ref=None, progress=None):
    """Stages 1-4: whitening, voiced segmentation, Wiener extraction, residual."""
    config = config or PipelineConfig()
    samples = y.samples
    length = samples.size
    model, whitener = noise_whitener(y, config, noise_ref)
    y_w = whitener.apply(samples)
    jc = config.joint()
    n_min = config.n_min
    b_lo, b_hi = config.voiced_b
    grid = SegmentGrid.for_signal(length, n_min, b_lo, b_hi)
    table = None

    if config.fixed_b is not None:
        fb = config.fixed_b
        if grid.n_sub < fb:
            markers = []
        else:
            grid = SegmentGrid(n_min, grid.n_sub - grid.n_sub % fb, (fb,))
            markers = fixed_segmentation(grid, fb)
        fits, costs = [], []
        for s, b in markers:
            lo, hi = s * n_min, (s + b) * n_min
            fit = joint_estimate(samples[lo:hi], whitener, jc)
            fits.append(fit)
            costs.append(map_cost_voiced(fit, y_w[lo:hi]))
        covered = grid.covered if markers else 0
    elif grid.n_sub >= b_lo:
        table = build_voiced_cost_table(samples, y_w, grid, whitener, jc, progress)
        seg = dp_segment(table, grid)
        markers, fits = seg.markers, seg.fits
        costs = [float(table.costs[m]) for m in markers]
        covered = grid.covered
    else:
        markers, fits, costs, covered = [], [], [], 0

    bounds = _segment_bounds(markers, n_min, length, covered)
    if covered < length:
        fit = _fit_tail(samples[covered:], config, whitener)
        fits = list(fits) + [fit]
        costs = list(costs) + [map_cost_voiced(fit, y_w[covered:])]

    voiced = extract_voiced(samples, bounds, fits, config.frame_size, config.frame_hop)
    residual = np.concatenate([fit.residual for fit in fits]) if fits else samples.copy()
    return VoicedStage(y_w, bounds, list(fits), costs, voiced, residual, model, table)


def stochastic_stage(x, cb_u, cb_c, config=None, progress=None):
    """Stages 5-6 on the modelled residual: segmentation and unvoiced extraction."""
    config = config or PipelineConfig()
    length = x.size
    n_min = config.n_min
    b_lo, b_hi = config.stochastic_b
    grid = SegmentGrid.for_signal(length, n_min, b_lo, b_hi)
    fit_args = (cb_u, cb_c, config.residual_fit_order, config.spectral_bins)
    table = None
    if config.fixed_b is not None:
        fb = config.fixed_b
        if grid.n_sub < fb:
            markers = []
        else:
            grid = SegmentGrid(n_min, grid.n_sub - grid.n_sub % fb, (fb,))
            markers = fixed_segmentation(grid, fb)
        results = [stochastic_segment_cost(x[s * n_min:(s + b) * n_min], *fit_args)
                   for s, b in markers]
        costs = [r[0] for r in results]
        fits = [r[1] for r in results]
        covered = grid.covered if markers else 0
    elif grid.n_sub >= b_lo:
        table = build_stochastic_cost_table(x, grid, *fit_args, progress=progress)
        seg = dp_segment(table, grid)
        markers, fits = seg.markers, list(seg.fits)
        costs = [float(table.costs[m]) for m in markers]
        covered = grid.covered
    else:
        markers, fits, costs, covered = [], [], [], 0
    bounds = _segment_bounds(markers, n_min, length, covered)
    if covered < length:
        tail = x[covered:]
        if tail.size > 2:
            cost, fit = stochastic_segment_cost(tail, *fit_args)
        else:
            cost, fit = 0.0, StochasticFit(None, CodebookMatch(0, 0, 0.0, 0.0, 0.0, silent=True))
        fits.append(fit)
        costs.append(cost)
    matches = [f.match for f in fits]
    unvoiced = extract_unvoiced(x, bounds, matches, cb_u, cb_c, config.stft_frame,
                                config.stft_hop, config.spectral_bins)
    return bounds, fits, costs, unvoiced, table


def decompose(y, cb_u, cb_c, config=None, noise_ref=None, progress=None):
    """Split a noisy recording into voiced, unvoiced and noise estimates."""
    config = config or PipelineConfig()
    if len(y) == 0:
        raise ValueError("empty audio")
    if int(y.sample_rate) != config.sample_rate:
        raise ValueError(
            f"sample rate {y.sample_rate} Hz does not match configured {config.sample_rate} Hz")
    t0 = time.perf_counter()
    vs = voiced_stage(y, config, noise_ref, progress)
    t1 = time.perf_counter()
    s_bounds, s_fits, s_costs, unvoiced, s_table = stochastic_stage(vs.residual, cb_u, cb_c, config,
                                                           progress)
    t2 = time.perf_counter()
    fs = config.sample_rate
    voiced_segments = [
        {"start": int(lo), "length": int(hi - lo), "f0_hz": float(fit.harmonic.f0 * fs),
         "order": int(fit.harmonic.order), "cost": float(cost),
         "iterations": int(fit.iterations_used), "converged": bool(fit.converged)}
        for (lo, hi), fit, cost in zip(vs.bounds, vs.fits, vs.costs)]
    stochastic_segments = [
        {"start": int(lo), "length": int(hi - lo), "cost": float(cost), "i": int(f.match.i_star),
         "j": int(f.match.j_star), "sigma_u2": float(f.match.sigma_u2),
         "sigma_c2": float(f.match.sigma_c2), "distance": float(f.match.distance),
         "silent": bool(f.match.silent)}
        for (lo, hi), f, cost in zip(s_bounds, s_fits, s_costs)]
    cfg = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()}
    report = DecompositionReport(
        fs, len(y), voiced_segments, stochastic_segments,
        {"coeffs": vs.noise_model.coeffs.tolist(),
         "excitation_variance": float(vs.noise_model.excitation_variance),
         "silent": bool(vs.noise_model.silent)},
        cfg, runtime={"voiced_s": t1 - t0, "stochastic_s": t2 - t1})
    noise = vs.residual - unvoiced
    return Decomposition(y.with_samples(vs.voiced), y.with_samples(unvoiced),
                         y.with_samples(noise), y.with_samples(vs.residual), report,
                         vs.bounds, s_bounds,
                         {k: t for k, t in (("voiced", vs.table), ("stochastic", s_table))
                          if t is not None})


# -- audio files ---------------------------------------------------------------

def read_wav(path, sample_rate=None):
    """Read a mono WAV as floats in [-1, 1]."""
    try:
        fs, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise ValueError(f"{path}: unreadable WAV file ({exc})") from exc
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, found {data.shape[1]} channels")
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(float) - 128) / 128.0
    else:
        x = data.astype(float)
    if sample_rate is not None and fs != sample_rate:
        raise ValueError(f"{path}: sample rate {fs} Hz, expected {sample_rate} Hz")
    if x.size == 0:
        raise ValueError(f"{path}: no samples")
    return SignalBuffer(x, fs)


def write_wav(path, sig):
    """Write 16-bit PCM; returns the gain applied to avoid clipping (1.0 if none)."""
    x = sig.samples
    peak = float(np.max(np.abs(x), initial=0.0))
    gain = 1.0
    if peak > 32767 / 32768:
        gain = (32767 / 32768) / peak
    pcm = np.round(x * gain * 32768).clip(-32768, 32767).astype(np.int16)
    wavfile.write(path, int(sig.sample_rate), pcm)
    return gain


def decompose_file(in_path, out_dir, codebook_u, codebook_c, config=None, noise_ref=None):
    """Decompose a WAV file; writes ``<stem>_voiced.wav``, ``<stem>_unvoiced.wav``
    and ``<stem>_report.json`` (plus ``<stem>_runtime.json``) into ``out_dir``."""
    config = config or PipelineConfig()
    y = read_wav(in_path, config.sample_rate)
    cb_u = codebook_u if isinstance(codebook_u, Codebook) else Codebook.load(codebook_u)
    cb_c = codebook_c if isinstance(codebook_c, Codebook) else Codebook.load(codebook_c)
    ref = read_wav(noise_ref, config.sample_rate) if noise_ref else None
    result = decompose(y, cb_u, cb_c, config, ref)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(in_path).stem
    paths = {"voiced": out_dir / f"{stem}_voiced.wav",
             "unvoiced": out_dir / f"{stem}_unvoiced.wav"}
    scaling = {"voiced": write_wav(paths["voiced"], result.voiced),
               "unvoiced": write_wav(paths["unvoiced"], result.unvoiced)}
    result.report.output_scaling = scaling
    (out_dir / f"{stem}_report.json").write_text(result.report.to_json())
    (out_dir / f"{stem}_runtime.json").write_text(json.dumps(result.report.runtime, indent=1))
    return result, paths


# -- plot data -----------------------------------------------------------------

def spectrogram_rows(sig, frame=256, hop=128):
    """(time_s, freq_hz, dB) rows of a Hann-windowed spectrogram."""
    x = sig.samples
    fs = sig.sample_rate
    win = np.hanning(frame)
    n_frames = max(1, 1 + (x.size - frame) // hop) if x.size >= frame else 1
    padded = np.concatenate((x, np.zeros(max(0, frame - x.size))))
    freqs = np.fft.rfftfreq(frame, 1.0 / fs)
    rows = []
    for f in range(n_frames):
        seg = padded[f * hop:f * hop + frame]
        power = np.abs(np.fft.rfft(seg * win)) ** 2
        db = 10 * np.log10(np.maximum(power, 1e-20))
        t = (f * hop + frame / 2) / fs
        rows.extend((t, fr, d) for fr, d in zip(freqs, db))
    return rows


def emit_plot_data(out_dir, signals, result=None, metric_rows=None, frame=256, hop=128):
    """Write spectrogram, marker and metric CSVs for plotting.

    ``signals`` maps a name (e.g. ``"noisy"``) to a SignalBuffer.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, sig in signals.items():
        path = out_dir / f"spectrogram_{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "freq_hz", "db"])
            w.writerows(spectrogram_rows(sig, frame, hop))
        written.append(path)
    if result is not None:
        path = out_dir / "markers.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "start", "length"])
            for kind, bounds in (("voiced", result.voiced_bounds),
                                 ("stochastic", result.stochastic_bounds)):
                w.writerows((kind, lo, hi - lo) for lo, hi in bounds)
        written.append(path)
    if metric_rows:
        path = out_dir / "metrics.csv"
        write_metric_rows(path, metric_rows)
        written.append(path)
    return written


def write_cost_table(path, table):
    """CSV of every finite entry of a cost table as (start, b, cost) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["start", "b", "cost"])
        for start, b in zip(*np.nonzero(np.isfinite(table.costs))):
            w.writerow([int(start), int(b), repr(float(table.costs[start, b]))])


def write_metric_rows(path, rows):
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


def baseline_config(config, ms=20.0):
    """Same settings with DP bypassed in favour of fixed ``ms`` segments."""
    return replace(config, fixed_segmentation_ms=ms)
