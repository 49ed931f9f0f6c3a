"""Iterative joint estimation of the harmonic part and the residual AR statistics."""
from dataclasses import dataclass, field

import numpy as np

from .core import EPS, ArModel, ar_covariance, ar_fit
from .harmonic import (HarmonicEstimate, PitchSearchConfig, _fft_size, estimate_harmonics,
                       nls_pitch, refine_pitch, select_order, synthesize)
from .whitening import Whitener


@dataclass(frozen=True)
class JointConfig:
    pitch: PitchSearchConfig = field(default_factory=PitchSearchConfig)
    residual_order: int = 14
    max_iters: int = 10
    rel_tol: float = 1e-3


@dataclass(frozen=True)
class SegmentFit:
    """Voiced estimate plus the AR model of what it leaves behind.

    ``nls_history`` holds the normalized NLS cost (fraction of whitened
    energy explained) accepted at each iteration.
    """

    harmonic: HarmonicEstimate
    residual_model: ArModel
    residual: np.ndarray
    iterations_used: int
    converged: bool
    nls_history: tuple = ()

    @property
    def voiced(self):
        return self.harmonic.voiced


def _residual_model(x, order):
    if x.size <= order:
        return ar_fit(x, max(1, x.size - 1)) if x.size > 1 else ArModel(np.zeros(0), float(x @ x))
    return ar_fit(x, order)


def _unvoiced_fit(y, config, iterations):
    return SegmentFit(HarmonicEstimate.unvoiced(), _residual_model(y, config.residual_order),
                      y.copy(), iterations, True)


def _fit_amplitudes(y, f0, order):
    """LS amplitudes, dropping harmonics while Z^H Z stays ill-conditioned."""
    while order > 0:
        try:
            return estimate_harmonics(y, f0, order)
        except np.linalg.LinAlgError:
            order -= 1
    return HarmonicEstimate.unvoiced()


def joint_estimate(segment, initial_whitener=None, config=None):
    """Alternate whitened NLS pitch/order estimation and residual AR refits.

    Each pass whitens the raw segment, picks pitch and order, fits the
    amplitudes on the raw segment and refits the residual AR model, which
    becomes the next whitener.  Iteration stops when the explained
    fraction of whitened energy changes by less than ``rel_tol``
    (relative), when it would decrease (the previous iterate is kept), or
    after ``max_iters`` passes.  An unvoiced verdict on the first pass
    ends it at once; on a later pass the previous voiced iterate is kept.
    """
    config = config or JointConfig()
    y = np.asarray(segment, dtype=float)
    n = y.size
    whitener = initial_whitener or Whitener.identity()
    step = 1.0 / _fft_size(n, config.pitch.resolution(n))

    best = None
    history = []
    converged = False
    for it in range(1, config.max_iters + 1):
        yw = whitener.apply(y)
        energy_w = float(yw @ yw)
        nls = nls_pitch(yw, config.pitch, refine=False)
        order = select_order(yw, nls, n)
        if order == 0:
            if best is None:
                return _unvoiced_fit(y, config, it)
            # a later whitener erased the harmonics: keep the last voiced iterate
            converged = True
            break
        f0, cost = refine_pitch(yw, nls.f0[order - 1], order, step, config.pitch,
                                nls.cost[order - 1])
        frac = cost / energy_w
        if history and frac < history[-1]:
            converged = True
            break
        harmonic = _fit_amplitudes(y, f0, order)
        if not harmonic.voiced:
            return _unvoiced_fit(y, config, it)
        residual = y - synthesize(harmonic, n)
        model = _residual_model(residual, config.residual_order)
        best = (harmonic, model, residual, it)
        converged = bool(history) and abs(frac - history[-1]) <= config.rel_tol * history[-1]
        history.append(frac)
        # an exact fit leaves only rounding noise, which makes a meaningless whitener
        exact = float(residual @ residual) <= EPS * float(y @ y)
        if converged or exact or model.silent or model.excitation_variance == 0.0:
            converged = True
            break
        whitener = Whitener(model)

    harmonic, model, residual, used = best
    return SegmentFit(harmonic, model, residual, used, converged, tuple(history))


def residual_covariance(model, m):
    """M x M Toeplitz covariance implied by the residual AR model."""
    return ar_covariance(model, m)
