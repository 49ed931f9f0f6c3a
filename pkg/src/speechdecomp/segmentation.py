"""Segment costs and dynamic-programming optimal segmentation.

A signal of ``S`` subsegments of ``n_min`` samples is tiled by segments
of ``b`` subsegments, ``b`` taken from an allowed set.  Costs are additive
over segments, so the minimum-cost tiling follows from one forward pass
and a backtrack.
"""
from dataclasses import dataclass, field

import numpy as np

from .codebook import search
from .core import EPS, ar_fit, ar_psd, ar_response, itakura_saito
from .harmonic import fourier_matrix, ls_amplitudes
from .joint import joint_estimate


@dataclass(frozen=True)
class SegmentGrid:
    n_min: int
    n_sub: int
    allowed: tuple

    def __post_init__(self):
        allowed = tuple(sorted(set(int(b) for b in self.allowed)))
        if self.n_min < 1 or self.n_sub < 1:
            raise ValueError("n_min and the number of subsegments must be >= 1")
        if not allowed or allowed[0] < 1:
            raise ValueError("allowed segment sizes must be a non-empty set of positive ints")
        object.__setattr__(self, "allowed", allowed)

    @classmethod
    def for_signal(cls, length, n_min, b_min, b_max):
        return cls(n_min, length // n_min, tuple(range(b_min, b_max + 1)))

    @property
    def b_max(self):
        return self.allowed[-1]

    @property
    def covered(self):
        return self.n_min * self.n_sub

    def candidates(self):
        for start in range(self.n_sub):
            for b in self.allowed:
                if start + b <= self.n_sub:
                    yield start, b


@dataclass
class CostTable:
    """``costs[start, b]`` for b = 0..b_max; +inf marks disallowed entries.

    ``fits`` keeps whatever model fit produced each finite entry.
    """

    costs: np.ndarray
    fits: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, grid):
        return cls(np.full((grid.n_sub, grid.b_max + 1), np.inf))

    def __getitem__(self, key):
        return self.costs[key]


@dataclass
class SegmentationResult:
    """Tiling as (start_subsegment, length_in_subsegments) markers."""

    markers: list
    total_cost: float
    fits: list = field(default_factory=list)
    n_min: int = 1

    def sample_bounds(self):
        return [(s * self.n_min, (s + b) * self.n_min) for s, b in self.markers]

    def lengths(self):
        return [b * self.n_min for _, b in self.markers]


class _CountingTable:
    def __init__(self, costs):
        self.costs = costs
        self.lookups = 0

    def get(self, start, b):
        self.lookups += 1
        return self.costs[start, b]


def dp_segment(table, grid, stats=None):
    """Minimum-cost tiling of ``grid.n_sub`` subsegments.

    Ties go to the longer final segment.  ``stats`` (a dict) receives the
    number of table lookups made.
    """
    costs = table.costs if isinstance(table, CostTable) else np.asarray(table)
    n_sub = grid.n_sub
    view = _CountingTable(costs)
    best = np.full(n_sub + 1, np.inf)
    best[0] = 0.0
    b_opt = np.zeros(n_sub + 1, dtype=int)
    longest_first = grid.allowed[::-1]
    for s in range(1, n_sub + 1):
        for b in longest_first:
            if b > s:
                continue
            c = best[s - b] + view.get(s - b, b)
            if c < best[s]:
                best[s] = c
                b_opt[s] = b
    if not np.isfinite(best[n_sub]):
        raise ValueError("no valid tiling of the signal with the allowed segment sizes")
    markers = []
    s = n_sub
    while s > 0:
        b = b_opt[s]
        markers.append((s - b, b))
        s -= b
    markers.reverse()
    if stats is not None:
        stats["lookups"] = view.lookups
    fits = []
    if isinstance(table, CostTable):
        fits = [table.fits.get(m) for m in markers]
    total = float(sum(costs[m] for m in markers))
    return SegmentationResult(markers, total, fits, grid.n_min)


def fixed_segmentation(grid, b):
    """Tiling by blocks of ``b`` subsegments; a shorter tail block closes it."""
    markers = [(s, min(b, grid.n_sub - s)) for s in range(0, grid.n_sub, b)]
    return markers


def map_cost_voiced(fit, whitened, n=None):
    """Penalized MAP cost of a segment given its harmonic fit.

    Voiced: ``(N/2) ln(|y_W - Z a_W|^2 / N) + (3/2) ln N + L ln N`` with
    ``a_W`` fitted on the whitened samples; not voiced:
    ``(N/2) ln(|y_W|^2 / N)``.  Powers are floored at ``EPS``.
    """
    yw = np.asarray(whitened, dtype=float)
    n = n or yw.size
    est = fit.harmonic
    if est.voiced:
        z = fourier_matrix(est.f0, est.order, yw.size)
        try:
            resid = yw - (z @ ls_amplitudes(yw, z)).real
        except np.linalg.LinAlgError:
            resid = yw
        power = float(resid @ resid) / n
        penalty = (1.5 + est.order) * np.log(n)
    else:
        power = float(yw @ yw) / n
        penalty = 0.0
    return 0.5 * n * np.log(max(power, EPS)) + penalty


def loglik_cost_stochastic(phi_x, model, n=None):
    """``(N/2) d_IS(phi_x, model) + (1/2) sum_k ln phi_x(w_k)`` on an N-point grid."""
    phi_x = np.asarray(phi_x, dtype=float)
    n = n or phi_x.size
    d = itakura_saito(phi_x, model)
    return 0.5 * n * d + 0.5 * float(np.sum(np.log(np.maximum(phi_x, EPS))))


def build_voiced_cost_table(y, y_w, grid, whitener, config=None, progress=None):
    """Joint-estimate and MAP-score every candidate segment.

    ``y`` and ``y_w`` are raw and globally whitened sample arrays;
    entries with sizes outside ``grid.allowed`` stay at +inf.
    """
    table = CostTable.empty(grid)
    n_min = grid.n_min
    for start, b in grid.candidates():
        lo, hi = start * n_min, (start + b) * n_min
        fit = joint_estimate(y[lo:hi], whitener, config)
        table.costs[start, b] = map_cost_voiced(fit, y_w[lo:hi])
        table.fits[(start, b)] = fit
        if progress:
            progress()
    return table


@dataclass(frozen=True)
class StochasticFit:
    """Codebook match of one residual segment and its order-28 AR spectrum."""

    phi_model: object
    match: object


def stochastic_segment_cost(x, cb_u, cb_c, fit_order=28, bins=512):
    """Codebook-match a residual segment and return (cost, StochasticFit)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    order = min(fit_order, n - 1)
    model = ar_fit(x, order)
    phi = ar_psd(model, bins)
    match = search(phi, cb_u, cb_c)
    phi_n = ar_psd(model, n)
    model_n = (match.sigma_u2 / ar_response(cb_u.entries[match.i_star], n)
               + match.sigma_c2 / ar_response(cb_c.entries[match.j_star], n))
    model_n = np.maximum(model_n, EPS)
    return loglik_cost_stochastic(np.maximum(phi_n, EPS), model_n, n), StochasticFit(model, match)


def build_stochastic_cost_table(x, grid, cb_u, cb_c, fit_order=28, bins=512, progress=None):
    """Log-likelihood cost of every candidate segment of the residual ``x``."""
    table = CostTable.empty(grid)
    n_min = grid.n_min
    for start, b in grid.candidates():
        lo, hi = start * n_min, (start + b) * n_min
        cost, fit = stochastic_segment_cost(x[lo:hi], cb_u, cb_c, fit_order, bins)
        table.costs[start, b] = cost
        table.fits[(start, b)] = fit
        if progress:
            progress()
    return table
