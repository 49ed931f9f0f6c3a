"""AR spectral-shape codebooks: LBG training and Itakura-Saito matching.

Entries are gain-normalized AR polynomials; entry ``i`` contributes the
unit-gain shape ``1 / |A_i(e^jw)|^2``.  A residual spectrum ``phi`` is
matched by the pair ``(i, j)`` and variances ``(su2, sc2)`` minimizing
``d_IS(phi, su2 * U_i + sc2 * C_j)``.
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DEFAULT_BINS, EPS, ar_fit, ar_response, is_stable

log = logging.getLogger(__name__)

KINDS = ("unvoiced", "noise")
_MAGIC = b"SDCB"
_VERSION = 1
_HEADER = struct.Struct("<4sHBxHII")

SILENCE_POWER = 1e-10


@dataclass
class Codebook:
    kind: str
    entries: np.ndarray
    grid: int = DEFAULT_BINS
    distortion_history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        self.entries = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if self.entries.shape[0] < 1:
            raise ValueError("codebook needs at least one entry")

    @property
    def order(self):
        return self.entries.shape[1]

    @property
    def size(self):
        return self.entries.shape[0]

    def shapes(self, bins=None):
        """Unit-gain spectra, one row per entry."""
        bins = bins or self.grid
        return np.stack([1.0 / ar_response(a, bins) for a in self.entries])

    def header(self):
        return {"kind": self.kind, "order": self.order, "size": self.size,
                "grid": self.grid, "version": _VERSION}

    def save(self, path):
        """Write the binary codebook and a JSON sidecar (``<path>.json``)."""
        path = Path(path)
        head = _HEADER.pack(_MAGIC, _VERSION, KINDS.index(self.kind), self.order,
                            self.size, self.grid)
        path.write_bytes(head + self.entries.astype("<f8").tobytes())
        sidecar = dict(self.header(), entries=self.entries.tolist())
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1))

    @classmethod
    def load(cls, path):
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise ValueError(f"{path}: truncated codebook file")
        magic, version, kind, order, size, grid = _HEADER.unpack_from(raw)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a codebook file")
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported codebook version {version}")
        body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if body.size != order * size:
            raise ValueError(f"{path}: expected {order * size} coefficients, found {body.size}")
        return cls(KINDS[kind], body.reshape(size, order).astype(float), grid)


@dataclass(frozen=True)
class CodebookMatch:
    i_star: int
    j_star: int
    sigma_u2: float
    sigma_c2: float
    distance: float
    silent: bool = False
    fallback: bool = False


# -- line spectral frequencies ------------------------------------------------

def poly2lsf(coeffs):
    """Line spectral frequencies (radians, ascending) of ``1 + sum a_i z^-i``."""
    a = np.concatenate(([1.0], np.asarray(coeffs, dtype=float), [0.0]))
    p = a.size - 2
    sym = a + a[::-1]
    anti = a - a[::-1]
    if p % 2 == 0:
        sym, _ = np.polydiv(sym, [1.0, 1.0])
        anti, _ = np.polydiv(anti, [1.0, -1.0])
    else:
        anti, _ = np.polydiv(anti, [1.0, 0.0, -1.0])
    angles = np.concatenate((np.angle(np.roots(sym)), np.angle(np.roots(anti))))
    lsf = np.sort(angles[angles > 0])
    if lsf.size != p:
        raise ValueError("polynomial has no valid LSF representation (not minimum phase?)")
    return lsf


def lsf2poly(lsf):
    """Inverse of :func:`poly2lsf`; returns ``a_1..a_p``."""
    lsf = np.sort(np.asarray(lsf, dtype=float))
    p = lsf.size
    sym = np.array([1.0])
    anti = np.array([1.0])
    for k, w in enumerate(lsf):
        quad = [1.0, -2.0 * np.cos(w), 1.0]
        if k % 2 == 0:
            sym = np.convolve(sym, quad)
        else:
            anti = np.convolve(anti, quad)
    if p % 2 == 0:
        sym = np.convolve(sym, [1.0, 1.0])
        anti = np.convolve(anti, [1.0, -1.0])
    else:
        anti = np.convolve(anti, [1.0, 0.0, -1.0])
    a = 0.5 * (sym + anti)
    return a[1:p + 1]


# -- training ------------------------------------------------------------------

def training_vectors(segments, order, frame=160, hop=80):
    """LSF vectors of AR fits on overlapping frames, skipping silent frames."""
    vecs = []
    for seg in segments:
        seg = np.asarray(seg, dtype=float)
        if seg.size < frame:
            frames = [seg] if seg.size > order else []
        else:
            frames = [seg[i:i + frame] for i in range(0, seg.size - frame + 1, hop)]
        for fr in frames:
            model = ar_fit(fr, order)
            if model.silent:
                continue
            try:
                vecs.append(poly2lsf(model.coeffs))
            except ValueError:
                continue
    return np.array(vecs).reshape(-1, order)


def _assign(vecs, centroids):
    d2 = np.sum((vecs[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(vecs.shape[0]), labels]


def _kmeans(vecs, centroids, tol, max_iter=200):
    prev = np.inf
    for _ in range(max_iter):
        labels, dist = _assign(vecs, centroids)
        for k in range(centroids.shape[0]):
            members = labels == k
            if np.any(members):
                centroids[k] = vecs[members].mean(axis=0)
            else:
                # reseed from the worst-represented vector
                worst = int(np.argmax(dist))
                centroids[k] = vecs[worst]
                dist[worst] = 0.0
        labels, dist = _assign(vecs, centroids)
        distortion = float(dist.mean())
        if prev - distortion <= tol * max(distortion, np.finfo(float).tiny):
            return centroids, labels, distortion
        prev = distortion
    return centroids, labels, distortion


def lbg(vecs, size, seed=0, tol=1e-4, perturbation=0.01):
    """Linde-Buzo-Gray splitting design.

    Returns ``(centroids, labels, history)`` where ``history`` lists the
    distortion reached at every codebook size along the way.
    """
    vecs = np.asarray(vecs, dtype=float)
    if vecs.shape[0] < size:
        raise ValueError(f"{vecs.shape[0]} training vectors cannot support {size} entries")
    rng = np.random.default_rng(seed)
    spread = vecs.std(axis=0) + 1e-12
    centroids = vecs.mean(axis=0, keepdims=True)
    labels, dist = _assign(vecs, centroids)
    history = [(1, float(dist.mean()))]
    while centroids.shape[0] < size:
        k = centroids.shape[0]
        per_cluster = np.bincount(labels, weights=dist, minlength=k)
        n_split = min(k, size - k)
        split = np.argsort(-per_cluster, kind="stable")[:n_split]
        delta = perturbation * spread * rng.standard_normal((n_split, vecs.shape[1]))
        new = centroids[split] + delta
        centroids = centroids.copy()
        centroids[split] -= delta
        centroids = np.vstack((centroids, new))
        centroids, labels, distortion = _kmeans(vecs, centroids, tol)
        dist = _assign(vecs, centroids)[1]
        history.append((centroids.shape[0], distortion))
    return centroids, labels, tuple(history)


def train_codebook(segments, order=14, size=64, seed=0, kind="unvoiced",
                   frame=160, hop=80, grid=DEFAULT_BINS):
    """Train an AR codebook by LBG clustering of line spectral frequencies."""
    vecs = training_vectors(segments, order, frame, hop)
    if vecs.shape[0] < size:
        raise ValueError(
            f"insufficient training data: {vecs.shape[0]} usable frames for {size} entries")
    centroids, _, history = lbg(vecs, size, seed)
    entries = np.array([lsf2poly(c) for c in centroids])
    for a in entries:
        if not is_stable(a):
            raise RuntimeError("trained codebook entry is unstable")
    return Codebook(kind, entries, grid, history)


# -- variance estimation -------------------------------------------------------

def _is_objective(phi, m, w):
    ratio = phi / m
    return (ratio - np.log(ratio) - 1.0) @ w


def _gain_optimum(phi, shape, w):
    """1-D IS optimum of ``g`` in ``d(phi, g * shape)``: weighted mean of phi/shape."""
    return (phi / shape) @ w


def _relative_ls_start(phi, U, C, w, a_1d, b_1d):
    """Non-negative minimizer of sum w ((phi - aU - bC) / phi)^2.

    This is the quadratic approximation of the IS distance around a
    perfect fit, and lands Newton close to the optimum.
    """
    iu, ic = U / phi, C / phi
    aa, ab, bb = (iu * iu) @ w, (iu * ic) @ w, (ic * ic) @ w
    ra, rb = iu @ w, ic @ w
    det = aa * bb - ab * ab
    safe = np.where(det > 0, det, 1.0)
    a = (bb * ra - ab * rb) / safe
    b = (aa * rb - ab * ra) / safe
    inside = (det > 0) & (a > 0) & (b > 0)
    # otherwise split the 1-D optima evenly; Newton takes it from there
    a = np.where(inside, a, 0.5 * a_1d)
    b = np.where(inside, b, 0.5 * b_1d)
    return a, b


def _fit_pairs(phi, U, C, w, max_iter=100, tol=1e-10):
    """Projected Newton on (a, b) >= 0 for every row pair of U and C.

    The distance is not convex in (a, b), so every pair is started from
    the relative least-squares point and from both near-corner points,
    and the best end point wins.  Returns ``(a, b, distance, converged)``
    arrays.  ``phi`` is assumed strictly positive and normalized to unit
    weighted mean.
    """
    n_pairs = U.shape[0]
    a_1d = _gain_optimum(phi, U, w)
    b_1d = _gain_optimum(phi, C, w)
    a0, b0 = _relative_ls_start(phi, U, C, w, a_1d, b_1d)
    starts_a = np.concatenate((a0, a_1d, 0.01 * a_1d))
    starts_b = np.concatenate((b0, 0.01 * b_1d, b_1d))
    a, b, d, conv = _newton(phi, np.tile(U, (3, 1)), np.tile(C, (3, 1)), w, starts_a, starts_b,
                            max_iter, tol)
    pick = np.argmin(d.reshape(3, n_pairs), axis=0) * n_pairs + np.arange(n_pairs)
    a, b, d, converged = a[pick], b[pick], d[pick], conv[pick]
    # boundary candidates: one variance exactly zero
    d_a = _is_objective(phi, a_1d[:, None] * U, w)
    d_b = _is_objective(phi, b_1d[:, None] * C, w)
    use_a = d_a < d
    a, b, d = np.where(use_a, a_1d, a), np.where(use_a, 0.0, b), np.where(use_a, d_a, d)
    use_b = d_b < d
    a, b, d = np.where(use_b, 0.0, a), np.where(use_b, b_1d, b), np.where(use_b, d_b, d)
    return a, b, d, converged


def _newton(phi, U, C, w, a, b, max_iter, tol):
    n_pairs = U.shape[0]
    a, b = a.copy(), b.copy()
    m = a[:, None] * U + b[:, None] * C
    d = _is_objective(phi, m, w)
    converged = np.zeros(n_pairs, dtype=bool)
    for _ in range(max_iter):
        act = ~converged
        if not np.any(act):
            break
        ua, cb, mm = U[act], C[act], m[act]
        inv = 1.0 / mm
        res = (mm - phi) * inv * inv
        ga = (ua * res) @ w
        gb = (cb * res) @ w
        curv = (2.0 * phi - mm) * inv ** 3
        haa = (ua * ua * curv) @ w
        hab = (ua * cb * curv) @ w
        hbb = (cb * cb * curv) @ w
        det = haa * hbb - hab * hab
        newton_ok = (haa > 0) & (det > 1e-14 * haa * hbb)
        # Fisher scoring where the Hessian is not positive definite
        fi2 = inv * inv
        faa = np.where(newton_ok, haa, (ua * ua * fi2) @ w)
        fab = np.where(newton_ok, hab, (ua * cb * fi2) @ w)
        fbb = np.where(newton_ok, hbb, (cb * cb * fi2) @ w)
        det = faa * fbb - fab * fab
        da = np.where(det > 0, -(fbb * ga - fab * gb) / np.where(det > 0, det, 1), -ga / faa)
        db = np.where(det > 0, -(faa * gb - fab * ga) / np.where(det > 0, det, 1), -gb / fbb)
        aa, bb = a[act], b[act]
        fix_a = (aa <= 0) & (ga > 0)
        fix_b = (bb <= 0) & (gb > 0)
        da = np.where(fix_a, 0.0, np.where(fix_b, -ga / faa, da))
        db = np.where(fix_b, 0.0, np.where(fix_a, -gb / fbb, db))
        slope = ga * da + gb * db
        d_old = d[act]
        step = np.ones(aa.size)
        # already stationary: skip the line search
        flat = np.abs(slope) <= tol * np.maximum(np.abs(d_old), 1e-300)
        accepted = flat.copy()
        new_a, new_b, new_d = aa.copy(), bb.copy(), d_old.copy()
        for _ in range(30):
            todo = ~accepted
            if not np.any(todo):
                break
            ta = np.maximum(aa[todo] + step[todo] * da[todo], 0.0)
            tb = np.maximum(bb[todo] + step[todo] * db[todo], 0.0)
            tm = ta[:, None] * ua[todo] + tb[:, None] * cb[todo]
            with np.errstate(divide="ignore", invalid="ignore"):
                td = np.where(np.all(tm > 0, axis=1), _is_objective(phi, np.maximum(tm, 1e-300), w),
                              np.inf)
            ok = td <= d_old[todo] + 1e-4 * step[todo] * np.minimum(slope[todo], 0.0)
            idx = np.flatnonzero(todo)
            good = idx[ok]
            new_a[good], new_b[good], new_d[good] = ta[ok], tb[ok], td[ok]
            accepted[good] = True
            step[idx[~ok]] *= 0.5
        improvement = d_old - new_d
        done = (~accepted) | (improvement <= tol * np.maximum(np.abs(d_old), 1e-300)) \
            | flat
        idx = np.flatnonzero(act)
        a[idx], b[idx], d[idx] = new_a, new_b, new_d
        m[idx] = new_a[:, None] * ua + new_b[:, None] * cb
        converged[idx[done]] = True
    return a, b, d, converged


def _grid_fit(phi, u, c, w, points=200):
    """Brute-force log-grid minimization; fallback for non-convergence."""
    a0 = _gain_optimum(phi, u, w)
    b0 = _gain_optimum(phi, c, w)
    ga = np.concatenate(([0.0], np.geomspace(1e-4 * a0, 2 * a0, points)))
    gb = np.concatenate(([0.0], np.geomspace(1e-4 * b0, 2 * b0, points)))
    best = (np.inf, 0.0, 0.0)
    for av in ga:
        m = av * u[None, :] + gb[:, None] * c[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(np.all(m > 0, axis=1), _is_objective(phi, np.maximum(m, 1e-300), w), np.inf)
        k = int(np.argmin(d))
        if d[k] < best[0]:
            best = (float(d[k]), float(av), float(gb[k]))
    return best[1], best[2], best[0]


def _half_grid(k):
    """Weights that turn a symmetric K-point average into a half-spectrum sum."""
    half = k // 2 + 1
    w = np.full(half, 2.0)
    w[0] = 1.0
    if k % 2 == 0:
        w[-1] = 1.0
    return half, w / k


def _prepare(phi):
    phi = np.asarray(phi, dtype=float)
    k = phi.size
    if np.allclose(phi[1:], phi[:0:-1], rtol=1e-9, atol=0):
        half, w = _half_grid(k)
        return phi[:half], w, half
    return phi, np.full(k, 1.0 / k), k


def estimate_variances(phi, shape_u, shape_c, return_info=False):
    """Excitation variances ``(su2, sc2) >= 0`` minimizing the IS distance.

    ``d_IS(phi, su2 * shape_u + sc2 * shape_c)`` is minimized by projected
    Newton iterations; a log-grid search takes over if they fail to settle
    within 100 iterations (reported as ``fallback`` with ``return_info``).
    """
    phi = np.asarray(phi, dtype=float)
    shape_u = np.asarray(shape_u, dtype=float)
    shape_c = np.asarray(shape_c, dtype=float)
    if not (phi.shape == shape_u.shape == shape_c.shape):
        raise ValueError("spectra live on different grids")
    if np.any(shape_u <= 0) or np.any(shape_c <= 0):
        raise ValueError("codebook shapes must be strictly positive")
    scale = float(np.mean(phi))
    if scale <= SILENCE_POWER:
        out = (0.0, 0.0)
        return (out, {"distance": 0.0, "silent": True, "fallback": False}) if return_info else out
    p, w, half = _prepare(phi / scale)
    p = np.maximum(p, EPS)
    u, c = shape_u[None, :half], shape_c[None, :half]
    a, b, d, conv = _fit_pairs(p, u, c, w)
    fallback = not conv[0]
    if fallback:
        log.debug("variance estimation did not converge; using grid search")
        ga, gb, gd = _grid_fit(p, u[0], c[0], w)
        if gd < d[0]:
            a[0], b[0], d[0] = ga, gb, gd
    out = (float(a[0] * scale), float(b[0] * scale))
    if return_info:
        return out, {"distance": float(d[0]), "silent": False, "fallback": fallback}
    return out


def search(phi, cb_u, cb_c, shapes_u=None, shapes_c=None):
    """Exhaustive IS search over every (unvoiced, noise) entry pair.

    Ties resolve toward the lowest ``(i, j)``.  Precomputed unit-gain
    shapes on ``phi``'s grid may be passed to skip recomputation.
    """
    phi = np.asarray(phi, dtype=float)
    k = phi.size
    scale = float(np.mean(phi))
    if scale <= SILENCE_POWER:
        return CodebookMatch(0, 0, 0.0, 0.0, 0.0, silent=True)
    if shapes_u is None:
        shapes_u = _cached_shapes(cb_u, k)
    if shapes_c is None:
        shapes_c = _cached_shapes(cb_c, k)
    p, w, half = _prepare(phi / scale)
    p = np.maximum(p, EPS)
    n_u, n_c = shapes_u.shape[0], shapes_c.shape[0]
    U = np.repeat(shapes_u[:, :half], n_c, axis=0)
    C = np.tile(shapes_c[:, :half], (n_u, 1))
    a, b, d, conv = _fit_pairs(p, U, C, w)
    fallback = False
    for idx in np.flatnonzero(~conv):
        ga, gb, gd = _grid_fit(p, U[idx], C[idx], w)
        fallback = True
        if gd < d[idx]:
            a[idx], b[idx], d[idx] = ga, gb, gd
    best = int(np.argmin(d))
    i, j = divmod(best, n_c)
    return CodebookMatch(i, j, float(a[best] * scale), float(b[best] * scale), float(d[best]),
                         fallback=fallback)


_shape_cache = {}


def _cached_shapes(cb, bins):
    key = (id(cb), cb.entries.tobytes(), bins)
    shapes = _shape_cache.get(key)
    if shapes is None:
        if len(_shape_cache) > 32:
            _shape_cache.clear()
        shapes = cb.shapes(bins)
        _shape_cache[key] = shapes
    return shapes
