"""Transfer operators acting on exact piecewise-constant functions.

Affine maps get the exact breakpoint-image path: applying the operator to a
staircase yields another staircase whose breakpoints are the forward images
of the input breakpoints, so cell counts grow additively, not geometrically.
Non-affine maps route through a uniform Ulam grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import MinorationError, ResourceLimitError, UnsupportedRepresentationError
from .maps import (BREAKPOINT_CAP, MERGE_TOL, IntervalMap, MapSequence,
                   compose_affine_block, covering_horizon, eval_map,
                   lasota_yorke_constants, preimages)

DEFAULT_ULAM_BINS = 1 << 14
# Dividing by a pushforward density aborts below this instead of clamping.
MINORATION_FLOOR = 1e-12


@dataclass(frozen=True)
class PiecewiseFn:
    """A function constant on each half-open cell of a breakpoint grid on [0,1).

    Integral and variation are exact sums over cells, which is what makes the
    operator identities in this module checkable at machine precision.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.ascontiguousarray(self.breakpoints, dtype=float)
        vals = np.ascontiguousarray(self.values, dtype=float)
        if bp.ndim != 1 or vals.ndim != 1 or len(bp) != len(vals) + 1:
            raise ValueError("need len(breakpoints) == len(values) + 1")
        if bp[0] != 0.0 or bp[-1] != 1.0 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must increase strictly from 0 to 1")
        bp.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, c: float) -> "PiecewiseFn":
        return cls(np.array([0.0, 1.0]), np.array([float(c)]))

    @classmethod
    def indicator(cls, lo: float, hi: float) -> "PiecewiseFn":
        """Indicator of [lo, hi)."""
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError("need 0 <= lo < hi <= 1")
        bp = [0.0, lo, hi, 1.0]
        vals = [0.0, 1.0, 0.0]
        if lo == 0.0:
            bp, vals = bp[1:], vals[1:]
        if hi == 1.0:
            bp, vals = bp[:-1], vals[:-1]
        return cls(np.array(bp), np.array(vals))

    @classmethod
    def step_proxy(cls, fn, cells: int = 1 << 10) -> "PiecewiseFn":
        """Midpoint staircase of a scalar function on a uniform grid.

        The sup-norm proxy error for a Lipschitz fn is O(1/cells).
        """
        bp = np.linspace(0.0, 1.0, cells + 1)
        mids = 0.5 * (bp[:-1] + bp[1:])
        return cls(bp, np.asarray(fn(mids), dtype=float))

    @classmethod
    def sawtooth_proxy(cls, cells: int = 1 << 10) -> "PiecewiseFn":
        """Staircase of the centered identity x - 1/2 (zero mean by symmetry)."""
        return cls.step_proxy(lambda x: x - 0.5, cells)

    # -- exact functionals ---------------------------------------------------

    @property
    def ncells(self) -> int:
        return len(self.values)

    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def integral(self) -> float:
        return float(np.dot(self.values, self.widths()))

    def first_moment(self) -> float:
        """Exact integral of x*f(x)."""
        bp = self.breakpoints
        return float(np.dot(self.values, 0.5 * (bp[1:] ** 2 - bp[:-1] ** 2)))

    def variation(self) -> float:
        return float(np.sum(np.abs(np.diff(self.values))))

    def l1(self) -> float:
        return float(np.dot(np.abs(self.values), self.widths()))

    def bv(self) -> float:
        return self.variation() + self.l1()

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def min_value(self) -> float:
        return float(np.min(self.values))

    def max_value(self) -> float:
        return float(np.max(self.values))

    # -- evaluation and algebra ---------------------------------------------

    def eval_many(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        idx = np.clip(np.searchsorted(self.breakpoints, xs, side="right") - 1,
                      0, self.ncells - 1)
        return self.values[idx]

    def __call__(self, x: float) -> float:
        return float(self.eval_many(np.array([x]))[0])

    def _binary(self, other, op) -> "PiecewiseFn":
        if isinstance(other, PiecewiseFn):
            bp = _merge_grids(self.breakpoints, other.breakpoints)
            mids = 0.5 * (bp[:-1] + bp[1:])
            return PiecewiseFn(bp, op(self.eval_many(mids), other.eval_many(mids)))
        return PiecewiseFn(self.breakpoints, op(self.values, float(other)))

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    def __radd__(self, other):
        return self._binary(other, lambda a, b: b + a)

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b)

    def __rmul__(self, other):
        return self._binary(other, lambda a, b: b * a)

    def __neg__(self):
        return PiecewiseFn(self.breakpoints, -self.values)

    def divide_by(self, denom: "PiecewiseFn") -> "PiecewiseFn":
        """Pointwise quotient; aborts if the denominator dips below the floor."""
        if denom.min_value() < MINORATION_FLOOR:
            raise MinorationError(
                f"denominator minimum {denom.min_value():.3e} below {MINORATION_FLOOR:.0e}")
        return self._binary(denom, lambda a, b: a / b)

    def integral_against(self, other: "PiecewiseFn") -> float:
        """Exact integral of the product self*other."""
        bp = _merge_grids(self.breakpoints, other.breakpoints)
        mids = 0.5 * (bp[:-1] + bp[1:])
        return float(np.dot(self.eval_many(mids) * other.eval_many(mids), np.diff(bp)))


def _merge_grids(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    bp = np.union1d(a, b)
    keep = np.concatenate(([True], np.diff(bp) > MERGE_TOL))
    bp = bp[keep]
    bp[0], bp[-1] = 0.0, 1.0
    return bp


@dataclass(frozen=True)
class GridFn:
    """Per-bin averages on a uniform power-of-two grid (Ulam fallback)."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        bins = len(vals)
        if bins < 2 or bins & (bins - 1):
            raise ValueError("bin count must be a power of two >= 2")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def bins(self) -> int:
        return len(self.values)

    @classmethod
    def constant(cls, c: float, bins: int = DEFAULT_ULAM_BINS) -> "GridFn":
        return cls(np.full(bins, float(c)))

    @classmethod
    def project(cls, f: PiecewiseFn, bins: int = DEFAULT_ULAM_BINS) -> "GridFn":
        """Bin averages of f; preserves the integral exactly."""
        edges = np.linspace(0.0, 1.0, bins + 1)
        grid = np.union1d(edges, f.breakpoints)
        mids = 0.5 * (grid[:-1] + grid[1:])
        masses = f.eval_many(mids) * np.diff(grid)
        idx = np.clip(np.searchsorted(edges, mids, side="right") - 1, 0, bins - 1)
        out = np.zeros(bins)
        np.add.at(out, idx, masses)
        return cls(out * bins)

    def to_piecewise(self) -> PiecewiseFn:
        return PiecewiseFn(np.linspace(0.0, 1.0, self.bins + 1), self.values)

    def integral(self) -> float:
        return float(np.mean(self.values))

    def sup_diff(self, other: "GridFn") -> float:
        return float(np.max(np.abs(self.values - other.values)))


@dataclass(frozen=True)
class DecayEstimate:
    """BV norms of iterated zero-mean pushforwards and the fitted geometric law."""

    rates: tuple[float, ...]
    theta_hat: Optional[float]
    k_hat: Optional[float]
    window: tuple[int, ...]

    @property
    def degenerate(self) -> bool:
        return self.theta_hat is None


@dataclass(frozen=True)
class MinorationReport:
    """Running minimum of the pushforward densities of the constant 1."""

    delta_hat: float
    per_n_minima: tuple[float, ...]
    predicted_delta: Optional[float] = None


@dataclass(frozen=True)
class MartingaleDecomp:
    """Exact decomposition data: S_n = sum U_k + h_n o T_1^n on sampled orbits."""

    h: tuple[PiecewiseFn, ...]
    u_values: np.ndarray
    residual: np.ndarray
    h_sup_norms: tuple[float, ...]


# ---------------------------------------------------------------------------
# operators


def apply_transfer(m: IntervalMap, f: PiecewiseFn,
                   cap: int = BREAKPOINT_CAP) -> PiecewiseFn:
    """Preimage-sum operator action, exact for affine maps.

    Output breakpoints are the branch-image endpoints plus the forward images
    of the input breakpoints; the value on each output cell is the sum over
    inverse branches of f(S_I(x)) / |T'(S_I(x))|.
    """
    if not m.is_affine:
        raise UnsupportedRepresentationError(
            "exact transfer needs affine branches; use apply_transfer_ulam")
    pieces = [np.array([0.0, 1.0])]
    interior = f.breakpoints[1:-1]
    for b in m.branches:
        lo_img, hi_img = b.image()
        pieces.append(np.array([max(lo_img, 0.0), min(hi_img, 1.0)]))
        sel = interior[(interior >= b.lo) & (interior < b.hi)]
        if len(sel):
            pieces.append(np.clip(b.slope * sel + b.intercept, 0.0, 1.0))
    bp = np.unique(np.concatenate(pieces))
    keep = np.concatenate(([True], np.diff(bp) > MERGE_TOL))
    bp = bp[keep]
    bp[0], bp[-1] = 0.0, 1.0
    if len(bp) - 1 > cap:
        raise ResourceLimitError(f"transfer output exceeds the breakpoint cap {cap}")
    mids = 0.5 * (bp[:-1] + bp[1:])
    out = np.zeros(len(mids))
    for b in m.branches:
        lo_img, hi_img = b.image()
        inside = (mids > lo_img) & (mids < hi_img)
        if not np.any(inside):
            continue
        ys = (mids[inside] - b.intercept) / b.slope
        out[inside] += f.eval_many(ys) / abs(b.slope)
    return PiecewiseFn(bp, out)


def _ulam_triplets(m: IntervalMap, bins: int):
    """(target bin, source bin, overlap length) triplets of the Ulam matrix."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    tgt, src, length = [], [], []
    for b in m.branches:
        lo_img, hi_img = b.image()
        i0 = max(int(np.searchsorted(edges, lo_img, side="right")) - 1, 0)
        i1 = min(int(np.searchsorted(edges, hi_img, side="left")), bins)
        if i1 <= i0:
            continue
        cut = np.clip(edges[i0:i1 + 1], lo_img, hi_img)
        if b.is_affine:
            ys = (cut - b.intercept) / b.slope
        else:
            ys = np.array([b.invert(v) for v in cut])
        ys = np.clip(ys, b.lo, b.hi)
        if ys[0] > ys[-1]:
            ys = ys[::-1]
            targets = np.arange(i1 - 1, i0 - 1, -1)
        else:
            targets = np.arange(i0, i1)
        # split each preimage interval [ys[j], ys[j+1]] across source bins
        for j, t in enumerate(targets):
            ylo, yhi = ys[j], ys[j + 1]
            if yhi - ylo <= 0:
                continue
            j0 = max(int(np.searchsorted(edges, ylo, side="right")) - 1, 0)
            j1 = min(int(np.searchsorted(edges, yhi, side="left")), bins)
            for sj in range(j0, j1):
                ov = min(yhi, edges[sj + 1]) - max(ylo, edges[sj])
                if ov > 0:
                    tgt.append(t)
                    src.append(sj)
                    length.append(ov)
    return np.array(tgt), np.array(src), np.array(length)


@lru_cache(maxsize=64)
def _ulam_cached(m: IntervalMap, bins: int):
    return _ulam_triplets(m, bins)


def apply_transfer_ulam(m: IntervalMap, g: GridFn) -> GridFn:
    """Ulam-projected operator action; integral-preserving and positive."""
    tgt, src, length = _ulam_cached(m, g.bins)
    out = np.zeros(g.bins)
    np.add.at(out, tgt, g.values[src] * length)
    return GridFn(out * g.bins)


def bv_norm(f: PiecewiseFn) -> tuple[float, float, float]:
    """(variation, L1 norm, BV norm)."""
    v, l1 = f.variation(), f.l1()
    return v, l1, v + l1


def pushforward_density(seq: MapSequence, n: int,
                        bins: int = DEFAULT_ULAM_BINS) -> PiecewiseFn:
    """P_1^n applied to the constant 1; exact for affine maps, Ulam otherwise."""
    if n < 0:
        raise ValueError("need n >= 0")
    if seq.affine_through(n):
        d = PiecewiseFn.constant(1.0)
        for k in range(1, n + 1):
            d = apply_transfer(seq.map_at(k), d)
        return d
    g = GridFn.constant(1.0, bins)
    for k in range(1, n + 1):
        m = seq.map_at(k)
        if m.is_affine:
            g = GridFn.project(apply_transfer(m, g.to_piecewise()), bins)
        else:
            g = apply_transfer_ulam(m, g)
    return g.to_piecewise()


def minoration_check(seq: MapSequence, horizon: int,
                     with_predicted_delta: bool = False,
                     max_cover_steps: int = 256) -> MinorationReport:
    """min over n <= horizon of the pointwise minimum of P_1^n applied to 1."""
    if horizon < 1:
        raise ValueError("need horizon >= 1")
    minima = [1.0]
    d = PiecewiseFn.constant(1.0)
    for k in range(1, horizon + 1):
        d = apply_transfer(seq.map_at(k), d)
        minima.append(d.min_value())
    predicted = None
    if with_predicted_delta:
        predicted = predicted_minoration(seq, max_cover_steps=max_cover_steps)
    return MinorationReport(delta_hat=float(min(minima)),
                            per_n_minima=tuple(minima),
                            predicted_delta=predicted)


def predicted_minoration(seq: MapSequence, max_cover_steps: int = 256) -> Optional[float]:
    """Conservative lower bound min{C^-N, C^-(r+N)/2} from the covering route.

    r is the smallest block length whose minimal composed expansion exceeds 2;
    the cone parameter a = max{1, C_r/(1-rho_r)} fixes the partition depth n0
    (cells thinner than 1/(2a)), and N = covering horizon for depth-n0 cells.
    Reported for comparison with the measured minimum, never asserted.
    """
    lam = seq.expansion_min
    if lam <= 1.0:
        return None
    r = 1
    while lam ** r <= 2.0 and r < 64:
        r += 1
    if lam ** r <= 2.0:
        return None
    try:
        block = compose_affine_block(seq, 1, r)
    except (ValueError, ResourceLimitError):
        return None
    ly = lasota_yorke_constants(block)
    rho_r, c_r = ly.contraction, ly.additive
    a = max(1.0, c_r / (1.0 - rho_r))
    n0 = max(1, math.ceil(math.log(2.0 * a) / math.log(lam)))
    horizon = covering_horizon(seq, 0, n0, max_steps=max_cover_steps)
    if horizon is None:
        return None
    c_sup = seq.slope_sup
    return min(c_sup ** (-horizon), 0.5 * c_sup ** (-(r + horizon)))


def decay_rate(seq: MapSequence, f0: PiecewiseFn, n_max: int,
               rel_floor: float = 1e-2, abs_floor: float = 1e-300) -> DecayEstimate:
    """BV norms of P_1^n f0 and a least-squares geometric fit.

    The fit window drops the first two steps (transient), norms at the
    absolute floor, and norms below rel_floor times the largest norm; the
    last rule keeps discretization-exhausted staircases from biasing the fit.
    """
    if n_max < 4:
        raise ValueError("need n_max >= 4")
    if abs(f0.integral()) > 1e-12:
        raise ValueError(f"f0 must have zero mean, integral is {f0.integral():.3e}")
    rates = [f0.bv()]
    f = f0
    for k in range(1, n_max + 1):
        f = apply_transfer(seq.map_at(k), f)
        rates.append(f.bv())
    arr = np.array(rates)
    floor = max(abs_floor, rel_floor * float(np.max(arr)))
    window = tuple(n for n in range(2, n_max + 1) if arr[n] >= floor)
    if len(window) < 2:
        return DecayEstimate(tuple(rates), None, None, window)
    ns = np.array(window, dtype=float)
    logs = np.log(arr[list(window)])
    slope, intercept = np.polyfit(ns, logs, 1)
    theta = float(np.exp(slope))
    k_hat = float(np.exp(intercept) / rates[0]) if rates[0] > 0 else None
    if not (0.0 < theta <= 1.0):
        return DecayEstimate(tuple(rates), None, None, window)
    return DecayEstimate(tuple(rates), theta, k_hat, window)


def correlation(seq: MapSequence, f: PiecewiseFn, g: PiecewiseFn,
                j: int, l: int) -> float:
    """E[(f o T_1^j)(g o T_1^l)] under Lebesgue via the operator identity
    integral of g * P_{j+1}^l(f * P_1^j 1)."""
    if j > l or j < 0:
        raise ValueError("need 0 <= j <= l")
    w = f * pushforward_density(seq, j)
    for k in range(j + 1, l + 1):
        w = apply_transfer(seq.map_at(k), w)
    return g.integral_against(w)


def ergodic_sum_variance(seq: MapSequence, f: PiecewiseFn, n: int,
                         tail_floor: float = 1e-14) -> float:
    """Var(S_n) = sum over j,k < n of Cov(f o T_1^j, f o T_1^k).

    Covariances are propagated with zero-mean sources, so the inner loop can
    stop once the BV norm falls below tail_floor relative to f.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    densities = [PiecewiseFn.constant(1.0)]
    for k in range(1, n):
        densities.append(apply_transfer(seq.map_at(k), densities[-1]))
    mus = [f.integral_against(d) for d in densities]
    floor = tail_floor * max(f.bv(), 1.0)
    total = 0.0
    for j in range(n):
        centered = (f - mus[j]) * densities[j]
        total += (f - mus[j]).integral_against(centered)  # the j == l term
        w = centered
        for l in range(j + 1, n):
            w = apply_transfer(seq.map_at(l), w)
            if w.bv() < floor:
                break
            total += 2.0 * f.integral_against(w)
    return total


def martingale_decomposition(seq: MapSequence, f: PiecewiseFn, n: int,
                             orbit_samples: Sequence[float]) -> MartingaleDecomp:
    """Build h_k and the reversed-martingale increments U_k, then verify
    S_n = sum_k U_k + h_n o T_1^n on each sampled orbit.

    h evolves by h_{k+1} = Q_{k+1}(f_k + h_k) with Q_k g = P_k(g P_1^{k-1} 1)/P_1^k 1
    and f_k = f - integral(f o T_1^k); the identity telescopes exactly.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    densities = [PiecewiseFn.constant(1.0)]
    for k in range(1, n + 1):
        densities.append(apply_transfer(seq.map_at(k), densities[-1]))
    if min(d.min_value() for d in densities) < 1e-6:
        raise MinorationError("pushforward density fell below 1e-6 on the horizon")
    mus = [f.integral_against(d) for d in densities[:n]]
    hs = [PiecewiseFn.constant(0.0)]
    for k in range(n):
        f_k = f - mus[k]
        src = (f_k + hs[k]) * densities[k]
        hs.append(apply_transfer(seq.map_at(k + 1), src).divide_by(densities[k + 1]))
    samples = np.asarray(list(orbit_samples), dtype=float)
    m_orbits = len(samples)
    u_values = np.empty((m_orbits, n))
    residual = np.empty(m_orbits)
    for i, x0 in enumerate(samples):
        pts = np.empty(n + 1)
        pts[0] = x0
        for k in range(1, n + 1):
            pts[k] = eval_map(seq.map_at(k), pts[k - 1])
        s_n = 0.0
        for k in range(n):
            fk_val = f(pts[k]) - mus[k]
            s_n += fk_val
            u_values[i, k] = fk_val + hs[k](pts[k]) - hs[k + 1](pts[k + 1])
        residual[i] = abs(s_n - (u_values[i].sum() + hs[n](pts[n])))
    return MartingaleDecomp(h=tuple(hs), u_values=u_values, residual=residual,
                            h_sup_norms=tuple(h.sup() for h in hs))


def conditional_expectation_kp(seq: MapSequence, K, p: int, x_p: float,
                               preimage_cap: int = 1 << 20) -> float:
    """Conditional expectation of K given the orbit position at time p:

        sum over T_1^p y = x_p of K(y, T_1 y, ..., T_1^{p-1} y, x_p, ...)
            / |(T_1^p)'(y)|, normalized by P_1^p 1(x_p).

    K needs an `arity` attribute and is called with a coordinate tuple;
    coordinates at or beyond p follow the forward orbit of x_p.  Preimages
    are enumerated by recursive branch expansion.
    """
    if p < 1:
        raise ValueError("need p >= 1")
    if not (0.0 <= x_p < 1.0):
        raise ValueError(f"point {x_p} outside [0,1)")
    arity = int(getattr(K, "arity", p))
    states = [(x_p, 1.0, ())]  # (point, |block derivative|, orbit suffix)
    for k in range(p, 0, -1):
        m = seq.map_at(k)
        nxt = []
        for point, deriv, suffix in states:
            for y, dy in preimages(m, point):
                nxt.append((y, deriv * dy, (y,) + suffix))
        states = nxt
        if len(states) > preimage_cap:
            raise ResourceLimitError(f"preimage count exceeds the cap {preimage_cap}")
    forward = [x_p]
    for i in range(p + 1, arity):
        forward.append(eval_map(seq.map_at(i), forward[-1]))
    denom = sum(1.0 / d for _, d, _ in states)
    if denom < MINORATION_FLOOR:
        raise MinorationError(f"P_1^p 1(x_p) = {denom:.3e} below {MINORATION_FLOOR:.0e}")
    total = 0.0
    for _, deriv, suffix in states:
        coords = (suffix + tuple(forward))[:arity]
        total += float(K(coords)) / deriv
    return total / denom
