"""Seeded Monte-Carlo verification of concentration-style tail bounds.

Orbit ensembles are deterministic functions of (seed, n, m_samples): initial
points come from a counter-based Philox stream, so any slicing of the orbit
index range across workers reproduces the same aggregate.  Centering means
always use the operator route, never Monte-Carlo, to avoid doubling the noise.

Long orbit streams are dithered: float64 orbits of integer-beta maps drain one
mantissa bit per step (the doubling map reaches exactly 0 within ~53 steps),
so every streaming estimator re-injects a deterministic sub-ulp perturbation,
a pure function of (seed, step, orbit index).  For a uniform real start this
reproduces the conditional law of the true process at float resolution.
sample_orbits stays undithered: short ensembles are exact float dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .maps import MapSequence, ONE_BELOW
from .transfer import PiecewiseFn, apply_transfer, pushforward_density

CENTERING_PROXY_CELLS = 1 << 14
OBSERVABLE_PROBES = 24
MGF_MIN_EFFECTIVE_SAMPLES = 10.0


def normal_cdf(t):
    """Standard normal distribution function."""
    arr = np.asarray(t, dtype=float)
    out = 0.5 * (1.0 + np.vectorize(math.erf)(arr / math.sqrt(2.0)))
    return float(out) if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class Observable:
    """A separately Lipschitz functional of finitely many orbit coordinates.

    `evaluator` maps an (m, arity) array of coordinate rows to m values.
    Declared per-coordinate Lipschitz constants are spot-checked on random
    probe pairs at construction; a declared 0 with a coordinate the evaluator
    actually uses is rejected.
    """

    arity: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    lip: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lip", tuple(float(v) for v in self.lip))
        if self.arity < 1 or len(self.lip) != self.arity:
            raise ValueError("need arity >= 1 and one Lipschitz constant per coordinate")
        if any(v < 0 for v in self.lip):
            raise ValueError("Lipschitz constants must be nonnegative")
        self._spot_check()

    def _spot_check(self):
        rng = np.random.Generator(np.random.Philox(key=0x0B5E7CAB1E))
        base = rng.random((OBSERVABLE_PROBES, self.arity))
        vals = np.asarray(self.evaluator(base), dtype=float)
        for j in range(self.arity):
            probe = base.copy()
            delta = 0.25 * (2.0 * rng.random(OBSERVABLE_PROBES) - 1.0)
            probe[:, j] = np.clip(probe[:, j] + delta, 0.0, ONE_BELOW)
            moved = np.asarray(self.evaluator(probe), dtype=float)
            gap = np.abs(moved - vals) - self.lip[j] * np.abs(probe[:, j] - base[:, j])
            if np.any(gap > 1e-9):
                raise ValueError(
                    f"evaluator moves faster than declared Lip_{j} = {self.lip[j]}")

    def __call__(self, coords: Sequence[float]) -> float:
        row = np.asarray(coords, dtype=float).reshape(1, self.arity)
        return float(np.asarray(self.evaluator(row))[0])

    def evaluate_rows(self, rows: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluator(rows), dtype=float)

    def lip_sq_sum(self) -> float:
        return float(sum(v * v for v in self.lip))

    @classmethod
    def constant(cls, c: float, arity: int) -> "Observable":
        return cls(arity, lambda rows: np.full(len(rows), float(c)), (0.0,) * arity)

    @classmethod
    def coordinate(cls, index: int, arity: int) -> "Observable":
        lip = [0.0] * arity
        lip[index] = 1.0
        return cls(arity, lambda rows: rows[:, index].astype(float), tuple(lip))

    @classmethod
    def ergodic_mean(cls, arity: int, fn: Callable = None, lip_fn: float = 1.0) -> "Observable":
        """(1/n) sum_k fn(x_k) with fn 1-Lipschitz by default (identity)."""
        if fn is None:
            fn = lambda x: x
        return cls(arity, lambda rows: np.mean(fn(rows), axis=1),
                   (lip_fn / arity,) * arity)


@dataclass(frozen=True)
class OrbitEnsemble:
    """m_samples orbits of length n from uniform starts, keyed by a seed."""

    seed: int
    n: int
    m_samples: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.shape != (self.m_samples, self.n):
            raise ValueError("points must have shape (m_samples, n)")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class TailReport:
    """Empirical exceedance probabilities and the conservative Gaussian exponent.

    bound_exponent_fit is the largest c with prob(t) <= exp(-c * scale * t^2)
    across all informative thresholds, so the fitted curve upper-bounds every
    empirical point by construction; it is None if no threshold is informative.
    """

    thresholds: tuple[float, ...]
    empirical_probs: tuple[float, ...]
    bound_exponent_fit: Optional[float]
    sample_count: int
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class AscltReport:
    """Logarithmically weighted single-orbit CDF against the standard normal."""

    n: int
    weights: np.ndarray
    grid: np.ndarray
    empirical_cdf: np.ndarray
    ks_distance: float
    variance_slope: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ConcentrationReport:
    """Empirical moment generating function scan across a lambda list."""

    lambdas: tuple[float, ...]
    log_mgf: tuple[float, ...]
    c_per_lambda: tuple[float, ...]
    effective_samples: tuple[float, ...]
    c_hat: float
    sample_count: int
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class EmpiricalMeasureReport:
    """Kantorovich distances between orbit empirical measures and the
    averaged pushforward of Lebesgue."""

    tail: TailReport
    mean_kappa: float
    se_kappa: float


# ---------------------------------------------------------------------------
# orbit machinery


def initial_points(seed: int, m_samples: int) -> np.ndarray:
    """Uniform starts; entry i is a pure function of (seed, i)."""
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    return np.minimum(gen.random(m_samples), ONE_BELOW)


_DITHER_UNIT = 2.0 ** -52
_MIX1 = np.uint64(0x9E3779B97F4A7C15)
_MIX2 = np.uint64(0xBF58476D1CE4E5B9)
_MIX3 = np.uint64(0x94D049BB133111EB)
_STEP_SALT = np.uint64(0xD1342543DE82EF95)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = z + _MIX1
    z = (z ^ (z >> np.uint64(30))) * _MIX2
    z = (z ^ (z >> np.uint64(27))) * _MIX3
    return z ^ (z >> np.uint64(31))


def _dither(seed: int, step: int, idx: np.ndarray) -> np.ndarray:
    """Uniform [0,1) values, a stateless hash of (seed, step, orbit index)."""
    mask = 0xFFFFFFFFFFFFFFFF
    base = ((int(seed) & mask) * 0x94D049BB133111EB + int(step) * 0xD1342543DE82EF95) & mask
    z = idx.astype(np.uint64) * _MIX1 + np.uint64(base)
    return (_mix64(z) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def _evolve(seq: MapSequence, k: int, xs: np.ndarray, seed: int,
            idx: np.ndarray) -> np.ndarray:
    """One map step for a Monte-Carlo stream, with the sub-ulp refresh."""
    ys = seq.map_at(k).eval_many(xs)
    return np.minimum(ys + _dither(seed, k, idx) * _DITHER_UNIT, ONE_BELOW)


def sample_orbits(seq: MapSequence, n: int, m_samples: int, seed: int) -> OrbitEnsemble:
    """Columns k = 0..n-1 hold T_1^k applied to the uniform starts."""
    if n < 1 or m_samples < 1:
        raise ValueError("need n >= 1 and m_samples >= 1")
    pts = np.empty((m_samples, n))
    cur = initial_points(seed, m_samples)
    pts[:, 0] = cur
    for k in range(1, n):
        cur = seq.map_at(k).eval_many(cur)
        pts[:, k] = cur
    return OrbitEnsemble(seed=seed, n=n, m_samples=m_samples, points=pts)


def operator_means(seq: MapSequence, f: Callable, n: int,
                   cells: int = CENTERING_PROXY_CELLS) -> np.ndarray:
    """integral of f o T_1^k dm for k < n via pushforward densities.

    The observable is replaced by a fine midpoint staircase, so the bias is
    O(Lip(f)/cells), far below desk-scale Monte-Carlo noise.
    """
    proxy = f if isinstance(f, PiecewiseFn) else PiecewiseFn.step_proxy(f, cells)
    out = np.empty(n)
    d = PiecewiseFn.constant(1.0)
    out[0] = proxy.integral()
    for k in range(1, n):
        d = apply_transfer(seq.map_at(k), d)
        out[k] = proxy.integral_against(d)
    return out


def _conservative_exponent(thresholds, probs, scale: float) -> Optional[float]:
    """Largest c with p(t) <= exp(-c*scale*t^2) over the informative points."""
    ratios = [-math.log(p) / (scale * t * t)
              for t, p in zip(thresholds, probs) if p > 0.0 and t > 0.0]
    if not ratios:
        return None
    return min(ratios)


def ld_tail(seq: MapSequence, f: Callable, lip: float, n: int,
            t_list: Sequence[float], m_samples: int, seed: int) -> TailReport:
    """Empirical tail of the centered ergodic average (1/n) sum [f o T_1^k - mean].

    Means come from the operator route; the fitted exponent c is the largest
    one keeping every informative empirical point below exp(-c n t^2).
    """
    if n < 1:
        raise ValueError("need n >= 1")
    mus = operator_means(seq, f, n)
    cur = initial_points(seed, m_samples)
    idx = np.arange(m_samples)
    sums = np.zeros(m_samples)
    for k in range(n):
        if k > 0:
            cur = _evolve(seq, k, cur, seed, idx)
        sums += f(cur) - mus[k]
    avg = sums / n
    thresholds = tuple(float(t) for t in t_list)
    probs = tuple(float(np.mean(avg > t)) for t in thresholds)
    c_fit = _conservative_exponent(thresholds, probs, scale=float(n))
    warnings = ()
    if c_fit is None:
        warnings = ("no informative threshold for the exponent fit",)
    return TailReport(thresholds=thresholds, empirical_probs=probs,
                      bound_exponent_fit=c_fit, sample_count=m_samples,
                      warnings=warnings)


# ---------------------------------------------------------------------------
# Kantorovich machinery


@dataclass(frozen=True)
class Cdf:
    """A distribution function on [0,1]: step (atoms) or piecewise linear.

    Knots are sorted with 0 and 1 included; `values[i]` is F(knots[i]).  A
    step CDF is right-continuous and constant between knots.
    """

    knots: np.ndarray
    values: np.ndarray
    kind: str = "step"

    def __post_init__(self):
        kn = np.ascontiguousarray(self.knots, dtype=float)
        vals = np.ascontiguousarray(self.values, dtype=float)
        if self.kind not in ("step", "linear"):
            raise ValueError("kind must be 'step' or 'linear'")
        if len(kn) != len(vals) or len(kn) < 2:
            raise ValueError("need matching knots/values with at least two knots")
        if kn[0] != 0.0 or kn[-1] != 1.0 or np.any(np.diff(kn) < 0):
            raise ValueError("knots must be sorted with endpoints 0 and 1")
        if np.any(np.diff(vals) < -1e-12) or vals[0] < -1e-12 or abs(vals[-1] - 1.0) > 1e-9:
            raise ValueError("distribution function must rise from >= 0 to 1")
        kn.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "knots", kn)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_atoms(cls, points: Sequence[float], weights: Optional[Sequence[float]] = None) -> "Cdf":
        pts = np.sort(np.asarray(points, dtype=float))
        if len(pts) == 0 or pts[0] < 0.0 or pts[-1] > 1.0:
            raise ValueError("atoms must lie in [0,1]")
        w = (np.full(len(pts), 1.0 / len(pts)) if weights is None
             else np.asarray(weights, dtype=float)[np.argsort(np.asarray(points, dtype=float))])
        kn = np.concatenate(([0.0], pts, [1.0]))
        vals = np.concatenate(([0.0], np.cumsum(w), [1.0]))
        if pts[0] == 0.0:
            kn, vals = kn[1:], vals[1:]
        vals[-1] = 1.0
        return cls(knots=kn, values=vals, kind="step")

    @classmethod
    def point_mass(cls, x: float) -> "Cdf":
        return cls.from_atoms([x])

    @classmethod
    def from_density(cls, f: PiecewiseFn) -> "Cdf":
        masses = f.values * f.widths()
        vals = np.concatenate(([0.0], np.cumsum(masses)))
        if abs(vals[-1] - 1.0) > 1e-9:
            raise ValueError(f"density mass {vals[-1]} is not 1")
        vals[-1] = 1.0
        return cls(knots=f.breakpoints.copy(), values=vals, kind="linear")

    @classmethod
    def uniform(cls) -> "Cdf":
        return cls(knots=np.array([0.0, 1.0]), values=np.array([0.0, 1.0]), kind="linear")

    def pair_on_grid(self, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(left values, right values) of F on each grid segment."""
        if self.kind == "linear":
            v = np.interp(grid, self.knots, self.values)
            return v[:-1], v[1:]
        idx = np.clip(np.searchsorted(self.knots, grid[:-1], side="right") - 1,
                      0, len(self.values) - 1)
        v = self.values[idx]
        return v, v


def kantorovich(cdf1: Cdf, cdf2: Cdf) -> float:
    """Exact integral over [0,1] of |F1 - F2| by merged-knot piecewise integration."""
    grid = np.union1d(cdf1.knots, cdf2.knots)
    a0, a1 = cdf1.pair_on_grid(grid)
    b0, b1 = cdf2.pair_on_grid(grid)
    return float(np.sum(_abs_linear_integral(a0 - b0, a1 - b1, np.diff(grid))))


def _abs_linear_integral(d0: np.ndarray, d1: np.ndarray, widths: np.ndarray) -> np.ndarray:
    """Per-segment integral of |linear function| with endpoint values d0, d1."""
    same_sign = d0 * d1 >= 0.0
    out = np.where(same_sign, 0.5 * (np.abs(d0) + np.abs(d1)) * widths, 0.0)
    cross = ~same_sign
    if np.any(cross):
        den = np.abs(d0[cross]) + np.abs(d1[cross])
        out[cross] = 0.5 * widths[cross] * (d0[cross] ** 2 + d1[cross] ** 2) / den
    return out


def _averaged_density(seq: MapSequence, n: int) -> PiecewiseFn:
    """(1/n) sum_{k<n} P_1^k applied to 1."""
    d = PiecewiseFn.constant(1.0)
    acc = d
    for k in range(1, n):
        d = apply_transfer(seq.map_at(k), d)
        acc = acc + d
    return acc * (1.0 / n)


def _kappa_against_linear(sorted_pts: np.ndarray, knots: np.ndarray,
                          knot_vals: np.ndarray) -> float:
    """Kantorovich distance between the empirical measure of sorted points and
    a piecewise-linear CDF given by (knots, knot_vals)."""
    n = len(sorted_pts)
    grid = np.union1d(np.concatenate((sorted_pts, [0.0, 1.0])), knots)
    g = np.interp(grid, knots, knot_vals)
    emp = np.searchsorted(sorted_pts, grid[:-1], side="right") / n
    return float(np.sum(_abs_linear_integral(emp - g[:-1], emp - g[1:], np.diff(grid))))


def empirical_measure_tail(seq: MapSequence, n: int, m_samples: int,
                           t_list: Sequence[float], seed: int,
                           shard: int = 1024) -> EmpiricalMeasureReport:
    """Per-orbit Kantorovich distance to the averaged pushforward measure.

    Reports the sample mean and the tail probabilities at t/sqrt(n); the
    exponent is fitted only on thresholds t >= 1 (small-t behaviour is not
    covered by the Gaussian bound), which the report flags.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    dbar = _averaged_density(seq, n)
    masses = dbar.values * dbar.widths()
    knots = dbar.breakpoints
    knot_vals = np.concatenate(([0.0], np.cumsum(masses)))
    knot_vals[-1] = 1.0
    kappas = np.empty(m_samples)
    starts = initial_points(seed, m_samples)
    done = 0
    while done < m_samples:
        count = min(shard, m_samples - done)
        cur = starts[done:done + count]
        idx = np.arange(done, done + count)
        block = np.empty((count, n))
        block[:, 0] = cur
        for k in range(1, n):
            cur = _evolve(seq, k, cur, seed, idx)
            block[:, k] = cur
        block.sort(axis=1)
        for i in range(count):
            kappas[done + i] = _kappa_against_linear(block[i], knots, knot_vals)
        done += count
    mean_k = float(np.mean(kappas))
    se_k = float(np.std(kappas) / math.sqrt(m_samples))
    thresholds = tuple(float(t) for t in t_list)
    probs = tuple(float(np.mean(kappas > t / math.sqrt(n))) for t in thresholds)
    informative = [(t, p) for t, p in zip(thresholds, probs) if t >= 1.0]
    c_fit = _conservative_exponent([t for t, _ in informative],
                                   [p for _, p in informative], scale=1.0)
    warnings = ("exponent fitted on thresholds t >= 1 only",)
    if c_fit is None:
        warnings += ("no informative threshold at t >= 1",)
    tail = TailReport(thresholds=thresholds, empirical_probs=probs,
                      bound_exponent_fit=c_fit, sample_count=m_samples,
                      warnings=warnings)
    return EmpiricalMeasureReport(tail=tail, mean_kappa=mean_k, se_kappa=se_k)


# ---------------------------------------------------------------------------
# shadowing


def _bit_reversed_fractions(count: int) -> np.ndarray:
    """First `count` points of the base-2 van der Corput sequence.

    Prefixes are nested, so a finer candidate set contains every coarser one
    and the reported infimum never increases with the count.
    """
    out = np.empty(count)
    for i in range(count):
        u, denom, x = i, 2.0, 0.0
        while u:
            x += (u & 1) / denom
            u >>= 1
            denom *= 2.0
        out[i] = x
    return out


def shadowing_stat(seq: MapSequence, a_set: Sequence[tuple[float, float]], n: int,
                   x: float, candidate_grid: int) -> float:
    """Upper bound on inf over y in A of (1/n) sum |T_1^k x - T_1^k y|.

    The infimum is taken over a nested dyadic candidate set in A (plus x
    itself when x lies in A, making the zero of the true infimum exact).
    Orbits here are the exact float dynamics, undithered, so candidate and
    reference orbits cancel exactly; keep n below ~45 for integer betas.
    """
    intervals = [(float(lo), float(hi)) for lo, hi in a_set]
    total = sum(hi - lo for lo, hi in intervals)
    if not intervals or total <= 0.0:
        raise ValueError("the target set must have positive measure")
    if candidate_grid < 1 or n < 1:
        raise ValueError("need candidate_grid >= 1 and n >= 1")
    u = _bit_reversed_fractions(candidate_grid) * total
    bounds = np.cumsum([hi - lo for lo, hi in intervals])
    idx = np.searchsorted(bounds, u, side="right")
    lows = np.array([lo for lo, _ in intervals])
    offs = np.concatenate(([0.0], bounds[:-1]))
    ys = np.minimum(lows[idx] + (u - offs[idx]), ONE_BELOW)
    if any(lo <= x < hi for lo, hi in intervals):
        ys = np.append(ys, x)
    pts = np.concatenate(([x], ys))
    acc = np.zeros(len(ys))
    for k in range(n):
        if k > 0:
            pts = seq.map_at(k).eval_many(pts)
        acc += np.abs(pts[1:] - pts[0])
    return float(np.min(acc) / n)


# ---------------------------------------------------------------------------
# almost sure central limit behaviour


def _variance_curve_operator(seq: MapSequence, f: PiecewiseFn, n: int,
                             tail_floor: float = 1e-13) -> np.ndarray:
    """Var(S_k) for k = 1..n by accumulating centered operator covariances.

    Constant sequences are stationary, so lagged covariances are cached once;
    otherwise each start index propagates until its BV norm hits the floor.
    """
    densities = [PiecewiseFn.constant(1.0)]
    for k in range(1, n):
        densities.append(apply_transfer(seq.map_at(k), densities[-1]))
    mus = [f.integral_against(d) for d in densities]
    floor = tail_floor * max(f.bv(), 1.0)
    if seq.is_constant:
        # stationary case: Var(S_k) = k*gamma_0 + 2 sum_{m<k} (k-m) gamma_m
        m = seq.map_at(1)
        centered = (f - mus[0]) * densities[0]
        gammas = [(f - mus[0]).integral_against(centered)]
        w = centered
        while len(gammas) <= n:
            w = apply_transfer(m, w)
            if w.bv() < floor:
                break
            gammas.append(f.integral_against(w))
        gam = np.array(gammas)
        var = np.empty(n)
        for k in range(1, n + 1):
            m_max = min(k - 1, len(gam) - 1)
            ms = np.arange(1, m_max + 1)
            var[k - 1] = k * gam[0] + 2.0 * float(np.sum((k - ms) * gam[1:m_max + 1]))
        return var
    var = np.zeros(n)
    cross = np.zeros(n)  # cross[l] = sum_{j<l} Cov(j, l)
    for j in range(n):
        centered = (f - mus[j]) * densities[j]
        var[j] = (f - mus[j]).integral_against(centered)
        w = centered
        for l in range(j + 1, n):
            w = apply_transfer(seq.map_at(l), w)
            if w.bv() < floor:
                break
            cross[l] += f.integral_against(w)
    out = np.empty(n)
    run = 0.0
    for k in range(n):
        run += var[k] + 2.0 * cross[k]
        out[k] = run
    return out


def _variance_curve_montecarlo(seq: MapSequence, f: PiecewiseFn, n: int,
                               m_samples: int = 4096, seed: int = 0xA5C17) -> np.ndarray:
    mus = operator_means(seq, f, n)
    cur = initial_points(seed, m_samples)
    idx = np.arange(m_samples)
    sums = np.zeros(m_samples)
    out = np.empty(n)
    for k in range(n):
        if k > 0:
            cur = _evolve(seq, k, cur, seed, idx)
        sums += f.eval_many(cur) - mus[k]
        out[k] = np.var(sums)
    return out


def asclt_report(seq: MapSequence, f: PiecewiseFn, n: int, x: float,
                 sigma_route: str = "operator",
                 grid: Optional[np.ndarray] = None) -> AscltReport:
    """Log-weighted empirical CDF of S_k/||S_k||_2 along one orbit vs normal.

    Requires Var(S_k) >= c*k for a positive fitted c; a failure is flagged in
    the report rather than silently producing unnormalizable values.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if sigma_route not in ("operator", "montecarlo"):
        raise ValueError("sigma_route must be 'operator' or 'montecarlo'")
    variances = (_variance_curve_operator(seq, f, n) if sigma_route == "operator"
                 else _variance_curve_montecarlo(seq, f, n))
    ks = np.arange(1, n + 1)
    tail = variances[min(7, n - 1):] / ks[min(7, n - 1):]
    growth = float(np.min(tail))
    flags: tuple[str, ...] = ()
    if n < 10:
        flags += ("low-n",)
    if growth <= 1e-12:
        flags += ("hypothesis-failure",)
    grid = np.linspace(-4.0, 4.0, 161) if grid is None else np.asarray(grid, dtype=float)
    weights = (1.0 / ks) / np.sum(1.0 / ks)
    if "hypothesis-failure" in flags:
        return AscltReport(n=n, weights=weights, grid=grid,
                           empirical_cdf=np.zeros_like(grid), ks_distance=1.0,
                           variance_slope=growth, flags=flags)
    mus = operator_means(seq, f, n)
    pts = np.empty(n)
    orbit_seed = int(np.float64(x).view(np.uint64)) ^ 0xA5C17
    cur = np.array([x])
    idx0 = np.arange(1)
    for k in range(n):
        if k > 0:
            cur = _evolve(seq, k, cur, orbit_seed, idx0)
        pts[k] = cur[0]
    sums = np.cumsum(f.eval_many(pts) - mus)
    normalized = sums / np.sqrt(variances)
    order = np.argsort(normalized)
    sorted_vals = normalized[order]
    cum_w = np.cumsum(weights[order])
    idx = np.searchsorted(sorted_vals, grid, side="right")
    emp = np.concatenate(([0.0], cum_w))[idx]
    ks_dist = float(np.max(np.abs(emp - normal_cdf(grid))))
    return AscltReport(n=n, weights=weights, grid=grid, empirical_cdf=emp,
                       ks_distance=ks_dist, variance_slope=growth, flags=flags)


def conditional_expectation_mc(seq: MapSequence, K: Observable, p: int, x_p: float,
                               bin_eps: float, m_samples: int,
                               seed: int) -> tuple[float, float, int]:
    """Binned Monte-Carlo oracle for the operator conditional expectation:
    average of K over uniform starts whose orbit lands within bin_eps/2 of
    x_p at time p.  Returns (estimate, standard error, hit count)."""
    if p < 1 or bin_eps <= 0.0:
        raise ValueError("need p >= 1 and bin_eps > 0")
    depth = max(K.arity, p + 1)
    cur = initial_points(seed, m_samples)
    rows = np.empty((m_samples, depth))
    rows[:, 0] = cur
    for k in range(1, depth):
        cur = seq.map_at(k).eval_many(cur)
        rows[:, k] = cur
    sel = np.abs(rows[:, p] - x_p) <= 0.5 * bin_eps
    hits = int(np.count_nonzero(sel))
    if hits < 2:
        raise ValueError(f"only {hits} samples fell in the conditioning bin")
    vals = K.evaluate_rows(rows[sel][:, :K.arity])
    return float(np.mean(vals)), float(np.std(vals) / math.sqrt(hits)), hits


# ---------------------------------------------------------------------------
# concentration


def concentration_mgf(seq: MapSequence, K: Observable, lambda_list: Sequence[float],
                      m_samples: int, seed: int, shard: int = 4096) -> ConcentrationReport:
    """Empirical E[exp(lambda(K - mean K))] scan and the implied constant.

    c_hat = max over stable lambdas of log MGF / (lambda^2 sum Lip_j^2);
    lambdas whose effective sample size drops below 10 get a warning and are
    excluded from c_hat.  A constant K (all Lipschitz constants zero) has
    MGF identically 1 and c_hat 0; the construction-time spot check already
    rejects zero declarations on evaluators that actually move.
    """
    lip_sq = K.lip_sq_sum()
    n = K.arity
    values = np.empty(m_samples)
    done = 0
    starts = initial_points(seed, m_samples)
    while done < m_samples:
        count = min(shard, m_samples - done)
        cur = starts[done:done + count]
        idx = np.arange(done, done + count)
        rows = np.empty((count, n))
        rows[:, 0] = cur
        for k in range(1, n):
            cur = _evolve(seq, k, cur, seed, idx)
            rows[:, k] = cur
        values[done:done + count] = K.evaluate_rows(rows)
        done += count
    centered = values - float(np.mean(values))
    lambdas = tuple(float(v) for v in lambda_list)
    log_mgf, c_per, ess_list, warnings = [], [], [], []
    stable = []
    for lam in lambdas:
        z = lam * centered
        zmax = float(np.max(z))
        w = np.exp(z - zmax)
        log_m = zmax + math.log(float(np.mean(w)))
        ess = float(np.sum(w)) ** 2 / float(np.sum(w * w))
        log_mgf.append(log_m)
        ess_list.append(ess)
        c_val = log_m / (lam * lam * lip_sq) if lam != 0 and lip_sq > 0 else 0.0
        c_per.append(c_val)
        if ess < MGF_MIN_EFFECTIVE_SAMPLES:
            warnings.append(f"lambda={lam:g}: effective sample size {ess:.1f} < 10, excluded")
        else:
            stable.append(c_val)
    c_hat = max(stable) if stable else float("nan")
    if not stable:
        warnings.append("no lambda had a stable MGF estimate")
    return ConcentrationReport(lambdas=lambdas, log_mgf=tuple(log_mgf),
                               c_per_lambda=tuple(c_per),
                               effective_samples=tuple(ess_list),
                               c_hat=c_hat, sample_count=m_samples,
                               warnings=tuple(warnings))
