"""Piecewise expanding maps of [0,1), their sequences and compositions.

Maps act on the half-open interval [0,1): every branch domain is [a,b) and
beta*x mod 1 is single-valued at breakpoints.  All types are immutable after
construction and every operation is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ResourceLimitError

ONE_BELOW = math.nextafter(1.0, 0.0)

# Breakpoints closer than this are merged during partition refinement.
MERGE_TOL = 1e-12
# Default cap on breakpoints per partition; exceeding it is an error, never
# silent truncation.
BREAKPOINT_CAP = 1 << 20
# Image unions in the covering check may not fragment beyond this.
FRAGMENT_CAP = 1 << 14
# An image union covers [0,1] if the uncovered gaps total less than this.
COVER_GAP_TOL = 1e-9


@dataclass(frozen=True)
class Branch:
    """One monotone branch of a piecewise expanding map.

    Affine branches carry (slope, intercept) and are exact.  Smooth branches
    carry value/derivative callables (vectorized over numpy arrays) together
    with user-supplied certified bounds: expansion >= lam > 1 and
    sup|T''| <= second_bound on the branch domain.
    """

    lo: float
    hi: float
    slope: float = 0.0
    intercept: float = 0.0
    fn: Optional[Callable] = None
    deriv: Optional[Callable] = None
    lam: Optional[float] = None
    second_bound: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi <= 1.0):
            raise ValueError(f"branch domain [{self.lo}, {self.hi}) not inside [0,1)")
        if self.is_affine:
            if abs(self.slope) <= 1.0:
                raise ValueError(f"branch slope {self.slope} is not expanding")
        else:
            if self.deriv is None:
                raise ValueError("smooth branch needs a derivative callable")
            if self.lam is None or self.lam <= 1.0:
                raise ValueError("smooth branch needs a certified expansion bound lam > 1")
            if self.second_bound is None or self.second_bound < 0.0:
                raise ValueError("smooth branch needs a certified bound on |T''|")
        a, b = self.image()
        if a < -1e-9 or b > 1.0 + 1e-9:
            raise ValueError(f"branch image [{a}, {b}] leaves [0,1]")

    @property
    def is_affine(self) -> bool:
        return self.fn is None

    @property
    def expansion(self) -> float:
        """Certified inf |T'| over the branch domain."""
        return abs(self.slope) if self.is_affine else float(self.lam)

    @property
    def curvature(self) -> float:
        """Certified sup |T''| over the branch domain (0 for affine)."""
        return 0.0 if self.is_affine else float(self.second_bound)

    def __call__(self, x):
        if self.is_affine:
            return self.slope * x + self.intercept
        return self.fn(x)

    def derivative(self, x):
        if self.is_affine:
            return self.slope * np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else self.slope
        return self.deriv(x)

    def image(self) -> tuple[float, float]:
        """Closed hull of the branch image (branches extend continuously to [lo,hi])."""
        va = float(self(self.lo))
        vb = float(self(self.hi))
        return (va, vb) if va <= vb else (vb, va)

    def invert(self, y: float) -> float:
        """Solve T(x) = y on [lo, hi]; caller guarantees y is in the image hull."""
        if self.is_affine:
            return (y - self.intercept) / self.slope
        increasing = self(self.lo) <= self(self.hi)
        a, b = self.lo, self.hi
        for _ in range(80):
            mid = 0.5 * (a + b)
            v = float(self(mid))
            if (v < y) == increasing:
                a = mid
            else:
                b = mid
        # Newton polish inside the bracket
        x = 0.5 * (a + b)
        for _ in range(4):
            d = float(self.deriv(x))
            if d == 0.0:
                break
            x = min(max(x - (float(self(x)) - y) / d, self.lo), self.hi)
        return x


@dataclass(frozen=True)
class IntervalMap:
    """A piecewise monotone expanding map whose branch domains partition [0,1)."""

    branches: tuple[Branch, ...]
    label: str = ""

    def __post_init__(self):
        if not self.branches:
            raise ValueError("map needs at least one branch")
        if abs(self.branches[0].lo) > MERGE_TOL:
            raise ValueError("first branch must start at 0")
        if abs(self.branches[-1].hi - 1.0) > MERGE_TOL:
            raise ValueError("last branch must end at 1")
        for left, right in zip(self.branches, self.branches[1:]):
            if abs(left.hi - right.lo) > MERGE_TOL:
                raise ValueError("branch domains must tile [0,1) without gaps")
        # searchsorted helpers; hidden caches do not break value semantics
        starts = np.array([b.lo for b in self.branches])
        object.__setattr__(self, "_starts", starts)
        if self.is_affine:
            object.__setattr__(self, "_slopes", np.array([b.slope for b in self.branches]))
            object.__setattr__(self, "_intercepts", np.array([b.intercept for b in self.branches]))

    @property
    def is_affine(self) -> bool:
        return all(b.is_affine for b in self.branches)

    @property
    def expansion(self) -> float:
        """lambda(T) = inf |T'|."""
        return min(b.expansion for b in self.branches)

    @property
    def slope_sup(self) -> float:
        """sup |T'| (for affine branches; certified bounds are not required above)."""
        if self.is_affine:
            return max(abs(b.slope) for b in self.branches)
        sup = 0.0
        for b in self.branches:
            xs = np.linspace(b.lo, b.hi, 33)
            sup = max(sup, float(np.max(np.abs(b.derivative(xs)))))
        return sup

    @property
    def curvature_sup(self) -> float:
        return max(b.curvature for b in self.branches)

    def branch_index(self, x: float) -> int:
        i = int(np.searchsorted(self._starts, x, side="right")) - 1
        return max(i, 0)

    def branch_at(self, x: float) -> Branch:
        return self.branches[self.branch_index(x)]

    def breakpoints(self) -> np.ndarray:
        return np.array([b.lo for b in self.branches] + [1.0])

    def eval_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        idx = np.clip(np.searchsorted(self._starts, xs, side="right") - 1, 0, len(self.branches) - 1)
        if self.is_affine:
            out = self._slopes[idx] * xs + self._intercepts[idx]
        else:
            out = np.empty_like(xs)
            for i, b in enumerate(self.branches):
                mask = idx == i
                if np.any(mask):
                    out[mask] = b(xs[mask])
        return np.clip(out, 0.0, ONE_BELOW)

    def derivative_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        idx = np.clip(np.searchsorted(self._starts, xs, side="right") - 1, 0, len(self.branches) - 1)
        if self.is_affine:
            return self._slopes[idx].copy()
        out = np.empty_like(xs)
        for i, b in enumerate(self.branches):
            mask = idx == i
            if np.any(mask):
                out[mask] = b.derivative(xs[mask])
        return out


def beta_map(beta: float) -> IntervalMap:
    """The map x -> beta*x mod 1 with half-open branch domains."""
    if beta <= 1.0:
        raise ValueError(f"beta must exceed 1, got {beta}")
    k_last = math.ceil(beta) - 1
    branches = []
    for k in range(k_last + 1):
        lo = k / beta
        hi = min((k + 1) / beta, 1.0)
        if hi - lo <= MERGE_TOL:
            continue
        branches.append(Branch(lo=lo, hi=hi, slope=beta, intercept=float(-k)))
    return IntervalMap(branches=tuple(branches), label=f"beta:{beta:g}")


class MapSequence:
    """An indexed, reproducible generator of IntervalMaps (indices start at 1).

    Presets: constant beta, beta drawn independently per index from
    [center-radius, center+radius] under a stored seed, periodic cycles, and
    explicit finite lists.  The same seed and index always yield the identical
    map.
    """

    def __init__(self, kind: str, generator: Callable[[int], IntervalMap],
                 length: Optional[int] = None, label: str = "",
                 expansion_min: float = 0.0, slope_sup: float = 0.0,
                 curvature_sup: float = 0.0, branch_bound: int = 0):
        self.kind = kind
        self.length = length
        self.label = label or kind
        self.expansion_min = expansion_min
        self.slope_sup = slope_sup
        self.curvature_sup = curvature_sup
        self.branch_bound = branch_bound
        self._generator = generator
        self._cache: dict[int, IntervalMap] = {}

    def map_at(self, index: int) -> IntervalMap:
        if index < 1:
            raise ValueError(f"map indices start at 1, got {index}")
        if self.length is not None and index > self.length:
            raise ValueError(f"sequence has length {self.length}, got index {index}")
        cached = self._cache.get(index)
        if cached is None:
            cached = self._generator(index)
            if self.expansion_min and cached.expansion < self.expansion_min - 1e-9:
                raise ValueError("generated map violates the class expansion bound")
            if self.branch_bound and len(cached.branches) > self.branch_bound:
                raise ValueError("generated map violates the class branch bound")
            self._cache[index] = cached
        return cached

    def affine_through(self, n: int) -> bool:
        """True when maps 1..n are all affine (exact operator path applies)."""
        return all(self.map_at(k).is_affine for k in range(1, n + 1))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant_beta"

    @classmethod
    def constant_beta(cls, beta: float) -> "MapSequence":
        m = beta_map(beta)
        return cls("constant_beta", lambda _: m, label=f"constant beta={beta:g}",
                   expansion_min=beta, slope_sup=beta, branch_bound=len(m.branches))

    @classmethod
    def random_beta(cls, center: float, radius: float, seed: int) -> "MapSequence":
        if center - radius <= 1.0:
            raise ValueError("beta neighborhood must stay above 1")

        def gen(index: int) -> IntervalMap:
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))
            return beta_map(center + radius * (2.0 * rng.random() - 1.0))

        return cls("random_beta", gen, label=f"random beta in [{center - radius:g}, {center + radius:g}] seed={seed}",
                   expansion_min=center - radius, slope_sup=center + radius,
                   branch_bound=math.ceil(center + radius))

    @classmethod
    def periodic(cls, betas: Sequence[float]) -> "MapSequence":
        betas = [float(b) for b in betas]
        if not betas:
            raise ValueError("periodic sequence needs at least one beta")
        maps = [beta_map(b) for b in betas]
        return cls("periodic", lambda i: maps[(i - 1) % len(maps)],
                   label=f"periodic betas={betas}",
                   expansion_min=min(betas), slope_sup=max(betas),
                   branch_bound=max(len(m.branches) for m in maps))

    @classmethod
    def explicit(cls, betas: Sequence[float]) -> "MapSequence":
        betas = [float(b) for b in betas]
        if not betas:
            raise ValueError("explicit sequence needs at least one beta")
        maps = [beta_map(b) for b in betas]
        return cls("explicit", lambda i: maps[i - 1], length=len(maps),
                   label=f"explicit betas={betas}",
                   expansion_min=min(betas), slope_sup=max(betas),
                   branch_bound=max(len(m.branches) for m in maps))

    @classmethod
    def explicit_maps(cls, maps: Sequence[IntervalMap], cycle: bool = False) -> "MapSequence":
        maps = list(maps)
        if not maps:
            raise ValueError("need at least one map")
        length = None if cycle else len(maps)
        gen = (lambda i: maps[(i - 1) % len(maps)]) if cycle else (lambda i: maps[i - 1])
        return cls("explicit_maps", gen, length=length, label="explicit maps",
                   expansion_min=min(m.expansion for m in maps),
                   slope_sup=max(m.slope_sup for m in maps),
                   curvature_sup=max(m.curvature_sup for m in maps),
                   branch_bound=max(len(m.branches) for m in maps))

    @classmethod
    def from_config(cls, cfg: dict) -> "MapSequence":
        """Build a sequence from a parsed TOML/JSON table.

        kind = "constant_beta" (beta), "random_beta" (center, radius, seed),
        "periodic" (betas), or "explicit" (betas).
        """
        kind = cfg.get("kind")
        if kind == "constant_beta":
            return cls.constant_beta(float(cfg["beta"]))
        if kind == "random_beta":
            return cls.random_beta(float(cfg["center"]), float(cfg["radius"]), int(cfg["seed"]))
        if kind == "periodic":
            return cls.periodic(cfg["betas"])
        if kind == "explicit":
            return cls.explicit(cfg["betas"])
        raise ValueError(f"unknown sequence kind {kind!r}")


@dataclass(frozen=True)
class Partition:
    """A monotonicity partition: strictly increasing breakpoints from 0 to 1."""

    breakpoints: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        object.__setattr__(self, "breakpoints", bp)
        if bp[0] != 0.0 or bp[-1] != 1.0 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must increase strictly from 0 to 1")

    @property
    def ncells(self) -> int:
        return len(self.breakpoints) - 1

    def cells(self):
        bp = self.breakpoints
        return zip(bp[:-1], bp[1:])


@dataclass(frozen=True)
class LyConstants:
    """Constants of the variation inequality V(P_T f) <= contraction*V(f) + additive*||f||_1."""

    contraction: float
    additive: float

    def __post_init__(self):
        if self.additive < 0 or not (0.0 < self.contraction < 2.0):
            raise ValueError("need additive >= 0 and contraction in (0, 2)")


# ---------------------------------------------------------------------------
# operations


def eval_map(m: IntervalMap, x: float) -> float:
    """Apply the unique branch whose half-open domain contains x."""
    if not (0.0 <= x < 1.0):
        raise ValueError(f"point {x} outside [0,1)")
    y = float(m.branch_at(x)(x))
    return min(max(y, 0.0), ONE_BELOW)


def orbit(seq: MapSequence, x: float, n: int) -> np.ndarray:
    """(x, T_1^1 x, ..., T_1^n x); the empty composition is the identity."""
    if n < 0:
        raise ValueError("orbit length must be >= 0")
    out = np.empty(n + 1)
    out[0] = x
    cur = x
    for k in range(1, n + 1):
        cur = eval_map(seq.map_at(k), cur)
        out[k] = cur
    return out


def preimages(m: IntervalMap, x: float) -> list[tuple[float, float]]:
    """One (y, |T'(y)|) per branch whose image contains x; T(y) = x to 1e-12."""
    if not (0.0 <= x < 1.0):
        raise ValueError(f"point {x} outside [0,1)")
    out = []
    for b in m.branches:
        lo_img, hi_img = b.image()
        if not (lo_img - MERGE_TOL <= x <= hi_img + MERGE_TOL):
            continue
        y = b.invert(x)
        # honor the half-open domain: accept lo <= y < hi, snapping at lo
        if y < b.lo - MERGE_TOL or y >= b.hi:
            continue
        y = min(max(y, b.lo), ONE_BELOW)
        if abs(float(b(y)) - x) > 1e-12:
            continue
        out.append((y, abs(float(b.derivative(y)))))
    return out


def _merge_sorted(points: np.ndarray, tol: float = MERGE_TOL) -> np.ndarray:
    """Collapse near-duplicates in a sorted array, pinning the 0 and 1 endpoints."""
    pts = np.clip(points, 0.0, 1.0)
    keep = np.concatenate(([True], np.diff(pts) > tol))
    pts = pts[keep]
    pts[0] = 0.0
    if 1.0 - pts[-1] <= tol:
        pts[-1] = 1.0
    else:
        pts = np.append(pts, 1.0)
    return pts


def composition_partition(seq: MapSequence, start: int, end: int,
                          cap: int = BREAKPOINT_CAP) -> Partition:
    """Monotonicity partition of T_start^end = T_end o ... o T_start.

    Built by pulling the later maps' breakpoints back through the earlier
    maps; breakpoints closer than the merge tolerance collapse to one point.
    """
    if start > end:
        raise ValueError("need start <= end")
    bps = seq.map_at(end).breakpoints()
    for k in range(end - 1, start - 1, -1):
        m = seq.map_at(k)
        pieces = [m.breakpoints()]
        interior = bps[(bps > 0.0) & (bps < 1.0)]
        for b in m.branches:
            lo_img, hi_img = b.image()
            sel = interior[(interior >= lo_img - MERGE_TOL) & (interior <= hi_img + MERGE_TOL)]
            if len(sel) == 0:
                continue
            if b.is_affine:
                ys = (sel - b.intercept) / b.slope
            else:
                ys = np.array([b.invert(v) for v in sel])
            ys = ys[(ys >= b.lo - MERGE_TOL) & (ys <= b.hi + MERGE_TOL)]
            pieces.append(np.clip(ys, b.lo, b.hi))
        bps = _merge_sorted(np.sort(np.concatenate(pieces)))
        if len(bps) - 1 > cap:
            raise ResourceLimitError(
                f"partition of T_{start}^{end} exceeds the breakpoint cap {cap}")
    return Partition(breakpoints=bps, provenance=f"T_{start}^{end}")


def lasota_yorke_constants(m: IntervalMap) -> LyConstants:
    """(2/lambda(T), C(T)) with C(T) = sup|T''|/|T'|^2 + 2 max_I (sup_I 1/|T'|)/m(I)."""
    lam = m.expansion
    curvature_term = m.curvature_sup / lam**2
    branch_term = 0.0
    for b in m.branches:
        width = b.hi - b.lo
        branch_term = max(branch_term, (1.0 / b.expansion) / width)
    return LyConstants(contraction=2.0 / lam, additive=curvature_term + 2.0 * branch_term)


def orbit_derivative(seq: MapSequence, x: float, n: int) -> tuple[float, float]:
    """(T_1^n x, (T_1^n)'(x)) by the chain rule along the orbit."""
    cur = x
    deriv = 1.0
    for k in range(1, n + 1):
        b = seq.map_at(k).branch_at(cur)
        deriv *= float(b.derivative(cur))
        cur = min(max(float(b(cur)), 0.0), ONE_BELOW)
    return cur, deriv


def distortion_bound(seq: MapSequence, n: int, sample_pairs: int, seed: int = 0) -> float:
    """max over sampled same-cell pairs of |D'(x)-D'(y)| / (|D'(x)| |Dx-Dy|), D = T_1^n.

    Exactly 0 for all-affine sequences: the derivative is constant on every
    cell, so no sampling is needed.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if sample_pairs < 1:
        raise ValueError("need at least one sample pair")
    if seq.affine_through(n):
        return 0.0
    part = composition_partition(seq, 1, n)
    bp = part.breakpoints
    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    for _ in range(sample_pairs):
        i = int(rng.integers(part.ncells))
        lo, hi = bp[i], bp[i + 1]
        u, v = rng.random(2)
        x = lo + u * (hi - lo)
        y = lo + v * (hi - lo)
        fx, dx = orbit_derivative(seq, x, n)
        fy, dy = orbit_derivative(seq, y, n)
        gap = abs(fx - fy)
        if gap < 1e-14:
            continue
        worst = max(worst, abs(dx - dy) / (abs(dx) * gap))
    return worst


def inverse_derivative_sums(seq: MapSequence, n: int,
                            cap: int = BREAKPOINT_CAP) -> tuple[float, float]:
    """(sum_I sup_I 1/|(T_1^n)'|, sum_I V_I(1/|(T_1^n)'|)) over the cells of T_1^n.

    Affine sequences aggregate cells by their (exact) image interval instead
    of materializing the partition, so deep compositions stay cheap; the
    variation term is exactly 0 there.  Smooth sequences walk the partition
    and sample within each cell.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if seq.affine_through(n):
        # buckets: image interval of a cell -> total weight sum(1/|derivative|)
        buckets: dict[tuple[float, float], float] = {(0.0, 1.0): 1.0}
        for k in range(1, n + 1):
            m = seq.map_at(k)
            nxt: dict[tuple[float, float], float] = {}
            for (lo, hi), w in buckets.items():
                for b in m.branches:
                    a, c = max(lo, b.lo), min(hi, b.hi)
                    if c - a <= MERGE_TOL:
                        continue
                    u, v = b.slope * a + b.intercept, b.slope * c + b.intercept
                    key = (round(min(u, v), 12), round(max(u, v), 12))
                    nxt[key] = nxt.get(key, 0.0) + w / abs(b.slope)
            buckets = nxt
            if len(buckets) > cap:
                raise ResourceLimitError(f"image buckets exceed the cap {cap}")
        return sum(buckets.values()), 0.0

    part = composition_partition(seq, 1, n, cap=cap)
    bp = part.breakpoints
    sup_sum = 0.0
    var_sum = 0.0
    for lo, hi in part.cells():
        xs = lo + (hi - lo) * (np.arange(17) + 0.5) / 17.0
        inv = np.array([1.0 / abs(orbit_derivative(seq, float(x), n)[1]) for x in xs])
        sup_sum += float(np.max(inv))
        var_sum += float(np.sum(np.abs(np.diff(inv))))
    return sup_sum, var_sum


def _image_union(m: IntervalMap, frags: list[tuple[float, float]],
                 cap: int = FRAGMENT_CAP) -> list[tuple[float, float]]:
    """Forward image of a union of closed intervals, merged."""
    out = []
    for lo, hi in frags:
        for b in m.branches:
            a, c = max(lo, b.lo), min(hi, b.hi)
            if c <= a:
                continue
            va, vc = float(b(a)), float(b(c))
            out.append((min(va, vc), max(va, vc)))
    out.sort()
    merged: list[list[float]] = []
    for lo, hi in out:
        if merged and lo <= merged[-1][1] + MERGE_TOL:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    if len(merged) > cap:
        raise ResourceLimitError(f"interval-union fragments exceed the cap {cap}")
    return [(max(lo, 0.0), min(hi, 1.0)) for lo, hi in merged]


def _covers_interval(frags: list[tuple[float, float]]) -> bool:
    covered = sum(hi - lo for lo, hi in frags)
    return 1.0 - covered < COVER_GAP_TOL


def covering_horizon(seq: MapSequence, block_start: int, n: int, max_steps: int,
                     fragment_cap: int = FRAGMENT_CAP) -> Optional[int]:
    """Smallest N <= max_steps with T_{m+1}^{m+N}(I) = [0,1] for every cell I
    of the monotonicity partition of T_{m+1}^{m+n}, m = block_start.

    Images are tracked as unions of intervals; returns None if some cell does
    not cover within max_steps.
    """
    if n < 1 or max_steps < 1:
        raise ValueError("need n >= 1 and max_steps >= 1")
    part = composition_partition(seq, block_start + 1, block_start + n)
    worst = 0
    for lo, hi in part.cells():
        frags = [(lo, hi)]
        steps = None
        for j in range(1, max_steps + 1):
            frags = _image_union(seq.map_at(block_start + j), frags, cap=fragment_cap)
            if _covers_interval(frags):
                steps = j
                break
        if steps is None:
            return None
        worst = max(worst, steps)
    return worst


def compose_affine_block(seq: MapSequence, start: int, end: int) -> IntervalMap:
    """The composition T_start^end materialized as a single affine IntervalMap."""
    for k in range(start, end + 1):
        if not seq.map_at(k).is_affine:
            raise ValueError("only affine sequences compose exactly")
    part = composition_partition(seq, start, end)
    branches = []
    for lo, hi in part.cells():
        mid = 0.5 * (lo + hi)
        cur, deriv = mid, 1.0
        for k in range(start, end + 1):
            b = seq.map_at(k).branch_at(cur)
            deriv *= b.slope
            cur = b.slope * cur + b.intercept
        intercept = cur - deriv * mid
        # nudge the intercept so the image hull stays inside [0,1]
        va, vb = deriv * lo + intercept, deriv * hi + intercept
        overshoot = max(va, vb) - 1.0
        if 0 < overshoot < 1e-9:
            intercept -= overshoot
        undershoot = -min(va, vb)
        if 0 < undershoot < 1e-9:
            intercept += undershoot
        branches.append(Branch(lo=lo, hi=hi, slope=deriv, intercept=intercept))
    return IntervalMap(branches=tuple(branches), label=f"comp:{start}-{end}")
