"""Tests for piecewise expanding maps, partitions, and map-level constants."""

import math
from fractions import Fraction

import numpy as np
import pytest

from seqdyn.errors import ResourceLimitError
from seqdyn.maps import (Branch, IntervalMap, MapSequence, beta_map,
                         composition_partition, covering_horizon,
                         distortion_bound, eval_map, inverse_derivative_sums,
                         lasota_yorke_constants, orbit, preimages)


def make_quadratic_doubling(eps: float) -> IntervalMap:
    """Doubling map with a quadratic bend: certified lam = 2 - eps, |T''| <= 4 eps."""
    def mk(lo):
        fn = lambda x: 2.0 * (x - lo) + eps * (x - lo) * (1.0 - 2.0 * (x - lo))
        deriv = lambda x: 2.0 + eps * (1.0 - 4.0 * (x - lo))
        return Branch(lo=lo, hi=lo + 0.5, fn=fn, deriv=deriv,
                      lam=2.0 - eps, second_bound=4.0 * eps)
    return IntervalMap(branches=(mk(0.0), mk(0.5)), label=f"bent:{eps:g}")


class TestEvalMap:
    def test_doubling(self):
        m = beta_map(2.0)
        assert eval_map(m, 0.3) == pytest.approx(0.6, abs=1e-15)
        assert eval_map(m, 0.5) == 0.0

    def test_beta_three_halves(self):
        assert eval_map(beta_map(1.5), 0.8) == pytest.approx(0.2, abs=1e-15)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            eval_map(beta_map(2.0), 1.0)
        with pytest.raises(ValueError):
            eval_map(beta_map(2.0), -0.1)

    def test_stays_in_interval(self):
        m = beta_map(1.0000001)
        for x in np.linspace(0, 1, 1000, endpoint=False):
            assert 0.0 <= eval_map(m, float(x)) < 1.0


class TestOrbit:
    def test_doubling(self):
        seq = MapSequence.constant_beta(2.0)
        assert orbit(seq, 0.3, 2) == pytest.approx([0.3, 0.6, 0.2], abs=1e-14)

    def test_identity_at_zero_steps(self):
        seq = MapSequence.constant_beta(2.0)
        assert list(orbit(seq, 0.77, 0)) == [0.77]

    def test_beta_list(self):
        seq = MapSequence.explicit([2.0, 3.0])
        assert orbit(seq, 0.1, 2) == pytest.approx([0.1, 0.2, 0.6], abs=1e-14)

    def test_explicit_length_guard(self):
        seq = MapSequence.explicit([2.0, 3.0])
        with pytest.raises(ValueError):
            orbit(seq, 0.1, 3)


class TestPreimages:
    def test_doubling_at_zero(self):
        got = preimages(beta_map(2.0), 0.0)
        assert got == [(0.0, 2.0), (0.5, 2.0)]

    def test_non_surjective_branch_excluded(self):
        got = preimages(beta_map(1.5), 0.9)
        assert len(got) == 1
        assert got[0][0] == pytest.approx(0.6)
        assert got[0][1] == 1.5

    def test_beta_three(self):
        got = preimages(beta_map(3.0), 0.3)
        ys = [y for y, _ in got]
        assert ys == pytest.approx([0.1, 1.3 / 3.0, 2.3 / 3.0])

    def test_roundtrip_accuracy(self):
        rng = np.random.default_rng(1)
        for m in (beta_map(2.0), beta_map(2.5), beta_map((1 + 5**0.5) / 2)):
            for x in rng.random(1000):
                for y, dy in preimages(m, float(x)):
                    assert abs(eval_map(m, y) - x) <= 1e-12
                    assert dy > 1.0

    def test_branch_completeness(self):
        rng = np.random.default_rng(2)
        for m in (beta_map(2.0), beta_map(1.7), beta_map(3.3)):
            for x in rng.random(1000):
                x = float(x)
                expected = 0
                for b in m.branches:
                    lo_img, hi_img = b.image()
                    if lo_img <= x < hi_img:  # half-open like the domain
                        expected += 1
                assert len(preimages(m, x)) == expected


def exact_partition_oracle(betas):
    """Backward refinement with exact rationals for integer-beta lists."""
    points = {Fraction(0), Fraction(1)}
    for beta in reversed([Fraction(b) for b in betas]):
        new = set()
        for k in range(int(beta)):
            new.add(Fraction(k, int(beta)))
            for b in points:
                y = (b + k) / beta
                if Fraction(k, int(beta)) <= y < Fraction(k + 1, int(beta)):
                    new.add(y)
        points = new | {Fraction(0), Fraction(1)}
    return sorted(points)


class TestCompositionPartition:
    def test_dyadic_against_exact_oracle(self):
        seq = MapSequence.constant_beta(2.0)
        for n in (1, 2, 3, 5):
            part = composition_partition(seq, 1, n)
            expected = exact_partition_oracle([2] * n)
            assert part.ncells == 2**n
            assert part.breakpoints == pytest.approx([float(f) for f in expected], abs=1e-12)

    def test_single_map_is_its_branch_partition(self):
        seq = MapSequence.constant_beta(2.5)
        part = composition_partition(seq, 1, 1)
        assert part.breakpoints == pytest.approx([0.0, 0.4, 0.8, 1.0])

    def test_two_three_mix(self):
        seq = MapSequence.explicit([2.0, 3.0])
        part = composition_partition(seq, 1, 2)
        assert part.ncells == 6
        assert part.breakpoints == pytest.approx(np.arange(7) / 6.0, abs=1e-12)
        assert [float(f) for f in exact_partition_oracle([2, 3])] == pytest.approx(
            list(part.breakpoints), abs=1e-12)

    def test_cell_diameter_bound(self):
        seq = MapSequence.random_beta(2.0, 0.1, seed=9)
        for n in (1, 3, 6):
            part = composition_partition(seq, 1, n)
            assert np.max(np.diff(part.breakpoints)) <= seq.expansion_min**-n + 1e-12

    def test_breakpoint_cap(self):
        seq = MapSequence.constant_beta(2.0)
        with pytest.raises(ResourceLimitError, match="cap"):
            composition_partition(seq, 1, 12, cap=1000)


class TestLasotaYorkeConstants:
    @pytest.mark.parametrize("beta,contraction,additive", [
        (3.0, 2.0 / 3.0, 2.0),
        (2.0, 1.0, 2.0),
        (2.5, 0.8, 4.0),
    ])
    def test_beta_values(self, beta, contraction, additive):
        ly = lasota_yorke_constants(beta_map(beta))
        assert ly.contraction == pytest.approx(contraction, abs=1e-12)
        assert ly.additive == pytest.approx(additive, abs=1e-9)

    def test_contraction_is_two_over_beta(self):
        rng = np.random.default_rng(3)
        for beta in 1.0 + 3.0 * rng.random(50):
            if beta <= 1.001:
                continue
            ly = lasota_yorke_constants(beta_map(float(beta)))
            assert ly.contraction == pytest.approx(2.0 / beta, rel=1e-12)

    def test_smooth_map_uses_certified_bounds(self):
        m = make_quadratic_doubling(0.5)
        ly = lasota_yorke_constants(m)
        assert ly.contraction == pytest.approx(2.0 / 1.5)
        assert ly.additive == pytest.approx(2.0 / 1.5**2 + 2 * (1 / 1.5) / 0.5)


class TestDistortion:
    def test_affine_sequences_are_exactly_zero(self):
        assert distortion_bound(MapSequence.constant_beta(2.7), 10, 50) == 0.0
        assert distortion_bound(MapSequence.explicit([2.0, 2.5, 3.0]), 1, 10) == 0.0

    def test_zero_samples_rejected(self):
        with pytest.raises(ValueError):
            distortion_bound(MapSequence.constant_beta(2.0), 3, 0)

    def test_smooth_map_within_analytic_bound(self):
        eps = 0.5
        seq = MapSequence.explicit_maps([make_quadratic_doubling(eps)])
        got = distortion_bound(seq, 1, 400, seed=5)
        lam, curv = 2.0 - eps, 4.0 * eps
        assert 0.0 < got <= curv / lam**2 + 1e-9


class TestInverseDerivativeSums:
    def test_doubling_sup_sum_is_one(self):
        seq = MapSequence.constant_beta(2.0)
        for n in range(1, 21):
            sup_sum, var_sum = inverse_derivative_sums(seq, n)
            assert sup_sum == pytest.approx(1.0, abs=1e-12)
            assert var_sum == 0.0

    def test_beta_three(self):
        sup_sum, var_sum = inverse_derivative_sums(MapSequence.constant_beta(3.0), 2)
        assert sup_sum == pytest.approx(1.0, abs=1e-12)
        assert var_sum == 0.0

    def test_two_three_mix(self):
        sup_sum, var_sum = inverse_derivative_sums(MapSequence.explicit([2.0, 3.0]), 2)
        assert sup_sum == pytest.approx(1.0, abs=1e-12)
        assert var_sum == 0.0

    def test_smooth_path_matches_affine_limit(self):
        # eps -> 0 recovers the doubling value 1
        seq = MapSequence.explicit_maps([make_quadratic_doubling(1e-6)])
        sup_sum, var_sum = inverse_derivative_sums(seq, 1)
        assert sup_sum == pytest.approx(1.0, abs=1e-5)
        assert var_sum < 1e-5


class TestCoveringHorizon:
    def test_doubling_generation_n_covers_in_n(self):
        seq = MapSequence.constant_beta(2.0)
        for n in range(1, 9):
            assert covering_horizon(seq, 0, n, max_steps=2 * n) == n

    def test_full_branch_map_covers_immediately(self):
        assert covering_horizon(MapSequence.constant_beta(3.0), 0, 1, max_steps=5) == 1

    def test_beta_below_two_covers_eventually(self):
        got = covering_horizon(MapSequence.constant_beta(1.9), 0, 1, max_steps=50)
        assert got is not None and 1 <= got <= 50

    def test_monotone_in_max_steps(self):
        seq = MapSequence.constant_beta(1.9)
        first = covering_horizon(seq, 0, 2, max_steps=50)
        assert first is not None
        for extra in (first + 1, first + 10):
            assert covering_horizon(seq, 0, 2, max_steps=extra) == first

    def test_not_found_returns_none(self):
        seq = MapSequence.constant_beta(2.0)
        assert covering_horizon(seq, 0, 6, max_steps=3) is None


class TestMapSequence:
    def test_random_beta_reproducible(self):
        a = MapSequence.random_beta(2.0, 0.1, seed=11)
        b = MapSequence.random_beta(2.0, 0.1, seed=11)
        for idx in (1, 5, 100):
            assert a.map_at(idx).branches == b.map_at(idx).branches

    def test_random_beta_within_class_bounds(self):
        seq = MapSequence.random_beta(2.0, 0.1, seed=4)
        for idx in range(1, 50):
            m = seq.map_at(idx)
            assert 1.9 <= m.expansion <= 2.1 + 1e-12
            assert len(m.branches) <= seq.branch_bound

    def test_periodic_cycles(self):
        seq = MapSequence.periodic([2.0, 3.0])
        assert seq.map_at(1).label == seq.map_at(3).label
        assert seq.map_at(2).label == seq.map_at(4).label

    def test_from_config_all_kinds(self):
        assert MapSequence.from_config({"kind": "constant_beta", "beta": 2.0}).map_at(1).label == "beta:2"
        assert MapSequence.from_config(
            {"kind": "random_beta", "center": 2.0, "radius": 0.05, "seed": 3}).map_at(2)
        assert MapSequence.from_config({"kind": "periodic", "betas": [2.0, 3.0]}).map_at(5)
        assert MapSequence.from_config({"kind": "explicit", "betas": [2.0]}).length == 1
        with pytest.raises(ValueError):
            MapSequence.from_config({"kind": "nope"})

    def test_branch_invariants(self):
        with pytest.raises(ValueError):
            Branch(lo=0.0, hi=0.5, slope=0.9, intercept=0.0)  # not expanding
        with pytest.raises(ValueError):
            Branch(lo=0.0, hi=0.5, slope=4.0, intercept=0.0)  # image leaves [0,1]
        with pytest.raises(ValueError):
            IntervalMap(branches=(Branch(lo=0.0, hi=0.4, slope=2.0, intercept=0.0),))
