"""Tests for the Monte-Carlo layer: ensembles, tails, distances, and reports."""

import math

import numpy as np
import pytest

from seqdyn.maps import MapSequence, orbit
from seqdyn.stochastic import (Cdf, Observable, asclt_report, concentration_mgf,
                               empirical_measure_tail, initial_points,
                               kantorovich, ld_tail, normal_cdf, sample_orbits,
                               shadowing_stat)
from seqdyn.transfer import PiecewiseFn, ergodic_sum_variance


class TestSampleOrbits:
    def test_single_step_uniformish(self):
        ens = sample_orbits(MapSequence.constant_beta(2.0), 1, 10, seed=4)
        assert ens.points.shape == (10, 1)
        assert np.all((ens.points >= 0) & (ens.points < 1))

    def test_matches_orbit_op(self):
        seq = MapSequence.constant_beta(2.0)
        ens = sample_orbits(seq, 3, 1, seed=5)
        expected = orbit(seq, float(initial_points(5, 1)[0]), 2)
        assert np.array_equal(ens.points[0], expected)

    def test_bit_reproducible(self):
        seq = MapSequence.random_beta(2.0, 0.05, seed=2)
        a = sample_orbits(seq, 8, 64, seed=3)
        b = sample_orbits(seq, 8, 64, seed=3)
        assert np.array_equal(a.points, b.points)

    def test_initial_points_slice_stable(self):
        full = initial_points(9, 1000)
        assert np.array_equal(full[100:200], initial_points(9, 1000)[100:200])


class TestObservable:
    def test_spot_check_rejects_undeclared_motion(self):
        with pytest.raises(ValueError, match="Lip_0"):
            Observable(2, lambda rows: rows[:, 0], (0.0, 0.0))

    def test_constant_passes_with_zero_lip(self):
        K = Observable.constant(2.0, 3)
        assert K((0.1, 0.2, 0.3)) == 2.0

    def test_ergodic_mean_lipschitz(self):
        K = Observable.ergodic_mean(4)
        assert K.lip == (0.25,) * 4
        assert K((0.0, 1.0, 1.0, 0.0)) == pytest.approx(0.5)

    def test_honest_declaration_accepted(self):
        K = Observable(3, lambda rows: rows.sum(axis=1), (1.0, 1.0, 1.0))
        assert K.lip_sq_sum() == 3.0


class TestKantorovich:
    def test_point_masses_at_ends(self):
        assert kantorovich(Cdf.point_mass(0.0), Cdf.point_mass(1.0)) == pytest.approx(1.0)

    def test_identity(self):
        c = Cdf.from_atoms([0.3, 0.5, 0.9])
        assert kantorovich(c, c) == 0.0

    def test_point_mass_vs_lebesgue(self):
        assert kantorovich(Cdf.point_mass(0.5), Cdf.uniform()) == pytest.approx(0.25)

    def test_metric_axioms_on_random_step_cdfs(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            a, b, c = (Cdf.from_atoms(rng.random(int(rng.integers(1, 8)))) for _ in range(3))
            dab, dba = kantorovich(a, b), kantorovich(b, a)
            assert dab == dba
            assert kantorovich(a, c) <= dab + kantorovich(b, c) + 1e-12
            assert kantorovich(a, a) == 0.0

    def test_monotonicity_validated(self):
        with pytest.raises(ValueError):
            Cdf(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.8, 0.5]), kind="linear")


class TestLdTail:
    def test_constant_observable_never_exceeds(self):
        seq = MapSequence.constant_beta(2.0)
        rep = ld_tail(seq, lambda x: np.full_like(x, 0.7), 0.0, 64,
                      [0.01, 0.1], 2000, seed=8)
        assert rep.empirical_probs == (0.0, 0.0)

    def test_zero_threshold_near_half(self):
        seq = MapSequence.constant_beta(2.0)
        m = 20000
        rep = ld_tail(seq, lambda x: x, 1.0, 1024, [0.0], m, seed=9)
        se = 0.5 / math.sqrt(m)
        assert abs(rep.empirical_probs[0] - 0.5) <= 5 * se

    def test_exponent_positive_and_stable(self):
        seq = MapSequence.constant_beta(2.0)
        cs = []
        for n in (256, 512, 1024):
            rep = ld_tail(seq, lambda x: x, 1.0, n, [0.0, 0.01, 0.02, 0.05, 0.1],
                          20000, seed=3)
            assert rep.bound_exponent_fit is not None and rep.bound_exponent_fit > 0
            probs = np.array(rep.empirical_probs)
            assert np.all(np.diff(probs) <= 1e-15)  # nonincreasing in t
            cs.append(rep.bound_exponent_fit)
        assert max(cs) / min(cs) < 2.0

    def test_bit_reproducible(self):
        seq = MapSequence.constant_beta(2.0)
        a = ld_tail(seq, lambda x: x, 1.0, 32, [0.01, 0.05], 500, seed=10)
        b = ld_tail(seq, lambda x: x, 1.0, 32, [0.01, 0.05], 500, seed=10)
        assert a.empirical_probs == b.empirical_probs


class TestEmpiricalMeasure:
    def test_single_step_mean_is_one_third(self):
        seq = MapSequence.constant_beta(2.0)
        rep = empirical_measure_tail(seq, 1, 10000, [1.0], seed=11)
        assert rep.mean_kappa == pytest.approx(1.0 / 3.0, abs=3 * rep.se_kappa + 1e-3)

    def test_reproducible_single_orbit(self):
        seq = MapSequence.constant_beta(2.0)
        a = empirical_measure_tail(seq, 64, 1, [1.0], seed=12)
        b = empirical_measure_tail(seq, 64, 1, [1.0], seed=12)
        assert a.mean_kappa == b.mean_kappa

    def test_scaling_exponent(self):
        seq = MapSequence.constant_beta(2.0)
        ns = [2**k for k in range(6, 12)]
        means = [empirical_measure_tail(seq, n, 500, [1.0], seed=13).mean_kappa
                 for n in ns]
        slope = np.polyfit(np.log(ns), np.log(means), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.1)

    def test_nonconstant_sequence_path(self):
        seq = MapSequence.random_beta(2.0, 0.05, seed=1)
        rep = empirical_measure_tail(seq, 16, 200, [1.0, 2.0], seed=14)
        assert rep.mean_kappa > 0.0
        assert all(0.0 <= p <= 1.0 for p in rep.tail.empirical_probs)


class TestShadowing:
    def test_whole_interval_gives_zero(self):
        seq = MapSequence.constant_beta(2.0)
        assert shadowing_stat(seq, [(0.0, 1.0)], 16, 0.37, 64) == 0.0

    def test_point_inside_target_gives_zero(self):
        seq = MapSequence.constant_beta(2.0)
        assert shadowing_stat(seq, [(0.25, 0.5)], 16, 0.3, 8) == 0.0

    def test_empty_target_rejected(self):
        with pytest.raises(ValueError):
            shadowing_stat(MapSequence.constant_beta(2.0), [], 4, 0.3, 8)

    def test_monotone_in_grid_density(self):
        seq = MapSequence.constant_beta(2.0)
        a_set = [(0.6, 0.7)]
        vals = [shadowing_stat(seq, a_set, 24, 0.11, 2**k) for k in range(2, 9)]
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))

    def test_multi_interval_target(self):
        seq = MapSequence.constant_beta(2.0)
        got = shadowing_stat(seq, [(0.1, 0.2), (0.7, 0.8)], 16, 0.5, 128)
        assert got > 0.0


class TestAsclt:
    def test_constant_observable_flags_failure(self):
        seq = MapSequence.constant_beta(2.0)
        rep = asclt_report(seq, PiecewiseFn.constant(1.0), 50, 0.3)
        assert "hypothesis-failure" in rep.flags
        assert rep.ks_distance == 1.0

    def test_single_step_flagged_low_n(self):
        seq = MapSequence.constant_beta(2.0)
        rep = asclt_report(seq, PiecewiseFn.sawtooth_proxy(), 1, 0.3)
        assert "low-n" in rep.flags
        assert 0.0 <= rep.ks_distance <= 1.0

    def test_weights_normalized(self):
        seq = MapSequence.constant_beta(2.0)
        rep = asclt_report(seq, PiecewiseFn.sawtooth_proxy(), 100, 0.4)
        assert np.sum(rep.weights) == pytest.approx(1.0)

    def test_ks_decreases_with_horizon(self):
        seq = MapSequence.constant_beta(2.0)
        saw = PiecewiseFn.sawtooth_proxy()
        xs = initial_points(909, 5)
        med = {}
        for n in (100, 10000):
            med[n] = np.median([asclt_report(seq, saw, n, float(x)).ks_distance
                                for x in xs])
        assert med[10000] <= med[100]

    def test_sigma_routes_agree_roughly(self):
        seq = MapSequence.constant_beta(2.0)
        saw = PiecewiseFn.sawtooth_proxy()
        a = asclt_report(seq, saw, 200, 0.3, sigma_route="operator")
        b = asclt_report(seq, saw, 200, 0.3, sigma_route="montecarlo")
        assert a.variance_slope == pytest.approx(b.variance_slope, rel=0.2)


class TestConcentration:
    def test_constant_observable_c_zero(self):
        seq = MapSequence.constant_beta(2.0)
        K = Observable.constant(5.0, 8)
        rep = concentration_mgf(seq, K, [1.0, 2.0], 500, seed=15)
        assert rep.c_hat == 0.0
        assert rep.log_mgf == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_ergodic_mean_stable_across_n(self):
        seq = MapSequence.constant_beta(2.0)
        chats = []
        for n in (64, 256):
            rep = concentration_mgf(seq, Observable.ergodic_mean(n),
                                    [1.0, 2.0, 4.0, 8.0], 20000, seed=16)
            assert math.isfinite(rep.c_hat) and rep.c_hat > 0
            chats.append(rep.c_hat)
        assert max(chats) / min(chats) < 2.0

    def test_unstable_lambda_warns(self):
        seq = MapSequence.constant_beta(2.0)
        rep = concentration_mgf(seq, Observable.ergodic_mean(16),
                                [1.0, 4000.0], 200, seed=17)
        assert any("4000" in w for w in rep.warnings)

    def test_bit_reproducible(self):
        seq = MapSequence.constant_beta(2.0)
        K = Observable.ergodic_mean(32)
        a = concentration_mgf(seq, K, [1.0, 2.0], 1000, seed=18)
        b = concentration_mgf(seq, K, [1.0, 2.0], 1000, seed=18)
        assert a.log_mgf == b.log_mgf


class TestVarianceAgreement:
    def test_operator_matches_ensembles(self):
        seq = MapSequence.constant_beta(2.0)
        saw = PiecewiseFn.sawtooth_proxy()
        m_samples = 100000
        for n in (8, 16, 32):
            ens = sample_orbits(seq, n, m_samples, seed=19)
            from seqdyn.stochastic import operator_means
            mus = operator_means(seq, saw, n)
            sums = (saw.eval_many(ens.points) - mus).sum(axis=1)
            mc_var = float(np.var(sums))
            m2 = sums - sums.mean()
            se = math.sqrt((np.mean(m2**4) - mc_var**2) / m_samples)
            op_var = ergodic_sum_variance(seq, saw, n)
            assert abs(op_var - mc_var) <= 3.0 * se

    def test_normal_cdf_endpoints(self):
        assert normal_cdf(0.0) == pytest.approx(0.5)
        assert normal_cdf(8.0) == pytest.approx(1.0, abs=1e-12)
