import numpy as np
import pytest

from rdsmc.core import (
    DegenerateWeightsError,
    ParticleSystem,
    RngStream,
    batched_systematic_resample,
    ess,
    ess_from_log_weights,
    log_sum_exp,
    multinomial_resample,
    normalize_log_weights,
    resample,
    systematic_resample,
)


class TestLogSumExp:
    def test_large_values_are_stable(self):
        assert log_sum_exp([1000.0, 1000.5]) == pytest.approx(1000.974077, abs=1e-6)

    def test_neg_inf_entries_are_ignored(self):
        assert log_sum_exp([-np.inf, 0.0]) == pytest.approx(0.0, abs=1e-15)

    def test_all_neg_inf(self):
        assert log_sum_exp([-np.inf, -np.inf]) == -np.inf

    def test_matches_naive_on_moderate_values(self):
        v = np.array([0.1, -2.0, 3.3])
        assert log_sum_exp(v) == pytest.approx(np.log(np.exp(v).sum()), rel=1e-14)

    def test_axis(self):
        v = np.log(np.array([[1.0, 3.0], [2.0, 2.0]]))
        np.testing.assert_allclose(log_sum_exp(v, axis=1), np.log([4.0, 4.0]))

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            log_sum_exp([])


class TestEss:
    def test_uniform(self):
        assert ess(np.full(4, 0.25)) == pytest.approx(4.0)

    def test_point_mass(self):
        assert ess([1.0, 0.0, 0.0]) == pytest.approx(1.0)

    def test_unequal(self):
        assert ess([0.75, 0.25]) == pytest.approx(1.6)

    def test_log_domain_agrees(self):
        w = np.array([0.75, 0.25])
        assert ess_from_log_weights(np.log(w) + 500.0) == pytest.approx(1.6)

    def test_all_zero_raises(self):
        with pytest.raises(DegenerateWeightsError):
            ess([0.0, 0.0])

    def test_normalize_all_neg_inf_raises(self):
        with pytest.raises(DegenerateWeightsError):
            normalize_log_weights([-np.inf, -np.inf])


class TestSystematic:
    def test_even_split(self):
        np.testing.assert_array_equal(systematic_resample([0.5, 0.5], 0.3, 2), [0, 1])

    def test_point_mass(self):
        np.testing.assert_array_equal(systematic_resample([1.0, 0.0, 0.0], 0.7, 3), [0, 0, 0])

    def test_counts_example(self):
        idx = systematic_resample([0.1, 0.2, 0.7], 0.5, 10)
        np.testing.assert_array_equal(np.bincount(idx, minlength=3), [1, 2, 7])

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            systematic_resample([0.5, 0.6], 0.1, 2)

    def test_rejects_u_outside_unit_interval(self):
        with pytest.raises(ValueError):
            systematic_resample([0.5, 0.5], 1.0, 2)

    def test_batched_matches_rowwise(self):
        rng = np.random.default_rng(3)
        w = rng.random((5, 7))
        w /= w.sum(1, keepdims=True)
        u = rng.random(5)
        got = batched_systematic_resample(w, u)
        for i in range(5):
            np.testing.assert_array_equal(got[i], systematic_resample(w[i], u[i], 7))


class TestMultinomial:
    def test_point_mass(self):
        idx = multinomial_resample([0.0, 1.0, 0.0], RngStream(1, (0,)), 6)
        np.testing.assert_array_equal(idx, [1] * 6)

    def test_sorted_and_deterministic(self):
        w = np.array([0.2, 0.3, 0.5])
        a = multinomial_resample(w, RngStream(9, (2,)), 50)
        b = multinomial_resample(w, RngStream(9, (2,)), 50)
        np.testing.assert_array_equal(a, b)
        assert np.all(np.diff(a) >= 0)

    def test_frequencies(self):
        w = np.array([0.2, 0.3, 0.5])
        idx = multinomial_resample(w, RngStream(0, (1,)), 200_000)
        np.testing.assert_allclose(np.bincount(idx) / idx.size, w, atol=0.005)

    def test_dispatch_unknown_scheme(self):
        with pytest.raises(ValueError):
            resample([1.0], "stratified", RngStream(0))


class TestRngStream:
    def test_same_address_same_draws(self):
        np.testing.assert_array_equal(RngStream(5, (3, "propagate")).normal(4),
                                      RngStream(5, (3, "propagate")).normal(4))

    def test_distinct_paths_differ(self):
        assert not np.allclose(RngStream(5, (3, "propagate")).normal(4), RngStream(5, (3, "resample")).normal(4))
        assert not np.allclose(RngStream(5, (3,)).normal(4), RngStream(6, (3,)).normal(4))

    def test_child_equals_full_path(self):
        np.testing.assert_array_equal(RngStream(1, (2,)).child("inner_mcmc", 4).uniform(3),
                                      RngStream(1, (2, "inner_mcmc", 4)).uniform(3))

    def test_negative_seed_rejected(self):
        with pytest.raises(ValueError):
            RngStream(-1)


class TestParticleSystem:
    def test_take_carries_caches(self):
        ps = ParticleSystem(np.arange(6.0).reshape(3, 2), np.log([0.2, 0.3, 0.5]),
                            scores=-np.arange(6.0).reshape(3, 2), log_marginals=np.array([1.0, 2.0, 3.0]))
        out = ps.take([2, 2, 0])
        np.testing.assert_array_equal(out.positions, ps.positions[[2, 2, 0]])
        np.testing.assert_array_equal(out.scores, ps.scores[[2, 2, 0]])
        np.testing.assert_array_equal(out.log_marginals, [3.0, 3.0, 1.0])
        np.testing.assert_array_equal(out.log_weights, 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ParticleSystem(np.zeros((3, 2)), np.zeros(2))

    def test_degenerate_flag(self):
        assert ParticleSystem(np.zeros((2, 1)), [-np.inf, -np.inf]).degenerate
        assert not ParticleSystem(np.zeros((2, 1)), [0.0, -np.inf]).degenerate

    def test_ess(self):
        assert ParticleSystem(np.zeros((2, 1)), np.log([0.75, 0.25])).ess() == pytest.approx(1.6)
