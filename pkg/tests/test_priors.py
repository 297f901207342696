import numpy as np
import pytest

from bvardpm.priors import default_priors, estimate_sigma0, new_cluster_prior_prob


class TestDefaults:
    def test_wishart_df_formula(self):
        assert default_priors(7).c0 == pytest.approx(11.0)
        assert default_priors(1).c0 == pytest.approx(5.0)
        assert default_priors(28).c0 == pytest.approx(2 * (2.5 + 13.5))

    def test_df_always_proper(self):
        for m in range(1, 40):
            assert default_priors(m).c0 > m - 1

    def test_concentration_prior_moments(self):
        cfg = default_priors(4)
        mean = cfg.alpha_shape / cfg.alpha_rate
        var = cfg.alpha_shape / cfg.alpha_rate ** 2
        assert mean == pytest.approx(0.5)
        assert var == pytest.approx(0.125)

    def test_shrinkage_and_location_defaults(self):
        cfg = default_priors(3)
        assert cfg.c_b == pytest.approx(0.6)
        assert cfg.d_b == pytest.approx(0.6)
        assert cfg.c_mu0 == pytest.approx(1e-3)
        assert cfg.a_omega == pytest.approx(1e-3)
        assert cfg.b_omega == pytest.approx(1e-3)

    def test_overrides(self):
        cfg = default_priors(3, c0=15.0, c_b=0.9)
        assert cfg.c0 == 15.0
        assert cfg.c_b == 0.9

    def test_invalid_hyperparameters(self):
        with pytest.raises(ValueError):
            default_priors(2, c_b=-1.0)


class TestSigma0:
    def test_white_noise_variance(self):
        gen = np.random.default_rng(1)
        y = gen.normal(0.0, 2.0, size=(10_000, 1))
        est = estimate_sigma0(y, 2)
        assert abs(est[0] - 4.0) < 0.4

    def test_perfect_ar1_fit(self):
        t = np.arange(200)
        y = (0.9 ** t * 5.0).reshape(-1, 1)  # exact AR(1), zero innovation
        est = estimate_sigma0(y, 1)
        assert est[0] < 1e-12

    def test_constant_series_raises(self):
        with pytest.raises(ValueError, match="rank deficient"):
            estimate_sigma0(np.full((50, 1), 2.5), 1)

    def test_too_short_raises(self):
        with pytest.raises(ValueError):
            estimate_sigma0(np.ones((5, 1)), 2)

    def test_permutation_equivariance(self):
        gen = np.random.default_rng(2)
        y = gen.normal(size=(300, 3)) * np.array([1.0, 2.0, 0.5])
        est = estimate_sigma0(y, 2)
        perm = [2, 0, 1]
        est_p = estimate_sigma0(y[:, perm], 2)
        assert np.allclose(est_p, est[perm])


class TestNewClusterProb:
    def test_paper_scale_value(self):
        assert new_cluster_prior_prob(0.5, 250) == pytest.approx(0.5 / 249.5)

    def test_small_alpha_limit(self):
        assert new_cluster_prior_prob(1e-12, 100) < 1e-13

    def test_first_observation(self):
        assert new_cluster_prior_prob(0.7, 1) == pytest.approx(1.0)
        assert new_cluster_prior_prob(123.0, 1) == pytest.approx(1.0)

    def test_decreasing_in_t(self):
        vals = [new_cluster_prior_prob(0.5, t) for t in range(1, 200)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            new_cluster_prior_prob(0.5, 0)
        with pytest.raises(ValueError):
            new_cluster_prior_prob(-1.0, 10)
