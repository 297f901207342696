import numpy as np
import pytest
from scipy import integrate
from scipy.special import kv

from bvardpm.distributions import (
    GigParams,
    mvn_logpdf,
    sample_beta,
    sample_gamma,
    sample_gig,
    sample_inv_gamma,
    sample_mvn_fast,
    sample_mvn_precision,
    sample_mvt,
    sample_normal,
    sample_skew_normal,
    sample_uniform,
    sample_wishart,
)
from bvardpm.rng import RngHandle

from conftest import z_mean, z_var

N = 100_000


def gig_moments(lam, chi, psi):
    om = np.sqrt(chi * psi)
    s = np.sqrt(chi / psi)
    k0, k1, k2 = kv(lam, om), kv(lam + 1, om), kv(lam + 2, om)
    mean = s * k1 / k0
    return mean, s * s * k2 / k0 - mean ** 2


class TestMvnPrecision:
    def test_scalar_variance_matches_inverse_precision(self, rng):
        draws = np.array([sample_mvn_precision([2.0], [[4.0]], rng)[0]
                          for _ in range(20_000)])
        # variance 1/4, SE of the sample variance ~ sqrt(2/n)*var
        assert abs(z_var(draws, 0.25)) < 4
        assert abs(z_mean(draws, 2.0, 0.25)) < 4

    def test_identity_precision_standard_normal(self, rng):
        draws = np.array([sample_mvn_precision(np.zeros(3), np.eye(3), rng)
                          for _ in range(20_000)])
        for j in range(3):
            assert abs(z_mean(draws[:, j], 0.0, 1.0)) < 4

    def test_seed_reproducibility(self):
        a = sample_mvn_precision(np.zeros(4), np.eye(4), RngHandle(5))
        b = sample_mvn_precision(np.zeros(4), np.eye(4), RngHandle(5))
        assert np.array_equal(a, b)

    def test_non_spd_raises(self, rng):
        with pytest.raises(ValueError, match="precision"):
            sample_mvn_precision(np.zeros(2), -np.eye(2), rng)


class TestMvnFast:
    def test_matches_precision_route_moments(self):
        gen = np.random.default_rng(42)
        t_rows, k = 3, 5
        phi = gen.normal(size=(t_rows, k))
        y = gen.normal(size=t_rows)
        d = gen.uniform(0.5, 2.0, size=k)
        rng = RngHandle(7)
        fast = np.array([sample_mvn_fast(phi, y, d, rng) for _ in range(N // 2)])
        prec = phi.T @ phi + np.diag(1.0 / d)
        mean = np.linalg.solve(prec, phi.T @ y)
        cov = np.linalg.inv(prec)
        for j in range(k):
            assert abs(z_mean(fast[:, j], mean[j], cov[j, j])) < 4
            assert abs(z_var(fast[:, j], cov[j, j])) < 4

    def test_total_shrinkage(self, rng):
        phi = np.random.default_rng(0).normal(size=(4, 6))
        y = np.ones(4)
        draw = sample_mvn_fast(phi, y, np.full(6, 1e-12), rng)
        assert np.max(np.abs(draw)) < 1e-4

    def test_scalar_conjugate_posterior(self):
        phi = np.array([[2.0]])
        y = np.array([3.0])
        v0 = 0.7
        rng = RngHandle(3)
        draws = np.array([sample_mvn_fast(phi, y, [v0], rng)[0]
                          for _ in range(40_000)])
        post_var = 1.0 / (4.0 + 1.0 / v0)
        post_mean = post_var * 2.0 * 3.0
        assert abs(z_mean(draws, post_mean, post_var)) < 4
        assert abs(z_var(draws, post_var)) < 4

    def test_nonpositive_prior_var_raises(self, rng):
        with pytest.raises(ValueError):
            sample_mvn_fast(np.ones((2, 2)), np.ones(2), [1.0, 0.0], rng)


class TestWishart:
    def test_scalar_mean(self, rng):
        draws = np.array([sample_wishart(6.0, [[0.5]], rng)[0, 0]
                          for _ in range(N // 2)])
        # W_1(6, 0.5): mean 3, variance 2 * df * scale^2 = 3
        assert abs(z_mean(draws, 3.0, 3.0)) < 4

    def test_always_spd_and_symmetric(self, rng):
        for _ in range(50):
            w = sample_wishart(5.0, np.eye(3), rng)
            assert np.allclose(w, w.T)
            assert np.all(np.linalg.eigvalsh(w) > 0)

    def test_matrix_mean(self, rng):
        draws = np.stack([sample_wishart(10.0, np.eye(2), rng)
                          for _ in range(N // 2)])
        mean = draws.mean(axis=0)
        # diagonal variance 2*df, off-diagonal df
        se_diag = np.sqrt(20.0 / (N // 2))
        se_off = np.sqrt(10.0 / (N // 2))
        assert np.all(np.abs(np.diag(mean) - 10.0) < 4 * se_diag)
        assert abs(mean[0, 1]) < 4 * se_off

    def test_low_df_raises(self, rng):
        with pytest.raises(ValueError, match="df"):
            sample_wishart(1.5, np.eye(3), rng)


class TestGig:
    def test_inverse_gaussian_case(self, rng):
        draws = sample_gig((np.full(N, -0.5), 1.0, 1.0), rng)
        mean, var = gig_moments(-0.5, 1.0, 1.0)
        assert abs(mean - 1.0) < 1e-12
        assert abs(z_mean(draws, mean, var)) < 4
        assert abs(z_var(draws, var)) < 4

    def test_exponential_limit(self, rng):
        draws = sample_gig((np.full(N, 1.0), 1e-30, 2.0), rng)
        assert abs(z_mean(draws, 1.0, 1.0)) < 4

    def test_positive_support(self, rng):
        draws = sample_gig((np.full(5000, -1.4), 2.0, 1.2), rng)
        assert np.all(draws > 0)

    @pytest.mark.parametrize("lam,chi,psi", [
        (-1.4, 2.0, 1.2), (0.1, 4.0, 0.36), (3.5, 0.2, 8.0),
        (-40.0, 90.0, 1.0), (0.0, 1.0, 1.0),
    ])
    def test_bessel_moments(self, lam, chi, psi, rng):
        draws = sample_gig((np.full(N, lam), chi, psi), rng)
        mean, var = gig_moments(lam, chi, psi)
        assert abs(z_mean(draws, mean, var)) < 4
        assert abs(z_var(draws, var)) < 4

    def test_density_shape_by_quadrature(self, rng):
        # distribution function check against the unnormalized density
        lam, chi, psi = -1.4, 2.0, 1.2
        draws = sample_gig((np.full(40_000, lam), chi, psi), rng)

        def dens(x):
            return x ** (lam - 1.0) * np.exp(-0.5 * (chi / x + psi * x))

        norm, _ = integrate.quad(dens, 1e-9, 60.0)
        for q in (0.5, 1.0, 2.0):
            cdf, _ = integrate.quad(dens, 1e-9, q)
            emp = np.mean(draws <= q)
            assert abs(emp - cdf / norm) < 4 * np.sqrt(0.25 / draws.size) + 1e-3

    def test_invalid_regions_raise(self, rng):
        with pytest.raises(ValueError):
            sample_gig(GigParams(1.0, 1.0, 0.0), rng)   # lam>0 needs psi>0
        with pytest.raises(ValueError):
            sample_gig(GigParams(-1.0, 0.0, 1.0), rng)  # lam<0 needs chi>0
        with pytest.raises(ValueError):
            sample_gig(GigParams(0.0, 0.0, 0.0), rng)

    def test_reproducibility(self):
        a = sample_gig((0.1, 2.0, 1.2), RngHandle(9), size=5)
        b = sample_gig((0.1, 2.0, 1.2), RngHandle(9), size=5)
        assert np.array_equal(a, b)


class TestSkewNormal:
    def test_zero_shape_is_gaussian(self, rng):
        scale = np.array([[1.0, 0.3], [0.3, 0.8]])
        draws = sample_skew_normal(np.array([0.5, -0.5]), scale,
                                   np.zeros(2), rng, size=N)
        assert abs(z_mean(draws[:, 0], 0.5, 1.0)) < 4
        assert abs(z_mean(draws[:, 1], -0.5, 0.8)) < 4
        assert abs(z_var(draws[:, 0], 1.0)) < 4
        assert abs(z_var(draws[:, 1], 0.8)) < 4
        cov01 = np.cov(draws.T)[0, 1]
        assert abs(cov01 - 0.3) < 0.02

    def test_univariate_skewness(self, rng):
        draws = sample_skew_normal([0.0], [[1.0]], [5.0], rng, size=N)[:, 0]
        centered = draws - draws.mean()
        skew = np.mean(centered ** 3) / np.mean(centered ** 2) ** 1.5
        # analytic skewness of the shape-5 unit skew normal is about 0.851
        assert skew > 0.5

    def test_reproducibility(self):
        a = sample_skew_normal(np.zeros(2), np.eye(2), np.ones(2),
                               RngHandle(2), size=3)
        b = sample_skew_normal(np.zeros(2), np.eye(2), np.ones(2),
                               RngHandle(2), size=3)
        assert np.array_equal(a, b)


class TestStudentT:
    def test_covariance_parameterization(self, rng):
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        draws = sample_mvt(np.zeros(2), cov, 5.0, rng, size=N)
        emp = np.cov(draws.T)
        assert np.all(np.abs(emp - cov) < 0.15)

    def test_three_dof_heavy_tails(self, rng):
        draws = sample_mvt(np.zeros(2), np.eye(2), 3.0, rng, size=N)[:, 0]
        trimmed = draws[np.abs(draws) < 50]
        centered = trimmed - trimmed.mean()
        kurt = np.mean(centered ** 4) / np.mean(centered ** 2) ** 2 - 3.0
        assert kurt > 1.0

    def test_low_dof_raises(self, rng):
        with pytest.raises(ValueError):
            sample_mvt(np.zeros(2), np.eye(2), 2.0, rng)


class TestPlumbing:
    def test_gamma_rate_convention(self, rng):
        draws = sample_gamma(2.0, 4.0, rng, size=N)
        assert abs(z_mean(draws, 0.5, 0.125)) < 4
        assert abs(z_var(draws, 0.125)) < 4

    def test_inv_gamma_mean(self, rng):
        draws = sample_inv_gamma(5.0, 8.0, rng, size=N)
        # mean b/(a-1) = 2, variance b^2/((a-1)^2 (a-2)) = 4/3
        assert abs(z_mean(draws, 2.0, 4.0 / 3.0)) < 4

    def test_beta_uniform_normal(self, rng):
        b = sample_beta(2.0, 3.0, rng, size=N)
        assert abs(z_mean(b, 0.4)) < 4
        u = sample_uniform(1.0, 3.0, rng, size=N)
        assert abs(z_mean(u, 2.0)) < 4
        nn = sample_normal(-1.0, 2.0, rng, size=N)
        assert abs(z_mean(nn, -1.0, 4.0)) < 4


class TestDensities:
    def test_standard_normal_at_zero(self):
        assert mvn_logpdf([0.0], [0.0], [[1.0]]) == pytest.approx(
            -0.5 * np.log(2 * np.pi))

    def test_integrates_to_one(self):
        xs = np.linspace(-12, 12, 4001)
        vals = np.exp([mvn_logpdf([x], [0.3], [[1.7]]) for x in xs])
        total = np.trapezoid(vals, xs)
        assert abs(total - 1.0) < 1e-3
