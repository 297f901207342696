import numpy as np
import pytest

from bvardpm.model import (
    Dataset,
    MixtureComponent,
    ModelConfig,
    assemble_covariance,
    build_lag_matrix,
    log_component_density,
    residuals,
    stick_weights,
)


class TestDataset:
    def test_rejects_missing_values(self):
        values = np.ones((5, 2))
        values[3, 1] = np.nan
        with pytest.raises(ValueError, match="row 3"):
            Dataset(values, ["a", "b"])

    def test_select_reorders(self):
        ds = Dataset(np.arange(6.0).reshape(3, 2), ["a", "b"])
        sub = ds.select(["b", "a"])
        assert sub.names == ["b", "a"]
        assert np.array_equal(sub.values[:, 0], ds.values[:, 1])


class TestLagMatrix:
    def test_univariate_single_lag(self):
        x = build_lag_matrix(np.array([[1.0], [2.0], [3.0]]), 1)
        assert np.array_equal(x, [[1.0], [2.0]])

    def test_shape_two_lags(self):
        x = build_lag_matrix(np.arange(10.0).reshape(5, 2), 2)
        assert x.shape == (3, 4)

    def test_constant_series(self):
        x = build_lag_matrix(np.full((6, 2), 3.0), 2)
        assert np.all(x == 3.0)

    def test_lag_ordering(self):
        values = np.arange(8.0).reshape(4, 2)
        x = build_lag_matrix(values, 2)
        # row for t=2 holds (y_1, y_0)
        assert np.array_equal(x[0], [2.0, 3.0, 0.0, 1.0])

    def test_too_short_raises(self):
        with pytest.raises(ValueError):
            build_lag_matrix(np.ones((2, 1)), 2)


def _toy_state(small_sampler):
    return small_sampler.state


class TestResiduals:
    def test_zero_model_returns_data(self, small_sampler):
        st = small_sampler.state
        saved = st.a.copy()
        st.a = np.zeros_like(st.a)
        try:
            r = residuals(st, small_sampler.y, small_sampler.x, "mixture")
            assert np.allclose(r, small_sampler.y)
        finally:
            st.a = saved

    def test_flavor_identity(self, small_sampler):
        st = small_sampler.state
        mix = residuals(st, small_sampler.y, small_sampler.x, "mixture")
        idio = residuals(st, small_sampler.y, small_sampler.x, "idiosyncratic")
        coef = residuals(st, small_sampler.y, small_sampler.x, "coefficient")
        qw = mix - st.comp_mu[st.delta] - idio
        assert np.allclose(mix, idio + st.comp_mu[st.delta] + qw)
        assert np.allclose(coef, mix - qw)

    def test_plant_and_recover_idiosyncratic(self):
        # build data exactly from a state and check the residual returns
        # the planted idiosyncratic shocks
        gen = np.random.default_rng(5)
        t_eff, m, p = 40, 2, 1
        values = np.zeros((t_eff + p, m))
        a = np.array([[0.5, 0.1], [0.0, 0.4]])
        mu = np.array([[0.3, -0.2]])
        chol = np.linalg.cholesky(np.array([[0.5, 0.1], [0.1, 0.4]]))
        w = gen.normal(size=(t_eff, m))
        v = gen.normal(size=(t_eff, m)) * 0.1
        for s in range(t_eff):
            x = values[s + p - 1]
            values[s + p] = mu[0] + a @ x + chol @ w[s] + v[s]
        from bvardpm.mcmc import GibbsSampler
        from bvardpm.model import ModelConfig
        sampler = GibbsSampler(values, ModelConfig(m=2, p=1, j_cap=1,
                                                   adaptive_truncation=False))
        st = sampler.state
        st.a = a
        st.comp_mu[0] = mu[0]
        st.comp_chol[0] = chol
        st.comp_sigma[0] = chol @ chol.T
        st.w = w
        got = residuals(st, sampler.y, sampler.x, "idiosyncratic")
        assert np.allclose(got, v, atol=1e-12)

    def test_dimension_mismatch(self, small_sampler):
        with pytest.raises(ValueError):
            residuals(small_sampler.state, small_sampler.y,
                      small_sampler.x[:, :1])


class TestCovariance:
    def test_zero_omega(self, small_sampler):
        st = small_sampler.state
        saved = st.log_omega.copy()
        st.log_omega = np.full_like(st.log_omega, -745.0)
        try:
            view = assemble_covariance(st, 3)
            assert np.allclose(view.xi, st.comp_sigma[st.delta[3]], atol=1e-12)
        finally:
            st.log_omega = saved

    def test_identity_plus_identity(self, small_sampler):
        st = small_sampler.state
        saved = (st.comp_sigma.copy(), st.log_omega.copy())
        st.comp_sigma[st.delta[0]] = np.eye(2)
        st.log_omega = np.zeros_like(st.log_omega)
        try:
            view = assemble_covariance(st, 0)
            assert np.allclose(view.xi, 2.0 * np.eye(2))
        finally:
            st.comp_sigma, st.log_omega = saved

    def test_diagonal_identity(self, small_sampler):
        st = small_sampler.state
        for t in (0, 5, 11):
            view = assemble_covariance(st, t)
            j = st.delta[t]
            diag = np.diag(view.xi)
            expect = np.diag(st.comp_sigma[j]) + st.omega(t)
            assert np.allclose(diag, expect)
            assert np.all(np.linalg.eigvalsh(view.xi) > 0)


class TestComponentDensity:
    def test_standard_normal_at_mode(self):
        comp = MixtureComponent(np.zeros(1), np.eye(1), np.eye(1))
        val = log_component_density([0.0], comp, [0.0])
        assert val == pytest.approx(-0.5 * np.log(2 * np.pi))

    def test_quadrature_normalization(self):
        comp = MixtureComponent(np.array([0.4]), np.array([[0.9]]),
                                np.array([[np.sqrt(0.9)]]))
        xs = np.linspace(-12, 12, 4001)
        vals = np.exp([log_component_density([x], comp, [0.3]) for x in xs])
        assert abs(np.trapezoid(vals, xs) - 1.0) < 1e-3

    def test_translation_invariance(self):
        sigma = np.array([[1.0, 0.2], [0.2, 0.7]])
        comp_a = MixtureComponent(np.array([0.0, 0.0]), sigma,
                                  np.linalg.cholesky(sigma))
        comp_b = MixtureComponent(np.array([1.5, -2.0]), sigma,
                                  np.linalg.cholesky(sigma))
        y = np.array([0.3, 0.4])
        assert log_component_density(y, comp_a) == pytest.approx(
            log_component_density(y + np.array([1.5, -2.0]), comp_b))


class TestSticks:
    def test_halving_sticks(self):
        eta = stick_weights(np.array([0.5, 0.5, 0.5]))
        assert np.allclose(eta, [0.5, 0.25, 0.125])

    def test_partial_sums_below_one(self):
        gen = np.random.default_rng(0)
        for _ in range(200):
            nu = gen.beta(1.0, 0.5, size=12)
            eta = stick_weights(nu)
            assert np.all(eta >= 0)
            assert np.all(np.cumsum(eta) < 1.0 + 1e-12)

    def test_log_space_matches(self):
        nu = np.array([0.3, 0.9, 0.2])
        log1m = np.log1p(-nu)
        assert np.allclose(stick_weights(nu, log1m), stick_weights(nu))


class TestModelConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(m=0)
        with pytest.raises(ValueError):
            ModelConfig(m=2, slice_w=1.2)
        with pytest.raises(ValueError):
            ModelConfig(m=2, j_cap=0)
        cfg = ModelConfig(m=3, p=4)
        assert cfg.k == 12
