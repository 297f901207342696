import os

import numpy as np
import pytest

from bvardpm.dgp import DgpSpec, simulate_dataset
from bvardpm.geweke import geweke_joint_test
from bvardpm.mcmc import DrawStore, GibbsSampler, SweepPlan, run_sweeps
from bvardpm.model import ModelConfig
from bvardpm.priors import PriorConfig, default_priors
from bvardpm.rng import RngHandle

from conftest import make_ar1_panel


class TestSweepPlan:
    def test_retained_count_formula(self):
        assert SweepPlan(20_000, 10_000, 1).n_retained == 10_000
        assert SweepPlan(200, 80, 3).n_retained == 40
        assert SweepPlan(101, 1, 10).n_retained == 10

    def test_validation(self):
        with pytest.raises(ValueError):
            SweepPlan(0, 0)
        with pytest.raises(ValueError):
            SweepPlan(10, 10)
        with pytest.raises(ValueError):
            SweepPlan(10, 2, 0)


class TestRunSweeps:
    def test_retained_draw_count(self):
        y = make_ar1_panel(60, 2, seed=1)
        store = run_sweeps(y, ModelConfig(m=2, p=1), None,
                           SweepPlan(50, 20, 2), RngHandle(3))
        assert store.n_retained == 15
        assert store.a.shape == (15, 2, 2)

    def test_gaussian_data_selects_one_cluster(self):
        # high enough dimension that spurious near-clone components cannot
        # credibly match the fitted one, so the posterior sits at one regime
        spec = DgpSpec(m=8, t_obs=250, shock_kind="homoskedastic")
        data, _ = simulate_dataset(spec, RngHandle(5))
        store = run_sweeps(data, ModelConfig(m=8, p=2), None,
                           SweepPlan(700, 300), RngHandle(6))
        assert np.median(store.effective_clusters()) == 1

    def test_two_regime_mixture_recovers_two_clusters(self):
        gen = np.random.default_rng(7)
        t_obs, m = 220, 2
        regimes = gen.random(t_obs) < 0.5
        mu = np.where(regimes[:, None], 2.0, -2.0)  # ~5.7 noise sds apart
        values = np.zeros((t_obs, m))
        prev = np.zeros(m)
        for t in range(t_obs):
            prev = 0.3 * prev + mu[t] + gen.normal(0, 0.7, m)
            values[t] = prev
        store = run_sweeps(values, ModelConfig(m=m, p=1), None,
                           SweepPlan(900, 400), RngHandle(8))
        assert np.median(store.effective_clusters()) == 2

    def test_counts_partition_sample(self):
        y = make_ar1_panel(90, 2, seed=9)
        sampler = GibbsSampler(y, ModelConfig(m=2, p=1), None, RngHandle(10))
        for _ in range(25):
            sampler.sweep()
            assert sampler.state.counts.sum() == sampler.t_eff

    def test_error_reports_sweep_index(self):
        y = make_ar1_panel(40, 2, seed=11)
        sampler = GibbsSampler(y, ModelConfig(m=2, p=1, j_cap=2,
                                              adaptive_truncation=True),
                               None, RngHandle(12))
        with pytest.raises(Exception, match="sweep"):
            sampler.run(SweepPlan(60, 10))


class TestDrawStore:
    def test_save_load_roundtrip(self, tmp_path):
        y = make_ar1_panel(70, 2, seed=13)
        store = run_sweeps(y, ModelConfig(m=2, p=1), None,
                           SweepPlan(40, 10), RngHandle(14))
        path = os.path.join(tmp_path, "draws")
        store.meta["seed"] = 14
        store.save(path)
        loaded = DrawStore.load(path)
        assert loaded.n_retained == store.n_retained
        assert np.array_equal(loaded.a, store.a)
        assert np.allclose(loaded.eta, store.eta)
        assert loaded.meta["seed"] == 14

    def test_draw_accessor_strips_padding(self):
        y = make_ar1_panel(70, 2, seed=15)
        store = run_sweeps(y, ModelConfig(m=2, p=1), None,
                           SweepPlan(40, 10), RngHandle(16))
        for i in (0, store.n_retained - 1):
            d = store.draw(i)
            assert d.mu.shape[0] == store.n_comp[i]
            assert np.all(np.isfinite(d.sigma))
            assert d.eta.sum() <= 1.0 + 1e-9
            assert np.allclose(d.chol @ np.transpose(d.chol, (0, 2, 1)),
                               d.sigma, atol=1e-10)

    def test_store_latents_flag(self):
        y = make_ar1_panel(70, 2, seed=17)
        store = run_sweeps(y, ModelConfig(m=2, p=1), None,
                           SweepPlan(30, 10, store_latents=True), RngHandle(18))
        assert store.log_omega is not None
        assert store.w.shape == (20, 69, 2)


class TestSvRun:
    def test_sv_model_runs_and_stores_params(self):
        y = make_ar1_panel(100, 2, seed=19)
        store = run_sweeps(y, ModelConfig(m=2, p=1, sv=True), None,
                           SweepPlan(120, 40), RngHandle(20))
        assert store.sv_rho.shape == (80, 2)
        assert np.all(np.abs(store.sv_rho) < 1.0)
        assert store.h_last is not None
        assert store.omega is None


class TestGewekeInterface:
    def test_zero_iterations_rejected(self):
        cfg = ModelConfig(m=2, p=1, j_cap=3, adaptive_truncation=False)
        prior = default_priors(2, sigma0_diag=np.ones(2))
        with pytest.raises(ValueError):
            geweke_joint_test(cfg, prior, 0, RngHandle(1))

    def test_needs_explicit_sigma0(self):
        cfg = ModelConfig(m=2, p=1, j_cap=3)
        with pytest.raises(ValueError, match="sigma0"):
            geweke_joint_test(cfg, default_priors(2), 10, RngHandle(1))

    def test_smoke_small_run(self):
        cfg = ModelConfig(m=2, p=1, j_cap=3, adaptive_truncation=False,
                          coef_prior="fixed", fixed_coef_var=0.04)
        prior = PriorConfig(c0=20.0, sigma0_diag=np.full(2, 20.0), c_b=0.6,
                            d_b=3.0, a_omega=3.0, b_omega=3.0, c_mu0=0.25)
        res = geweke_joint_test(cfg, prior, 400, RngHandle(2), t_obs=12)
        assert len(res.stat_names) == res.z_mean.shape[0]
        assert np.all(np.isfinite(res.z_mean))
        assert "alpha" in res.summary()
