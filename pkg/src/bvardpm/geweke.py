"""Joint-distribution validation of the Gibbs sampler.

Two simulators target the same joint distribution of (parameters, latents,
data): the marginal-conditional simulator draws parameters from the prior
and data from the model, independently each iteration; the
successive-conditional simulator alternates one full Gibbs sweep with a
fresh data draw given the current state.  If every conditional update is
correct, both produce the same distribution for any statistic, so
standardized differences of moments should look like standard normals.
A broken conditional (e.g. mis-counted Wishart degrees of freedom) shows
up as large z-scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mcmc import GibbsSampler, log_beta_pair
from .model import ModelConfig, stick_weights
from .priors import PriorConfig
from .rng import as_generator

__all__ = ["GewekeResult", "geweke_joint_test"]


@dataclass
class GewekeResult:
    stat_names: list[str]
    z_mean: np.ndarray
    z_var: np.ndarray
    mc_mean: np.ndarray
    sc_mean: np.ndarray
    n: int

    @property
    def max_abs_z(self) -> float:
        return float(max(np.max(np.abs(self.z_mean)), np.max(np.abs(self.z_var))))

    def summary(self) -> str:
        lines = [f"{'statistic':<14}{'z(mean)':>10}{'z(var)':>10}"]
        for i, name in enumerate(self.stat_names):
            lines.append(f"{name:<14}{self.z_mean[i]:>10.2f}{self.z_var[i]:>10.2f}")
        lines.append(f"max |z| = {self.max_abs_z:.2f} over n = {self.n}")
        return "\n".join(lines)


def _lazy_stick_assignment(gen, alpha, t):
    """Draw indicators from the untruncated stick-breaking prior, extending
    sticks only as far as the largest assignment requires."""
    targets = gen.random(t)
    nus, log1ms = [], []
    delta = np.full(t, -1, dtype=np.int64)
    cum = 0.0
    log_remain = 0.0
    for j in range(100_000):
        nu_j, log1m_j = log_beta_pair(gen, np.ones(1), np.array([alpha]))
        nus.append(nu_j[0])
        log1ms.append(log1m_j[0])
        eta_j = nu_j[0] * np.exp(log_remain)
        hit = (delta < 0) & (targets < cum + eta_j)
        delta[hit] = j
        cum += eta_j
        log_remain += log1m_j[0]
        if np.all(delta >= 0):
            break
    else:  # pragma: no cover
        raise RuntimeError("stick-breaking assignment failed to terminate")
    return delta, np.asarray(nus), np.asarray(log1ms)


def _draw_prior_state(sampler: GibbsSampler) -> None:
    """Overwrite the sampler state with an exact prior draw.

    Under fixed truncation the full j_cap-component state is drawn; under
    adaptive truncation sticks and components are instantiated lazily up to
    the highest occupied label, matching the sampler's trimmed state.
    """
    cfg, prior, gen = sampler.cfg, sampler.prior, sampler.gen
    st = sampler.state
    m, t = cfg.m, sampler.t_eff

    st.alpha = gen.gamma(prior.alpha_shape, 1.0 / prior.alpha_rate)
    if cfg.adaptive_truncation:
        delta, nu, log1m = _lazy_stick_assignment(gen, st.alpha, t)
        st.delta = delta
        zeta = sampler._zeta(int(delta.max()) + 1)
        st.slice_u = gen.uniform(0.0, zeta[delta])
        if cfg.hierarchy_scope == "live":
            j = int(delta.max()) + 1
        else:
            # the persistent window under the truncation rule
            j = max(sampler.required_truncation(float(st.slice_u.min())),
                    int(delta.max()) + 1)
        if j > nu.shape[0]:
            extra_nu, extra_log1m = log_beta_pair(
                gen, np.ones(j - nu.shape[0]),
                np.full(j - nu.shape[0], st.alpha))
            nu = np.concatenate((nu, extra_nu))
            log1m = np.concatenate((log1m, extra_log1m))
        else:
            nu = nu[:j]
            log1m = log1m[:j]
    else:
        j = cfg.j_cap
        nu, log1m = log_beta_pair(gen, np.ones(j), np.full(j, st.alpha))
        nu[-1] = 1.0
        log1m[-1] = -np.inf
    st.nu = nu
    st.log1m_nu = log1m
    st.eta = stick_weights(nu, log1m)
    st.b = gen.gamma(prior.c_b, 1.0 / prior.d_b, size=m)
    st.mu0 = gen.standard_normal(m) / np.sqrt(prior.c_mu0)
    mu, sigma, chol = sampler._prior_component(j, st.mu0, st.b)
    st.comp_mu, st.comp_sigma, st.comp_chol = mu, sigma, chol
    if not cfg.adaptive_truncation:
        st.delta = np.searchsorted(np.cumsum(st.eta),
                                   gen.random(t)).astype(np.int64)
    zeta = sampler._zeta(j)
    st.slice_u = gen.uniform(0.0, zeta[st.delta])
    st.w = gen.standard_normal((t, m))
    if cfg.coef_prior == "normal-gamma":
        st.coef_lam2 = gen.gamma(prior.ng_hyper_shape,
                                 1.0 / prior.ng_hyper_rate, size=m)
        rate = prior.ng_theta * st.coef_lam2 / 2.0
        st.coef_v = gen.gamma(prior.ng_theta, 1.0 / rate[:, None],
                              size=(m, cfg.k))
        st.a = np.sqrt(st.coef_v) * gen.standard_normal((m, cfg.k))
    else:
        st.a = np.sqrt(cfg.fixed_coef_var) * gen.standard_normal((m, cfg.k))
    if not cfg.sv:
        omega = prior.b_omega / gen.gamma(prior.a_omega, size=m)
        st.log_omega = np.tile(np.log(omega), (t, 1))
    else:
        st.sv_mu = prior.sv_mu_mean + np.sqrt(prior.sv_mu_var) * gen.standard_normal(m)
        st.sv_rho = 2.0 * gen.beta(prior.sv_rho_a, prior.sv_rho_b, size=m) - 1.0
        st.sv_sig2 = gen.gamma(prior.sv_sig2_shape, 1.0 / prior.sv_sig2_rate, size=m)
        h = np.empty((t, m))
        h[0] = st.sv_mu + np.sqrt(st.sv_sig2 / (1 - st.sv_rho ** 2)) \
            * gen.standard_normal(m)
        sd = np.sqrt(st.sv_sig2)
        for s in range(1, t):
            h[s] = (st.sv_mu + st.sv_rho * (h[s - 1] - st.sv_mu)
                    + sd * gen.standard_normal(m))
        st.log_omega = h
    sampler._refresh_ax()


def _simulate_data(sampler: GibbsSampler, presample: np.ndarray) -> np.ndarray:
    """Fresh y | state with the fixed presample rows, simulated recursively."""
    cfg, gen = sampler.cfg, sampler.gen
    st = sampler.state
    t_eff, m, p = sampler.t_eff, cfg.m, cfg.p
    values = np.empty((p + t_eff, m))
    values[:p] = presample
    sd = np.exp(0.5 * st.log_omega)
    qw = np.empty((t_eff, m))
    for j in np.unique(st.delta):
        mask = st.delta == j
        qw[mask] = st.w[mask] @ st.comp_chol[j].T
    shocks = st.comp_mu[st.delta] + qw + sd * gen.standard_normal((t_eff, m))
    a = st.a
    for s in range(t_eff):
        row = p + s
        x = values[row - p: row][::-1].ravel()
        values[row] = a @ x + shocks[s]
    return values


def _stats(sampler: GibbsSampler) -> np.ndarray:
    st = sampler.state
    return np.concatenate((
        st.a.ravel(),
        [st.alpha],
        st.b,
        [st.eta[0]],
        [np.trace(st.comp_sigma[0])],
    ))


def _stat_names(cfg: ModelConfig) -> list[str]:
    names = [f"a[{i},{j}]" for i in range(cfg.m) for j in range(cfg.k)]
    names += ["alpha"] + [f"b[{i}]" for i in range(cfg.m)] + ["eta1", "trSigma1"]
    return names


def _long_run_variance(x: np.ndarray, lags: int) -> np.ndarray:
    """Newey-West long-run variance of each column's mean estimator."""
    n = x.shape[0]
    centered = x - x.mean(axis=0)
    gamma0 = np.mean(centered * centered, axis=0)
    total = gamma0.copy()
    for lag in range(1, min(lags, n - 1) + 1):
        weight = 1.0 - lag / (lags + 1.0)
        cov = np.mean(centered[:-lag] * centered[lag:], axis=0)
        total += 2.0 * weight * cov
    return np.maximum(total, 1e-300) / n


def geweke_joint_test(model_cfg: ModelConfig, prior_cfg: PriorConfig, n: int,
                      rng=0, t_obs: int = 30, break_sigma_df: bool = False,
                      nw_lags: int | None = None,
                      progress: bool = False) -> GewekeResult:
    """Compare marginal-conditional and successive-conditional simulators.

    Runs both simulators for ``n`` iterations on a synthetic configuration
    with ``t_obs`` total observations (presample fixed at zero) and returns
    z-scores for the means and second moments of the tracked statistics:
    the VAR coefficients, the concentration, the shrinkage scales, the
    first mixture weight and the trace of the first component covariance.

    ``break_sigma_df=True`` runs the successive-conditional sampler with a
    deliberately mis-counted Wishart posterior df so callers can verify the
    harness detects a real bug.
    """
    if n <= 0:
        raise ValueError("n must be a positive number of iterations")
    if prior_cfg.sigma0_diag is None:
        raise ValueError("geweke harness needs an explicit sigma0_diag")
    cfg = model_cfg
    gen = as_generator(rng)
    presample = np.zeros((cfg.p, cfg.m))
    dummy = 0.1 * np.arange(t_obs * cfg.m, dtype=float).reshape(t_obs, cfg.m)

    sampler_mc = GibbsSampler(dummy, cfg, prior_cfg, gen)
    stats_mc = np.empty((n, len(_stat_names(cfg))))
    for i in range(n):
        _draw_prior_state(sampler_mc)
        stats_mc[i] = _stats(sampler_mc)

    df_mode = "halved" if break_sigma_df else "correct"
    sampler_sc = GibbsSampler(dummy, cfg, prior_cfg, gen, df_mode=df_mode)
    _draw_prior_state(sampler_sc)
    values = _simulate_data(sampler_sc, presample)
    sampler_sc.set_data(values)
    stats_sc = np.empty_like(stats_mc)
    for i in range(n):
        sampler_sc.sweep()
        values = _simulate_data(sampler_sc, presample)
        sampler_sc.set_data(values)
        stats_sc[i] = _stats(sampler_sc)
        if progress and (i + 1) % 20000 == 0:
            print(f"  successive-conditional iteration {i + 1}", flush=True)

    if nw_lags is None:
        nw_lags = min(300, max(50, int(5 * n ** (1.0 / 3.0))))
    z_out = []
    for mc, sc in ((stats_mc, stats_sc), (stats_mc ** 2, stats_sc ** 2)):
        var_mc = mc.var(axis=0) / n
        var_sc = _long_run_variance(sc, nw_lags)
        z = (mc.mean(axis=0) - sc.mean(axis=0)) / np.sqrt(var_mc + var_sc)
        z_out.append(z)
    return GewekeResult(
        stat_names=_stat_names(cfg),
        z_mean=z_out[0],
        z_var=z_out[1],
        mc_mean=stats_mc.mean(axis=0),
        sc_mean=stats_sc.mean(axis=0),
        n=n,
    )
