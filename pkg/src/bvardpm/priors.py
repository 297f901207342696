"""Prior configuration and data-based hyperparameter construction."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .model import Dataset

__all__ = ["PriorConfig", "default_priors", "estimate_sigma0",
           "new_cluster_prior_prob"]


@dataclass
class PriorConfig:
    """All prior hyperparameters.

    Gamma distributions are parameterized by (shape, rate) with mean
    shape/rate throughout.  The Wishart prior on each component precision
    has degrees of freedom ``c0`` and prior mean ``c0 * Sigma0^{-1}``, where
    ``Sigma0 = diag(sigma0_diag)`` is by default filled with per-series
    AR(p) residual variances at estimation time (``sigma0_diag=None``).
    """

    # Normal-Gamma shrinkage on the component-mean deviations
    c_b: float = 0.6
    d_b: float = 0.6
    # common-location prior precision scale: mu0 ~ N(0, I / c_mu0)
    c_mu0: float = 1e-3
    # Wishart prior on component precisions
    c0: float = 7.0
    sigma0_diag: np.ndarray | None = None
    # DP concentration alpha ~ Gamma(shape, rate)
    alpha_shape: float = 2.0
    alpha_rate: float = 4.0
    # log-volatility AR(1) parameters (per equation)
    sv_mu_mean: float = 0.0
    sv_mu_var: float = 10.0
    sv_rho_a: float = 25.0
    sv_rho_b: float = 5.0
    sv_sig2_shape: float = 0.5
    sv_sig2_rate: float = 0.5
    # homoskedastic idiosyncratic variances, omega_i ~ InvGamma(a, b)
    a_omega: float = 1e-3
    b_omega: float = 1e-3
    # Normal-Gamma prior on VAR coefficients:
    # a ~ N(0, v), v ~ Gamma(theta, theta * lam2_i / 2),
    # lam2_i ~ Gamma(ng_hyper_shape, ng_hyper_rate) per equation
    ng_theta: float = 0.6
    ng_hyper_shape: float = 0.01
    ng_hyper_rate: float = 0.01

    def __post_init__(self):
        for name in ("c_b", "d_b", "c_mu0", "c0", "alpha_shape", "alpha_rate",
                     "sv_mu_var", "sv_rho_a", "sv_rho_b", "sv_sig2_shape",
                     "sv_sig2_rate", "a_omega", "b_omega", "ng_theta",
                     "ng_hyper_shape", "ng_hyper_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.sigma0_diag is not None:
            self.sigma0_diag = np.asarray(self.sigma0_diag, dtype=float)
            if np.any(self.sigma0_diag <= 0):
                raise ValueError("sigma0_diag entries must be strictly positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["sigma0_diag"] is not None:
            d["sigma0_diag"] = list(map(float, d["sigma0_diag"]))
        return d


def default_priors(m: int, **overrides) -> PriorConfig:
    """Default hyperparameters for an M-variable model.

    The Wishart degrees of freedom scale with the dimension as
    ``c0 = 2 * (2.5 + (M - 1) / 2)``, which keeps the prior proper
    (c0 > M - 1) for every M.  Keyword overrides replace individual fields.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    cfg = dict(c0=2.0 * (2.5 + (m - 1) / 2.0))
    cfg.update(overrides)
    return PriorConfig(**cfg)


def estimate_sigma0(data, p: int) -> np.ndarray:
    """Per-series AR(p) OLS residual variances for the Wishart scale.

    Each series is regressed on an intercept and its own p lags; the
    residual variance (denominator T - p - (p + 1)) seeds Sigma0.
    """
    values = data.values if isinstance(data, Dataset) else np.asarray(data, float)
    names = data.names if isinstance(data, Dataset) else None
    t_all, m = values.shape
    if t_all <= 2 * p + 1:
        raise ValueError(f"need more than {2 * p + 1} observations for AR({p})")
    out = np.empty(m)
    for j in range(m):
        y = values[p:, j]
        x = np.column_stack([np.ones(t_all - p)]
                            + [values[p - lag: t_all - lag, j] for lag in range(1, p + 1)])
        xtx = x.T @ x
        if np.linalg.matrix_rank(xtx) < x.shape[1]:
            label = names[j] if names else f"series {j}"
            raise ValueError(f"AR({p}) design for {label} is rank deficient")
        beta = np.linalg.solve(xtx, x.T @ y)
        resid = y - x @ beta
        dof = max(len(y) - x.shape[1], 1)
        out[j] = resid @ resid / dof
    return out


def new_cluster_prior_prob(alpha: float, t: int) -> float:
    """Prior probability that one observation opens a new mixture cluster,
    alpha / (T - 1 + alpha); decreasing in T."""
    if t < 1:
        raise ValueError("T must be at least 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return alpha / (t - 1 + alpha)
