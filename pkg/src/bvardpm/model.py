"""Core model types and residual algebra.

The model is a VAR whose reduced-form shock is the sum of two pieces: a
mixture-distributed random effect ``mu[delta_t] + Q[delta_t] w_t`` that is
correlated across equations, and an idiosyncratic Gaussian term ``v_t`` with
diagonal (possibly time-varying) covariance.  Conditional on the random
effects the equations decouple, which is what makes equation-by-equation
estimation possible; marginally the shock covariance at time t is
``Sigma[delta_t] + Omega_t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import mvn_logpdf_chol, spd_cholesky

__all__ = [
    "Dataset",
    "ModelConfig",
    "MixtureComponent",
    "SamplerState",
    "CovarianceView",
    "build_lag_matrix",
    "residuals",
    "assemble_covariance",
    "log_component_density",
    "stick_weights",
    "log_stick_weights",
]


@dataclass
class Dataset:
    """A fully observed T x M panel with variable names.

    `values[t, j]` is the observation of variable `names[j]` at time t.
    """

    values: np.ndarray
    names: list[str]
    frequency: str = "Q"
    dates: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be a T x M matrix")
        if not np.all(np.isfinite(self.values)):
            t, j = np.argwhere(~np.isfinite(self.values))[0]
            raise ValueError(
                f"missing or non-finite value for '{self.names[j]}' at row {t}"
            )
        if len(self.names) != self.values.shape[1]:
            raise ValueError("names must match the number of columns")
        if self.dates is not None and len(self.dates) != self.values.shape[0]:
            raise ValueError("dates must match the number of rows")

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def select(self, names: list[str]) -> "Dataset":
        """Column subset / reordering by variable name."""
        idx = [self.names.index(n) for n in names]
        return Dataset(self.values[:, idx], list(names), self.frequency, self.dates)


@dataclass
class ModelConfig:
    """Model structure and sampler-facing switches.

    ``j_cap`` caps the mixture truncation.  With ``adaptive_truncation`` the
    slice sampler grows the number of instantiated components as required
    (erroring if the cap is hit); without it the model is a fixed
    ``j_cap``-component truncation with the last stick pinned at one, which
    is also how a pure Gaussian model (``j_cap=1``) is expressed.
    """

    m: int
    p: int = 1
    sv: bool = False
    j_cap: int = 150
    slice_w: float = 0.8
    adaptive_truncation: bool = True
    indicator_density: str = "conditional"  # or "marginal"
    coef_prior: str = "normal-gamma"        # or "fixed"
    fixed_coef_var: float = 10.0
    # which component means inform the common location and shrinkage scales:
    # "instantiated" conditions on every component in the truncation window
    # (keeps the shrinkage scales prior-sized so far-away clusters can open),
    # "live" conditions on occupied components only (shrinks harder toward
    # one regime but can lock out distant regime means)
    hierarchy_scope: str = "instantiated"

    def __post_init__(self):
        if self.m < 1 or self.p < 1:
            raise ValueError("m and p must be at least 1")
        if self.j_cap < 1:
            raise ValueError("j_cap must be at least 1")
        if not 0.0 < self.slice_w < 1.0:
            raise ValueError("slice_w must lie in (0, 1)")
        if self.indicator_density not in ("conditional", "marginal"):
            raise ValueError("indicator_density must be 'conditional' or 'marginal'")
        if self.coef_prior not in ("normal-gamma", "fixed"):
            raise ValueError("coef_prior must be 'normal-gamma' or 'fixed'")
        if self.hierarchy_scope not in ("instantiated", "live"):
            raise ValueError("hierarchy_scope must be 'instantiated' or 'live'")

    @property
    def k(self) -> int:
        """Number of lagged regressors per equation."""
        return self.m * self.p


@dataclass
class MixtureComponent:
    """One Gaussian mixture component: mean, covariance, its lower Cholesky
    factor and the current number of observations assigned to it."""

    mu: np.ndarray
    sigma: np.ndarray
    chol_q: np.ndarray
    count: int = 0


@dataclass
class SamplerState:
    """Complete latent state of the sampler.

    Intercepts live in the component means ``comp_mu``; the coefficient
    matrix ``a`` has no intercept column.  ``w`` holds the standardized
    random effects, ``log_omega`` the log idiosyncratic variances (constant
    over time in the homoskedastic case).
    """

    a: np.ndarray                 # (M, K) VAR coefficients
    comp_mu: np.ndarray           # (J, M)
    comp_sigma: np.ndarray        # (J, M, M)
    comp_chol: np.ndarray         # (J, M, M) lower Cholesky factors
    nu: np.ndarray                # (J,) sticks
    log1m_nu: np.ndarray          # (J,) log(1 - nu), kept exact in log space
    eta: np.ndarray               # (J,) mixture weights
    alpha: float                  # DP concentration
    delta: np.ndarray             # (T,) component indicators
    slice_u: np.ndarray           # (T,) slice variables
    w: np.ndarray                 # (T, M) random effects
    b: np.ndarray                 # (M,) shrinkage scales, B0 = diag(b)
    mu0: np.ndarray               # (M,) common location
    log_omega: np.ndarray         # (T, M) log idiosyncratic variances
    sv_mu: np.ndarray | None = None     # (M,) SV unconditional means
    sv_rho: np.ndarray | None = None    # (M,) SV persistence
    sv_sig2: np.ndarray | None = None   # (M,) SV innovation variances
    coef_v: np.ndarray | None = None    # (M, K) local coefficient variances
    coef_lam2: np.ndarray | None = None  # (M,) equation-level shrinkage

    @property
    def n_comp(self) -> int:
        return self.comp_mu.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.delta, minlength=self.n_comp)

    @property
    def components(self) -> list[MixtureComponent]:
        cnt = self.counts
        return [
            MixtureComponent(self.comp_mu[j].copy(), self.comp_sigma[j].copy(),
                             self.comp_chol[j].copy(), int(cnt[j]))
            for j in range(self.n_comp)
        ]

    def omega(self, t: int | None = None) -> np.ndarray:
        """Idiosyncratic variances, either the full (T, M) panel or row t."""
        if t is None:
            return np.exp(self.log_omega)
        return np.exp(self.log_omega[t])


@dataclass
class CovarianceView:
    """Shock covariance at one time point: xi = Sigma[delta_t] + Omega_t."""

    xi: np.ndarray
    omega_diag: np.ndarray
    component: int = 0


def build_lag_matrix(data, p: int) -> np.ndarray:
    """Stack p lags of each variable: row t is (y'_{t-1}, ..., y'_{t-p}).

    Accepts a Dataset or a raw (T, M) array; returns the (T-p, K) design
    aligned with responses ``values[p:]``.
    """
    values = data.values if isinstance(data, Dataset) else np.asarray(data, float)
    t_all, m = values.shape
    if t_all <= p:
        raise ValueError(f"need more than p={p} observations, got {t_all}")
    cols = [values[p - lag: t_all - lag] for lag in range(1, p + 1)]
    return np.concatenate(cols, axis=1)


def residuals(state: SamplerState, responses: np.ndarray, lag_matrix: np.ndarray,
              flavor: str = "mixture") -> np.ndarray:
    """Residual panel of the requested flavor, (T_eff, M).

    - "mixture":        y - A X                       (feeds the mixture model)
    - "idiosyncratic":  y - A X - mu[delta] - Q w     (feeds the variance draws)
    - "coefficient":    y - A X - Q w                 (random effect removed)
    """
    responses = np.asarray(responses, dtype=float)
    if responses.shape[0] != lag_matrix.shape[0]:
        raise ValueError("responses and lag matrix must have matching rows")
    if lag_matrix.shape[1] != state.a.shape[1]:
        raise ValueError(
            f"lag matrix has {lag_matrix.shape[1]} columns but A expects "
            f"{state.a.shape[1]}"
        )
    base = responses - lag_matrix @ state.a.T
    if flavor == "mixture":
        return base
    qw = random_effect_contribution(state)
    if flavor == "coefficient":
        return base - qw
    if flavor == "idiosyncratic":
        return base - state.comp_mu[state.delta] - qw
    raise ValueError(f"unknown residual flavor '{flavor}'")


def random_effect_contribution(state: SamplerState) -> np.ndarray:
    """Q[delta_t] w_t for every t, computed cluster by cluster."""
    out = np.empty_like(state.w)
    for j in range(state.n_comp):
        mask = state.delta == j
        if mask.any():
            out[mask] = state.w[mask] @ state.comp_chol[j].T
    return out


def assemble_covariance(state: SamplerState, t: int) -> CovarianceView:
    """Shock covariance Sigma[delta_t] + Omega_t at time t."""
    j = int(state.delta[t])
    omega_diag = state.omega(t)
    xi = state.comp_sigma[j] + np.diag(omega_diag)
    return CovarianceView(xi=xi, omega_diag=omega_diag, component=j)


def log_component_density(y_resid, comp: MixtureComponent, omega_diag=None) -> float:
    """Gaussian log density of a residual under one mixture component.

    With ``omega_diag`` given, evaluates under Sigma_j + diag(omega), i.e.
    the idiosyncratic term integrated out; with ``omega_diag`` zero or
    omitted it conditions on the idiosyncratic shock (covariance Sigma_j).
    """
    y_resid = np.atleast_1d(np.asarray(y_resid, dtype=float))
    diff = y_resid - comp.mu
    if omega_diag is None or not np.any(omega_diag):
        chol = comp.chol_q
    else:
        chol = spd_cholesky(comp.sigma + np.diag(np.asarray(omega_diag, float)),
                            name="component covariance")
    return float(mvn_logpdf_chol(diff, chol))


def stick_weights(nu: np.ndarray, log1m_nu: np.ndarray | None = None) -> np.ndarray:
    """Stick-breaking weights: eta_j = nu_j * prod_{i<j} (1 - nu_i).

    Passing log(1 - nu) keeps tail weights accurate when sticks round to
    one in floating point.
    """
    nu = np.asarray(nu, dtype=float)
    if log1m_nu is None:
        remain = np.concatenate(([1.0], np.cumprod(1.0 - nu[:-1])))
    else:
        remain = np.exp(np.concatenate(([0.0], np.cumsum(log1m_nu[:-1]))))
    return nu * remain


def log_stick_weights(nu: np.ndarray, log1m_nu: np.ndarray) -> np.ndarray:
    """log eta computed fully in log space."""
    with np.errstate(divide="ignore"):
        return np.log(nu) + np.concatenate(([0.0], np.cumsum(log1m_nu[:-1])))
