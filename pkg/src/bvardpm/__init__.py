"""Bayesian VARs with additive nonparametric-mixture shocks.

The reduced-form shock splits into a Dirichlet-process mixture random
effect (correlated across equations) and an idiosyncratic diagonal-variance
term, so the posterior is simulated equation by equation while remaining
invariant to the ordering of the variables.
"""

__version__ = "0.1.0"

from .rng import RngHandle
from .model import (Dataset, ModelConfig, MixtureComponent, SamplerState,
                    CovarianceView, build_lag_matrix, residuals,
                    assemble_covariance, log_component_density, stick_weights)
from .priors import PriorConfig, default_priors, estimate_sigma0, \
    new_cluster_prior_prob
from .mcmc import (SweepPlan, DrawStore, PosteriorDraw, GibbsSampler,
                   run_sweeps, TruncationCapError)
from .geweke import GewekeResult, geweke_joint_test
from .dgp import DgpSpec, simulate_var_coefficients, simulate_dataset, \
    run_simulation_study
from .forecast import (ForecastResult, predictive_simulate, forecast_draws,
                       score_forecasts, rolling_evaluation)
from .structural import (IrfResult, irf_per_cluster, irf_weighted,
                         irf_posterior, relabel_clusters, cluster_diagnostics)
from .dataio import (apply_transform, load_dataset, RunConfig,
                     load_run_config, VARIABLE_PRESETS, DEFAULT_TRANSFORMS,
                     bundled_dataset_path, make_synthetic_csv)
from .bench import bench_timing, FullSystemNiw, loglog_slope
from .cli import cli_dispatch

__all__ = [
    "RngHandle", "Dataset", "ModelConfig", "MixtureComponent", "SamplerState",
    "CovarianceView", "build_lag_matrix", "residuals", "assemble_covariance",
    "log_component_density", "stick_weights", "PriorConfig", "default_priors",
    "estimate_sigma0", "new_cluster_prior_prob", "SweepPlan", "DrawStore",
    "PosteriorDraw", "GibbsSampler", "run_sweeps", "TruncationCapError",
    "GewekeResult", "geweke_joint_test", "DgpSpec",
    "simulate_var_coefficients", "simulate_dataset", "run_simulation_study",
    "ForecastResult", "predictive_simulate", "forecast_draws",
    "score_forecasts", "rolling_evaluation", "IrfResult", "irf_per_cluster",
    "irf_weighted", "irf_posterior", "relabel_clusters",
    "cluster_diagnostics", "apply_transform", "load_dataset", "RunConfig",
    "load_run_config", "VARIABLE_PRESETS", "DEFAULT_TRANSFORMS",
    "bundled_dataset_path", "make_synthetic_csv", "bench_timing",
    "FullSystemNiw", "loglog_slope", "cli_dispatch",
]
