"""Command-line entry point.

Every task reads a JSON run config (see :class:`bvardpm.dataio.RunConfig`),
writes its outputs under the configured directory and drops a
``manifest.json`` next to them recording the seed, configuration hash and
library versions, so a run is fully reproducible from its manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np
import scipy

from . import __version__
from .bench import bench_timing
from .dataio import (RunConfig, bundled_dataset_path, load_dataset,
                     load_run_config, make_synthetic_csv)
from .dgp import DgpSpec, run_simulation_study, simulate_dataset
from .forecast import rolling_evaluation
from .mcmc import SweepPlan, run_sweeps
from .model import ModelConfig
from .priors import PriorConfig, default_priors
from .rng import RngHandle
from .structural import cluster_diagnostics, irf_posterior, relabel_clusters

__all__ = ["cli_dispatch", "main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bvardpm",
        description="Bayesian VAR with nonparametric mixture shocks")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="task", required=True)
    for task, text in (
        ("simulate", "draw an artificial dataset or run a simulation study"),
        ("estimate", "run the posterior sampler and store draws"),
        ("forecast", "expanding-window forecast evaluation"),
        ("irf", "structural impulse responses"),
        ("bench", "timing benchmark against full-system estimation"),
    ):
        p = sub.add_parser(task, help=text)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes for parallel tasks")
        p.add_argument("--output-dir", default=None,
                       help="override the config output directory")
    return parser


def _model_config(cfg: RunConfig, m: int) -> ModelConfig:
    return ModelConfig(m=m, **cfg.model)


def _prior_config(cfg: RunConfig, m: int) -> PriorConfig:
    return default_priors(m, **cfg.priors)


def _plan(cfg: RunConfig) -> SweepPlan:
    return SweepPlan(**cfg.plan) if cfg.plan else SweepPlan()


def _write_manifest(cfg: RunConfig, out_dir: str) -> None:
    payload = cfg.to_dict()
    blob = json.dumps(payload, sort_keys=True).encode()
    manifest = {
        "config": payload,
        "config_hash": hashlib.sha256(blob).hexdigest()[:16],
        "seed": cfg.seed,
        "versions": {"bvardpm": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _load_data(cfg: RunConfig):
    path = cfg.data_path or bundled_dataset_path()
    return load_dataset(path, cfg.variables, cfg.merged_transforms())


def _task_simulate(cfg: RunConfig, out_dir: str) -> None:
    section = cfg.simulate
    if section.get("study"):
        study = section["study"]
        plan = SweepPlan(**study.get("plan", {})) if study.get("plan") \
            else SweepPlan(n_draws=2000, n_burn=1000)
        run_simulation_study(
            sizes=study.get("sizes", [5]),
            kinds=study.get("kinds", ["homoskedastic"]),
            replications=study.get("replications", 10),
            rng=RngHandle(cfg.seed),
            p_est=study.get("p_est", 5),
            plan=plan,
            out_dir=out_dir,
            n_workers=cfg.threads,
        )
        return
    spec = DgpSpec(m=section.get("m", 5),
                   t_obs=section.get("t_obs", 250),
                   shock_kind=section.get("shock_kind", "homoskedastic"))
    data, truth = simulate_dataset(spec, RngHandle(cfg.seed))
    with open(os.path.join(out_dir, "simulated.csv"), "w") as fh:
        fh.write(",".join(["t"] + data.names) + "\n")
        for t in range(data.n_obs):
            fh.write(",".join([str(t)] + [f"{v:.8g}" for v in data.values[t]])
                     + "\n")
    np.savez(os.path.join(out_dir, "simulated_truth.npz"),
             a=truth["a"], w_cov=truth["w_cov"])


def _task_estimate(cfg: RunConfig, out_dir: str) -> None:
    data = _load_data(cfg)
    model = _model_config(cfg, data.n_vars)
    priors = _prior_config(cfg, data.n_vars)
    store = run_sweeps(data, model, priors, _plan(cfg), RngHandle(cfg.seed))
    store.meta["seed"] = cfg.seed
    store.meta["variables"] = data.names
    store.save(os.path.join(out_dir, "draws"))


def _task_forecast(cfg: RunConfig, out_dir: str) -> None:
    data = _load_data(cfg)
    section = cfg.forecast
    m = data.n_vars
    models = {
        "dpm": _model_config(cfg, m),
        "g1": ModelConfig(m=m, j_cap=1, adaptive_truncation=False,
                          **{k: v for k, v in cfg.model.items()
                             if k not in ("j_cap", "adaptive_truncation")}),
    }
    first_origin = section.get("first_origin", int(data.n_obs * 0.7))
    rolling_evaluation(
        data, first_origin, models, _plan(cfg), RngHandle(cfg.seed),
        horizons=section.get("horizons", [1, 4]),
        benchmark=section.get("benchmark", "g1"),
        focus=section.get("focus"),
        out_dir=out_dir,
    )


def _task_irf(cfg: RunConfig, out_dir: str) -> None:
    data = _load_data(cfg)
    model = _model_config(cfg, data.n_vars)
    priors = _prior_config(cfg, data.n_vars)
    store = run_sweeps(data, model, priors, _plan(cfg), RngHandle(cfg.seed))
    store = relabel_clusters(store)
    section = cfg.irf
    shock = section.get("shock", "FEDFUNDS")
    horizons = section.get("horizons", 20)
    irf_posterior(store, shock, horizons, names=data.names,
                  normalize=section.get("normalize", "one_sd"),
                  out_dir=out_dir)
    diag = cluster_diagnostics(store)
    np.savez(os.path.join(out_dir, "cluster_diagnostics.npz"),
             prob=diag["prob"], prob_rolling=diag["prob_rolling"])


def _task_bench(cfg: RunConfig, out_dir: str) -> None:
    section = cfg.bench
    bench_timing(
        m_grid=section.get("m_grid", [5, 10, 15, 20, 25]),
        lags=section.get("lags", 1),
        n_draws=section.get("n_draws", 10),
        reps=section.get("reps", 3),
        t_obs=section.get("t_obs", 200),
        rng=RngHandle(cfg.seed),
        out_dir=out_dir,
    )


_TASKS = {
    "simulate": _task_simulate,
    "estimate": _task_estimate,
    "forecast": _task_forecast,
    "irf": _task_irf,
    "bench": _task_bench,
}


def cli_dispatch(argv) -> int:
    """Parse arguments, run the requested task, return an exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_run_config(args.config)
    except FileNotFoundError:
        print(f"error: config file '{args.config}' not found", file=sys.stderr)
        return 1
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    if cfg.task != args.task:
        cfg.task = args.task
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    try:
        _TASKS[args.task](cfg, out_dir)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_manifest(cfg, out_dir)
    return 0


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))
