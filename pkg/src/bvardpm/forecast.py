"""Iterated predictive simulation and forecast scoring.

Each retained posterior draw simulates forward recursively: a mixture
component, a random effect and an idiosyncratic shock per step, with
stochastic-volatility paths extrapolated by their AR(1) law.  Alongside the
sampled path, the exact one-step-ahead conditional mixture at the terminal
horizon is returned, so density scores are computed from closed-form
mixtures rather than kernel estimates (no simulation noise at h = 1).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .mcmc import DrawStore, PosteriorDraw, SweepPlan, run_sweeps
from .model import Dataset, ModelConfig
from .rng import RngHandle, as_generator

__all__ = ["ForecastResult", "predictive_simulate", "forecast_draws",
           "score_forecasts", "rolling_evaluation",
           "mixture_logpdf", "pinball_loss"]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class PathForecast:
    """One draw's simulated path and terminal conditional mixture."""

    path: np.ndarray              # (h, M)
    weights: np.ndarray           # (J,)
    means: np.ndarray             # (J, M) terminal mixture means
    covs: np.ndarray              # (J, M, M) terminal mixture covariances
    exploded: bool = False


@dataclass
class ForecastResult:
    """Predictive output across retained draws for a set of horizons."""

    horizons: list[int]
    names: list[str]
    paths: np.ndarray             # (R, h_max, M) sampled paths
    weights: dict                 # h -> (R, Jmax)
    means: dict                   # h -> (R, Jmax, M)
    covs: dict                    # h -> (R, Jmax, M, M)
    n_live: dict                  # h -> (R,)
    n_exploded: int = 0
    realized: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)

    def samples(self, h: int) -> np.ndarray:
        """Sampled y_{T+h} across draws, (R, M)."""
        return self.paths[:, h - 1, :]

    def point_forecast(self, h: int) -> np.ndarray:
        """Draw-averaged terminal mixture mean (Rao-Blackwellized)."""
        w = self.weights[h]
        return np.mean(np.sum(w[:, :, None] * self.means[h], axis=1), axis=0)


def predictive_simulate(draw: PosteriorDraw, recent, h: int, rng,
                        explode_limit: float = 1e10) -> PathForecast:
    """Simulate y_{T+1..T+h} for one posterior draw.

    ``recent`` holds the last p observed rows in chronological order.  The
    returned terminal mixture is the exact conditional distribution of
    y_{T+h} given the simulated path up to T+h-1 and the draw.
    """
    if h < 1:
        raise ValueError("horizon must be at least 1")
    gen = as_generator(rng)
    recent = np.atleast_2d(np.asarray(recent, dtype=float))
    p, m = recent.shape
    k = draw.a.shape[1]
    if p * m != k:
        raise ValueError(f"recent lags have {p * m} entries, A expects {k}")
    weights = draw.eta / draw.eta.sum()
    j = weights.shape[0]
    state = recent[::-1].copy()          # row 0 = most recent
    if draw.sv:
        log_om = draw.h_last.copy()
    path = np.empty((h, m))
    exploded = False
    for step in range(h):
        x = state.ravel()
        base = draw.a @ x
        if draw.sv:
            log_om = (draw.sv_mu + draw.sv_rho * (log_om - draw.sv_mu)
                      + np.sqrt(draw.sv_sig2) * gen.standard_normal(m))
            omega_diag = np.exp(log_om)
        else:
            omega_diag = draw.omega
        if step == h - 1:
            means = draw.mu + base
            covs = draw.sigma + omega_diag * np.eye(m)
        comp = int(np.searchsorted(np.cumsum(weights), gen.random()))
        comp = min(comp, j - 1)
        shock = (draw.mu[comp] + draw.chol[comp] @ gen.standard_normal(m)
                 + np.sqrt(omega_diag) * gen.standard_normal(m))
        y_next = base + shock
        if not np.all(np.abs(y_next) < explode_limit):
            exploded = True
        path[step] = y_next
        state = np.vstack((y_next, state[:-1]))
    return PathForecast(path=path, weights=weights, means=means, covs=covs,
                        exploded=exploded)


def forecast_draws(store: DrawStore, data, horizons, rng,
                   p: int | None = None) -> ForecastResult:
    """Predictive simulation across all retained draws.

    ``data`` is the training Dataset (or raw array); its last p rows seed
    the recursion.  Each horizon gets its own terminal mixture; paths are
    simulated once up to max(horizons).
    """
    values = data.values if isinstance(data, Dataset) else np.asarray(data, float)
    names = data.names if isinstance(data, Dataset) else \
        [f"y{i + 1}" for i in range(values.shape[1])]
    if p is None:
        p = store.meta.get("p")
    recent = values[-p:]
    horizons = sorted(int(h) for h in horizons)
    h_max = horizons[-1]
    r = store.n_retained
    m = values.shape[1]
    j_pad = int(store.n_comp.max())
    paths = np.empty((r, h_max, m))
    weights = {h: np.zeros((r, j_pad)) for h in horizons}
    means = {h: np.full((r, j_pad, m), np.nan) for h in horizons}
    covs = {h: np.full((r, j_pad, m, m), np.nan) for h in horizons}
    n_live = {h: np.zeros(r, dtype=int) for h in horizons}
    gen = as_generator(rng)
    n_exploded = 0
    for i in range(r):
        draw = store.draw(i)
        for h in horizons:
            pf = predictive_simulate(draw, recent, h, gen)
            jl = pf.weights.shape[0]
            weights[h][i, :jl] = pf.weights
            means[h][i, :jl] = pf.means
            covs[h][i, :jl] = pf.covs
            n_live[h][i] = jl
            if h == h_max:
                paths[i] = pf.path
            if pf.exploded:
                n_exploded += 1
    return ForecastResult(horizons=horizons, names=names, paths=paths,
                          weights=weights, means=means, covs=covs,
                          n_live=n_live, n_exploded=n_exploded)


def mixture_logpdf(y, weights, means, covs, n_live) -> float:
    """log of the draw-averaged mixture density at the realization ``y``.

    Arrays are padded across draws; ``n_live[i]`` gives draw i's component
    count.  Dimensions of ``y`` select the (joint) marginal evaluated.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    r = weights.shape[0]
    per_draw = np.full(r, -np.inf)
    for i in range(r):
        jl = int(n_live[i])
        w = weights[i, :jl]
        diff = y - means[i, :jl]
        cov = covs[i, :jl]
        if y.shape[0] == 1:
            var = cov[:, 0, 0]
            comp = -0.5 * (_LOG_2PI + np.log(var) + diff[:, 0] ** 2 / var)
        else:
            lo = np.linalg.cholesky(cov)
            sol = np.linalg.solve(lo, diff[:, :, None])[:, :, 0]
            quad = np.sum(sol * sol, axis=1)
            logdet = 2.0 * np.sum(np.log(np.diagonal(lo, axis1=1, axis2=2)),
                                  axis=1)
            comp = -0.5 * (y.shape[0] * _LOG_2PI + logdet + quad)
        mx = np.max(comp + np.log(w))
        per_draw[i] = mx + np.log(np.sum(np.exp(comp + np.log(w) - mx)))
    peak = per_draw.max()
    if not np.isfinite(peak):
        raise ValueError("degenerate predictive density")
    return float(peak + np.log(np.mean(np.exp(per_draw - peak))))


def pinball_loss(y: float, quantile_forecast: float, q: float) -> float:
    """Quantile score (y - q_hat) * (q - 1{y < q_hat}); nonnegative."""
    indicator = 1.0 if y < quantile_forecast else 0.0
    return (y - quantile_forecast) * (q - indicator)


def score_forecasts(result: ForecastResult, realized: dict,
                    focus: list[str] | None = None,
                    quantiles=(0.1, 0.9)) -> dict:
    """Attach squared errors, log scores and quantile scores per horizon.

    ``realized`` maps horizon -> (M,) outcome.  The joint log predictive
    density is evaluated over the focus variables (default: the first
    min(3, M) names); univariate log scores and quantile scores are
    reported per variable.
    """
    names = result.names
    m = len(names)
    if focus is None:
        focus = names[:min(3, m)]
    focus_idx = [names.index(nm) for nm in focus]
    scores: dict = {}
    for h in result.horizons:
        y = np.asarray(realized[h], dtype=float)
        if y.shape[0] != m:
            raise ValueError("realized outcome has wrong dimension")
        w, mu, cov, nl = (result.weights[h], result.means[h],
                          result.covs[h], result.n_live[h])
        point = result.point_forecast(h)
        entry = {
            "se": (point - y) ** 2,
            "lpl_joint": mixture_logpdf(y[focus_idx],
                                        w, mu[:, :, focus_idx],
                                        cov[:, :][:, :, focus_idx][:, :, :, focus_idx],
                                        nl),
            "lpl": np.array([
                mixture_logpdf(y[i:i + 1], w, mu[:, :, i:i + 1],
                               cov[:, :, i:i + 1, i:i + 1], nl)
                for i in range(m)
            ]),
        }
        samples = result.samples(h)
        for q in quantiles:
            qf = np.quantile(samples, q, axis=0)
            entry[f"qs{int(q * 100)}"] = np.array([
                pinball_loss(y[i], qf[i], q) for i in range(m)
            ])
        scores[h] = entry
    result.realized.update(realized)
    result.scores.update(scores)
    return scores


def rolling_evaluation(data, first_origin: int, models: dict,
                       plan: SweepPlan, rng, horizons=(1, 4),
                       benchmark: str | None = None,
                       focus: list[str] | None = None,
                       out_dir: str | None = None,
                       progress: bool = False) -> dict:
    """Expanding-window out-of-sample comparison of model configurations.

    ``models`` maps a label to a ModelConfig; every model re-estimates on
    data[:origin] at each origin >= ``first_origin`` and is scored against
    the realized outcomes.  Returns per-model average scores, ratios and
    log-score differences against the benchmark (first label by default),
    plus the cumulative joint log-score difference trajectory.
    """
    values = data.values if isinstance(data, Dataset) else np.asarray(data, float)
    names = data.names if isinstance(data, Dataset) else \
        [f"y{i + 1}" for i in range(values.shape[1])]
    horizons = sorted(int(h) for h in horizons)
    h_max = horizons[-1]
    t_all = values.shape[0]
    labels = list(models)
    if benchmark is None:
        benchmark = labels[0]
    if benchmark not in models:
        raise ValueError(f"benchmark '{benchmark}' not among models")
    p_needed = max(cfg.p for cfg in models.values())
    if first_origin <= p_needed + 1:
        raise ValueError("first_origin leaves too few training points")
    base = rng if isinstance(rng, RngHandle) else RngHandle(int(rng))
    origins = list(range(first_origin, t_all - h_max + 1))
    if not origins:
        raise ValueError("no forecast origins in range")

    per_origin: dict = {lab: [] for lab in labels}
    for oi, origin in enumerate(origins):
        train = Dataset(values[:origin], names)
        realized = {h: values[origin + h - 1] for h in horizons}
        for li, lab in enumerate(labels):
            stream = 500_000 + (oi * len(labels) + li) * 2
            try:
                store = run_sweeps(train, models[lab], None, plan,
                                   RngHandle(base.seed, stream))
                fc = forecast_draws(store, train, horizons,
                                    RngHandle(base.seed, stream + 1),
                                    p=models[lab].p)
                sc = score_forecasts(fc, realized, focus=focus)
            except Exception as exc:
                raise RuntimeError(f"origin {origin}, model {lab}: {exc}") from exc
            per_origin[lab].append(sc)
        if progress:
            print(f"  origin {origin} ({oi + 1}/{len(origins)})", flush=True)

    m = len(names)
    table: dict = {}
    for lab in labels:
        table[lab] = {}
        for h in horizons:
            entries = [sc[h] for sc in per_origin[lab]]
            table[lab][h] = {
                "mse": np.mean([e["se"] for e in entries], axis=0),
                "lpl": np.mean([e["lpl"] for e in entries], axis=0),
                "lpl_joint": float(np.mean([e["lpl_joint"] for e in entries])),
                "qs10": np.mean([e["qs10"] for e in entries], axis=0),
                "qs90": np.mean([e["qs90"] for e in entries], axis=0),
            }
    relative: dict = {}
    for lab in labels:
        relative[lab] = {}
        for h in horizons:
            bench_h = table[benchmark][h]
            own = table[lab][h]
            relative[lab][h] = {
                "rel_mse": own["mse"] / bench_h["mse"],
                "lpl_diff": own["lpl"] - bench_h["lpl"],
                "lpl_joint_diff": own["lpl_joint"] - bench_h["lpl_joint"],
                "rel_qs10": own["qs10"] / bench_h["qs10"],
                "rel_qs90": own["qs90"] / bench_h["qs90"],
            }
    cumulative: dict = {}
    for lab in labels:
        cumulative[lab] = {}
        for h in horizons:
            diffs = np.array([sc[h]["lpl_joint"] for sc in per_origin[lab]]) \
                - np.array([sc[h]["lpl_joint"] for sc in per_origin[benchmark]])
            cumulative[lab][h] = np.cumsum(diffs)
    out = {"origins": origins, "names": names, "benchmark": benchmark,
           "table": table, "relative": relative, "cumulative": cumulative}
    if out_dir is not None:
        _write_forecast_tables(out, horizons, out_dir)
    return out


def _write_forecast_tables(out: dict, horizons, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    names = out["names"]
    with open(os.path.join(out_dir, "forecast_scores.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "horizon", "variable", "mse", "lpl",
                         "qs10", "qs90", "rel_mse", "lpl_diff",
                         "rel_qs10", "rel_qs90"])
        for lab, by_h in out["table"].items():
            for h in horizons:
                tab, rel = by_h[h], out["relative"][lab][h]
                for i, nm in enumerate(names):
                    writer.writerow([
                        lab, h, nm,
                        f"{tab['mse'][i]:.6g}", f"{tab['lpl'][i]:.6g}",
                        f"{tab['qs10'][i]:.6g}", f"{tab['qs90'][i]:.6g}",
                        f"{rel['rel_mse'][i]:.6g}", f"{rel['lpl_diff'][i]:.6g}",
                        f"{rel['rel_qs10'][i]:.6g}", f"{rel['rel_qs90'][i]:.6g}",
                    ])
    with open(os.path.join(out_dir, "cumulative_lpl.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["origin_index", "model", "horizon", "cum_lpl_diff"])
        for lab, by_h in out["cumulative"].items():
            for h in horizons:
                for oi, val in zip(out["origins"], by_h[h]):
                    writer.writerow([oi, lab, h, f"{val:.6g}"])
