"""Structural impulse responses and mixture diagnostics.

Shocks are identified recursively: the impact matrix of a cluster is the
lower Cholesky factor of that cluster's shock covariance (component
covariance plus an idiosyncratic diagonal), so the variable ordering in the
dataset encodes the slow/fast identification.  Responses propagate through
the companion dynamics of the coefficient matrix.  Per-cluster responses
are averaged into an overall response using the mixture weights.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from .mcmc import DrawStore, PosteriorDraw

__all__ = ["IrfResult", "irf_per_cluster", "irf_weighted", "irf_posterior",
           "relabel_clusters", "cluster_diagnostics", "propagate_impulse"]


@dataclass
class IrfResult:
    """Posterior impulse-response arrays with 16/84 percent bands."""

    horizons: int
    shock: str
    names: list[str]
    per_cluster: np.ndarray       # (R, Gmax, H+1, M), nan-padded
    weighted: np.ndarray          # (R, H+1, M)
    cluster_lives: np.ndarray     # (R,) live cluster count per draw
    bands: dict                   # "weighted" -> (3, H+1, M) 16/50/84

    def weighted_quantiles(self, qs=(0.16, 0.5, 0.84)) -> np.ndarray:
        return np.quantile(self.weighted, qs, axis=0)


def propagate_impulse(a: np.ndarray, impact: np.ndarray, horizons: int) -> np.ndarray:
    """Propagate an impact vector through the VAR dynamics.

    ``a`` is the M x (M p) coefficient block; the response at horizon s is
    sum_{l=1..min(s,p)} A_l @ response_{s-l}, seeded by the impact vector.
    """
    m, k = a.shape
    p = k // m
    lags = [a[:, i * m:(i + 1) * m] for i in range(p)]
    out = np.empty((horizons + 1, m))
    out[0] = impact
    for s in range(1, horizons + 1):
        acc = np.zeros(m)
        for lag in range(1, min(s, p) + 1):
            acc += lags[lag - 1] @ out[s - lag]
        out[s] = acc
    return out


def irf_per_cluster(draw: PosteriorDraw, shock_idx: int, horizons: int,
                    cluster: int, omega_mode: str = "cluster",
                    normalize: str = "one_sd") -> np.ndarray:
    """Impulse responses of one mixture component.

    The impact is the ``shock_idx`` column of the lower Cholesky factor of
    Sigma_k + diag(omega_bar); ``omega_mode`` picks the idiosyncratic
    average (within-cluster periods or over all periods).  ``normalize``
    is "one_sd" (raw Cholesky column) or "unit" (shock variable moves one
    unit on impact).
    """
    if cluster >= draw.n_comp or draw.counts[cluster] == 0:
        raise ValueError(f"cluster {cluster} has no observations in this draw")
    omega_diag = draw.omega_diag_for(cluster, mode=omega_mode)
    xi = draw.sigma[cluster] + np.diag(omega_diag)
    chol = np.linalg.cholesky(xi)
    impact = chol[:, shock_idx].copy()
    if normalize == "unit":
        impact = impact / impact[shock_idx]
    elif normalize != "one_sd":
        raise ValueError("normalize must be 'one_sd' or 'unit'")
    return propagate_impulse(draw.a, impact, horizons)


def irf_weighted(draw: PosteriorDraw, shock_idx: int, horizons: int,
                 omega_mode: str = "cluster",
                 normalize: str = "one_sd") -> np.ndarray:
    """Mixture-weighted impulse response: convex combination of the live
    clusters' responses with weights eta renormalized over live clusters."""
    live = np.nonzero(draw.counts > 0)[0]
    w = draw.eta[live]
    w = w / w.sum()
    out = np.zeros((horizons + 1, draw.a.shape[0]))
    for weight, k in zip(w, live):
        out += weight * irf_per_cluster(draw, shock_idx, horizons, int(k),
                                        omega_mode=omega_mode,
                                        normalize=normalize)
    return out


def irf_posterior(store: DrawStore, shock: str | int, horizons: int,
                  names: list[str] | None = None,
                  omega_mode: str = "cluster", normalize: str = "one_sd",
                  out_dir: str | None = None) -> IrfResult:
    """Per-cluster and weighted IRFs across all retained draws."""
    m = store.a.shape[1]
    if names is None:
        names = [f"y{i + 1}" for i in range(m)]
    shock_idx = names.index(shock) if isinstance(shock, str) else int(shock)
    r = store.n_retained
    g_max = int(store.g.max())
    per_cluster = np.full((r, g_max, horizons + 1, m), np.nan)
    weighted = np.empty((r, horizons + 1, m))
    lives = np.empty(r, dtype=int)
    for i in range(r):
        draw = store.draw(i)
        live = np.nonzero(draw.counts > 0)[0]
        lives[i] = live.shape[0]
        for slot, k in enumerate(live):
            per_cluster[i, slot] = irf_per_cluster(
                draw, shock_idx, horizons, int(k),
                omega_mode=omega_mode, normalize=normalize)
        w = draw.eta[live]
        weighted[i] = np.tensordot(w / w.sum(), per_cluster[i, :len(live)],
                                   axes=(0, 0))
    bands = {"weighted": np.quantile(weighted, (0.16, 0.5, 0.84), axis=0)}
    result = IrfResult(horizons=horizons, shock=names[shock_idx], names=names,
                       per_cluster=per_cluster, weighted=weighted,
                       cluster_lives=lives, bands=bands)
    if out_dir is not None:
        write_irf_csv(result, out_dir)
    return result


def relabel_clusters(store: DrawStore) -> DrawStore:
    """Relabel each draw's components by falling occupancy, breaking ties
    by rising log-determinant of the component covariance.

    Returns a new DrawStore with every label-indexed array permuted
    consistently; label-free quantities are untouched.
    """
    r = store.n_retained
    mu = store.mu.copy()
    sigma = store.sigma.copy()
    eta = store.eta.copy()
    counts = store.counts.copy()
    om_cl = store.omega_cluster_avg.copy()
    delta = store.delta.copy()
    for i in range(r):
        j = int(store.n_comp[i])
        occ = counts[i, :j].astype(float)
        sign, logdet = np.linalg.slogdet(sigma[i, :j])
        order = np.lexsort((logdet, -occ))
        mu[i, :j] = mu[i, :j][order]
        sigma[i, :j] = sigma[i, :j][order]
        eta[i, :j] = eta[i, :j][order]
        counts[i, :j] = counts[i, :j][order]
        om_cl[i, :j] = om_cl[i, :j][order]
        inverse = np.empty(j, dtype=delta.dtype)
        inverse[order] = np.arange(j, dtype=delta.dtype)
        delta[i] = inverse[delta[i]]
    return replace(store, mu=mu, sigma=sigma, eta=eta, counts=counts,
                   omega_cluster_avg=om_cl, delta=delta)


def cluster_diagnostics(store: DrawStore, window: int = 4) -> dict:
    """Posterior cluster-membership trajectories and log-determinant spreads.

    Expects a relabeled store.  Returns per-period posterior probabilities
    of each (relabeled) cluster, their ``window``-period rolling means, and
    box-plot statistics of log det Sigma_k per cluster.
    """
    r, t = store.delta.shape
    g_max = int(store.g.max())
    prob = np.zeros((t, g_max))
    for g in range(g_max):
        prob[:, g] = np.mean(store.delta == g, axis=0)
    rolled = np.empty_like(prob)
    for t0 in range(t):
        lo = max(0, t0 - window + 1)
        rolled[t0] = prob[lo:t0 + 1].mean(axis=0)
    logdets: list[np.ndarray] = []
    for g in range(g_max):
        vals = []
        for i in range(r):
            if g < store.n_comp[i] and store.counts[i, g] > 0:
                sign, ld = np.linalg.slogdet(store.sigma[i, g])
                vals.append(ld)
        logdets.append(np.asarray(vals))
    boxes = [
        dict(zip(("p5", "p25", "p50", "p75", "p95"),
                 np.percentile(v, (5, 25, 50, 75, 95)))) if v.size else {}
        for v in logdets
    ]
    return {"prob": prob, "prob_rolling": rolled,
            "logdet_samples": logdets, "logdet_box": boxes}


def write_irf_csv(result: IrfResult, out_dir: str) -> None:
    """Plot-ready CSV: weighted and per-cluster responses with 16/84 bands."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"irf_{result.shock}.csv")
    q16, q50, q84 = result.weighted_quantiles()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "cluster", "horizon", "variable",
                         "p16", "p50", "p84"])
        for hzn in range(result.horizons + 1):
            for vi, nm in enumerate(result.names):
                writer.writerow(["weighted", "", hzn, nm,
                                 f"{q16[hzn, vi]:.6g}", f"{q50[hzn, vi]:.6g}",
                                 f"{q84[hzn, vi]:.6g}"])
        g_max = result.per_cluster.shape[1]
        for g in range(g_max):
            draws = result.per_cluster[:, g]
            ok = ~np.isnan(draws[:, 0, 0])
            if not ok.any():
                continue
            qq = np.quantile(draws[ok], (0.16, 0.5, 0.84), axis=0)
            for hzn in range(result.horizons + 1):
                for vi, nm in enumerate(result.names):
                    writer.writerow([f"cluster", g + 1, hzn, nm,
                                     f"{qq[0, hzn, vi]:.6g}",
                                     f"{qq[1, hzn, vi]:.6g}",
                                     f"{qq[2, hzn, vi]:.6g}"])
