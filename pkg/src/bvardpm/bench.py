"""Wall-clock comparison of equation-by-equation and full-system samplers.

The full-system reference is a textbook independent Normal-inverse-Wishart
Gibbs sampler: it rebuilds and factorizes the KM x KM coefficient
posterior precision every draw, which is the O(M^6) bottleneck that
equation-by-equation estimation avoids (O(M^4)).
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass

import numpy as np

from .dgp import DgpSpec, simulate_dataset
from .mcmc import GibbsSampler
from .model import ModelConfig
from .rng import RngHandle, as_generator

__all__ = ["FullSystemNiw", "bench_timing", "loglog_slope", "BenchRow"]


class FullSystemNiw:
    """Independent Normal-inverse-Wishart BVAR estimated as one system.

    Coefficients stack across equations, so one draw factorizes a
    (M p M) x (M p M) precision matrix; the error covariance gets a
    conjugate inverse-Wishart update.  Deliberately textbook: the posterior
    precision is rebuilt from the Kronecker product at every draw.
    """

    def __init__(self, values: np.ndarray, p: int, rng,
                 prior_var: float = 10.0, prior_df_extra: float = 3.0):
        values = np.asarray(values, dtype=float)
        t_all, m = values.shape
        self.m, self.p = m, p
        self.k = m * p
        cols = [values[p - lag: t_all - lag] for lag in range(1, p + 1)]
        self.x = np.concatenate([np.ones((t_all - p, 1))] + cols, axis=1)
        self.y = values[p:]
        self.t_eff = self.y.shape[0]
        self.xtx = self.x.T @ self.x
        self.xty = self.x.T @ self.y
        self.kc = self.k + 1
        self.prior_prec = np.eye(self.kc * m) / prior_var
        self.prior_df = m + prior_df_extra
        self.prior_scale = np.eye(m)
        self.gen = as_generator(rng)
        self.beta = np.zeros((self.kc, m))
        self.sigma = np.eye(m)

    def sweep(self) -> None:
        m, kc = self.m, self.kc
        sig_inv = np.linalg.inv(self.sigma)
        prec = np.kron(sig_inv, self.xtx) + self.prior_prec
        rhs = (self.xty @ sig_inv).T.ravel()
        chol = np.linalg.cholesky(prec)
        mean = np.linalg.solve(prec, rhs)
        z = self.gen.standard_normal(kc * m)
        from scipy.linalg import solve_triangular
        draw = mean + solve_triangular(chol, z, lower=True, trans="T",
                                       check_finite=False)
        self.beta = draw.reshape(m, kc).T
        resid = self.y - self.x @ self.beta
        scale_post = self.prior_scale + resid.T @ resid
        prec_draw = _wishart(self.gen, self.prior_df + self.t_eff,
                             np.linalg.inv(scale_post))
        self.sigma = np.linalg.inv(prec_draw)


def _wishart(gen, df, scale):
    m = scale.shape[0]
    lo = np.linalg.cholesky(scale)
    a = np.zeros((m, m))
    idx = np.tril_indices(m, -1)
    if idx[0].size:
        a[idx] = gen.standard_normal(idx[0].size)
    a[np.diag_indices(m)] = np.sqrt(gen.chisquare(df - np.arange(m)))
    la = lo @ a
    return la @ la.T


@dataclass
class BenchRow:
    m: int
    model: str
    seconds: float


def _time_sampler(step, n_draws: int, reps: int) -> float:
    """Median-of-reps wall time for n_draws sweeps, after one warmup."""
    step()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        for _ in range(n_draws):
            step()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_timing(m_grid, lags: int = 1, n_draws: int = 10, reps: int = 3,
                 t_obs: int = 200, rng=0,
                 out_dir: str | None = None) -> list[BenchRow]:
    """Time n_draws posterior draws for the mixture model, its Gaussian
    restriction and the full-system reference, per model size."""
    if not len(list(m_grid)):
        raise ValueError("m_grid must be nonempty")
    base = rng if isinstance(rng, RngHandle) else RngHandle(int(rng))
    rows: list[BenchRow] = []
    for gi, m in enumerate(m_grid):
        spec = DgpSpec(m=m, t_obs=t_obs, shock_kind="homoskedastic")
        data, _ = simulate_dataset(spec, RngHandle(base.seed, 900 + 4 * gi))
        dpm = GibbsSampler(data, ModelConfig(m=m, p=lags),
                           None, RngHandle(base.seed, 901 + 4 * gi))
        g1 = GibbsSampler(data,
                          ModelConfig(m=m, p=lags, j_cap=1,
                                      adaptive_truncation=False),
                          None, RngHandle(base.seed, 902 + 4 * gi))
        niw = FullSystemNiw(data.values, lags,
                            RngHandle(base.seed, 903 + 4 * gi))
        rows.append(BenchRow(m, "bvar_dpm", _time_sampler(dpm.sweep, n_draws, reps)))
        rows.append(BenchRow(m, "bvar_g1", _time_sampler(g1.sweep, n_draws, reps)))
        rows.append(BenchRow(m, "bvar_niw", _time_sampler(niw.sweep, n_draws, reps)))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "bench_timings.csv"), "w",
                  newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["m", "model", "seconds"])
            for row in rows:
                writer.writerow([row.m, row.model, f"{row.seconds:.6g}"])
    return rows


def loglog_slope(rows: list[BenchRow], model: str) -> float:
    """OLS slope of log(time) on log(M) for one model's rows."""
    pts = [(np.log(r.m), np.log(r.seconds)) for r in rows if r.model == model]
    if len(pts) < 2:
        raise ValueError(f"need at least two sizes for model '{model}'")
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])
