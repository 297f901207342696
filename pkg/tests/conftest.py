import numpy as np
import pytest

from bvardpm.model import ModelConfig
from bvardpm.mcmc import GibbsSampler
from bvardpm.priors import PriorConfig
from bvardpm.rng import RngHandle


def z_mean(sample, true_mean, true_var=None):
    """Standardized distance of a sample mean from its analytic value."""
    sample = np.asarray(sample, dtype=float)
    var = sample.var(ddof=1) if true_var is None else true_var
    return (sample.mean() - true_mean) / np.sqrt(var / sample.size)


def z_var(sample, true_var):
    """Standardized distance of a sample variance from its analytic value,
    with the standard error estimated from the sample fourth moment."""
    sample = np.asarray(sample, dtype=float)
    n = sample.size
    v_hat = sample.var(ddof=1)
    centered = sample - sample.mean()
    mu4 = np.mean(centered ** 4)
    se = np.sqrt(max(mu4 - v_hat ** 2, 1e-300) / n)
    return (v_hat - true_var) / se


def make_ar1_panel(t_obs, m, diag=0.5, noise_sd=0.5, seed=0):
    gen = np.random.default_rng(seed)
    y = np.zeros((t_obs, m))
    a = diag * np.eye(m)
    prev = np.zeros(m)
    for t in range(t_obs):
        prev = a @ prev + gen.normal(0.0, noise_sd, m)
        y[t] = prev
    return y


@pytest.fixture(scope="session")
def small_sampler():
    """A sampler on a small panel, burned in a little; used by conditional
    tests that need a dimensionally consistent state."""
    y = make_ar1_panel(80, 2, seed=3)
    cfg = ModelConfig(m=2, p=1, j_cap=6, adaptive_truncation=False)
    sampler = GibbsSampler(y, cfg, None, RngHandle(11))
    for _ in range(50):
        sampler.sweep()
    return sampler


@pytest.fixture()
def rng():
    return RngHandle(1234)
