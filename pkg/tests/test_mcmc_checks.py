import numpy as np
import pytest

from mcmc_manager.mcmc_checks import GewekeDesign, batch_means_se, geweke_prior_reproduction
from model_manager.model_priors import default_prior


def test_batch_means_se_of_white_noise():
    x = np.random.default_rng(0).standard_normal(100_000)
    assert batch_means_se(x, n_batches=50) == pytest.approx(1.0 / np.sqrt(100_000), rel=0.3)


def test_batch_means_se_too_short():
    with pytest.raises(ValueError):
        batch_means_se(np.arange(10.0), n_batches=20)


def test_geweke_traces_have_requested_length():
    prior = default_prior(3)
    traces = geweke_prior_reproduction(prior, cycles=5, seed=1, design=GewekeDesign(N=6))
    assert traces["beta0"].shape == (5,)
    assert traces["theta_tilde"].shape == (5, 1)
    assert np.all(np.isfinite(traces["beta0"]))


@pytest.mark.slow
def test_sampler_reproduces_intercept_prior():
    prior = default_prior(3)
    design = GewekeDesign(N=20, L=3)
    traces = geweke_prior_reproduction(prior, cycles=5000, seed=7, design=design)
    beta0 = traces["beta0"]
    # starts from an exact prior draw; no burn-in
    assert abs(beta0.mean()) < 3.0 * batch_means_se(beta0, n_batches=20)
