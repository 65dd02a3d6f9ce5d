"""Sampler self-checks.

`geweke_prior_reproduction` alternates one sweep of the sampler with a
fresh draw of the data given the current parameters. If every update
leaves the joint distribution invariant, the parameter draws keep the
prior as their marginal.
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from mcmc_manager.mcmc_gibbs import gibbs_sweep_y
from mcmc_manager.mcmc_sampler import FusionModel, block_schedule, mh_update_block
from model_manager.model_density import log_f_Y_table
from model_manager.model_priors import PriorSpec, categorical_draws, prior_sample
from model_manager.model_types import FusionArrays
from sim_manager.sim_generator import draw_observations


@dataclass(frozen=True)
class GewekeDesign:
    """Fixed design of the small instance the check runs on."""

    N: int = 20
    L: int = 3
    p: int = 2
    q: int = 1
    A: int = 2
    images_per_sequence: int = 2
    annotated_fraction: float = 0.5
    zeta: float = 1e-12


def batch_means_se(x: np.ndarray, n_batches: int = 50) -> float:
    """Standard error of the mean of an autocorrelated series via batch means."""
    x = np.asarray(x, dtype=float).reshape(-1)
    size = x.shape[0] // n_batches
    if size < 1:
        raise ValueError("series too short for the requested number of batches")
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def _design_arrays(design: GewekeDesign, rng: np.random.Generator) -> FusionArrays:
    N, r = design.N, design.images_per_sequence
    n_img = N * r
    img_seq = np.repeat(np.arange(N), r)
    annotated = rng.random(n_img) < design.annotated_fraction
    return FusionArrays(
        L=design.L,
        A=design.A,
        X=rng.standard_normal((N, design.p)),
        sequence_ids=tuple(f"g{i + 1:03d}" for i in range(N)),
        conf_seq=img_seq,
        U=rng.standard_normal((n_img, design.q)),
        log_c=np.full((n_img, design.L), -np.log(design.L)),
        ann_seq=img_seq[annotated],
        ann_score=np.ones(int(annotated.sum()), dtype=np.intp),
        ann_annotator=rng.integers(1, design.A + 1, size=int(annotated.sum())),
    )


def geweke_prior_reproduction(
    prior: PriorSpec,
    cycles: int = 5000,
    seed: int = 0,
    design: Optional[GewekeDesign] = None,
    scale: float = 0.5,
) -> Dict[str, np.ndarray]:
    """Successive-conditional simulator; returns the beta0 and theta_tilde traces.

    Proposal scales are held fixed so every update is a valid kernel.
    """
    design = design or GewekeDesign(L=prior.L)
    rng = np.random.default_rng(seed)
    arrays = _design_arrays(design, rng)
    state = prior_sample(prior, design.p, design.q, design.A, rng, X=arrays.X)
    arrays = draw_observations(arrays, state, design.zeta, rng)
    schedule = block_schedule("full", design.L, design.A)
    beta0 = np.empty(cycles)
    theta = np.empty((cycles, design.L - 2))
    for t in range(cycles):
        model = FusionModel(arrays, prior, "full")
        state = state.with_y(gibbs_sweep_y(arrays, state, rng))
        for block in schedule:
            state, _ = mh_update_block(block, state, model, scale, rng)
        # redraw (y, data) jointly given the parameters
        pmf = np.exp(log_f_Y_table(arrays.X, state))
        state = state.with_y(categorical_draws(pmf / pmf.sum(axis=1, keepdims=True), rng))
        arrays = draw_observations(arrays, state, design.zeta, rng)
        beta0[t] = state.beta0
        theta[t] = state.theta_tilde
    return {"beta0": beta0, "theta_tilde": theta}
