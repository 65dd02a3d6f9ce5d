"""Test helpers and environment setup for pytest.

Ensure the project root is on sys.path so tests can import project modules
as top-level packages (e.g., `commands`, `model_manager`). This is a
portable approach that works regardless of how pytest determines its
working directory during collection.
"""
from __future__ import annotations
import sys
from pathlib import Path


ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    # Insert at front so tests import local package versions, not installed ones
    sys.path.insert(0, str(ROOT))

import numpy as np
import pytest

from model_manager.model_types import ParamState
from sim_manager.sim_generator import SimConfig, covariate_pool_standard_normal, generate_dataset


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long statistical checks (deselect with -m 'not slow')")


def make_state(L: int = 3, p: int = 2, q: int = 1, A: int = 2, seed: int = 0) -> ParamState:
    """A valid state with modest, non-degenerate values."""
    rng = np.random.default_rng(seed)
    alpha = np.full((L, L), 0.4 / (L - 1))
    np.fill_diagonal(alpha, 0.6)
    nu_tilde = np.linspace(-1.0, 1.0, L) + 0.5
    return ParamState(
        beta0=0.3,
        beta=rng.normal(0.0, 0.5, size=p),
        theta_tilde=np.full(L - 2, np.log(1.2)),
        phi_tilde=np.full((L, L - 2), np.log(1.5)),
        nu=nu_tilde[None, :] + 0.1 * rng.standard_normal((A, L)),
        nu_tilde=nu_tilde,
        alpha=alpha,
        omega0=0.5,
        omega=rng.normal(0.0, 0.3, size=q),
    )


@pytest.fixture
def toy_state():
    return make_state()


def small_sim_config(**changes) -> SimConfig:
    base = dict(
        n_train=30,
        n_test=20,
        L=3,
        p=2,
        beta_true=(0.5, -0.5),
        beta0_true=0.8,
        max_probs=(0.5,),
        annotators=2,
        annotated_fraction=0.5,
        r_choices=(1, 2, 3),
        pool_size=50,
    )
    base.update(changes)
    return SimConfig(**base)


@pytest.fixture
def toy_sim():
    """(train, test, truth) from a small simulated design."""
    cfg = small_sim_config()
    rng = np.random.default_rng(11)
    pool = covariate_pool_standard_normal(cfg.p, cfg.q, cfg.pool_size, rng)
    return generate_dataset(cfg, pool, rng)
