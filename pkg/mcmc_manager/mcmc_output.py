"""Sampler configuration, chain output and posterior prediction."""
from __future__ import annotations
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from errors import ConfigError
from model_manager.model_density import ordinal_pmf_rows
from model_manager.model_types import ParamState, expand_raw_rows

PREDICT_CHUNK = 500


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 15000
    burnin: int = 10000
    thin: int = 1
    seed: int = 0
    adapt_target_block: float = 0.234
    adapt_target_univariate: float = 0.44
    adapt_rate: float = 0.6
    initial_step: float = 0.1
    progress_every: int = 1000

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("mcmc iterations must be >= 1")
        if not 0 <= self.burnin < self.iterations:
            raise ConfigError(f"mcmc burnin ({self.burnin}) must be in [0, iterations={self.iterations})")
        if self.thin < 1:
            raise ConfigError("mcmc thin must be >= 1")
        for name in ("adapt_target_block", "adapt_target_univariate"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"mcmc {name} must be in (0, 1)")
        if not 0 < self.adapt_rate <= 1:
            raise ConfigError("mcmc adapt_rate must be in (0, 1]")
        if not self.initial_step > 0:
            raise ConfigError("mcmc initial_step must be > 0")
        if self.seed < 0:
            raise ConfigError("mcmc seed must be non-negative")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ChainOutput:
    """Post-burn-in draws of one chain plus its diagnostics.

    `y_marginals` is None for variants without latent scores (maximum
    observed, linear). `extras` holds per-sample quantities outside
    ParamState, e.g. the linear model's noise variance.
    """

    variant: str
    L: int
    samples: List[ParamState]
    iterations: np.ndarray
    acceptance_rates: Dict[str, float]
    log_post_trace: np.ndarray
    y_marginals: Optional[np.ndarray] = None
    sequence_ids: Tuple[str, ...] = ()
    extras: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.y_marginals is not None:
            sums = self.y_marginals.sum(axis=1)
            if self.y_marginals.size and np.any(np.abs(sums - 1.0) > 1e-9):
                raise ValueError("y marginal rows must sum to 1")
        for name, rate in self.acceptance_rates.items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"acceptance rate of {name} outside [0, 1]")

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def p(self) -> int:
        return self.samples[0].beta.shape[0] if self.samples else 0

    def draws(self, name: str) -> np.ndarray:
        """Stack one parameter across samples, leading axis = sample."""
        if not self.samples:
            raise ValueError("chain has no samples")
        return np.array([np.asarray(getattr(s, name), dtype=float) for s in self.samples])

    def coefficient_draws(self) -> np.ndarray:
        return self.draws("beta").reshape(self.n_samples, -1)


def posterior_predict_grid(X0: np.ndarray, chain: ChainOutput) -> np.ndarray:
    """(G, L) posterior predictive pmfs of the latent score at covariate rows X0."""
    if not chain.samples:
        raise ValueError("cannot predict from an empty chain")
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if X0.shape[1] != chain.p:
        raise ValueError(f"covariate rows have {X0.shape[1]} columns, chain has {chain.p} coefficients")
    beta0 = chain.draws("beta0")
    beta = chain.coefficient_draws()
    cutoffs = expand_raw_rows(chain.draws("theta_tilde").reshape(chain.n_samples, chain.L - 2))
    total = np.zeros((X0.shape[0], chain.L))
    for start in range(0, chain.n_samples, PREDICT_CHUNK):
        stop = min(start + PREDICT_CHUNK, chain.n_samples)
        means = beta0[start:stop][None, :] + X0 @ beta[start:stop].T  # (G, S)
        G, S = means.shape
        rows = np.broadcast_to(cutoffs[start:stop][None, :, :], (G, S, chain.L + 1)).reshape(G * S, chain.L + 1)
        pmf = ordinal_pmf_rows(means.reshape(-1), rows).reshape(G, S, chain.L)
        total += pmf.sum(axis=1)
    return total / chain.n_samples


def posterior_predict(x0: np.ndarray, chain: ChainOutput) -> np.ndarray:
    """Posterior predictive pmf of the latent score at one covariate vector."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    return posterior_predict_grid(x0[None, :], chain)[0]
