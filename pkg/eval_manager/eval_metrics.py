"""Scores for ordinal predictions and coefficient recovery."""
from __future__ import annotations
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence as SequenceType

import numpy as np

from errors import NotApplicableError
from mcmc_manager.mcmc_output import ChainOutput, posterior_predict_grid

CREDIBLE_LEVEL = 0.95


def rps_matrix(predicted: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Ranked probability score of each row of `predicted` against its true category."""
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    truth = np.asarray(truth).reshape(-1)
    n, L = predicted.shape
    if truth.shape[0] != n:
        raise ValueError("one true category is needed per forecast")
    if np.any(np.abs(predicted.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("forecast probabilities must sum to 1")
    if np.any(truth != np.round(truth)) or np.any(truth < 1) or np.any(truth > L):
        raise ValueError(f"true categories must lie in 1..{L}")
    cdf = np.cumsum(predicted, axis=1)[:, :-1]
    observed = (truth[:, None] <= np.arange(1, L)[None, :]).astype(float)
    return ((cdf - observed) ** 2).sum(axis=1) / (L - 1)


def rps(predicted: SequenceType[float], truth: int) -> float:
    return float(rps_matrix(np.asarray(predicted, dtype=float)[None, :], np.array([truth]))[0])


def in_sample_rps(chain: ChainOutput, true_y: SequenceType[int]) -> np.ndarray:
    """RPS of each sequence's posterior score marginal against the true score."""
    if chain.y_marginals is None:
        raise NotApplicableError(f"variant '{chain.variant}' has no latent scores to score in sample")
    true_y = np.asarray(true_y)
    if true_y.shape[0] != chain.y_marginals.shape[0]:
        raise ValueError("true scores do not match the chain's sequences")
    return rps_matrix(chain.y_marginals, true_y)


def out_sample_rps(chain: ChainOutput, test_X: np.ndarray, test_y: SequenceType[int]) -> np.ndarray:
    """RPS of the posterior predictive pmf at each test covariate row."""
    if chain.variant == "linear":
        raise NotApplicableError("the linear baseline does not give ordinal forecasts")
    test_X = np.asarray(test_X, dtype=float)
    test_y = np.asarray(test_y)
    if test_X.shape[0] != test_y.shape[0]:
        raise ValueError("test covariates and test scores differ in length")
    return rps_matrix(posterior_predict_grid(test_X, chain), test_y)


@dataclass(frozen=True)
class CoefficientSummary:
    """Posterior mean and equal-tailed credible bounds of each coefficient."""

    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": self.mean.tolist(), "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d: Dict[str, List[float]]) -> "CoefficientSummary":
        return cls(*(np.asarray(d[k], dtype=float) for k in ("mean", "lower", "upper")))


def summarize_coefficients(chain: ChainOutput, level: float = CREDIBLE_LEVEL) -> CoefficientSummary:
    draws = chain.coefficient_draws()
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(draws, [tail, 1.0 - tail], axis=0)
    return CoefficientSummary(mean=draws.mean(axis=0), lower=lower, upper=upper)


@dataclass(frozen=True)
class BetaMetrics:
    mse: np.ndarray
    coverage: np.ndarray
    detection: np.ndarray
    # share of replicates flagging every nonzero coefficient at once
    nonzero_detection: Optional[float] = None


def beta_metrics_from_summaries(summaries: Iterable[CoefficientSummary], beta_true: SequenceType[float]) -> BetaMetrics:
    summaries = list(summaries)
    if not summaries:
        raise ValueError("need at least one replicate")
    truth = np.asarray(beta_true, dtype=float)
    mean = np.array([s.mean for s in summaries])
    lower = np.array([s.lower for s in summaries])
    upper = np.array([s.upper for s in summaries])
    if mean.shape[1] != truth.shape[0]:
        raise ValueError("true coefficients do not match the fitted coefficient count")
    covers = (lower <= truth) & (truth <= upper)
    holds_zero = (lower <= 0) & (0 <= upper)
    detected = np.where(truth != 0, ~holds_zero, holds_zero)
    nonzero = truth != 0
    return BetaMetrics(
        mse=((mean - truth) ** 2).mean(axis=0),
        coverage=covers.mean(axis=0),
        detection=detected.mean(axis=0),
        nonzero_detection=float(detected[:, nonzero].all(axis=1).mean()) if nonzero.any() else None,
    )


def beta_metrics(chains: Iterable[ChainOutput], beta_true: SequenceType[float]) -> BetaMetrics:
    """MSE of posterior means, coverage and detection of 95% intervals, across replicates."""
    return beta_metrics_from_summaries((summarize_coefficients(c) for c in chains), beta_true)


def summarize_values(values: SequenceType[float]) -> Dict[str, Optional[float]]:
    """Mean, median and quartiles; non-finite entries are ignored."""
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return {"n": 0, "mean": None, "median": None, "q1": None, "q3": None}
    q1, median, q3 = np.quantile(arr, [0.25, 0.5, 0.75])
    return {"n": int(arr.size), "mean": float(arr.mean()), "median": float(median), "q1": float(q1), "q3": float(q3)}


def relative_rps(setting_means: SequenceType[float], reference_means: SequenceType[float]) -> np.ndarray:
    """Per-replicate ratio of a setting's mean RPS to the reference setting's."""
    a = np.asarray(setting_means, dtype=float)
    b = np.asarray(reference_means, dtype=float)
    if a.shape != b.shape:
        raise ValueError("relative RPS needs paired replicates")
    with np.errstate(divide="ignore", invalid="ignore"):
        return a / b
