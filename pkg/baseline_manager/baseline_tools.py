"""Baseline pipelines that collapse each sequence to one observed response.

linear: a continuous pseudo-response per sequence (annotation mean, or the
    mean expected score of confident AI outputs) fitted by a conjugate
    Bayesian linear regression.
maximum: the median argmax category of confident AI outputs, fitted by the
    ordinal probit regression with the latent score held at that value.
"""
from __future__ import annotations
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from errors import ConfigError
from helper import get_logger
from mcmc_manager.mcmc_output import ChainOutput, McmcConfig
from model_manager.model_priors import PriorSpec
from model_manager.model_types import Dataset, Image, ParamState, Sequence

logger = get_logger()

SIGMA_SHAPE = 0.01
SIGMA_RATE = 0.01


@dataclass(frozen=True)
class ThresholdPolicy:
    T: float

    def __post_init__(self):
        if not 0 < self.T <= 1:
            raise ConfigError(f"threshold must be in (0, 1], got {self.T}")

    def survivors(self, seq: Sequence) -> List[np.ndarray]:
        """Confidence vectors of `seq` whose maximum reaches the threshold."""
        return [c for c in (_reported_confidence(img) for img in seq.images) if c is not None and c.max() >= self.T]


@dataclass(frozen=True)
class LinearResponse:
    sequence_id: str
    y_tilde: float
    source: str


def _reported_confidence(img: Image) -> Optional[np.ndarray]:
    if img.raw_confidence is not None:
        return np.asarray(img.raw_confidence, dtype=float)
    if img.confidence is not None:
        return np.asarray(img.confidence, dtype=float)
    return None


def extract_linear_response(seq: Sequence, policy: ThresholdPolicy, L: int) -> Optional[LinearResponse]:
    """Annotation mean when the sequence has annotations, else mean expected score of confident outputs."""
    scores = [ann.score for img in seq.images for ann in img.annotations]
    if scores:
        return LinearResponse(seq.id, float(np.mean(scores)), "annotation-mean")
    kept = policy.survivors(seq)
    if not kept:
        return None
    levels = np.arange(1, L + 1)
    expected = [float(levels @ c) for c in kept]
    return LinearResponse(seq.id, float(np.mean(expected)), "confidence-weighted")


def extract_maximum_observed(seq: Sequence, policy: ThresholdPolicy) -> Optional[int]:
    """Lower median of the argmax categories of confident outputs; annotations are ignored."""
    kept = policy.survivors(seq)
    if not kept:
        return None
    tops = sorted(int(np.argmax(c)) + 1 for c in kept)
    return tops[(len(tops) - 1) // 2]


def prepare_linear_inputs(data: Dataset, policy: ThresholdPolicy) -> Tuple[List[LinearResponse], np.ndarray]:
    responses, rows = [], []
    for seq in data.sequences:
        resp = extract_linear_response(seq, policy, data.L)
        if resp is not None:
            responses.append(resp)
            rows.append(seq.x)
    X = np.array(rows, dtype=float).reshape(len(rows), data.p)
    logger.info("linear baseline: %d of %d sequences kept at T=%.3g", len(responses), data.N, policy.T)
    return responses, X


def prepare_maximum_dataset(data: Dataset, policy: ThresholdPolicy) -> Dataset:
    """Surviving sequences with `observed_y` set; dropped sequences are excluded."""
    kept = []
    for seq in data.sequences:
        y = extract_maximum_observed(seq, policy)
        if y is not None:
            kept.append(replace(seq, observed_y=y))
    logger.info("maximum baseline: %d of %d sequences kept at T=%.3g", len(kept), data.N, policy.T)
    return data.with_sequences(kept)


def _check_design(X: np.ndarray) -> None:
    """Columns that are identically zero carry no information and are allowed; the rest must be full rank."""
    informative = np.any(X != 0, axis=0)
    design = np.column_stack([np.ones(X.shape[0]), X[:, informative]])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise ValueError("rank-deficient design matrix")


def linear_beta_conditional(
    design: np.ndarray, y: np.ndarray, sigma2: float, prior_precision: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of (beta0, beta) given sigma2 under a zero-mean normal prior."""
    precision = design.T @ design / sigma2 + prior_precision
    cov = np.linalg.inv(precision)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (design.T @ y) / sigma2
    return mean, cov


def fit_bayesian_linear(
    responses: List[LinearResponse],
    X: np.ndarray,
    cfg: McmcConfig,
    prior: Optional[PriorSpec] = None,
    sigma_shape: float = SIGMA_SHAPE,
    sigma_rate: float = SIGMA_RATE,
) -> ChainOutput:
    """Conjugate Gibbs sampler for y_tilde = beta0 + x'beta + eps, eps ~ N(0, sigma2).

    beta0 ~ N(0, intercept_sd^2), beta_j ~ N(0, beta_sd^2), sigma2 ~ IG(shape, rate).
    """
    X = np.asarray(X, dtype=float)
    n = len(responses)
    if X.shape[0] != n:
        raise ValueError("responses and covariate rows differ in length")
    p = X.shape[1]
    if n < p + 2:
        raise ValueError(f"linear fit needs at least {p + 2} responses, got {n}")
    _check_design(X)
    intercept_sd = prior.intercept_sd if prior is not None else float(np.sqrt(10.0))
    beta_sd = prior.beta_sd if prior is not None else 1.0
    prior_precision = np.diag(np.concatenate(([1.0 / intercept_sd**2], np.full(p, 1.0 / beta_sd**2))))
    design = np.column_stack([np.ones(n), X])
    y = np.array([r.y_tilde for r in responses], dtype=float)
    rng = np.random.default_rng(cfg.seed)
    sigma2 = float(np.var(y)) if np.var(y) > 0 else 1.0
    samples: List[ParamState] = []
    sigmas: List[float] = []
    kept: List[int] = []
    trace = np.empty(cfg.iterations)
    shape_post = sigma_shape + 0.5 * n
    for t in range(1, cfg.iterations + 1):
        mean, cov = linear_beta_conditional(design, y, sigma2, prior_precision)
        coef = mean + np.linalg.cholesky(cov) @ rng.standard_normal(p + 1)
        resid = y - design @ coef
        rate_post = sigma_rate + 0.5 * float(resid @ resid)
        sigma2 = 1.0 / rng.gamma(shape_post, 1.0 / rate_post)
        trace[t - 1] = (
            -0.5 * n * np.log(2 * np.pi * sigma2)
            - 0.5 * float(resid @ resid) / sigma2
            - 0.5 * float(coef @ prior_precision @ coef)
        )
        if t > cfg.burnin and (t - cfg.burnin) % cfg.thin == 0:
            samples.append(ParamState.coefficients_only(coef[0], coef[1:]))
            sigmas.append(sigma2)
            kept.append(t)
    return ChainOutput(
        variant="linear",
        L=0,
        samples=samples,
        iterations=np.asarray(kept, dtype=np.int64),
        acceptance_rates={},
        log_post_trace=trace,
        y_marginals=None,
        sequence_ids=tuple(r.sequence_id for r in responses),
        extras={"sigma2": np.asarray(sigmas)},
    )
