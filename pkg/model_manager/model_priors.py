"""Prior specification and log-prior evaluation.

The annotator cutoff means are built from an assumed annotator accuracy:
under true category y an annotator reports y with probability `accuracy`
and the other categories share the rest, evenly per tail. The latent-score cutoffs
are equally spaced so that no interior category can receive more than
half of the prior mass.
"""
from __future__ import annotations
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize
from scipy.special import gammaln, ndtr, ndtri

from errors import ConfigError, SolverError
from model_manager.model_density import contract_cutoffs, expand_cutoffs, ordinal_pmf, ordinal_pmf_rows
from model_manager.model_types import CutoffVector, ParamState, check_category_count, expand_raw_rows

LOG_PRIOR_FLOOR = -1e10
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_ACCURACY_TOL = 1e-8
_QUANTILE_BRACKET = 40.0


def _normal_logpdf(x, mean, sd) -> float:
    z = (np.asarray(x, dtype=float) - mean) / sd
    return float(np.sum(-0.5 * z * z - np.log(sd) - _HALF_LOG_2PI))


def _dirichlet_logpdf(x: np.ndarray, conc: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        return float(gammaln(conc.sum()) - gammaln(conc).sum() + ((conc - 1.0) * np.log(x)).sum())


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of every prior.

    Normal sd's are given on the parameter scale; `cutoff_log_var` is the
    variance of each cutoff log-increment. The uniform prior of nu_tilde
    on the first and last cells is truncated to `end_cell_width`; default_prior
    sets it so every nu_tilde center is the midpoint of its cell.
    """

    L: int
    theta_tilde_means: np.ndarray
    phi_tilde_means: np.ndarray
    alpha_concentration: np.ndarray
    nu_tilde_centers: np.ndarray
    beta_sd: float = 1.0
    intercept_sd: float = float(np.sqrt(10.0))
    omega_sd: float = float(np.sqrt(10.0))
    cutoff_log_var: float = 10.0
    nu_conditional_var: float = 0.2
    annotator_accuracy: float = 0.95
    end_cell_width: float = 5.0

    def __post_init__(self):
        check_category_count(self.L)
        for name in ("beta_sd", "intercept_sd", "omega_sd", "cutoff_log_var", "nu_conditional_var", "end_cell_width"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"prior {name} must be > 0")
        if not 0.5 < self.annotator_accuracy < 1:
            raise ConfigError("prior annotator_accuracy must be in (0.5, 1)")
        if self.alpha_concentration.shape != (self.L, self.L) or np.any(self.alpha_concentration <= 0):
            raise ConfigError("alpha concentration rows must be strictly positive")
        if self.theta_tilde_means.shape != (self.L - 2,) or self.phi_tilde_means.shape != (self.L, self.L - 2):
            raise ConfigError("cutoff prior means have the wrong shape")

    @property
    def cutoff_sd(self) -> float:
        return float(np.sqrt(self.cutoff_log_var))

    @property
    def nu_sd(self) -> float:
        return float(np.sqrt(self.nu_conditional_var))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta_sd": self.beta_sd,
            "intercept_sd": self.intercept_sd,
            "omega_sd": self.omega_sd,
            "cutoff_log_var": self.cutoff_log_var,
            "nu_conditional_var": self.nu_conditional_var,
            "annotator_accuracy": self.annotator_accuracy,
            "end_cell_width": self.end_cell_width,
        }


PRIOR_OVERRIDE_KEYS = (
    "beta_sd",
    "intercept_sd",
    "omega_sd",
    "cutoff_log_var",
    "nu_conditional_var",
    "annotator_accuracy",
    "end_cell_width",
)


def _solve_quantile(cum: float) -> float:
    """Offset t from the mean with Phi(t) = cum."""
    return float(optimize.brentq(lambda t: ndtr(t) - cum, -_QUANTILE_BRACKET, _QUANTILE_BRACKET, xtol=1e-14))


def _half_width(accuracy: float, end_cell: bool) -> float:
    """Distance from the cell midpoint to a boundary so the cell holds `accuracy`."""
    if end_cell:
        return _solve_quantile(accuracy)
    return float(optimize.brentq(lambda d: 2.0 * ndtr(d) - 1.0 - accuracy, 0.0, _QUANTILE_BRACKET, xtol=1e-14))


def _tail_masses(accuracy: float, below: int, above: int) -> Tuple[float, float]:
    tail = 1.0 - accuracy
    if below == 0:
        return 0.0, tail
    if above == 0:
        return tail, 0.0
    return tail / 2.0, tail / 2.0


def construct_accuracy_cutoffs(L: int, accuracy: float) -> Tuple[np.ndarray, List[CutoffVector]]:
    """Annotator means and cutoffs giving the stated accuracy per category.

    nu_tilde_y sits at the midpoint of its own cell, with the cell boundaries
    symmetric around it. An end cell is read as truncated to twice its
    half-width, so end categories need accuracy above 1/2. The remaining
    mass is split evenly between the two tails and evenly within each tail.
    The first cutoff is pinned at 0.
    """
    L = check_category_count(L)
    if not 0.5 < accuracy < 1:
        raise ValueError(f"accuracy must be in (0.5, 1), got {accuracy}")
    nu_tilde = np.empty(L)
    phi: List[CutoffVector] = []
    worst = 0.0
    for y in range(1, L + 1):
        below, above = y - 1, L - y
        d = _half_width(accuracy, end_cell=below == 0 or above == 0)
        m_lo, m_hi = _tail_masses(accuracy, below, above)
        offsets = np.empty(L - 1)
        for z in range(1, L):
            if z == y - 1:
                offsets[z - 1] = -d
            elif z == y:
                offsets[z - 1] = d
            elif z < y:
                offsets[z - 1] = _solve_quantile(m_lo * z / below)
            else:
                offsets[z - 1] = _solve_quantile(1.0 - m_hi * (L - z) / above)
        nu_y = -float(offsets[0])
        cut = nu_y + offsets
        cut[0] = 0.0
        vec = expand_cutoffs(contract_cutoffs(np.concatenate(([-np.inf], cut, [np.inf]))))
        target = np.full(L, accuracy)
        target[: y - 1] = m_lo / below if below else 0.0
        target[y:] = m_hi / above if above else 0.0
        residual = float(np.max(np.abs(ordinal_pmf(nu_y, vec, L) - target)))
        worst = max(worst, residual)
        nu_tilde[y - 1] = nu_y
        phi.append(vec)
    if not worst <= _ACCURACY_TOL:
        raise SolverError(f"accuracy cutoffs missed their target pmf, residual {worst:.3e}")
    return nu_tilde, phi


def theta_prior_means(L: int) -> np.ndarray:
    """Log-increment means for equally spaced cutoffs with interior cells of max probability 0.5."""
    L = check_category_count(L)
    if L < 3:
        raise ValueError("theta prior means need at least 3 categories")
    width = 2.0 * float(ndtri(0.75))
    return np.full(L - 2, np.log(width))


def alpha_prior_concentration(L: int, on_target: float = 0.4) -> np.ndarray:
    conc = np.full((L, L), (1.0 - on_target) / (L - 1))
    np.fill_diagonal(conc, on_target)
    return conc


def default_prior(L: int, p: int = 0, q: int = 0, A: int = 0, **overrides: Any) -> PriorSpec:
    """The fixed prior configuration; `overrides` replaces scalar hyperparameters."""
    L = check_category_count(L)
    unknown = set(overrides) - set(PRIOR_OVERRIDE_KEYS)
    if unknown:
        raise ConfigError(f"unknown prior override(s): {', '.join(sorted(unknown))}")
    accuracy = float(overrides.get("annotator_accuracy", 0.95))
    if not 0.5 < accuracy < 1:
        raise ConfigError("prior annotator_accuracy must be in (0.5, 1)")
    nu_tilde, phi = construct_accuracy_cutoffs(L, accuracy)
    spec = PriorSpec(
        L=L,
        theta_tilde_means=theta_prior_means(L) if L >= 3 else np.zeros(0),
        phi_tilde_means=np.array([v.raw for v in phi]).reshape(L, L - 2),
        alpha_concentration=alpha_prior_concentration(L),
        nu_tilde_centers=nu_tilde,
        end_cell_width=2.0 * float(phi[0].expanded[1] - nu_tilde[0]),
    )
    if overrides:
        spec = replace(spec, **{k: float(v) for k, v in overrides.items()})
    return spec


def nu_tilde_support(phi_row: np.ndarray, y: int, end_cell_width: float) -> Tuple[float, float]:
    """Cell [phi_{y,y-1}, phi_{y,y}] of nu_tilde_y, end cells truncated."""
    full = expand_raw_rows(phi_row[None, :])[0]
    lo, hi = float(full[y - 1]), float(full[y])
    if not np.isfinite(lo):
        lo = hi - end_cell_width
    if not np.isfinite(hi):
        hi = lo + end_cell_width
    return lo, hi


def log_prior_beta(state: ParamState, spec: PriorSpec) -> float:
    return _normal_logpdf(state.beta0, 0.0, spec.intercept_sd) + _normal_logpdf(state.beta, 0.0, spec.beta_sd)


def log_prior_theta(state: ParamState, spec: PriorSpec) -> float:
    return _normal_logpdf(state.theta_tilde, spec.theta_tilde_means, spec.cutoff_sd)


def log_prior_omega(state: ParamState, spec: PriorSpec) -> float:
    return _normal_logpdf(state.omega0, 0.0, spec.omega_sd) + _normal_logpdf(state.omega, 0.0, spec.omega_sd)


def log_prior_phi(state: ParamState, spec: PriorSpec, y: int) -> float:
    return _normal_logpdf(state.phi_tilde[y - 1], spec.phi_tilde_means[y - 1], spec.cutoff_sd)


def log_prior_alpha(state: ParamState, spec: PriorSpec, y: int) -> float:
    return _dirichlet_logpdf(state.alpha[y - 1], spec.alpha_concentration[y - 1])


def log_prior_nu(state: ParamState, spec: PriorSpec, y: int, annotator: Optional[int] = None) -> float:
    """N(nu_tilde_y, nu_conditional_var) for one annotator, or summed over all of them."""
    if annotator is None:
        values = state.nu[:, y - 1]
    else:
        values = state.nu[annotator - 1, y - 1]
    return _normal_logpdf(values, state.nu_tilde[y - 1], spec.nu_sd)


def log_prior_nu_tilde(state: ParamState, spec: PriorSpec, y: int) -> float:
    lo, hi = nu_tilde_support(state.phi_tilde[y - 1], y, spec.end_cell_width)
    value = state.nu_tilde[y - 1]
    if not lo <= value <= hi:
        return LOG_PRIOR_FLOOR
    return -float(np.log(hi - lo))


def log_prior(state: ParamState, spec: PriorSpec) -> float:
    total = log_prior_beta(state, spec) + log_prior_theta(state, spec) + log_prior_omega(state, spec)
    for y in range(1, spec.L + 1):
        total += log_prior_phi(state, spec, y)
        total += log_prior_alpha(state, spec, y)
        total += log_prior_nu(state, spec, y)
        total += log_prior_nu_tilde(state, spec, y)
    return float(max(total, LOG_PRIOR_FLOOR))


def prior_sample(
    spec: PriorSpec,
    p: int,
    q: int,
    A: int,
    rng: np.random.Generator,
    X: Optional[np.ndarray] = None,
) -> ParamState:
    """Draw a full ParamState from the prior.

    When covariates X are given, the latent scores are drawn from f_Y under
    the sampled coefficients; otherwise y is empty.
    """
    L = spec.L
    beta0 = float(rng.normal(0.0, spec.intercept_sd))
    beta = rng.normal(0.0, spec.beta_sd, size=p)
    theta_tilde = spec.theta_tilde_means + spec.cutoff_sd * rng.standard_normal(L - 2)
    phi_tilde = spec.phi_tilde_means + spec.cutoff_sd * rng.standard_normal((L, L - 2))
    nu_tilde = np.empty(L)
    for y in range(1, L + 1):
        lo, hi = nu_tilde_support(phi_tilde[y - 1], y, spec.end_cell_width)
        nu_tilde[y - 1] = rng.uniform(lo, hi)
    nu = nu_tilde[None, :] + spec.nu_sd * rng.standard_normal((A, L))
    alpha = np.array([rng.dirichlet(row) for row in spec.alpha_concentration])
    omega0 = float(rng.normal(0.0, spec.omega_sd))
    omega = rng.normal(0.0, spec.omega_sd, size=q)
    state = ParamState(
        beta0=beta0,
        beta=beta,
        theta_tilde=theta_tilde,
        phi_tilde=phi_tilde,
        nu=nu,
        nu_tilde=nu_tilde,
        alpha=alpha,
        omega0=omega0,
        omega=omega,
    )
    if X is not None:
        state = state.with_y(draw_ordinal(state.beta0 + np.asarray(X) @ beta, state.theta_tilde, rng))
    return state


def draw_ordinal(means: np.ndarray, raw_cutoffs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws of ordinal probit outcomes, one per latent mean."""
    pmf = ordinal_pmf_rows(np.asarray(means, dtype=float), expand_raw_rows(np.asarray(raw_cutoffs)[None, :]))
    return categorical_draws(pmf, rng)


def categorical_draws(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One 1-based category per row of a probability matrix, by inverse CDF."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    y = (u[:, None] >= cdf).sum(axis=1) + 1
    return np.minimum(y, probs.shape[1]).astype(np.int16)
