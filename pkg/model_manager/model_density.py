"""Log-density evaluation for the three likelihood layers.

f_Y: ordinal probit of the latent score on sequence covariates.
f_Z: ordinal probit of an annotator's score given the latent score.
f_C: mean-precision Dirichlet of an AI confidence vector given the latent score.

Scalar functions evaluate one observation; the `*_table` / `*_observed`
functions are the vectorized forms the sampler runs on.
"""
from __future__ import annotations
from typing import Sequence as SequenceType, Union

import numpy as np
from scipy.special import gammaln, ndtr

from errors import ConfigError, CorruptStateError
from model_manager.model_types import CutoffVector, ParamState, expand_raw_rows

LOG_FLOOR = -700.0

CutoffLike = Union[CutoffVector, SequenceType[float], np.ndarray]


def interval_mass(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Phi(upper) - Phi(lower) for lower <= upper, elementwise.

    Cells lying entirely above zero are evaluated on the upper tail so that
    small masses far out on the right keep their relative accuracy.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    flip = lower > 0
    return np.where(flip, ndtr(-lower) - ndtr(-upper), ndtr(upper) - ndtr(lower))


def clamped_log(prob: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(prob), LOG_FLOOR)


def _expanded(cutoffs: CutoffLike) -> np.ndarray:
    if isinstance(cutoffs, CutoffVector):
        return cutoffs.expanded
    return np.asarray(cutoffs, dtype=float)


def expand_cutoffs(raw: SequenceType[float]) -> CutoffVector:
    """Map L-2 log-increments to the full cutoff vector (-inf, 0, ..., +inf)."""
    return CutoffVector.from_raw(raw)


def contract_cutoffs(expanded: CutoffLike) -> np.ndarray:
    """Inverse of expand_cutoffs: recover the log-increments."""
    full = _expanded(expanded)
    if full.shape[0] < 3 or full[1] != 0.0:
        raise ValueError("expanded cutoffs must have the form (-inf, 0, ..., +inf)")
    gaps = np.diff(full[1:-1])
    if np.any(gaps <= 0):
        raise ValueError("cutoffs must be strictly increasing")
    return np.log(gaps)


def ordinal_pmf(mean: float, cutoffs: CutoffLike, L: int) -> np.ndarray:
    """Category probabilities Phi(c_y - mean) - Phi(c_{y-1} - mean), y = 1..L."""
    mean = float(mean)
    if not np.isfinite(mean):
        raise CorruptStateError(f"non-finite latent mean {mean}")
    full = _expanded(cutoffs)
    if full.shape[0] != L + 1:
        raise ValueError(f"expected {L + 1} expanded cutoffs, got {full.shape[0]}")
    return interval_mass(full[:-1] - mean, full[1:] - mean)


def ordinal_pmf_rows(means: np.ndarray, expanded: np.ndarray) -> np.ndarray:
    """pmf matrix (n, L) for n latent means against one or n cutoff rows."""
    means = np.asarray(means, dtype=float)
    if not np.all(np.isfinite(means)):
        raise CorruptStateError("non-finite latent mean")
    expanded = np.atleast_2d(expanded)
    lower = expanded[:, :-1] - means[:, None]
    upper = expanded[:, 1:] - means[:, None]
    return interval_mass(lower, upper)


def _check_ordinal(value: int, L: int, name: str) -> int:
    if int(value) != value or not 1 <= value <= L:
        raise ValueError(f"{name} must be in 1..{L}, got {value}")
    return int(value)


def log_f_Y(y: int, x: np.ndarray, state: ParamState) -> float:
    L = state.L
    y = _check_ordinal(y, L, "y")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != state.p:
        raise ValueError(f"covariate length {x.shape[0]} does not match beta length {state.p}")
    mean = state.beta0 + float(x @ state.beta)
    pmf = ordinal_pmf(mean, state.theta, L)
    return float(clamped_log(pmf[y - 1]))


def log_f_Z(z: int, y: int, annotator: int, state: ParamState) -> float:
    L = state.L
    z = _check_ordinal(z, L, "z")
    y = _check_ordinal(y, L, "y")
    if int(annotator) != annotator or not 1 <= annotator <= state.A:
        raise ValueError(f"unknown annotator index {annotator} (have {state.A})")
    mean = state.nu[int(annotator) - 1, y - 1]
    full = expand_raw_rows(state.phi_tilde[y - 1][None, :])[0]
    if not np.isfinite(mean):
        raise CorruptStateError(f"non-finite annotator mean {mean}")
    mass = interval_mass(full[z - 1] - mean, full[z] - mean)
    return float(clamped_log(mass))


def log_f_C(c: np.ndarray, y: int, u: np.ndarray, state: ParamState) -> float:
    L = state.L
    y = _check_ordinal(y, L, "y")
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.shape[0] != L:
        raise ValueError(f"confidence vector must have length {L}")
    if np.any(c <= 0):
        raise ValueError("confidence vector has non-positive entries; apply zeta_adjust first")
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != state.q:
        raise ValueError(f"quality covariate length {u.shape[0]} does not match omega length {state.q}")
    s = np.exp(state.omega0 + float(u @ state.omega))
    conc = s * state.alpha[y - 1]
    return float(gammaln(s) - gammaln(conc).sum() + ((conc - 1.0) * np.log(c)).sum())


def zeta_adjust(c: np.ndarray, zeta: float) -> np.ndarray:
    """Smooth a confidence vector away from the simplex boundary.

    When any element is below zeta, add zeta to every element and
    renormalize; otherwise the vector is returned unchanged.
    """
    if not zeta > 0:
        raise ConfigError(f"zeta must be > 0, got {zeta}")
    c = np.asarray(c, dtype=float).reshape(-1)
    if np.any(c < 0):
        raise ValueError("confidence vector has negative entries")
    if abs(c.sum() - 1.0) > 1e-6:
        raise ValueError(f"confidence vector sums to {c.sum()}, not 1")
    if np.any(c < zeta):
        return (c + zeta) / (c.sum() + c.shape[0] * zeta)
    return c.copy()


def log_f_Y_table(X: np.ndarray, state: ParamState) -> np.ndarray:
    """(N, L) clamped log f_Y for every sequence and category."""
    means = state.beta0 + X @ state.beta
    full = expand_raw_rows(state.theta_tilde[None, :])
    return clamped_log(ordinal_pmf_rows(means, full))


def log_f_Y_observed(X: np.ndarray, y: np.ndarray, state: ParamState) -> np.ndarray:
    means = state.beta0 + X @ state.beta
    if not np.all(np.isfinite(means)):
        raise CorruptStateError("non-finite latent mean")
    full = expand_raw_rows(state.theta_tilde[None, :])[0]
    idx = np.asarray(y, dtype=np.intp)
    return clamped_log(interval_mass(full[idx - 1] - means, full[idx] - means))


def log_f_Z_table(state: ParamState) -> np.ndarray:
    """(A, L, L) clamped log f_Z indexed [annotator, y, z], 0-based."""
    full = expand_raw_rows(state.phi_tilde)  # (L, L+1)
    nu = state.nu
    if not np.all(np.isfinite(nu)):
        raise CorruptStateError("non-finite annotator mean")
    lower = full[None, :, :-1] - nu[:, :, None]
    upper = full[None, :, 1:] - nu[:, :, None]
    return clamped_log(interval_mass(lower, upper))


def log_f_Z_observed(
    z: np.ndarray, y: np.ndarray, annotator: np.ndarray, state: ParamState
) -> np.ndarray:
    """Clamped log f_Z for parallel arrays of 1-based scores, categories and annotators."""
    full = expand_raw_rows(state.phi_tilde)
    y0 = np.asarray(y, dtype=np.intp) - 1
    z = np.asarray(z, dtype=np.intp)
    means = state.nu[np.asarray(annotator, dtype=np.intp) - 1, y0]
    lower = full[y0, z - 1] - means
    upper = full[y0, z] - means
    return clamped_log(interval_mass(lower, upper))


def _precision(U: np.ndarray, state: ParamState) -> np.ndarray:
    with np.errstate(over="ignore"):
        return np.exp(state.omega0 + U @ state.omega)


def log_f_C_table(log_c: np.ndarray, U: np.ndarray, state: ParamState) -> np.ndarray:
    """(R, L) log f_C of each confidence row under every category."""
    s = _precision(U, state)
    conc = s[:, None, None] * state.alpha[None, :, :]
    with np.errstate(invalid="ignore", over="ignore"):
        return gammaln(s)[:, None] - gammaln(conc).sum(axis=2) + ((conc - 1.0) * log_c[:, None, :]).sum(axis=2)


def log_f_C_observed(log_c: np.ndarray, U: np.ndarray, y: np.ndarray, state: ParamState) -> np.ndarray:
    s = _precision(U, state)
    conc = s[:, None] * state.alpha[np.asarray(y, dtype=np.intp) - 1]
    with np.errstate(invalid="ignore", over="ignore"):
        return gammaln(s) - gammaln(conc).sum(axis=1) + ((conc - 1.0) * log_c).sum(axis=1)
