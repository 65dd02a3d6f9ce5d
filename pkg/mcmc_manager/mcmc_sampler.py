"""Adaptive Metropolis-within-Gibbs sampler for the fusion model.

One iteration draws every latent score by Gibbs, then updates the
continuous parameters block by block with Gaussian random-walk proposals
whose scales follow a log-scale Robbins-Monro rule during burn-in.

Block order per iteration:
    beta (beta0 with beta), theta_tilde, omega (omega0 with omega),
    phi_alpha[y] for y = 1..L, nu[a,y] for a = 1..A and y = 1..L,
    nu_tilde[y] for y = 1..L.
Variants drop the blocks whose data source they ignore.
"""
from __future__ import annotations
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from errors import ConfigError
from helper import get_logger
from mcmc_manager.mcmc_gibbs import gibbs_sweep_y
from mcmc_manager.mcmc_output import ChainOutput, McmcConfig
from model_manager.model_density import (
    log_f_C_observed,
    log_f_Y_observed,
    log_f_Y_table,
    log_f_Z_observed,
)
from model_manager.model_priors import (
    PriorSpec,
    log_prior,
    log_prior_alpha,
    log_prior_beta,
    log_prior_nu,
    log_prior_nu_tilde,
    log_prior_omega,
    log_prior_phi,
    log_prior_theta,
    nu_tilde_support,
)
from model_manager.model_types import Dataset, FusionArrays, ParamState

logger = get_logger()

VARIANTS = ("full", "ordinal-only", "compositional-only", "maximum-observed")


@dataclass(frozen=True)
class Block:
    """One Metropolis-Hastings update unit.

    kind is one of beta, theta, omega, phi_alpha, nu, nu_tilde; y and a are
    1-based indices where relevant. For phi_alpha, `parts` says which of
    phi_tilde_y and alpha_y move together.
    """

    kind: str
    y: int = 0
    a: int = 0
    parts: Tuple[str, ...] = ()

    @property
    def name(self) -> str:
        if self.kind == "beta":
            return "beta"
        if self.kind == "theta":
            return "theta_tilde"
        if self.kind == "omega":
            return "omega"
        if self.kind == "phi_alpha":
            label = "phi_alpha" if len(self.parts) == 2 else f"{self.parts[0]}"
            return f"{label}[{self.y}]"
        if self.kind == "nu":
            return f"nu[{self.a},{self.y}]"
        return f"nu_tilde[{self.y}]"

    def dimension(self, L: int, p: int, q: int) -> int:
        if self.kind == "beta":
            return p + 1
        if self.kind == "theta":
            return L - 2
        if self.kind == "omega":
            return q + 1
        if self.kind == "phi_alpha":
            dim = 0
            if "phi" in self.parts:
                dim += L - 2
            if "alpha" in self.parts:
                dim += L - 1
            return dim
        return 1


def block_schedule(variant: str, L: int, A: int) -> List[Block]:
    """The fixed update order for a model variant."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown model variant '{variant}'")
    schedule = [Block("beta")]
    if L >= 3:
        schedule.append(Block("theta"))
    if variant == "maximum-observed":
        return schedule
    uses_z = variant in ("full", "ordinal-only")
    uses_c = variant in ("full", "compositional-only")
    if uses_c:
        schedule.append(Block("omega"))
    parts = tuple(
        name for name, keep in (("phi", uses_z and L >= 3), ("alpha", uses_c)) if keep
    )
    if parts:
        schedule.extend(Block("phi_alpha", y=y, parts=parts) for y in range(1, L + 1))
    if uses_z:
        schedule.extend(Block("nu", y=y, a=a) for a in range(1, A + 1) for y in range(1, L + 1))
        schedule.extend(Block("nu_tilde", y=y) for y in range(1, L + 1))
    return schedule


def adapt_scale(current_scale: float, accepted: bool, iteration: int, target: float, rate: float) -> float:
    """Robbins-Monro step on the log proposal scale."""
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    step = iteration ** (-rate) * (float(accepted) - target)
    return float(np.exp(np.log(current_scale) + step))


def _clr_step(alpha_row: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Random walk on the centered log-ratio scale of a simplex row."""
    log_a = np.log(alpha_row)
    log_a = log_a - log_a.mean() + (noise - noise.mean())
    log_a -= log_a.max()
    out = np.exp(log_a)
    return out / out.sum()


def _sum_zero_noise(rng: np.random.Generator, L: int) -> np.ndarray:
    """L-1 standard normals mapped to an L-vector summing to zero."""
    z = rng.standard_normal(L - 1)
    return np.concatenate((z, [0.0])) - z.sum() / L


class FusionModel:
    """Data, prior and variant bundled for log-target evaluation.

    Every block target is the part of the log posterior that depends on
    the block's parameters given the current latent scores.
    """

    def __init__(self, arrays: FusionArrays, prior: PriorSpec, variant: str):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown model variant '{variant}'")
        self.variant = variant
        self.prior = prior
        if variant == "ordinal-only":
            arrays = arrays.without_confidences()
        elif variant in ("compositional-only", "maximum-observed"):
            arrays = arrays.without_annotations()
            if variant == "maximum-observed":
                arrays = arrays.without_confidences()
        self.arrays = arrays

    @property
    def L(self) -> int:
        return self.arrays.L

    def ll_y(self, state: ParamState) -> float:
        return float(log_f_Y_observed(self.arrays.X, state.y, state).sum())

    def _annotation_rows(self, state: ParamState, y: Optional[int] = None, a: Optional[int] = None) -> np.ndarray:
        arr = self.arrays
        y_of_ann = state.y[arr.ann_seq]
        mask = np.ones(arr.n_annotations, dtype=bool)
        if y is not None:
            mask &= y_of_ann == y
        if a is not None:
            mask &= arr.ann_annotator == a
        return mask

    def ll_z(self, state: ParamState, y: Optional[int] = None, a: Optional[int] = None) -> float:
        arr = self.arrays
        if not arr.n_annotations:
            return 0.0
        mask = self._annotation_rows(state, y, a)
        if not mask.any():
            return 0.0
        y_of_ann = state.y[arr.ann_seq][mask]
        return float(log_f_Z_observed(arr.ann_score[mask], y_of_ann, arr.ann_annotator[mask], state).sum())

    def ll_c(self, state: ParamState, y: Optional[int] = None) -> float:
        arr = self.arrays
        if not arr.n_confidences:
            return 0.0
        y_of_img = state.y[arr.conf_seq]
        if y is None:
            return float(log_f_C_observed(arr.log_c, arr.U, y_of_img, state).sum())
        mask = y_of_img == y
        if not mask.any():
            return 0.0
        return float(log_f_C_observed(arr.log_c[mask], arr.U[mask], y_of_img[mask], state).sum())

    def block_log_target(self, block: Block, state: ParamState) -> float:
        prior = self.prior
        if block.kind == "beta":
            return self.ll_y(state) + log_prior_beta(state, prior)
        if block.kind == "theta":
            return self.ll_y(state) + log_prior_theta(state, prior)
        if block.kind == "omega":
            return self.ll_c(state) + log_prior_omega(state, prior)
        if block.kind == "phi_alpha":
            total = 0.0
            if "phi" in block.parts:
                total += self.ll_z(state, y=block.y)
                total += log_prior_phi(state, prior, block.y) + log_prior_nu_tilde(state, prior, block.y)
            if "alpha" in block.parts:
                total += self.ll_c(state, y=block.y) + log_prior_alpha(state, prior, block.y)
            return total
        if block.kind == "nu":
            return self.ll_z(state, y=block.y, a=block.a) + log_prior_nu(state, prior, block.y, block.a)
        return log_prior_nu(state, prior, block.y) + log_prior_nu_tilde(state, prior, block.y)

    def log_posterior(self, state: ParamState) -> float:
        return self.ll_y(state) + self.ll_z(state) + self.ll_c(state) + log_prior(state, self.prior)

    def initial_state(self) -> ParamState:
        """Starting point: coefficients at zero, cutoffs and alpha at prior means.

        nu_tilde starts at the midpoint of its cell, every annotator mean at
        nu_tilde, and each latent score at a per-sequence data heuristic.
        """
        arr, prior, L = self.arrays, self.prior, self.arrays.L
        phi_tilde = prior.phi_tilde_means.copy()
        nu_tilde = np.empty(L)
        for y in range(1, L + 1):
            lo, hi = nu_tilde_support(phi_tilde[y - 1], y, prior.end_cell_width)
            nu_tilde[y - 1] = 0.5 * (lo + hi)
        conc = prior.alpha_concentration
        state = ParamState(
            beta0=0.0,
            beta=np.zeros(arr.p),
            theta_tilde=prior.theta_tilde_means.copy(),
            phi_tilde=phi_tilde,
            nu=np.tile(nu_tilde, (arr.A, 1)),
            nu_tilde=nu_tilde,
            alpha=conc / conc.sum(axis=1, keepdims=True),
            omega0=0.0,
            omega=np.zeros(arr.q),
        )
        if self.variant == "maximum-observed":
            return state.with_y(arr.observed_y)
        return state.with_y(self._initial_y(state))

    def _initial_y(self, state: ParamState) -> np.ndarray:
        arr, L = self.arrays, self.arrays.L
        fallback = np.argmax(log_f_Y_table(arr.X, state), axis=1) + 1
        votes = np.zeros((arr.N, L))
        np.add.at(votes, (arr.ann_seq, arr.ann_score - 1), 1.0)
        mean_conf = np.zeros((arr.N, L))
        np.add.at(mean_conf, arr.conf_seq, np.exp(arr.log_c))
        y = np.where(
            votes.sum(axis=1) > 0,
            np.argmax(votes, axis=1) + 1,
            np.where(mean_conf.sum(axis=1) > 0, np.argmax(mean_conf, axis=1) + 1, fallback),
        )
        return y.astype(np.int16)

    def propose(self, block: Block, state: ParamState, scale: float, rng: np.random.Generator) -> Tuple[ParamState, float]:
        """Random-walk proposal for one block; returns (proposal, log Jacobian ratio)."""
        if block.kind == "beta":
            step = scale * rng.standard_normal(state.p + 1)
            return replace(state, beta0=state.beta0 + step[0], beta=state.beta + step[1:]), 0.0
        if block.kind == "theta":
            step = scale * rng.standard_normal(state.L - 2)
            return replace(state, theta_tilde=state.theta_tilde + step), 0.0
        if block.kind == "omega":
            step = scale * rng.standard_normal(state.q + 1)
            return replace(state, omega0=state.omega0 + step[0], omega=state.omega + step[1:]), 0.0
        if block.kind == "phi_alpha":
            changes = {}
            log_jac = 0.0
            i = block.y - 1
            if "phi" in block.parts:
                phi_tilde = state.phi_tilde.copy()
                phi_tilde[i] = phi_tilde[i] + scale * rng.standard_normal(state.L - 2)
                changes["phi_tilde"] = phi_tilde
            if "alpha" in block.parts:
                alpha = state.alpha.copy()
                alpha[i] = _clr_step(alpha[i], scale * _sum_zero_noise(rng, state.L))
                with np.errstate(divide="ignore"):
                    log_jac = float(np.log(alpha[i]).sum() - np.log(state.alpha[i]).sum())
                changes["alpha"] = alpha
            return replace(state, **changes), log_jac
        if block.kind == "nu":
            nu = state.nu.copy()
            nu[block.a - 1, block.y - 1] += scale * rng.standard_normal()
            return replace(state, nu=nu), 0.0
        nu_tilde = state.nu_tilde.copy()
        nu_tilde[block.y - 1] += scale * rng.standard_normal()
        return replace(state, nu_tilde=nu_tilde), 0.0


def mh_update_block(
    block: Block,
    state: ParamState,
    model: FusionModel,
    scale: float,
    rng: np.random.Generator,
) -> Tuple[ParamState, bool]:
    """One Metropolis-Hastings step on `block`; proposals with a non-finite target are rejected."""
    proposal, log_jac = model.propose(block, state, scale, rng)
    log_u = np.log(rng.random())
    with np.errstate(invalid="ignore", over="ignore"):
        new_target = model.block_log_target(block, proposal)
    if not np.isfinite(new_target) or not np.isfinite(log_jac):
        return state, False
    log_ratio = new_target - model.block_log_target(block, state) + log_jac
    if log_u < log_ratio:
        return proposal, True
    return state, False


def check_variant_data(arrays: FusionArrays, variant: str) -> None:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown model variant '{variant}'")
    if arrays.N == 0:
        raise ValueError("cannot run a chain on an empty dataset")
    if variant == "ordinal-only" and arrays.n_annotations == 0:
        raise ConfigError("ordinal-only variant needs at least one annotation")
    if variant == "compositional-only" and arrays.n_confidences == 0:
        raise ConfigError("compositional-only variant needs at least one confidence vector")
    if variant == "maximum-observed" and arrays.observed_y is None:
        raise ConfigError("maximum-observed variant needs an observed score on every sequence")


def run_chain(data: Dataset, prior: PriorSpec, cfg: McmcConfig, variant: str = "full") -> ChainOutput:
    """Run one chain and collect its post-burn-in, thinned draws."""
    arrays = data.compile() if isinstance(data, Dataset) else data
    check_variant_data(arrays, variant)
    if prior.L != arrays.L:
        raise ConfigError(f"prior built for L={prior.L}, data has L={arrays.L}")
    model = FusionModel(arrays, prior, variant)
    schedule = block_schedule(variant, arrays.L, arrays.A)
    L, p, q = arrays.L, arrays.p, arrays.q
    targets = {
        b.name: cfg.adapt_target_block if b.dimension(L, p, q) > 1 else cfg.adapt_target_univariate
        for b in schedule
    }
    scales = {b.name: cfg.initial_step for b in schedule}
    accepted = {b.name: 0 for b in schedule}
    rng = np.random.default_rng(cfg.seed)
    state = model.initial_state()
    latent = variant != "maximum-observed"
    y_counts = np.zeros((arrays.N, L)) if latent else None
    samples: List[ParamState] = []
    kept_iterations: List[int] = []
    trace = np.empty(cfg.iterations)
    logger.info("chain start: variant=%s N=%d iterations=%d seed=%d", variant, arrays.N, cfg.iterations, cfg.seed)
    for t in range(1, cfg.iterations + 1):
        if latent:
            state = state.with_y(gibbs_sweep_y(model.arrays, state, rng))
        for block in schedule:
            state, ok = mh_update_block(block, state, model, scales[block.name], rng)
            if t <= cfg.burnin:
                scales[block.name] = adapt_scale(scales[block.name], ok, t, targets[block.name], cfg.adapt_rate)
            elif ok:
                accepted[block.name] += 1
        trace[t - 1] = model.log_posterior(state)
        if t > cfg.burnin and (t - cfg.burnin) % cfg.thin == 0:
            samples.append(state)
            kept_iterations.append(t)
            if latent:
                y_counts[np.arange(arrays.N), state.y - 1] += 1
        if cfg.progress_every and t % cfg.progress_every == 0:
            logger.info("iteration %d/%d log posterior %.3f", t, cfg.iterations, trace[t - 1])
    n_post = cfg.iterations - cfg.burnin
    rates = {name: accepted[name] / n_post for name in accepted}
    logger.debug("final proposal scales: %s", {k: round(v, 4) for k, v in scales.items()})
    logger.debug("acceptance rates: %s", {k: round(v, 3) for k, v in rates.items()})
    marginals = y_counts / len(samples) if latent else None
    return ChainOutput(
        variant=variant,
        L=L,
        samples=samples,
        iterations=np.asarray(kept_iterations, dtype=np.int64),
        acceptance_rates=rates,
        log_post_trace=trace,
        y_marginals=marginals,
        sequence_ids=arrays.sequence_ids,
    )
