"""Synthetic camera-trap datasets drawn from the fusion model.

A replicate is generated in two stages: `generate_dataset` draws the
sequences, latent scores and AI confidences, and
`annotate_training_images` layers annotations on a random share of the
training images. Settings that differ only in their annotated share can
therefore be fitted to the same base data.
"""
from __future__ import annotations
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, List, Sequence as SequenceType, Tuple

import numpy as np
from scipy.special import ndtri

from errors import ConfigError
from model_manager.model_density import log_f_Y_table, log_f_Z_table, zeta_adjust
from model_manager.model_priors import categorical_draws, construct_accuracy_cutoffs
from model_manager.model_types import (
    Annotation,
    CutoffVector,
    Dataset,
    FusionArrays,
    Image,
    ParamState,
    Sequence,
    Standardizer,
    check_category_count,
)


@dataclass(frozen=True)
class SimConfig:
    n_train: int = 500
    n_test: int = 1000
    L: int = 5
    p: int = 6
    beta_true: Tuple[float, ...] = (0.2, -0.3, 0.0, 0.0, 0.2, -0.3)
    beta0_true: float = 1.38
    omega0_true: float = 0.0
    omega_true: Tuple[float, ...] = (1.0,)
    annotators: int = 3
    nu_spread: float = 0.1
    ai_correct_confidence: float = 0.6
    annotator_accuracy: float = 0.95
    annotated_fraction: float = 0.2
    r_choices: Tuple[int, ...] = (1, 3, 5, 10)
    max_probs: Tuple[float, ...] = (0.2, 0.5, 0.3)
    zeta: float = 1e-12
    pool_size: int = 1000
    seed: int = 0

    def __post_init__(self):
        check_category_count(self.L)
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        object.__setattr__(self, "omega_true", tuple(float(w) for w in self.omega_true))
        object.__setattr__(self, "r_choices", tuple(int(r) for r in self.r_choices))
        object.__setattr__(self, "max_probs", tuple(float(m) for m in self.max_probs))
        if len(self.beta_true) != self.p:
            raise ConfigError(f"sim beta_true has {len(self.beta_true)} entries, p={self.p}")
        if len(self.max_probs) != self.L - 2:
            raise ConfigError(f"sim max_probs needs {self.L - 2} entries")
        if any(not 0 < m < 1 for m in self.max_probs):
            raise ConfigError("sim max_probs must lie in (0, 1)")
        if self.n_train < 1 or self.n_test < 0:
            raise ConfigError("sim needs n_train >= 1 and n_test >= 0")
        if self.annotators < 1:
            raise ConfigError("sim needs at least one annotator")
        if not self.r_choices or min(self.r_choices) < 1:
            raise ConfigError("sim r_choices must be positive image counts")
        if not 0 <= self.annotated_fraction <= 1:
            raise ConfigError("sim annotated_fraction must lie in [0, 1]")
        if not 0 < self.ai_correct_confidence < 1:
            raise ConfigError("sim ai_correct_confidence must lie in (0, 1)")
        if not 0.5 < self.annotator_accuracy < 1:
            raise ConfigError("sim annotator_accuracy must lie in (0.5, 1)")
        if not self.zeta > 0 or not self.nu_spread >= 0 or self.pool_size < 1:
            raise ConfigError("sim zeta, nu_spread and pool_size must be positive")

    @property
    def q(self) -> int:
        return len(self.omega_true)

    def to_dict(self) -> Dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(frozen=True)
class CovariatePool:
    """Rows that sequence covariates (X) and image covariates (U) are drawn from."""

    x_rows: np.ndarray
    u_rows: np.ndarray

    def __post_init__(self):
        if self.x_rows.shape[0] < 1 or self.u_rows.shape[0] < 1:
            raise ValueError("covariate pool is empty")


def derive_theta_from_max_probs(max_probs: SequenceType[float], L: int) -> CutoffVector:
    """Cutoffs whose interior cells have the given maximum probabilities.

    A cell of width w holds at most 2*Phi(w/2) - 1 of the mass, reached when
    the latent mean sits at its midpoint.
    """
    L = check_category_count(L)
    m = np.asarray(max_probs, dtype=float).reshape(-1)
    if m.shape[0] != L - 2:
        raise ValueError(f"need {L - 2} maximum probabilities for L={L}")
    if np.any(m <= 0) or np.any(m >= 1):
        raise ValueError("maximum probabilities must lie strictly between 0 and 1")
    widths = 2.0 * ndtri((1.0 + m) / 2.0)
    return CutoffVector.from_raw(np.log(widths))


def covariate_pool_standard_normal(p: int, q: int, pool_size: int, rng: np.random.Generator) -> CovariatePool:
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    rows = rng.standard_normal((pool_size, p + q))
    return CovariatePool(x_rows=rows[:, :p].copy(), u_rows=rows[:, p:].copy())


def true_state(cfg: SimConfig, rng: np.random.Generator) -> ParamState:
    """Ground-truth parameters; annotator means scatter around the accuracy construction."""
    L, A = cfg.L, cfg.annotators
    nu_tilde, phi = construct_accuracy_cutoffs(L, cfg.annotator_accuracy)
    nu = nu_tilde[None, :] + np.sqrt(cfg.nu_spread) * rng.standard_normal((A, L))
    alpha = np.full((L, L), (1.0 - cfg.ai_correct_confidence) / (L - 1))
    np.fill_diagonal(alpha, cfg.ai_correct_confidence)
    return ParamState(
        beta0=cfg.beta0_true,
        beta=np.asarray(cfg.beta_true, dtype=float),
        theta_tilde=derive_theta_from_max_probs(cfg.max_probs, L).raw,
        phi_tilde=np.array([v.raw for v in phi]).reshape(L, L - 2),
        nu=nu,
        nu_tilde=nu_tilde,
        alpha=alpha,
        omega0=cfg.omega0_true,
        omega=np.asarray(cfg.omega_true, dtype=float),
    )


def draw_confidence(concentration: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One Dirichlet draw; a draw that collapses numerically becomes a one-hot vector."""
    c = rng.dirichlet(concentration)
    if not np.all(np.isfinite(c)) or c.sum() <= 0:
        c = np.zeros_like(concentration)
        c[rng.choice(len(concentration), p=concentration / concentration.sum())] = 1.0
    return c / c.sum()


def _draw_scores(state: ParamState, y: np.ndarray, annotator: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    table = np.exp(log_f_Z_table(state))  # [a, y, z]
    probs = table[annotator - 1, y - 1]
    probs = probs / probs.sum(axis=1, keepdims=True)
    return categorical_draws(probs, rng).astype(np.intp)


def _draw_sequences(
    cfg: SimConfig, truth: ParamState, pool: CovariatePool, n: int, prefix: str, rng: np.random.Generator
) -> List[Sequence]:
    if n == 0:
        return []
    x_idx = rng.integers(0, pool.x_rows.shape[0], size=n)
    X = pool.x_rows[x_idx]
    pmf = np.exp(log_f_Y_table(X, truth))
    y = categorical_draws(pmf / pmf.sum(axis=1, keepdims=True), rng)
    r = rng.choice(np.asarray(cfg.r_choices), size=n)
    sequences = []
    for i in range(n):
        seq_id = f"{prefix}{i + 1:05d}"
        images = []
        for k in range(int(r[i])):
            u = pool.u_rows[rng.integers(0, pool.u_rows.shape[0])]
            s = np.exp(truth.omega0 + float(u @ truth.omega))
            raw = draw_confidence(s * truth.alpha[y[i] - 1], rng)
            images.append(
                Image(
                    id=f"{seq_id}_img{k + 1:02d}",
                    u=u.copy(),
                    confidence=zeta_adjust(raw, cfg.zeta),
                    raw_confidence=raw,
                )
            )
        sequences.append(
            Sequence(id=seq_id, x=X[i].copy(), images=tuple(images), true_y=int(y[i]), x_raw=X[i].copy())
        )
    return sequences


def _as_dataset(cfg: SimConfig, sequences: List[Sequence]) -> Dataset:
    return Dataset(
        sequences=tuple(sequences),
        L=cfg.L,
        A=cfg.annotators,
        p=cfg.p,
        q=cfg.q,
        zeta=cfg.zeta,
        annotator_ids=tuple(str(a) for a in range(1, cfg.annotators + 1)),
        standardizer=Standardizer.identity(cfg.p),
    )


def annotate_training_images(
    data: Dataset, truth: ParamState, fraction: float, rng: np.random.Generator
) -> Dataset:
    """Give a uniformly chosen share of all images one annotation each.

    Annotators are uniform on 1..A and scores follow f_Z under the
    sequence's true latent score. Existing annotations are replaced.
    """
    if not 0 <= fraction <= 1:
        raise ValueError("annotated fraction must lie in [0, 1]")
    flat = [(i, k) for i, seq in enumerate(data.sequences) for k in range(seq.r)]
    n_pick = int(round(fraction * len(flat)))
    picked = np.sort(rng.choice(len(flat), size=n_pick, replace=False)) if n_pick else np.zeros(0, dtype=int)
    annotator = rng.integers(1, data.A + 1, size=n_pick)
    y = np.array([data.sequences[flat[j][0]].true_y for j in picked], dtype=np.intp)
    scores = _draw_scores(truth, y, annotator, rng) if n_pick else np.zeros(0, dtype=np.intp)
    new_ann: Dict[Tuple[int, int], Annotation] = {}
    for j, a, z in zip(picked, annotator, scores):
        new_ann[flat[j]] = Annotation(score=int(z), annotator=int(a), annotator_id=str(int(a)))
    sequences = []
    for i, seq in enumerate(data.sequences):
        images = []
        for k, img in enumerate(seq.images):
            ann = new_ann.get((i, k))
            images.append(replace(img, annotations=(ann,) if ann is not None else ()))
        sequences.append(replace(seq, images=tuple(images)))
    return data.with_sequences(sequences)


def generate_dataset(
    cfg: SimConfig, pool: CovariatePool, rng: np.random.Generator
) -> Tuple[Dataset, Dataset, ParamState]:
    """Draw a training set, a test set and the truth they came from.

    The returned truth carries the training latent scores as `y`.
    """
    truth = true_state(cfg, rng)
    train = _as_dataset(cfg, _draw_sequences(cfg, truth, pool, cfg.n_train, "train", rng))
    test = _as_dataset(cfg, _draw_sequences(cfg, truth, pool, cfg.n_test, "test", rng))
    train = annotate_training_images(train, truth, cfg.annotated_fraction, rng)
    truth = truth.with_y(np.array([s.true_y for s in train.sequences], dtype=np.int16))
    return train, test, truth


def draw_observations(arrays: FusionArrays, state: ParamState, zeta: float, rng: np.random.Generator) -> FusionArrays:
    """Redraw every annotation score and confidence vector given `state`.

    The design (which images carry which source, annotators, covariates)
    is kept; only the observed values change.
    """
    y = np.asarray(state.y, dtype=np.intp)
    scores = arrays.ann_score
    if arrays.n_annotations:
        scores = _draw_scores(state, y[arrays.ann_seq], arrays.ann_annotator, rng)
    log_c = arrays.log_c
    if arrays.n_confidences:
        rows = []
        s = np.exp(state.omega0 + arrays.U @ state.omega)
        for r, i in enumerate(arrays.conf_seq):
            rows.append(zeta_adjust(draw_confidence(s[r] * state.alpha[y[i] - 1], rng), zeta))
        log_c = np.log(np.array(rows))
    return replace(arrays, ann_score=scores, log_c=log_c)


def truth_to_dict(truth: ParamState) -> Dict[str, Any]:
    return {
        "beta0": truth.beta0,
        "beta": truth.beta.tolist(),
        "theta": truth.theta.interior.tolist(),
        "theta_tilde": truth.theta_tilde.tolist(),
        "phi_tilde": truth.phi_tilde.tolist(),
        "nu": truth.nu.tolist(),
        "nu_tilde": truth.nu_tilde.tolist(),
        "alpha": truth.alpha.tolist(),
        "omega0": truth.omega0,
        "omega": truth.omega.tolist(),
    }
