"""Domain types shared by every layer of the fusion model.

Categories, scores and annotator indices are 1-based throughout, matching
the ordinal scale they describe. Arrays stored on the types are never
mutated in place once built; updates go through `dataclasses.replace`.
"""
from __future__ import annotations
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence as SequenceType, Tuple

import numpy as np

SIMPLEX_INGEST_TOL = 1e-6
SIMPLEX_TOL = 1e-9


def check_category_count(L: int) -> int:
    """Validate an ordinal category count (L >= 2) and return it as int."""
    if int(L) != L or L < 2:
        raise ValueError(f"number of categories must be an integer >= 2, got {L}")
    return int(L)


@dataclass(frozen=True)
class CutoffVector:
    """Ordered cutoffs stored as log-increments.

    `raw` holds the L-2 log-increments; `expanded` is the full length L+1
    vector (-inf, 0, ..., +inf) with expanded[y] = expanded[y-1] + exp(raw).
    """

    raw: np.ndarray
    expanded: np.ndarray

    @classmethod
    def from_raw(cls, raw: SequenceType[float]) -> "CutoffVector":
        raw = np.asarray(raw, dtype=float).reshape(-1)
        if not np.all(np.isfinite(raw)):
            raise ValueError("cutoff log-increments must be finite")
        return cls(raw=raw, expanded=expand_raw_rows(raw[None, :])[0])

    @property
    def L(self) -> int:
        return self.expanded.shape[0] - 1

    @property
    def interior(self) -> np.ndarray:
        """Finite cutoffs theta_1..theta_{L-1}."""
        return self.expanded[1:-1]


def expand_raw_rows(raw: np.ndarray) -> np.ndarray:
    """Expand a (k, L-2) matrix of log-increments to (k, L+1) cutoffs."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    k = raw.shape[0]
    out = np.empty((k, raw.shape[1] + 3))
    out[:, 0] = -np.inf
    out[:, 1] = 0.0
    if raw.shape[1]:
        out[:, 2:-1] = np.cumsum(np.exp(raw), axis=1)
    out[:, -1] = np.inf
    return out


@dataclass(frozen=True)
class Annotation:
    score: int
    annotator: int
    annotator_id: str = ""


@dataclass(frozen=True)
class Image:
    """One camera-trap image of a sequence.

    `confidence` is the zeta-adjusted vector the model consumes;
    `raw_confidence` is the vector as supplied (renormalized to sum 1).
    An image may carry several annotations from different annotators.
    """

    id: str
    u: np.ndarray
    annotations: Tuple[Annotation, ...] = ()
    confidence: Optional[np.ndarray] = None
    raw_confidence: Optional[np.ndarray] = None

    @property
    def annotation(self) -> Optional[Annotation]:
        return self.annotations[0] if self.annotations else None

    @property
    def has_observation(self) -> bool:
        return bool(self.annotations) or self.confidence is not None


@dataclass(frozen=True)
class Sequence:
    """A burst of images of one individual, carrying one latent score.

    `x` is on the model (standardized) scale; `x_raw` is what was read
    from disk. `observed_y` is only set by the maximum-confidence
    preprocessing.
    """

    id: str
    x: np.ndarray
    images: Tuple[Image, ...]
    true_y: Optional[int] = None
    x_raw: Optional[np.ndarray] = None
    observed_y: Optional[int] = None

    def __post_init__(self):
        if len(self.images) < 1:
            raise ValueError(f"sequence {self.id} has no images")
        for img in self.images:
            if not img.has_observation:
                raise ValueError(f"image {img.id} of sequence {self.id} has neither annotation nor confidence")

    @property
    def r(self) -> int:
        return len(self.images)


@dataclass(frozen=True)
class Standardizer:
    """Per-column centering and scaling of covariates."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            return cls.identity(X.shape[1])
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean=mean, scale=scale)

    @classmethod
    def identity(cls, p: int) -> "Standardizer":
        return cls(mean=np.zeros(p), scale=np.ones(p))

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.shape[0]:
            raise ValueError(f"expected {self.mean.shape[0]} covariates, got {X.shape[-1]}")
        return (X - self.mean) / self.scale

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": [float(v) for v in self.mean], "scale": [float(v) for v in self.scale]}

    @classmethod
    def from_dict(cls, d: Dict[str, List[float]]) -> "Standardizer":
        return cls(mean=np.asarray(d["mean"], dtype=float), scale=np.asarray(d["scale"], dtype=float))


@dataclass(frozen=True)
class Dataset:
    """The observed data: sequences with covariates, images and observations."""

    sequences: Tuple[Sequence, ...]
    L: int
    A: int
    p: int
    q: int
    zeta: float
    annotator_ids: Tuple[str, ...] = ()
    standardizer: Optional[Standardizer] = None

    def __post_init__(self):
        check_category_count(self.L)

    @property
    def N(self) -> int:
        return len(self.sequences)

    @property
    def n_images(self) -> int:
        return sum(s.r for s in self.sequences)

    @property
    def n_annotations(self) -> int:
        return sum(len(img.annotations) for s in self.sequences for img in s.images)

    @property
    def n_confidences(self) -> int:
        return sum(img.confidence is not None for s in self.sequences for img in s.images)

    def with_sequences(self, sequences: SequenceType[Sequence]) -> "Dataset":
        return replace(self, sequences=tuple(sequences))

    def compile(self) -> "FusionArrays":
        return FusionArrays.from_dataset(self)


@dataclass(frozen=True)
class FusionArrays:
    """Flat array view of a Dataset used by the sampler.

    Confidence-bearing images and annotation records are stored as rows
    pointing back at their sequence index.
    """

    L: int
    A: int
    X: np.ndarray
    sequence_ids: Tuple[str, ...]
    conf_seq: np.ndarray
    U: np.ndarray
    log_c: np.ndarray
    ann_seq: np.ndarray
    ann_score: np.ndarray
    ann_annotator: np.ndarray
    observed_y: Optional[np.ndarray] = None
    true_y: Optional[np.ndarray] = None

    @classmethod
    def from_dataset(cls, data: Dataset) -> "FusionArrays":
        conf_seq, U_rows, c_rows = [], [], []
        ann_seq, ann_score, ann_annotator = [], [], []
        for i, seq in enumerate(data.sequences):
            for img in seq.images:
                if img.confidence is not None:
                    conf_seq.append(i)
                    U_rows.append(np.asarray(img.u, dtype=float))
                    c_rows.append(np.asarray(img.confidence, dtype=float))
                for ann in img.annotations:
                    ann_seq.append(i)
                    ann_score.append(ann.score)
                    ann_annotator.append(ann.annotator)
        N = data.N
        X = np.array([s.x for s in data.sequences], dtype=float).reshape(N, data.p)
        c = np.array(c_rows, dtype=float).reshape(len(c_rows), data.L)
        if np.any(c <= 0):
            raise ValueError("confidence vectors must be strictly positive; apply zeta_adjust first")
        observed = None
        if N and all(s.observed_y is not None for s in data.sequences):
            observed = np.array([s.observed_y for s in data.sequences], dtype=np.int16)
        true_y = None
        if N and all(s.true_y is not None for s in data.sequences):
            true_y = np.array([s.true_y for s in data.sequences], dtype=np.int16)
        return cls(
            L=data.L,
            A=data.A,
            X=X,
            sequence_ids=tuple(s.id for s in data.sequences),
            conf_seq=np.array(conf_seq, dtype=np.intp),
            U=np.array(U_rows, dtype=float).reshape(len(U_rows), data.q),
            log_c=np.log(c),
            ann_seq=np.array(ann_seq, dtype=np.intp),
            ann_score=np.array(ann_score, dtype=np.intp),
            ann_annotator=np.array(ann_annotator, dtype=np.intp),
            observed_y=observed,
            true_y=true_y,
        )

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.U.shape[1]

    @property
    def n_annotations(self) -> int:
        return self.ann_seq.shape[0]

    @property
    def n_confidences(self) -> int:
        return self.conf_seq.shape[0]

    def without_confidences(self) -> "FusionArrays":
        return replace(
            self,
            conf_seq=self.conf_seq[:0],
            U=self.U[:0],
            log_c=self.log_c[:0],
        )

    def without_annotations(self) -> "FusionArrays":
        return replace(
            self,
            ann_seq=self.ann_seq[:0],
            ann_score=self.ann_score[:0],
            ann_annotator=self.ann_annotator[:0],
        )


@dataclass(frozen=True)
class ParamState:
    """One point in parameter space, plus the latent score vector.

    Shapes: beta (p,), theta_tilde (L-2,), phi_tilde (L, L-2), nu (A, L),
    nu_tilde (L,), alpha (L, L) with simplex rows, omega (q,), y (N,).
    """

    beta0: float
    beta: np.ndarray
    theta_tilde: np.ndarray
    phi_tilde: np.ndarray
    nu: np.ndarray
    nu_tilde: np.ndarray
    alpha: np.ndarray
    omega0: float
    omega: np.ndarray
    y: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int16))

    @property
    def L(self) -> int:
        return self.theta_tilde.shape[0] + 2

    @property
    def A(self) -> int:
        return self.nu.shape[0]

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @property
    def q(self) -> int:
        return self.omega.shape[0]

    @property
    def theta(self) -> CutoffVector:
        return CutoffVector.from_raw(self.theta_tilde)

    @property
    def phi(self) -> List[CutoffVector]:
        return [CutoffVector.from_raw(row) for row in self.phi_tilde]

    def check(self) -> None:
        """Raise ValueError when an invariant of the state is violated."""
        L = self.L
        if self.alpha.shape != (L, L):
            raise ValueError(f"alpha must be {L}x{L}")
        if np.any(self.alpha < 0) or np.any(np.abs(self.alpha.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise ValueError("each alpha row must be a simplex vector")
        if self.phi_tilde.shape != (L, L - 2) or self.nu.shape[1:] != (L,) or self.nu_tilde.shape != (L,):
            raise ValueError("annotation parameters have inconsistent shapes")
        cut = expand_raw_rows(self.phi_tilde)
        rows = np.arange(L)
        outside = (self.nu_tilde < cut[rows, rows]) | (self.nu_tilde > cut[rows, rows + 1])
        if np.any(outside):
            bad = ", ".join(str(int(y) + 1) for y in np.flatnonzero(outside))
            raise ValueError(f"nu_tilde outside its cutoff cell for category {bad}")

    def with_y(self, y: np.ndarray) -> "ParamState":
        return replace(self, y=np.asarray(y, dtype=np.int16))

    @classmethod
    def coefficients_only(cls, beta0: float, beta: np.ndarray) -> "ParamState":
        """A state that only carries regression coefficients (linear model draws)."""
        empty = np.zeros(0)
        return cls(
            beta0=float(beta0),
            beta=np.asarray(beta, dtype=float),
            theta_tilde=empty,
            phi_tilde=np.zeros((0, 0)),
            nu=np.zeros((0, 0)),
            nu_tilde=empty,
            alpha=np.zeros((0, 0)),
            omega0=0.0,
            omega=empty,
        )
