"""Exact Gibbs draws of the latent scores.

Given the continuous parameters, sequences are conditionally independent
and each latent score has a discrete full conditional over 1..L.
"""
from __future__ import annotations
from typing import Union

import numpy as np
from scipy.special import logsumexp

from errors import DegenerateStateError
from model_manager.model_density import (
    LOG_FLOOR,
    log_f_C,
    log_f_C_table,
    log_f_Y_table,
    log_f_Z,
    log_f_Z_table,
    log_f_Y,
)
from model_manager.model_priors import categorical_draws
from model_manager.model_types import Dataset, FusionArrays, ParamState, Sequence


def _normalize_rows(log_w: np.ndarray) -> np.ndarray:
    return np.exp(log_w - logsumexp(log_w, axis=1, keepdims=True))


def gibbs_y_conditional(seq: Sequence, state: ParamState) -> np.ndarray:
    """Full conditional pmf of one sequence's latent score."""
    L = state.L
    log_w = np.empty(L)
    clamped = np.zeros(L, dtype=bool)
    for y in range(1, L + 1):
        value = log_f_Y(y, seq.x, state)
        hit = value <= LOG_FLOOR
        for img in seq.images:
            for ann in img.annotations:
                lz = log_f_Z(ann.score, y, ann.annotator, state)
                hit = hit or lz <= LOG_FLOOR
                value += lz
            if img.confidence is not None:
                value += log_f_C(img.confidence, y, img.u, state)
        log_w[y - 1] = value
        clamped[y - 1] = hit
    if not np.any(np.isfinite(log_w)) or np.any(np.isnan(log_w)) or np.all(clamped):
        raise DegenerateStateError(f"sequence {seq.id}: every category weight is degenerate")
    return _normalize_rows(log_w[None, :])[0]


def conditional_log_weights(arrays: FusionArrays, state: ParamState) -> np.ndarray:
    """(N, L) unnormalized log full-conditional weights for all sequences.

    Raises DegenerateStateError when some row has every category either
    non-finite or carrying a clamped likelihood factor.
    """
    log_w = log_f_Y_table(arrays.X, state)
    clamped = log_w <= LOG_FLOOR
    if arrays.n_annotations:
        table = log_f_Z_table(state)
        contrib = table[arrays.ann_annotator - 1, :, arrays.ann_score - 1]  # (M, L)
        np.add.at(log_w, arrays.ann_seq, contrib)
        hits = np.zeros(log_w.shape, dtype=np.intp)
        np.add.at(hits, arrays.ann_seq, (contrib <= LOG_FLOOR).astype(np.intp))
        clamped |= hits > 0
    if arrays.n_confidences:
        np.add.at(log_w, arrays.conf_seq, log_f_C_table(arrays.log_c, arrays.U, state))
    bad = np.all(clamped | ~np.isfinite(log_w), axis=1) | np.any(np.isnan(log_w), axis=1)
    if np.any(bad):
        first = int(np.flatnonzero(bad)[0])
        raise DegenerateStateError(
            f"sequence {arrays.sequence_ids[first]}: every category weight is degenerate"
            f" ({int(bad.sum())} sequence(s) affected)"
        )
    return log_w


def conditional_matrix(arrays: FusionArrays, state: ParamState) -> np.ndarray:
    return _normalize_rows(conditional_log_weights(arrays, state))


def gibbs_sweep_y(
    data: Union[Dataset, FusionArrays], state: ParamState, rng: np.random.Generator
) -> np.ndarray:
    """Draw every latent score from its full conditional by inverse CDF."""
    arrays = data.compile() if isinstance(data, Dataset) else data
    return categorical_draws(conditional_matrix(arrays, state), rng)
