"""Report assembly for single fits and replicate studies.

Tables are pandas DataFrames so every CSV is written the same way.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence as SequenceType, Tuple

import numpy as np
import pandas as pd

from eval_manager.eval_metrics import (
    BetaMetrics,
    CoefficientSummary,
    beta_metrics_from_summaries,
    relative_rps,
    summarize_values,
)


@dataclass
class EvalReport:
    """Scores of one fit, or of one setting across replicates."""

    in_sample_rps: Optional[np.ndarray] = None
    out_sample_rps: Optional[np.ndarray] = None
    in_sample_ids: Tuple[str, ...] = ()
    out_sample_ids: Tuple[str, ...] = ()
    beta_mse: Optional[np.ndarray] = None
    beta_coverage: Optional[np.ndarray] = None
    beta_detection: Optional[np.ndarray] = None
    nonzero_detection: Optional[float] = None
    survivor_counts: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("beta_coverage", "beta_detection"):
            value = getattr(self, name)
            if value is not None and (np.any(value < 0) or np.any(value > 1)):
                raise ValueError(f"{name} must lie in [0, 1]")

    def with_metrics(self, metrics: BetaMetrics) -> "EvalReport":
        self.beta_mse = metrics.mse
        self.beta_coverage = metrics.coverage
        self.beta_detection = metrics.detection
        self.nonzero_detection = metrics.nonzero_detection
        return self

    def to_dict(self) -> Dict[str, Any]:
        def _list(v):
            return None if v is None else [float(x) for x in v]

        return {
            "in_sample_rps": None if self.in_sample_rps is None else summarize_values(self.in_sample_rps),
            "out_sample_rps": None if self.out_sample_rps is None else summarize_values(self.out_sample_rps),
            "beta_mse": _list(self.beta_mse),
            "beta_coverage": _list(self.beta_coverage),
            "beta_detection": _list(self.beta_detection),
            "nonzero_detection": self.nonzero_detection,
            "survivor_counts": dict(self.survivor_counts),
        }

    def per_sequence_table(self) -> pd.DataFrame:
        frames = []
        for split, ids, values in (
            ("in_sample", self.in_sample_ids, self.in_sample_rps),
            ("out_sample", self.out_sample_ids, self.out_sample_rps),
        ):
            if values is not None:
                frames.append(pd.DataFrame({"split": split, "sequence_id": list(ids), "rps": values}))
        if not frames:
            return pd.DataFrame(columns=["split", "sequence_id", "rps"])
        return pd.concat(frames, ignore_index=True)


@dataclass
class SettingResult:
    """What one replicate keeps from fitting one setting."""

    label: str
    coefficients: CoefficientSummary
    in_sample_rps: Optional[np.ndarray] = None
    out_sample_rps: Optional[np.ndarray] = None
    in_sample_ids: Tuple[str, ...] = ()
    out_sample_ids: Tuple[str, ...] = ()
    survivors: Optional[int] = None
    acceptance_rates: Dict[str, float] = field(default_factory=dict)

    @staticmethod
    def _mean(values: Optional[np.ndarray]) -> float:
        return float(np.mean(values)) if values is not None and len(values) else float("nan")

    @property
    def in_sample_mean(self) -> float:
        return self._mean(self.in_sample_rps)

    @property
    def out_sample_mean(self) -> float:
        return self._mean(self.out_sample_rps)


def _coef_columns(p: int) -> List[str]:
    return [f"beta_{j}" for j in range(1, p + 1)]


def _by_setting(results: SequenceType[List[SettingResult]], labels: SequenceType[str]) -> Dict[str, List[SettingResult]]:
    grouped: Dict[str, List[SettingResult]] = {label: [] for label in labels}
    for replicate in results:
        for res in replicate:
            grouped[res.label].append(res)
    return grouped


def reference_label(labels: SequenceType[str]) -> Optional[str]:
    """The full-model setting relative RPS is taken against: the one with the most annotation."""
    best, best_frac = None, -1.0
    for label in labels:
        if label.startswith("full"):
            frac = float(label[label.index("[") + 1 : label.index("%")]) if "[" in label else 0.0
            if frac > best_frac:
                best, best_frac = label, frac
    return best


def build_study_tables(
    results: SequenceType[List[SettingResult]], labels: SequenceType[str], beta_true: SequenceType[float]
) -> Dict[str, pd.DataFrame]:
    """All study CSV tables, keyed by file stem.

    `results[r]` holds replicate r's SettingResults in setting order.
    """
    grouped = _by_setting(results, labels)
    p = len(beta_true)
    metrics = {label: beta_metrics_from_summaries([r.coefficients for r in grouped[label]], beta_true) for label in labels}
    tables: Dict[str, pd.DataFrame] = {}
    for stem, attr in (("table_mse", "mse"), ("table_coverage", "coverage"), ("table_detection", "detection")):
        frame = pd.DataFrame([getattr(metrics[label], attr) for label in labels], columns=_coef_columns(p))
        frame.insert(0, "setting", list(labels))
        tables[stem] = frame

    rows, seq_rows, surv_rows = [], [], []
    for r, replicate in enumerate(results):
        for res in replicate:
            rows.append({"replicate": r, "setting": res.label, "in_sample_rps": res.in_sample_mean, "out_sample_rps": res.out_sample_mean})
            surv_rows.append({"replicate": r, "setting": res.label, "survivors": res.survivors})
            for split, ids, values in (
                ("in_sample", res.in_sample_ids, res.in_sample_rps),
                ("out_sample", res.out_sample_ids, res.out_sample_rps),
            ):
                if values is None:
                    continue
                seq_rows.append(
                    pd.DataFrame({"replicate": r, "setting": res.label, "split": split, "sequence_id": list(ids), "rps": values})
                )
    tables["rps_per_replicate"] = pd.DataFrame(rows, columns=["replicate", "setting", "in_sample_rps", "out_sample_rps"])
    tables["rps_per_sequence"] = (
        pd.concat(seq_rows, ignore_index=True)
        if seq_rows
        else pd.DataFrame(columns=["replicate", "setting", "split", "sequence_id", "rps"])
    )
    tables["survivors"] = pd.DataFrame(surv_rows, columns=["replicate", "setting", "survivors"])
    tables["survivors"]["survivors"] = tables["survivors"]["survivors"].astype("Int64")

    ref = reference_label(labels)
    rel_rows = []
    if ref is not None:
        ref_means = [r.out_sample_mean for r in grouped[ref]]
        for label in labels:
            ratios = relative_rps([r.out_sample_mean for r in grouped[label]], ref_means)
            for rep, ratio in enumerate(ratios):
                rel_rows.append({"replicate": rep, "setting": label, "relative_out_sample_rps": ratio})
    tables["relative_rps"] = pd.DataFrame(rel_rows, columns=["replicate", "setting", "relative_out_sample_rps"])
    return tables


def study_summary(
    results: SequenceType[List[SettingResult]], labels: SequenceType[str], beta_true: SequenceType[float]
) -> Dict[str, Any]:
    """JSON-ready study report: per setting, cross-replicate summaries of every metric."""
    grouped = _by_setting(results, labels)
    ref = reference_label(labels)
    settings: Dict[str, Any] = {}
    for label in labels:
        group = grouped[label]
        report = EvalReport(
            survivor_counts={str(i): r.survivors for i, r in enumerate(group) if r.survivors is not None}
        ).with_metrics(beta_metrics_from_summaries([r.coefficients for r in group], beta_true))
        entry = report.to_dict()
        entry["in_sample_rps"] = summarize_values([r.in_sample_mean for r in group])
        entry["out_sample_rps"] = summarize_values([r.out_sample_mean for r in group])
        if ref is not None:
            entry["relative_out_sample_rps"] = summarize_values(
                relative_rps([r.out_sample_mean for r in group], [r.out_sample_mean for r in grouped[ref]])
            )
        settings[label] = entry
    return {
        "replicates": len(results),
        "settings": list(labels),
        "reference_setting": ref,
        "beta_true": [float(b) for b in beta_true],
        "results": settings,
    }
