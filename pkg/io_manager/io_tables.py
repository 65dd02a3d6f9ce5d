"""CSV tables: dataset ingestion and export, fit artifacts, grids and predictions.

Dataset directory layout (UTF-8, header row, '.' decimal):
    sequences.csv    sequence_id, x1..xp[, true_y]
    images.csv       sequence_id, image_id, u1..uq          (optional when q = 0)
    annotations.csv  sequence_id, image_id, annotator_id, score
    confidences.csv  sequence_id, image_id, c1..cL
At least one of annotations.csv / confidences.csv must exist.
"""
from __future__ import annotations
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence as SequenceType, Tuple, Union

import numpy as np
import pandas as pd

from errors import DataFormatError
from helper import atomic_write, atomic_write_text, derive_seed, get_logger
from mcmc_manager.mcmc_output import ChainOutput
from model_manager.model_density import zeta_adjust
from model_manager.model_types import (
    SIMPLEX_INGEST_TOL,
    Annotation,
    Dataset,
    Image,
    ParamState,
    Sequence,
    Standardizer,
    check_category_count,
)

logger = get_logger()

SEQUENCES = "sequences.csv"
IMAGES = "images.csv"
ANNOTATIONS = "annotations.csv"
CONFIDENCES = "confidences.csv"
RENORMALIZE_TOL = 1e-12

# ParamState fields written to samples.csv, in order
SAMPLE_FIELDS = ("beta0", "beta", "theta_tilde", "phi_tilde", "nu", "nu_tilde", "alpha", "omega0", "omega")

PathLike = Union[str, Path]


def _read_csv(path: Path, id_columns: SequenceType[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(
            path,
            dtype={c: str for c in id_columns},
            keep_default_na=False,
            float_precision="round_trip",
        )
    except pd.errors.EmptyDataError as e:
        raise DataFormatError("file is empty", file=path.name) from e
    missing = [c for c in id_columns if c not in frame.columns]
    if missing:
        raise DataFormatError(f"missing column(s) {', '.join(missing)}", file=path.name)
    return frame


def _numbered_columns(frame: pd.DataFrame, prefix: str) -> List[str]:
    cols = []
    k = 1
    while f"{prefix}{k}" in frame.columns:
        cols.append(f"{prefix}{k}")
        k += 1
    return cols


def _numeric_block(frame: pd.DataFrame, cols: List[str], file: str) -> np.ndarray:
    if not cols:
        return np.zeros((len(frame), 0))
    block = frame[cols].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(block)
    if bad.any():
        row = int(np.flatnonzero(bad.any(axis=1))[0]) + 1
        raise DataFormatError(f"non-numeric or missing value in {', '.join(cols)}", file=file, row=row)
    return block


def _check_duplicates(frame: pd.DataFrame, keys: List[str], file: str, what: str) -> None:
    dup = frame.duplicated(subset=keys, keep="first").to_numpy()
    if dup.any():
        row = int(np.flatnonzero(dup)[0]) + 1
        raise DataFormatError(f"duplicate {what}", file=file, row=row)


def ingest(
    directory: PathLike,
    L: Optional[int] = None,
    zeta: float = 1e-3,
    max_images: int = 30,
    standardize: bool = True,
    seed: int = 0,
    standardizer: Optional[Standardizer] = None,
) -> Dataset:
    """Read a dataset directory into a validated Dataset.

    Confidence rows are renormalized when off by more than 1e-12 and then
    zeta-adjusted. Covariates are standardized per column unless a fitted
    `standardizer` is supplied (prediction-time reuse) or `standardize` is
    False. Sequences with more than `max_images` images keep a uniform
    random subset, seeded from `seed`.
    """
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"Path not found: {root}")
    seq_path, img_path = root / SEQUENCES, root / IMAGES
    ann_path, conf_path = root / ANNOTATIONS, root / CONFIDENCES
    if not seq_path.is_file():
        raise DataFormatError("required file is missing", file=SEQUENCES)
    if not ann_path.is_file() and not conf_path.is_file():
        raise DataFormatError(f"need {ANNOTATIONS} or {CONFIDENCES}", file=str(root))

    seqs = _read_csv(seq_path, ["sequence_id"])
    _check_duplicates(seqs, ["sequence_id"], SEQUENCES, "sequence_id")
    x_cols = _numbered_columns(seqs, "x")
    X_raw = _numeric_block(seqs, x_cols, SEQUENCES)
    true_y: List[Optional[int]] = [None] * len(seqs)
    if "true_y" in seqs.columns:
        texts = seqs["true_y"].astype(str).str.strip()
        values = pd.to_numeric(texts.replace("", np.nan), errors="coerce").to_numpy(dtype=float)
        for i, (text, v) in enumerate(zip(texts, values)):
            if text == "":
                continue
            if not np.isfinite(v) or v != np.round(v):
                raise DataFormatError(f"true_y {text} is not an integer category", file=SEQUENCES, row=i + 1)
            true_y[i] = int(v)
    seq_index = {sid: i for i, sid in enumerate(seqs["sequence_id"])}

    confs = _read_csv(conf_path, ["sequence_id", "image_id"]) if conf_path.is_file() else None
    anns = _read_csv(ann_path, ["sequence_id", "image_id", "annotator_id", "score"]) if ann_path.is_file() else None
    if confs is not None:
        c_cols = _numbered_columns(confs, "c")
        if L is None:
            L = len(c_cols)
        if len(c_cols) != L:
            raise DataFormatError(f"expected columns c1..c{L}, found {len(c_cols)}", file=CONFIDENCES)
    if L is None:
        raise DataFormatError("number of categories is unknown; set L in the run configuration", file=ANNOTATIONS)
    L = check_category_count(L)
    for i, value in enumerate(true_y):
        if value is not None and not 1 <= value <= L:
            raise DataFormatError(f"true_y {value} outside 1..{L}", file=SEQUENCES, row=i + 1)

    # image order: images.csv when present, else first appearance in the observation files
    image_order: Dict[str, List[str]] = {sid: [] for sid in seq_index}
    image_u: Dict[Tuple[str, str], np.ndarray] = {}
    q = 0
    if img_path.is_file():
        imgs = _read_csv(img_path, ["sequence_id", "image_id"])
        _check_duplicates(imgs, ["sequence_id", "image_id"], IMAGES, "(sequence_id, image_id)")
        u_cols = _numbered_columns(imgs, "u")
        q = len(u_cols)
        U = _numeric_block(imgs, u_cols, IMAGES)
        for row, (sid, iid) in enumerate(zip(imgs["sequence_id"], imgs["image_id"])):
            if sid not in seq_index:
                raise DataFormatError(f"unknown sequence '{sid}'", file=IMAGES, row=row + 1)
            image_order[sid].append(iid)
            image_u[(sid, iid)] = U[row]

    def _register(sid: str, iid: str, file: str, row: int) -> None:
        if sid not in seq_index:
            raise DataFormatError(f"unknown sequence '{sid}'", file=file, row=row)
        if (sid, iid) not in image_u:
            if img_path.is_file():
                raise DataFormatError(f"unknown image '{iid}' of sequence '{sid}'", file=file, row=row)
            image_order[sid].append(iid)
            image_u[(sid, iid)] = np.zeros(0)

    confidence: Dict[Tuple[str, str], Tuple[np.ndarray, np.ndarray]] = {}
    if confs is not None:
        _check_duplicates(confs, ["sequence_id", "image_id"], CONFIDENCES, "(sequence_id, image_id) confidence row")
        C = _numeric_block(confs, c_cols, CONFIDENCES)
        for row, (sid, iid) in enumerate(zip(confs["sequence_id"], confs["image_id"])):
            _register(sid, iid, CONFIDENCES, row + 1)
            c = C[row]
            if np.any(c < 0):
                raise DataFormatError("negative confidence", file=CONFIDENCES, row=row + 1)
            total = c.sum()
            if abs(total - 1.0) > SIMPLEX_INGEST_TOL + RENORMALIZE_TOL:
                raise DataFormatError(f"confidences sum to {total:.9g}, not 1", file=CONFIDENCES, row=row + 1)
            if abs(total - 1.0) > RENORMALIZE_TOL:
                c = c / total
            confidence[(sid, iid)] = (c, zeta_adjust(c, zeta))

    annotations: Dict[Tuple[str, str], List[Tuple[int, str]]] = {}
    annotator_ids: Tuple[str, ...] = ()
    if anns is not None:
        _check_duplicates(anns, ["sequence_id", "image_id", "annotator_id"], ANNOTATIONS, "(sequence_id, image_id, annotator_id) annotation")
        scores = pd.to_numeric(anns["score"], errors="coerce").to_numpy(dtype=float)
        annotator_ids = tuple(sorted(set(anns["annotator_id"])))
        for row, (sid, iid, aid) in enumerate(zip(anns["sequence_id"], anns["image_id"], anns["annotator_id"])):
            z = scores[row]
            if not np.isfinite(z) or z != np.round(z) or not 1 <= z <= L:
                raise DataFormatError(f"score {anns['score'].iloc[row]} outside 1..{L}", file=ANNOTATIONS, row=row + 1)
            _register(sid, iid, ANNOTATIONS, row + 1)
            annotations.setdefault((sid, iid), []).append((int(z), aid))
    annotator_index = {aid: a + 1 for a, aid in enumerate(annotator_ids)}

    rng = np.random.default_rng(derive_seed(seed, "ingest"))
    if standardizer is None:
        standardizer = Standardizer.fit(X_raw) if standardize else Standardizer.identity(X_raw.shape[1])
    x_model = standardizer.transform(X_raw)

    sequences = []
    for sid, i in seq_index.items():
        order = image_order[sid]
        if not order:
            raise DataFormatError(f"sequence '{sid}' has no images", file=SEQUENCES, row=i + 1)
        if len(order) > max_images:
            keep = np.sort(rng.choice(len(order), size=max_images, replace=False))
            order = [order[k] for k in keep]
        images = []
        for iid in order:
            key = (sid, iid)
            anns_here = tuple(
                Annotation(score=z, annotator=annotator_index[aid], annotator_id=aid)
                for z, aid in annotations.get(key, [])
            )
            raw, adjusted = confidence.get(key, (None, None))
            if not anns_here and raw is None:
                raise DataFormatError(f"image '{iid}' of sequence '{sid}' has neither annotation nor confidence", file=IMAGES)
            images.append(Image(id=iid, u=image_u[key], annotations=anns_here, confidence=adjusted, raw_confidence=raw))
        sequences.append(
            Sequence(id=sid, x=x_model[i], images=tuple(images), true_y=true_y[i], x_raw=X_raw[i])
        )
    logger.info("ingested %d sequences, %d images from %s", len(sequences), sum(s.r for s in sequences), root)
    return Dataset(
        sequences=tuple(sequences),
        L=L,
        A=len(annotator_ids),
        p=X_raw.shape[1],
        q=q,
        zeta=zeta,
        annotator_ids=annotator_ids,
        standardizer=standardizer,
    )


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    return atomic_write(path, lambda tmp: frame.to_csv(tmp, index=False, lineterminator="\n"))


def export_dataset(data: Dataset, directory: PathLike) -> Path:
    """Write a Dataset in the ingest schema, on the raw covariate scale."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    seq_rows, img_rows, ann_rows, conf_rows = [], [], [], []
    with_truth = any(s.true_y is not None for s in data.sequences)
    for seq in data.sequences:
        x = seq.x_raw if seq.x_raw is not None else seq.x
        row: Dict[str, Any] = {"sequence_id": seq.id}
        row.update({f"x{j + 1}": float(v) for j, v in enumerate(x)})
        if with_truth:
            row["true_y"] = "" if seq.true_y is None else int(seq.true_y)
        seq_rows.append(row)
        for img in seq.images:
            img_row: Dict[str, Any] = {"sequence_id": seq.id, "image_id": img.id}
            img_row.update({f"u{k + 1}": float(v) for k, v in enumerate(img.u)})
            img_rows.append(img_row)
            for ann in img.annotations:
                ann_rows.append(
                    {"sequence_id": seq.id, "image_id": img.id, "annotator_id": ann.annotator_id or str(ann.annotator), "score": ann.score}
                )
            c = img.raw_confidence if img.raw_confidence is not None else img.confidence
            if c is not None:
                conf_row: Dict[str, Any] = {"sequence_id": seq.id, "image_id": img.id}
                conf_row.update({f"c{l + 1}": float(v) for l, v in enumerate(c)})
                conf_rows.append(conf_row)
    seq_cols = ["sequence_id"] + [f"x{j}" for j in range(1, data.p + 1)] + (["true_y"] if with_truth else [])
    _write_frame(pd.DataFrame(seq_rows, columns=seq_cols), root / SEQUENCES)
    _write_frame(pd.DataFrame(img_rows, columns=["sequence_id", "image_id"] + [f"u{k}" for k in range(1, data.q + 1)]), root / IMAGES)
    _write_frame(pd.DataFrame(ann_rows, columns=["sequence_id", "image_id", "annotator_id", "score"]), root / ANNOTATIONS)
    _write_frame(pd.DataFrame(conf_rows, columns=["sequence_id", "image_id"] + [f"c{l}" for l in range(1, data.L + 1)]), root / CONFIDENCES)
    return root


def samples_frame(chain: ChainOutput) -> pd.DataFrame:
    """Long table (iteration, parameter, index, value); matrices are flattened row-major."""
    frames = []
    for name in SAMPLE_FIELDS:
        draws = chain.draws(name).reshape(chain.n_samples, -1)
        width = draws.shape[1]
        if width == 0:
            continue
        frames.append(
            pd.DataFrame(
                {
                    "iteration": np.repeat(chain.iterations, width),
                    "parameter": name,
                    "index": np.tile(np.arange(width), chain.n_samples),
                    "value": draws.reshape(-1),
                }
            )
        )
    for name, values in sorted(chain.extras.items()):
        frames.append(pd.DataFrame({"iteration": chain.iterations, "parameter": name, "index": 0, "value": values}))
    return pd.concat(frames, ignore_index=True)


def intervals_frame(chain: ChainOutput, level: float = 0.95) -> pd.DataFrame:
    tail = (1.0 - level) / 2.0
    rows = []
    for name in SAMPLE_FIELDS:
        draws = chain.draws(name).reshape(chain.n_samples, -1)
        if draws.shape[1] == 0:
            continue
        lower, upper = np.quantile(draws, [tail, 1.0 - tail], axis=0)
        for k in range(draws.shape[1]):
            rows.append({"parameter": name, "index": k, "mean": draws[:, k].mean(), "lower": lower[k], "upper": upper[k]})
    return pd.DataFrame(rows, columns=["parameter", "index", "mean", "lower", "upper"])


def _shapes(chain: ChainOutput) -> Dict[str, List[int]]:
    first = chain.samples[0]
    return {name: list(np.shape(getattr(first, name))) for name in SAMPLE_FIELDS}


def write_fit(chain: ChainOutput, directory: PathLike, manifest: Dict[str, Any]) -> Path:
    """Write samples, trace, intervals, score marginals and fit.json for one chain."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    _write_frame(samples_frame(chain), root / "samples.csv")
    _write_frame(
        pd.DataFrame({"iteration": np.arange(1, chain.log_post_trace.shape[0] + 1), "log_posterior": chain.log_post_trace}),
        root / "trace.csv",
    )
    _write_frame(intervals_frame(chain), root / "intervals.csv")
    if chain.y_marginals is not None:
        marg = pd.DataFrame(chain.y_marginals, columns=[f"p{l}" for l in range(1, chain.L + 1)])
        marg.insert(0, "sequence_id", list(chain.sequence_ids))
        _write_frame(marg, root / "y_marginals.csv")
    record = dict(manifest)
    record.update(
        {
            "variant": chain.variant,
            "L": chain.L,
            "n_samples": chain.n_samples,
            "shapes": _shapes(chain),
            "acceptance_rates": chain.acceptance_rates,
            "sequence_ids": list(chain.sequence_ids),
        }
    )
    atomic_write_text(root / "fit.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
    return root


def load_fit(directory: PathLike) -> Tuple[ChainOutput, Dict[str, Any]]:
    """Rebuild a ChainOutput (without latent score draws) from `write_fit` output."""
    root = Path(directory)
    manifest_path = root / "fit.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"Path not found: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    frame = pd.read_csv(root / "samples.csv", float_precision="round_trip")
    shapes = manifest["shapes"]
    iterations = np.sort(frame["iteration"].unique())
    n = iterations.shape[0]
    values: Dict[str, np.ndarray] = {}
    for name in SAMPLE_FIELDS:
        shape = shapes[name]
        width = int(np.prod(shape)) if shape else 1
        part = frame[frame["parameter"] == name].sort_values(["iteration", "index"], kind="stable")
        arr = part["value"].to_numpy(dtype=float)
        values[name] = arr.reshape((n,) + tuple(shape)) if width else np.zeros((n,) + tuple(shape))
    samples = [
        ParamState(
            beta0=float(values["beta0"][s]),
            beta=values["beta"][s],
            theta_tilde=values["theta_tilde"][s],
            phi_tilde=values["phi_tilde"][s],
            nu=values["nu"][s],
            nu_tilde=values["nu_tilde"][s],
            alpha=values["alpha"][s],
            omega0=float(values["omega0"][s]),
            omega=values["omega"][s],
        )
        for s in range(n)
    ]
    extras = {}
    for name in set(frame["parameter"]) - set(SAMPLE_FIELDS):
        extras[name] = frame[frame["parameter"] == name].sort_values("iteration")["value"].to_numpy(dtype=float)
    marginals = None
    marg_path = root / "y_marginals.csv"
    if marg_path.is_file():
        marg = pd.read_csv(marg_path, dtype={"sequence_id": str}, keep_default_na=False, float_precision="round_trip")
        marginals = marg[[f"p{l}" for l in range(1, manifest["L"] + 1)]].to_numpy(dtype=float)
    trace = pd.read_csv(root / "trace.csv", float_precision="round_trip")["log_posterior"].to_numpy(dtype=float)
    chain = ChainOutput(
        variant=manifest["variant"],
        L=int(manifest["L"]),
        samples=samples,
        iterations=iterations,
        acceptance_rates=manifest.get("acceptance_rates", {}),
        log_post_trace=trace,
        y_marginals=marginals,
        sequence_ids=tuple(manifest.get("sequence_ids", [])),
        extras=extras,
    )
    return chain, manifest


def read_grid(path: PathLike, p: int) -> Tuple[List[str], np.ndarray]:
    """Covariate grid (row_id, x1..xp) on the raw scale."""
    path = Path(path)
    frame = _read_csv(path, ["row_id"])
    cols = _numbered_columns(frame, "x")
    if len(cols) != p:
        raise DataFormatError(f"expected columns x1..x{p}, found {len(cols)}", file=path.name)
    return list(frame["row_id"]), _numeric_block(frame, cols, path.name)


def write_predictions(path: PathLike, row_ids: SequenceType[str], probs: np.ndarray, high_from: int) -> Path:
    """Per-row category probabilities plus p_high = P(score >= high_from)."""
    L = probs.shape[1]
    frame = pd.DataFrame(probs, columns=[f"p{l}" for l in range(1, L + 1)])
    frame.insert(0, "row_id", list(row_ids))
    frame["p_high"] = probs[:, high_from - 1 :].sum(axis=1)
    return _write_frame(frame, Path(path))


def write_tables(tables: Dict[str, pd.DataFrame], directory: PathLike) -> List[Path]:
    root = Path(directory)
    return [_write_frame(frame, root / f"{stem}.csv") for stem, frame in sorted(tables.items())]
