"""The workflows behind each run mode.

Seeds: every random stream derives from `RunConfig.seed` through
helper.derive_seed. Simulation uses (seed, "simulate"); replicate r draws
its data from (seed, r, "data"), its annotations at share f from
(seed, r, "annotate:f") and fits setting s with (seed, r, s.label). A
single fit uses replicate index 0. `mcmc.seed` is ignored here.
"""
from __future__ import annotations
import hashlib
import json
import shelve
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from baseline_manager.baseline_tools import (
    ThresholdPolicy,
    fit_bayesian_linear,
    prepare_linear_inputs,
    prepare_maximum_dataset,
)
from errors import ConfigError, DataFormatError, NotApplicableError, StudyAbortedError
from eval_manager.eval_metrics import beta_metrics, in_sample_rps, out_sample_rps, summarize_coefficients
from eval_manager.eval_report import EvalReport, SettingResult, build_study_tables, study_summary
from helper import atomic_write_text, derive_seed, get_logger, resolve_path, set_verbosity
from io_manager.io_config import RunConfig, StudySetting
from io_manager.io_tables import (
    export_dataset,
    ingest,
    load_fit,
    read_grid,
    write_fit,
    write_predictions,
    write_tables,
)
from mcmc_manager.mcmc_output import ChainOutput, McmcConfig, posterior_predict_grid
from mcmc_manager.mcmc_sampler import run_chain
from model_manager.model_priors import PriorSpec, default_prior
from model_manager.model_types import Dataset, Standardizer
from sim_manager.sim_generator import (
    SimConfig,
    annotate_training_images,
    covariate_pool_standard_normal,
    generate_dataset,
    truth_to_dict,
)

logger = get_logger()

CHECKPOINT_SHELVE = "study_checkpoint"


def build_prior(config: RunConfig, L: int, p: int, q: int, A: int) -> PriorSpec:
    return default_prior(L, p, q, A, **config.prior)


def fit_setting(
    train: Dataset, setting: StudySetting, prior: PriorSpec, mcmc: McmcConfig
) -> Tuple[ChainOutput, Optional[int]]:
    """Fit one setting; returns the chain and the survivor count of thresholded settings."""
    if setting.setting == "linear":
        responses, X = prepare_linear_inputs(train, ThresholdPolicy(setting.threshold))
        return fit_bayesian_linear(responses, X, mcmc, prior), len(responses)
    if setting.setting == "maximum":
        kept = prepare_maximum_dataset(train, ThresholdPolicy(setting.threshold))
        if kept.N == 0:
            raise ConfigError(f"no sequence survives threshold {setting.threshold}")
        return run_chain(kept, prior, mcmc, "maximum-observed"), kept.N
    return run_chain(train, prior, mcmc, setting.variant), None


def _true_scores(data: Dataset, ids) -> np.ndarray:
    by_id = {s.id: s.true_y for s in data.sequences}
    values = [by_id.get(sid) for sid in ids]
    if any(v is None for v in values):
        raise DataFormatError("true_y is required on every scored sequence", file="sequences.csv")
    return np.asarray(values, dtype=np.intp)


def score_setting(
    setting: StudySetting, chain: ChainOutput, survivors: Optional[int], train: Dataset, test: Optional[Dataset]
) -> SettingResult:
    result = SettingResult(
        label=setting.label,
        coefficients=summarize_coefficients(chain),
        survivors=survivors,
        acceptance_rates=dict(chain.acceptance_rates),
    )
    if chain.y_marginals is not None:
        result.in_sample_rps = in_sample_rps(chain, _true_scores(train, chain.sequence_ids))
        result.in_sample_ids = tuple(chain.sequence_ids)
    if chain.variant != "linear" and test is not None and test.N:
        X = np.array([s.x for s in test.sequences], dtype=float).reshape(test.N, test.p)
        result.out_sample_rps = out_sample_rps(chain, X, _true_scores(test, [s.id for s in test.sequences]))
        result.out_sample_ids = tuple(s.id for s in test.sequences)
    return result


# ---- simulate ----


def _sim_config(config: RunConfig) -> SimConfig:
    sim = config.sim_config()
    changes: Dict[str, Any] = {"zeta": config.effective_zeta}
    if config.annotated_fraction is not None:
        changes["annotated_fraction"] = config.annotated_fraction
    return replace(sim, **changes)


def run_simulate(config: RunConfig) -> Path:
    sim = _sim_config(config)
    out = Path(config.paths.out)
    rng = np.random.default_rng(derive_seed(config.seed, "simulate"))
    pool = covariate_pool_standard_normal(sim.p, sim.q, sim.pool_size, rng)
    train, test, truth = generate_dataset(sim, pool, rng)
    export_dataset(train, out / "train")
    export_dataset(test, out / "test")
    record = {"sim": sim.to_dict(), "seed": config.seed, "truth": truth_to_dict(truth)}
    atomic_write_text(out / "truth.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(f"Simulated data written: {out} ({train.N} train, {test.N} test sequences)")
    return out


# ---- fit / evaluate / predict ----


def _require(value: Optional[str], name: str) -> Path:
    if value is None:
        raise ConfigError(f"paths.{name} is required for this mode")
    return resolve_path(value)


def run_fit(config: RunConfig) -> Path:
    data_dir = _require(config.paths.data, "data")
    train = ingest(
        data_dir,
        L=config.L,
        zeta=config.effective_zeta,
        max_images=config.max_images,
        standardize=config.standardize,
        seed=config.seed,
    )
    setting = config.study_setting
    prior = build_prior(config, train.L, train.p, train.q, train.A)
    mcmc = replace(config.mcmc, seed=derive_seed(config.seed, 0, setting.label))
    chain, survivors = fit_setting(train, setting, prior, mcmc)
    manifest = {
        "setting": setting.to_dict(),
        "label": setting.label,
        "p": train.p,
        "q": train.q,
        "A": train.A,
        "annotator_ids": list(train.annotator_ids),
        "zeta": train.zeta,
        "seed": config.seed,
        "mcmc": mcmc.to_dict(),
        "prior": prior.to_dict(),
        "standardizer": train.standardizer.to_dict(),
        "survivors": survivors,
    }
    out = write_fit(chain, config.paths.out, manifest)
    print(f"Fit written: {out} ({chain.n_samples} samples, setting {setting.label})")
    return out


def run_evaluate(config: RunConfig) -> Path:
    chain, manifest = load_fit(_require(config.paths.fit, "fit"))
    standardizer = Standardizer.from_dict(manifest["standardizer"])
    L = chain.L if chain.L else config.L
    report = EvalReport()
    if manifest.get("survivors") is not None:
        report.survivor_counts = {"fit": int(manifest["survivors"])}
    if config.paths.data is not None:
        train = ingest(
            _require(config.paths.data, "data"),
            L=L,
            zeta=manifest["zeta"],
            max_images=config.max_images,
            seed=config.seed,
            standardizer=standardizer,
        )
        if chain.y_marginals is None:
            print(f"In-sample RPS skipped: variant '{chain.variant}' has no latent scores")
        else:
            report.in_sample_rps = in_sample_rps(chain, _true_scores(train, chain.sequence_ids))
            report.in_sample_ids = tuple(chain.sequence_ids)
    if config.paths.test is not None and chain.variant == "linear":
        print("Out-of-sample RPS skipped: the linear baseline does not give ordinal forecasts")
    elif config.paths.test is not None:
        test = ingest(
            _require(config.paths.test, "test"),
            L=L,
            zeta=manifest["zeta"],
            max_images=config.max_images,
            seed=config.seed,
            standardizer=standardizer,
        )
        X = np.array([s.x for s in test.sequences], dtype=float).reshape(test.N, test.p)
        ids = [s.id for s in test.sequences]
        report.out_sample_rps = out_sample_rps(chain, X, _true_scores(test, ids))
        report.out_sample_ids = tuple(ids)
    if config.beta_true is not None:
        report.with_metrics(beta_metrics([chain], config.beta_true))
    out = Path(config.paths.out)
    record = report.to_dict()
    record["variant"] = chain.variant
    atomic_write_text(out / "report.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
    write_tables({"rps_per_sequence": report.per_sequence_table()}, out)
    print(f"Evaluation written: {out}")
    return out


def run_predict(config: RunConfig) -> Path:
    chain, manifest = load_fit(_require(config.paths.fit, "fit"))
    if chain.variant == "linear":
        raise NotApplicableError("the linear baseline does not give ordinal forecasts")
    row_ids, X_raw = read_grid(_require(config.paths.grid, "grid"), int(manifest["p"]))
    X = Standardizer.from_dict(manifest["standardizer"]).transform(X_raw)
    probs = posterior_predict_grid(X, chain)
    if not 1 <= config.high_from <= chain.L:
        raise ConfigError(f"high_from must lie in 1..{chain.L}")
    path = write_predictions(Path(config.paths.out) / "predictions.csv", row_ids, probs, config.high_from)
    print(f"Predictions written: {path} ({len(row_ids)} rows)")
    return path


# ---- replicate study ----


def study_fingerprint(config: RunConfig) -> Dict[str, Any]:
    """Config fields that determine per-replicate results.

    The replicate count is left out so a finished study can be extended.
    """
    record = config.to_dict()
    for key in ("paths", "workers", "verbose", "mode", "replicates"):
        record.pop(key, None)
    record["sim"] = _sim_config(config).to_dict()
    return record


def run_replicate(config: RunConfig, r: int) -> List[SettingResult]:
    """Generate replicate r and fit every configured setting to it."""
    sim = _sim_config(config)
    rng = np.random.default_rng(derive_seed(config.seed, r, "data"))
    pool = covariate_pool_standard_normal(sim.p, sim.q, sim.pool_size, rng)
    base, test, truth = generate_dataset(replace(sim, annotated_fraction=0.0), pool, rng)
    prior = build_prior(config, sim.L, sim.p, sim.q, sim.annotators)
    layered: Dict[float, Dataset] = {}
    results = []
    for setting in config.study_settings:
        frac = setting.data_fraction
        if frac not in layered:
            layer_rng = np.random.default_rng(derive_seed(config.seed, r, f"annotate:{frac:g}"))
            layered[frac] = annotate_training_images(base, truth, frac, layer_rng)
        mcmc = replace(config.mcmc, seed=derive_seed(config.seed, r, setting.label))
        chain, survivors = fit_setting(layered[frac], setting, prior, mcmc)
        results.append(score_setting(setting, chain, survivors, layered[frac], test))
        logger.info("replicate %d: %s done", r, setting.label)
    return results


def run_study(config: RunConfig) -> Path:
    out = Path(config.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    labels = [s.label for s in config.study_settings]
    fingerprint = study_fingerprint(config)
    digest = hashlib.sha256(json.dumps(fingerprint, sort_keys=True).encode("utf-8")).hexdigest()
    results: Dict[int, List[SettingResult]] = {}
    with shelve.open(str(out / CHECKPOINT_SHELVE)) as db:
        stored = db.get("fingerprint")
        if stored is not None and stored != digest:
            raise ConfigError(f"{out} holds a checkpoint of a different study; use a fresh output directory")
        db["fingerprint"] = digest
        for r in range(config.replicates):
            if f"replicate:{r}" in db:
                results[r] = db[f"replicate:{r}"]
    pending = [r for r in range(config.replicates) if r not in results]
    if results:
        print(f"Resuming study: {len(results)} replicate(s) already done, {len(pending)} to run")

    def _save(r: int, value: List[SettingResult]) -> None:
        results[r] = value
        with shelve.open(str(out / CHECKPOINT_SHELVE)) as db:
            db[f"replicate:{r}"] = value
        print(f"Replicate {r + 1}/{config.replicates} done")

    def _abort(r: int, e: Exception) -> StudyAbortedError:
        return StudyAbortedError(
            f"replicate {r} failed: {e}; {len(results)} completed replicate(s) are checkpointed in {out}, rerun to resume"
        )

    if config.workers == 1 or len(pending) <= 1:
        for r in pending:
            try:
                value = run_replicate(config, r)
            except Exception as e:
                raise _abort(r, e) from e
            _save(r, value)
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {pool.submit(run_replicate, config, r): r for r in pending}
            for fut in as_completed(futures):
                r = futures[fut]
                try:
                    value = fut.result()
                except Exception as e:
                    for other in futures:
                        other.cancel()
                    raise _abort(r, e) from e
                _save(r, value)

    ordered = [results[r] for r in range(config.replicates)]
    beta_true = _sim_config(config).beta_true
    write_tables(build_study_tables(ordered, labels, beta_true), out)
    summary = study_summary(ordered, labels, beta_true)
    summary["config"] = fingerprint
    atomic_write_text(out / "report.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"Study written: {out} ({config.replicates} replicates, {len(labels)} settings)")
    return out


# ---- dispatch ----

HANDLERS: Dict[str, Callable[[RunConfig], Path]] = {
    "simulate": run_simulate,
    "fit": run_fit,
    "evaluate": run_evaluate,
    "predict": run_predict,
    "replicate-study": run_study,
}


def error_record(e: BaseException) -> Dict[str, Any]:
    record: Dict[str, Any] = {"status": "error", "error": type(e).__name__, "message": str(e)}
    if isinstance(e, DataFormatError):
        record["file"] = e.file
        record["row"] = e.row
    return record


def run(config: RunConfig) -> int:
    """Execute the config's mode; returns the process exit status."""
    set_verbosity(config.verbose)
    try:
        HANDLERS[config.mode](config)
        return 0
    except Exception as e:
        print(f"{config.mode} failed: {e}")
        print(json.dumps(error_record(e)), file=sys.stderr)
        return 1
