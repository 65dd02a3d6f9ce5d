import json

import numpy as np
import pandas as pd
import pytest

from conftest import small_sim_config
from io_manager.io_config import PathsConfig, RunConfig, StudySetting
from io_manager.io_tables import ingest
from io_manager.io_workflows import error_record, run, run_replicate, study_fingerprint
from errors import DataFormatError
from mcmc_manager.mcmc_output import McmcConfig

FAST_MCMC = McmcConfig(iterations=60, burnin=30, progress_every=0)

STUDY_SETTINGS = (
    StudySetting("linear", threshold=0.9),
    StudySetting("maximum", threshold=0.5),
    StudySetting("ordinal-only", annotated_fraction=0.5),
    StudySetting("compositional-only"),
    StudySetting("full", annotated_fraction=0.5),
)

STUDY_TABLES = (
    "table_mse.csv",
    "table_coverage.csv",
    "table_detection.csv",
    "rps_per_replicate.csv",
    "rps_per_sequence.csv",
    "survivors.csv",
    "relative_rps.csv",
    "report.json",
)


def _config(out, **changes):
    base = dict(
        sim=small_sim_config(),
        mcmc=FAST_MCMC,
        paths=PathsConfig(out=str(out)),
        seed=5,
        replicates=2,
        study_settings=STUDY_SETTINGS,
    )
    base.update(changes)
    return RunConfig(**base)


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "sim"
    assert run(_config(out, mode="simulate")) == 0
    return out


def test_simulate_writes_datasets(simulated):
    for split in ("train", "test"):
        for name in ("sequences.csv", "images.csv", "annotations.csv", "confidences.csv"):
            assert (simulated / split / name).is_file()
    truth = json.loads((simulated / "truth.json").read_text(encoding="utf-8"))
    assert truth["truth"]["beta"] == [0.5, -0.5]
    assert len(pd.read_csv(simulated / "train" / "sequences.csv")) == 30


def test_fit_evaluate_predict(simulated, tmp_path, capsys):
    fit_dir = tmp_path / "fit"
    fit = _config(fit_dir, mode="fit", standardize=False, paths=PathsConfig(data=str(simulated / "train"), out=str(fit_dir)))
    assert run(fit) == 0
    manifest = json.loads((fit_dir / "fit.json").read_text(encoding="utf-8"))
    assert manifest["label"] == "full[20%]"
    assert manifest["n_samples"] == 30

    eval_dir = tmp_path / "eval"
    evaluate = _config(
        eval_dir,
        mode="evaluate",
        beta_true=(0.5, -0.5),
        paths=PathsConfig(data=str(simulated / "train"), test=str(simulated / "test"), fit=str(fit_dir), out=str(eval_dir)),
    )
    assert run(evaluate) == 0
    report = json.loads((eval_dir / "report.json").read_text(encoding="utf-8"))
    assert report["variant"] == "full"
    assert report["in_sample_rps"]["n"] == 30
    assert report["out_sample_rps"]["n"] == 20
    assert len(report["beta_mse"]) == 2
    per_seq = pd.read_csv(eval_dir / "rps_per_sequence.csv")
    assert per_seq["rps"].between(0, 1).all()

    grid = tmp_path / "grid.csv"
    grid.write_text("row_id,x1,x2\ng1,0,0\ng2,1.5,-1\n", encoding="utf-8")
    pred_dir = tmp_path / "pred"
    predict = _config(
        pred_dir, mode="predict", high_from=2, paths=PathsConfig(fit=str(fit_dir), grid=str(grid), out=str(pred_dir))
    )
    assert run(predict) == 0
    preds = pd.read_csv(pred_dir / "predictions.csv")
    assert preds["row_id"].tolist() == ["g1", "g2"]
    assert np.allclose(preds[["p1", "p2", "p3"]].sum(axis=1), 1.0)
    assert np.allclose(preds["p_high"], preds["p2"] + preds["p3"])

    capsys.readouterr()
    bad = _config(pred_dir, mode="predict", high_from=4, paths=PathsConfig(fit=str(fit_dir), grid=str(grid), out=str(pred_dir)))
    assert run(bad) == 1
    captured = capsys.readouterr()
    assert "predict failed:" in captured.out
    assert json.loads(captured.err.strip().splitlines()[-1])["error"] == "ConfigError"


def test_sparse_field_shaped_pipeline(tmp_path):
    sim_dir = tmp_path / "field"
    sim = small_sim_config(
        L=5,
        max_probs=(0.2, 0.5, 0.3),
        annotators=3,
        annotated_fraction=0.05,
        r_choices=(4, 40),
        n_test=5,
    )
    assert run(_config(sim_dir, mode="simulate", sim=sim, zeta=1e-3)) == 0
    images = pd.read_csv(sim_dir / "train" / "images.csv")
    assert images.groupby("sequence_id").size().max() == 40
    capped = ingest(sim_dir / "train", zeta=1e-3, max_images=30, seed=5)
    assert max(s.r for s in capped.sequences) == 30
    assert capped.n_annotations < capped.n_confidences

    grid = tmp_path / "grid.csv"
    grid.write_text("row_id,x1,x2\nc1,-1,0.5\nc2,0,0\nc3,2,-1\n", encoding="utf-8")
    for setting in ("maximum", "linear"):
        fit_dir = tmp_path / setting
        fit = _config(
            fit_dir,
            mode="fit",
            setting=setting,
            threshold=0.9,
            zeta=1e-3,
            max_images=30,
            paths=PathsConfig(data=str(sim_dir / "train"), out=str(fit_dir)),
        )
        assert run(fit) == 0
        manifest = json.loads((fit_dir / "fit.json").read_text(encoding="utf-8"))
        assert manifest["label"] == f"{setting}[90%]"
        assert manifest["zeta"] == 1e-3
        assert 0 < manifest["survivors"] <= 30

    pred_dir = tmp_path / "pred"
    predict = _config(
        pred_dir,
        mode="predict",
        high_from=4,
        paths=PathsConfig(fit=str(tmp_path / "maximum"), grid=str(grid), out=str(pred_dir)),
    )
    assert run(predict) == 0
    preds = pd.read_csv(pred_dir / "predictions.csv")
    assert preds["row_id"].tolist() == ["c1", "c2", "c3"]
    probs = preds[[f"p{l}" for l in range(1, 6)]]
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert np.allclose(preds["p_high"], preds["p4"] + preds["p5"])
    assert preds["p_high"].between(0, 1).all()


def test_fit_reports_data_errors(simulated, tmp_path, capsys):
    ann = simulated / "train" / "annotations.csv"
    frame = pd.read_csv(ann, dtype=str)
    frame.loc[2, "score"] = "9"
    frame.to_csv(ann, index=False)
    out = tmp_path / "fit"
    assert run(_config(out, mode="fit", paths=PathsConfig(data=str(simulated / "train"), out=str(out)))) == 1
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "DataFormatError"
    assert record["file"] == "annotations.csv" and record["row"] == 3


def test_fit_without_data_path(tmp_path, capsys):
    assert run(_config(tmp_path, mode="fit")) == 1
    assert "fit failed: paths.data is required" in capsys.readouterr().out


def test_error_record_fields():
    record = error_record(DataFormatError("bad", file="x.csv", row=4))
    assert record == {"status": "error", "error": "DataFormatError", "message": "x.csv row 4: bad", "file": "x.csv", "row": 4}
    assert "file" not in error_record(ValueError("oops"))


def test_replicate_results_cover_every_setting(tmp_path):
    results = run_replicate(_config(tmp_path), 0)
    assert [r.label for r in results] == [s.label for s in STUDY_SETTINGS]
    by_label = {r.label: r for r in results}
    assert by_label["linear[90%]"].out_sample_rps is None
    assert by_label["linear[90%]"].survivors is not None
    assert by_label["maximum[50%]"].in_sample_rps is None
    assert by_label["full[50%]"].in_sample_rps.shape == (30,)
    assert by_label["full[50%]"].out_sample_rps.shape == (20,)


def test_study_writes_tables_and_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(_config(a, mode="replicate-study")) == 0
    assert run(_config(b, mode="replicate-study")) == 0
    for name in STUDY_TABLES:
        assert (a / name).is_file()
    for name in STUDY_TABLES[:-1]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    report = json.loads((a / "report.json").read_text(encoding="utf-8"))
    assert report["replicates"] == 2
    assert report["reference_setting"] == "full[50%]"
    assert set(report["results"]) == {s.label for s in STUDY_SETTINGS}


def test_study_resumes_from_checkpoint(tmp_path, capsys):
    out = tmp_path / "study"
    assert run(_config(out, mode="replicate-study", replicates=1)) == 0
    capsys.readouterr()
    assert run(_config(out, mode="replicate-study", replicates=2)) == 0
    printed = capsys.readouterr().out
    assert "Resuming study: 1 replicate(s) already done, 1 to run" in printed
    assert "Replicate 2/2 done" in printed
    assert "Replicate 1/2 done" not in printed
    fresh = tmp_path / "fresh"
    assert run(_config(fresh, mode="replicate-study")) == 0
    assert (out / "rps_per_replicate.csv").read_bytes() == (fresh / "rps_per_replicate.csv").read_bytes()


def test_study_rejects_foreign_checkpoint(tmp_path, capsys):
    out = tmp_path / "study"
    assert run(_config(out, mode="replicate-study", replicates=1)) == 0
    assert run(_config(out, mode="replicate-study", replicates=1, seed=6)) == 1
    assert "different study" in capsys.readouterr().out


def test_fingerprint_ignores_output_location():
    a = study_fingerprint(_config("x", mode="replicate-study", workers=1))
    b = study_fingerprint(_config("y", mode="replicate-study", workers=4, replicates=9))
    assert a == b
    assert study_fingerprint(_config("x", seed=6)) != a


@pytest.mark.slow
def test_parallel_study_matches_sequential(tmp_path):
    seq, par = tmp_path / "seq", tmp_path / "par"
    assert run(_config(seq, mode="replicate-study", replicates=3)) == 0
    assert run(_config(par, mode="replicate-study", replicates=3, workers=2)) == 0
    for name in STUDY_TABLES[:-1]:
        assert (seq / name).read_bytes() == (par / name).read_bytes()


@pytest.mark.slow
def test_desk_scale_study_ordering(tmp_path):
    out = tmp_path / "desk"
    config = RunConfig(
        mode="replicate-study",
        replicates=20,
        workers=4,
        seed=2024,
        mcmc=McmcConfig(iterations=5000, burnin=3000, progress_every=0),
        paths=PathsConfig(out=str(out)),
    )
    assert run(config) == 0
    results = json.loads((out / "report.json").read_text(encoding="utf-8"))["results"]
    median = {label: entry["out_sample_rps"]["median"] for label, entry in results.items()}
    assert median["full[50%]"] <= median["compositional-only"] <= median["maximum[75%]"]
    assert median["maximum[99%]"] >= max(median["maximum[75%]"], median["maximum[90%]"])
    assert abs(median["full[50%]"] - 0.136) < 0.02

    mse = pd.read_csv(out / "table_mse.csv").set_index("setting")
    assert 2.0 * mse.loc["full[50%]", "beta_2"] <= mse.loc["maximum[99%]", "beta_2"]

    coverage = pd.read_csv(out / "table_coverage.csv").set_index("setting")
    # equal replicate counts per coefficient, so the row mean pools all 120 intervals
    assert coverage.loc["full[50%]"].mean() >= 0.88

    detection = pd.read_csv(out / "table_detection.csv").set_index("setting")
    nonzero = [f"beta_{j + 1}" for j, b in enumerate(config.sim.beta_true) if b != 0]
    assert len(nonzero) == 4
    assert (detection.loc["full[50%]", nonzero] >= 0.9).all()
    assert results["full[50%]"]["nonzero_detection"] >= 0.9
