import numpy as np
import pandas as pd
import pytest

from conftest import make_state
from errors import DataFormatError
from io_manager.io_tables import (
    export_dataset,
    ingest,
    load_fit,
    read_grid,
    write_fit,
    write_predictions,
    write_tables,
)
from mcmc_manager.mcmc_output import ChainOutput
from model_manager.model_types import Standardizer


def _write(root, name, text):
    root.mkdir(parents=True, exist_ok=True)
    (root / name).write_text(text, encoding="utf-8")


def _small_dir(root, conf_rows=None, ann_rows=None):
    _write(root, "sequences.csv", "sequence_id,x1,x2,true_y\ns1,1.0,10.0,2\ns2,3.0,30.0,\n")
    _write(root, "images.csv", "sequence_id,image_id,u1\ns1,i1,0.5\ns1,i2,-0.5\ns2,i3,0.0\n")
    conf_rows = conf_rows or ["s1,i1,0.2,0.5,0.3", "s2,i3,0.1,0.1,0.8"]
    _write(root, "confidences.csv", "sequence_id,image_id,c1,c2,c3\n" + "\n".join(conf_rows) + "\n")
    ann_rows = ann_rows or ["s1,i2,ann_b,3", "s1,i1,ann_a,2"]
    _write(root, "annotations.csv", "sequence_id,image_id,annotator_id,score\n" + "\n".join(ann_rows) + "\n")
    return root


def test_ingest_small_directory(tmp_path):
    data = ingest(_small_dir(tmp_path / "d"), zeta=1e-3)
    assert (data.N, data.L, data.A, data.p, data.q) == (2, 3, 2, 2, 1)
    assert data.annotator_ids == ("ann_a", "ann_b")
    s1, s2 = data.sequences
    assert [img.id for img in s1.images] == ["i1", "i2"]
    assert s1.true_y == 2 and s2.true_y is None
    assert s1.images[1].annotations[0].annotator == 2
    assert s1.images[1].confidence is None
    assert np.allclose(s1.images[0].raw_confidence, [0.2, 0.5, 0.3])
    # standardized columns: mean 0, unit population sd
    assert np.allclose([s1.x, s2.x], [[-1.0, -1.0], [1.0, 1.0]])
    assert np.array_equal(s1.x_raw, [1.0, 10.0])


def test_ingest_renormalizes_near_simplex_rows(tmp_path):
    root = _small_dir(tmp_path / "d", conf_rows=["s1,i1,0.3,0.3,0.399999", "s2,i3,0.1,0.1,0.8"])
    c = ingest(root).sequences[0].images[0].raw_confidence
    assert c.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(c, np.array([0.3, 0.3, 0.399999]) / 0.999999)


def test_ingest_rejects_off_simplex_rows(tmp_path):
    root = _small_dir(tmp_path / "d", conf_rows=["s1,i1,0.3,0.3,0.3", "s2,i3,0.1,0.1,0.8"])
    with pytest.raises(DataFormatError) as info:
        ingest(root)
    assert info.value.file == "confidences.csv" and info.value.row == 1


def test_ingest_rejects_out_of_range_score(tmp_path):
    root = _small_dir(tmp_path / "d", ann_rows=["s1,i2,ann_b,3", "s1,i1,ann_a,6"])
    with pytest.raises(DataFormatError) as info:
        ingest(root)
    assert info.value.file == "annotations.csv"
    assert info.value.row == 2


@pytest.mark.parametrize("value", ["2.5", "two", "inf"])
def test_ingest_rejects_non_integral_true_score(tmp_path, value):
    root = _small_dir(tmp_path / "d")
    _write(root, "sequences.csv", f"sequence_id,x1,x2,true_y\ns1,1.0,10.0,2\ns2,3.0,30.0,{value}\n")
    with pytest.raises(DataFormatError) as info:
        ingest(root)
    assert info.value.file == "sequences.csv" and info.value.row == 2


def test_ingest_accepts_float_formatted_true_score(tmp_path):
    root = _small_dir(tmp_path / "d")
    _write(root, "sequences.csv", "sequence_id,x1,x2,true_y\ns1,1.0,10.0,2.0\ns2,3.0,30.0,3\n")
    assert [s.true_y for s in ingest(root).sequences] == [2, 3]


def test_ingest_rejects_unknown_sequence(tmp_path):
    root = _small_dir(tmp_path / "d", ann_rows=["s9,i2,ann_b,3"])
    with pytest.raises(DataFormatError, match="unknown sequence"):
        ingest(root)


def test_ingest_rejects_duplicate_sequence(tmp_path):
    root = _small_dir(tmp_path / "d")
    _write(root, "sequences.csv", "sequence_id,x1,x2\ns1,1,2\ns1,3,4\n")
    with pytest.raises(DataFormatError) as info:
        ingest(root)
    assert info.value.row == 2


def test_ingest_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest(tmp_path / "nope")
    root = tmp_path / "d"
    _write(root, "sequences.csv", "sequence_id,x1\ns1,1\n")
    with pytest.raises(DataFormatError):
        ingest(root)


def test_ingest_annotations_only_needs_L(tmp_path):
    root = tmp_path / "d"
    _write(root, "sequences.csv", "sequence_id,x1\ns1,1\ns2,2\n")
    _write(root, "annotations.csv", "sequence_id,image_id,annotator_id,score\ns1,i1,a,1\ns2,i2,a,4\n")
    with pytest.raises(DataFormatError):
        ingest(root)
    data = ingest(root, L=5)
    assert data.L == 5 and data.q == 0 and data.n_confidences == 0


def test_ingest_caps_images_per_sequence(tmp_path):
    root = tmp_path / "d"
    _write(root, "sequences.csv", "sequence_id,x1\ns1,0.0\n")
    rows = [f"s1,i{k:02d},0.2,0.3,0.5" for k in range(40)]
    _write(root, "confidences.csv", "sequence_id,image_id,c1,c2,c3\n" + "\n".join(rows) + "\n")
    a = ingest(root, max_images=30, seed=4)
    b = ingest(root, max_images=30, seed=4)
    assert a.sequences[0].r == 30
    assert [i.id for i in a.sequences[0].images] == [i.id for i in b.sequences[0].images]
    ids = [i.id for i in a.sequences[0].images]
    assert ids == sorted(ids)


def test_ingest_reuses_supplied_standardizer(tmp_path):
    root = _small_dir(tmp_path / "d")
    fixed = Standardizer(mean=np.array([1.0, 10.0]), scale=np.array([2.0, 20.0]))
    data = ingest(root, standardizer=fixed)
    assert np.allclose(data.sequences[1].x, [1.0, 1.0])
    raw = ingest(root, standardize=False)
    assert np.array_equal(raw.sequences[1].x, [3.0, 30.0])


def test_export_then_ingest_preserves_dataset(toy_sim, tmp_path):
    train, _, _ = toy_sim
    export_dataset(train, tmp_path / "train")
    back = ingest(tmp_path / "train", zeta=train.zeta, standardize=False)
    assert [s.id for s in back.sequences] == [s.id for s in train.sequences]
    assert back.n_annotations == train.n_annotations
    assert back.n_confidences == train.n_confidences
    for s, t in zip(back.sequences, train.sequences):
        assert s.true_y == t.true_y
        assert np.allclose(s.x, t.x_raw)
        for i, j in zip(s.images, t.images):
            assert np.allclose(i.raw_confidence, j.raw_confidence, atol=1e-12)
            assert [a.score for a in i.annotations] == [a.score for a in j.annotations]


def _chain(n=4, marginals=True):
    states = [make_state(seed=s) for s in range(n)]
    return ChainOutput(
        variant="full",
        L=3,
        samples=states,
        iterations=np.arange(2, 2 * n + 1, 2),
        acceptance_rates={"beta": 0.25},
        log_post_trace=np.linspace(-10.0, -5.0, 2 * n),
        y_marginals=np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]]) if marginals else None,
        sequence_ids=("s1", "s2"),
    )


def test_write_then_load_fit(tmp_path):
    chain = _chain()
    write_fit(chain, tmp_path / "fit", {"setting": "full", "seed": 3})
    for name in ("samples.csv", "trace.csv", "intervals.csv", "y_marginals.csv", "fit.json"):
        assert (tmp_path / "fit" / name).is_file()
    back, manifest = load_fit(tmp_path / "fit")
    assert manifest["setting"] == "full" and manifest["n_samples"] == 4
    assert back.iterations.tolist() == [2, 4, 6, 8]
    assert np.array_equal(back.draws("nu"), chain.draws("nu"))
    assert np.array_equal(back.draws("alpha"), chain.draws("alpha"))
    assert np.array_equal(back.draws("beta0"), chain.draws("beta0"))
    assert np.array_equal(back.log_post_trace, chain.log_post_trace)
    assert np.array_equal(back.y_marginals, chain.y_marginals)
    assert back.sequence_ids == ("s1", "s2")


def test_load_fit_without_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_fit(tmp_path)


def test_intervals_table_covers_every_parameter(tmp_path):
    write_fit(_chain(marginals=False), tmp_path / "fit", {})
    intervals = pd.read_csv(tmp_path / "fit" / "intervals.csv")
    assert set(intervals["parameter"]) == {
        "beta0", "beta", "theta_tilde", "phi_tilde", "nu", "nu_tilde", "alpha", "omega0", "omega"
    }
    assert (intervals["lower"] <= intervals["upper"]).all()
    assert not (tmp_path / "fit" / "y_marginals.csv").exists()


def test_grid_and_predictions(tmp_path):
    grid = tmp_path / "grid.csv"
    grid.write_text("row_id,x1,x2\nr1,0.5,1.5\nr2,-1,2\n", encoding="utf-8")
    ids, X = read_grid(grid, 2)
    assert ids == ["r1", "r2"] and np.array_equal(X, [[0.5, 1.5], [-1.0, 2.0]])
    with pytest.raises(DataFormatError):
        read_grid(grid, 3)
    probs = np.array([[0.1, 0.2, 0.3, 0.25, 0.15], [0.5, 0.5, 0.0, 0.0, 0.0]])
    write_predictions(tmp_path / "pred.csv", ids, probs, high_from=4)
    out = pd.read_csv(tmp_path / "pred.csv")
    assert out.columns.tolist() == ["row_id", "p1", "p2", "p3", "p4", "p5", "p_high"]
    assert np.allclose(out["p_high"], [0.4, 0.0])


def test_write_tables(tmp_path):
    paths = write_tables({"b": pd.DataFrame({"v": [1]}), "a": pd.DataFrame({"v": [2]})}, tmp_path)
    assert [p.name for p in paths] == ["a.csv", "b.csv"]
    assert (tmp_path / "a.csv").read_text(encoding="utf-8") == "v\n2\n"
