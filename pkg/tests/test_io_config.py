import json

import pytest

from errors import ConfigError
from io_manager.io_config import (
    FIELD_ZETA,
    SIM_ZETA,
    RunConfig,
    StudySetting,
    default_study_settings,
    load_run_config,
    run_config_from_dict,
    with_overrides,
)


def test_defaults():
    config = RunConfig()
    assert config.mode == "fit" and config.setting == "full"
    assert config.mcmc.iterations == 15000
    assert config.max_images == 30
    assert config.effective_zeta == FIELD_ZETA
    assert RunConfig(mode="replicate-study").effective_zeta == SIM_ZETA
    assert RunConfig(zeta=0.01).effective_zeta == 0.01


def test_default_study_settings_labels():
    labels = [s.label for s in default_study_settings()]
    assert len(labels) == 13
    assert labels[:3] == ["linear[75%]", "linear[90%]", "linear[99%]"]
    assert "compositional-only" in labels
    assert labels[-1] == "full[50%]"


@pytest.mark.parametrize(
    "kwargs",
    [
        {"setting": "linear"},
        {"setting": "full", "threshold": 0.9},
        {"setting": "maximum", "threshold": 0.0},
        {"setting": "hybrid"},
        {"setting": "full", "annotated_fraction": 1.5},
    ],
)
def test_study_setting_rules(kwargs):
    with pytest.raises(ConfigError):
        StudySetting(**kwargs)


@pytest.mark.parametrize(
    "changes",
    [
        {"mode": "train"},
        {"zeta": 0.0},
        {"workers": 0},
        {"seed": -1},
        {"prior": {"slope_sd": 1.0}},
        {"L": 1},
        {"study_settings": ()},
        {"study_settings": (StudySetting("compositional-only"), StudySetting("compositional-only"))},
    ],
)
def test_run_config_validation(changes):
    with pytest.raises(ConfigError):
        RunConfig(**changes)


def test_from_dict_nested_objects():
    config = run_config_from_dict(
        {
            "mode": "replicate-study",
            "replicates": 2,
            "mcmc": {"iterations": 500, "burnin": 200},
            "sim": {"n_train": 50, "n_test": 10},
            "paths": {"out": "results"},
            "study_settings": [{"setting": "maximum", "threshold": 0.9}, {"setting": "full", "annotated_fraction": 0.5}],
            "beta_true": [0.1, 0.2],
        }
    )
    assert config.mcmc.iterations == 500 and config.mcmc.thin == 1
    assert config.sim.n_train == 50
    assert config.paths.out == "results"
    assert [s.label for s in config.study_settings] == ["maximum[90%]", "full[50%]"]
    assert config.beta_true == (0.1, 0.2)


@pytest.mark.parametrize(
    "data",
    [
        {"iterations": 10},
        {"mcmc": {"steps": 10}},
        {"paths": {"output": "x"}},
        {"study_settings": [{"setting": "full", "share": 0.1}]},
        {"study_settings": {"setting": "full"}},
        {"prior": [1.0]},
        {"mcmc": 5},
    ],
)
def test_from_dict_rejects_unknown_or_malformed_keys(data):
    with pytest.raises(ConfigError):
        run_config_from_dict(data)


def test_load_run_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"mode": "simulate", "seed": 7}), encoding="utf-8")
    config = load_run_config(path)
    assert config.mode == "simulate" and config.seed == 7
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json")
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_with_overrides_routes_nested_keys():
    config = with_overrides(
        RunConfig(),
        mode="predict",
        seed=None,
        mcmc_iterations=300,
        mcmc_burnin=100,
        paths_out="elsewhere",
        paths_fit="fit_dir",
    )
    assert config.mode == "predict"
    assert config.seed == 0
    assert (config.mcmc.iterations, config.mcmc.burnin) == (300, 100)
    assert (config.paths.out, config.paths.fit) == ("elsewhere", "fit_dir")


def test_with_overrides_revalidates():
    with pytest.raises(ConfigError):
        with_overrides(RunConfig(), setting="maximum")
    with pytest.raises(ConfigError):
        with_overrides(RunConfig(), mcmc_iterations=10, mcmc_burnin=20)


def test_to_dict_round_trip():
    config = RunConfig(mode="fit", setting="maximum", threshold=0.9, prior={"beta_sd": 2.0}, beta_true=(0.1,))
    again = run_config_from_dict(json.loads(json.dumps(config.to_dict())))
    assert again == config
