import json

import pytest

import commands
from commands import config_from_namespace, execute_args_once, make_parser


@pytest.fixture
def captured_config(monkeypatch):
    called = {}

    def fake_run(config):
        called['config'] = config
        return 0

    monkeypatch.setattr(commands, 'run', fake_run)
    return called


def test_fit_flags_build_config(captured_config):
    parser = make_parser()
    rc = execute_args_once(parser, [
        'fit', '--data', 'd', '--out', 'o', '--setting', 'maximum', '--threshold', '0.9',
        '--iterations', '300', '--burnin', '100', '--seed', '4', '--no-standardize', '--L', '5',
    ])
    assert rc == 0
    config = captured_config['config']
    assert config.mode == 'fit'
    assert (config.setting, config.threshold) == ('maximum', 0.9)
    assert (config.paths.data, config.paths.out) == ('d', 'o')
    assert (config.mcmc.iterations, config.mcmc.burnin) == (300, 100)
    assert config.seed == 4 and config.L == 5
    assert config.standardize is False


def test_unset_flags_keep_config_file_values(captured_config, tmp_path):
    cfg = tmp_path / 'cfg.json'
    cfg.write_text(json.dumps({'seed': 9, 'standardize': False, 'mcmc': {'iterations': 50, 'burnin': 10}}))
    parser = make_parser()
    assert execute_args_once(parser, ['fit', '--config', str(cfg), '--burnin', '20']) == 0
    config = captured_config['config']
    assert config.seed == 9
    assert config.standardize is False
    assert (config.mcmc.iterations, config.mcmc.burnin) == (50, 20)
    assert config.verbose is False


def test_study_subcommand_maps_to_replicate_study(captured_config):
    parser = make_parser()
    execute_args_once(parser, ['study', '--replicates', '3', '--workers', '2', '--verbose'])
    config = captured_config['config']
    assert config.mode == 'replicate-study'
    assert (config.replicates, config.workers, config.verbose) == (3, 2, True)


def test_predict_and_evaluate_paths(captured_config):
    parser = make_parser()
    ns = parser.parse_args(['predict', '--fit', 'f', '--grid', 'g.csv', '--high-from', '3'])
    config = config_from_namespace(ns)
    assert (config.paths.fit, config.paths.grid, config.high_from) == ('f', 'g.csv', 3)
    ns = parser.parse_args(['evaluate', '--fit', 'f', '--test', 't', '--data', 'd'])
    config = config_from_namespace(ns)
    assert (config.mode, config.paths.test, config.paths.data) == ('evaluate', 't', 'd')


def test_simulate_annotated_fraction(captured_config):
    parser = make_parser()
    execute_args_once(parser, ['simulate', '--annotated-fraction', '0.5', '--zeta', '1e-6'])
    config = captured_config['config']
    assert config.annotated_fraction == 0.5 and config.zeta == 1e-6


def test_invalid_flag_values_exit_2(captured_config, capsys):
    parser = make_parser()
    assert execute_args_once(parser, ['fit', '--setting', 'linear']) == 2
    assert 'Invalid configuration' in capsys.readouterr().out
    assert execute_args_once(parser, ['fit', '--iterations', '10', '--burnin', '10']) == 2
    assert 'config' not in captured_config


def test_parse_errors_exit_2(capsys):
    parser = make_parser()
    assert execute_args_once(parser, ['fit', '--seed', 'abc']) == 2
    assert execute_args_once(parser, ['bogus']) == 2
    assert execute_args_once(parser, []) == 2


def test_help_flag_exits_0():
    assert execute_args_once(make_parser(), ['fit', '-h']) == 0


def test_run_subcommand_uses_file_mode(captured_config, tmp_path):
    cfg = tmp_path / 'cfg.json'
    cfg.write_text(json.dumps({'mode': 'simulate', 'seed': 3}))
    assert execute_args_once(make_parser(), ['run', str(cfg)]) == 0
    assert captured_config['config'].mode == 'simulate'
    assert captured_config['config'].seed == 3


def test_workflow_failure_code_passes_through(monkeypatch):
    monkeypatch.setattr(commands, 'run', lambda config: 1)
    assert execute_args_once(make_parser(), ['simulate']) == 1


def test_help_topics(capsys):
    parser = make_parser()
    assert execute_args_once(parser, ['help']) == 0
    out = capsys.readouterr().out
    assert 'simulate' in out and 'study' in out
    execute_args_once(parser, ['help', 'predict'])
    assert 'p_high' in capsys.readouterr().out
    execute_args_once(parser, ['help', 'nothing'])
    assert "No help available for 'nothing'." in capsys.readouterr().out
