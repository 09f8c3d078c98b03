import json

import pytest

from run_config import ConfigError, RunConfig, write_manifest


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / 'dc2ac.env'
    path.write_text("DC2AC_SEED=3\nDC2AC_EPOCHS=7\nDC2AC_LR=0.01\n")
    return str(path)


def test_defaults_without_any_layer():
    config = RunConfig.resolve('train', environ={})
    assert config.seed == 0
    assert config.epochs == 20
    assert config.workers >= 1
    assert config.sources == {}


def test_layers_override_in_order(config_file):
    environ = {'DC2AC_EPOCHS': '9', 'DC2AC_BATCH_SIZE': '32', 'HOME': '/root'}
    config = RunConfig.resolve('train', flags={'epochs': 11, 'seed': None}, config_file=config_file,
                               environ=environ)
    assert config.seed == 3
    assert config.lr == 0.01
    assert config.batch_size == 32
    assert config.epochs == 11
    assert config.sources == {'seed': 'file', 'lr': 'file', 'epochs': 'flag', 'batch_size': 'env'}


def test_unknown_flags_become_paths():
    config = RunConfig.resolve('generate', flags={'case': 'cases/case2.m', 'out': 'data.bin'}, environ={})
    assert config.paths == {'case': 'cases/case2.m', 'out': 'data.bin'}
    assert config.with_paths(out='other.bin').paths['out'] == 'other.bin'
    assert config.paths['out'] == 'data.bin'


def test_empty_environment_values_are_ignored():
    assert RunConfig.resolve('train', environ={'DC2AC_SEED': ''}).seed == 0


def test_unknown_keys_in_config_file(tmp_path):
    path = tmp_path / 'bad.env'
    path.write_text("DC2AC_SEED=1\nDC2AC_LEARNING_RATE=0.1\n")
    with pytest.raises(ConfigError, match='DC2AC_LEARNING_RATE'):
        RunConfig.resolve('train', config_file=str(path), environ={})


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match='not found'):
        RunConfig.resolve('train', config_file=str(tmp_path / 'absent.env'), environ={})


@pytest.mark.parametrize('environ', [
    {'DC2AC_SEED': 'seven'},
    {'DC2AC_EPOCHS': '2.5'},
    {'DC2AC_TOL': 'small'},
])
def test_malformed_values_name_the_variable(environ):
    key = next(iter(environ))
    with pytest.raises(ConfigError, match=key):
        RunConfig.resolve('train', environ=environ)


@pytest.mark.parametrize('flags', [
    {'workers': 0},
    {'tol': 0.0},
    {'seed': -1},
    {'log_level': 'LOUD'},
    {'global_lo': 1.2, 'global_hi': 1.1},
    {'epochs': 0},
])
def test_out_of_range_values(flags):
    with pytest.raises(ConfigError):
        RunConfig.resolve('train', flags=flags, environ={})


def test_derived_configs_carry_the_resolved_values():
    config = RunConfig.resolve('train', flags={'seed': 5, 'lr': 0.02, 'local_range': 0.1, 'workers': 2},
                               environ={})
    assert config.train_config().seed == 5
    assert config.train_config().lr == 0.02
    assert config.train_config().workers == 2
    assert config.sampler_config().local_range == 0.1
    assert config.sampler_config().seed == 5


def test_manifest_records_config_and_hashes(tmp_path):
    config = RunConfig.resolve('generate', flags={'seed': 2, 'out': 'data.bin'}, environ={})
    path = write_manifest(str(tmp_path / 'manifest.json'), config, inputs={'case': 'abc'},
                          outputs={'dataset': 'def'}, summary={'converged': 10})
    with open(path) as f:
        manifest = json.load(f)
    assert manifest['command'] == 'generate'
    assert manifest['config']['seed'] == 2
    assert manifest['config']['paths'] == {'out': 'data.bin'}
    assert manifest['inputs'] == {'case': 'abc'}
    assert manifest['summary'] == {'converged': 10}
    assert 'python' in manifest['host']
