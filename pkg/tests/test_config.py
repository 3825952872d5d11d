"""
实验配置解析测试
"""
import json

import pytest

from experiments.config import ExperimentConfig, level_dt, parse_config, parse_grid
from utils.errors import ConfigError


def test_defaults():
    cfg, prov = parse_config()
    assert cfg.kappa == 6.0
    assert cfg.dt == 1e-4
    assert cfg.samples == 2000
    assert cfg.horizon_factor == 1e12
    assert cfg.censoring == 'complete'
    assert set(prov.values()) == {'default'}


def test_dimension_dt():
    cfg, _ = parse_config(overrides={'experiment': 'dimension', 'levels': [4, 11]})
    assert cfg.dt == pytest.approx(min(1e-4, 0.1 * 4.0 ** -11))
    assert level_dt(3) == 1e-4


def test_file_and_flag_provenance(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text('experiment: hit\nkappa: 5.5\nsamples: 100\n', encoding='utf-8')
    cfg, prov = parse_config(str(path), {'samples': 50, 'seed': None})
    assert cfg.kappa == 5.5
    assert cfg.samples == 50
    assert prov['kappa'] == 'file'
    assert prov['samples'] == 'flag'
    assert prov['seed'] == 'default'


def test_json_file(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'experiment': 'hit', 'intervals': [[0.25, 0.5]]}), encoding='utf-8')
    cfg, _ = parse_config(str(path))
    assert cfg.intervals == [(0.25, 0.5)]


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(overrides={'samplez': 10})
    assert 'samplez' in str(err.value)


def test_kappa_out_of_hitting_range():
    with pytest.raises(ConfigError):
        parse_config(overrides={'experiment': 'hit', 'kappa': 3.0})


def test_harmonic_allows_any_kappa():
    cfg, _ = parse_config(overrides={'experiment': 'harmonic', 'kappa': 2.0})
    assert cfg.kappa == 2.0


def test_bad_interval():
    with pytest.raises(ConfigError):
        parse_config(overrides={'intervals': [[0.6, 0.4]]})


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config('/nonexistent/config.yaml')


def test_experiment_default_intervals():
    cfg, _ = parse_config(overrides={'experiment': 'two-hit'})
    assert cfg.intervals == [(0.375, 0.625)]
    cfg, _ = parse_config(overrides={'experiment': 'two-hit', 'intervals': [[0.2, 0.5]]})
    assert cfg.intervals == [(0.2, 0.5)]


def test_run_id_stable():
    a = ExperimentConfig(kappa=6.0, seed=1)
    b = ExperimentConfig(seed=1, kappa=6.0)
    c = ExperimentConfig(kappa=6.0, seed=2)
    assert a.run_id == b.run_id
    assert a.run_id != c.run_id
    assert len(a.run_id) == 16


def test_parse_grid():
    grid = parse_grid('0:1:0.25')
    assert grid.tolist() == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ConfigError):
        parse_grid('0:1')
    with pytest.raises(ConfigError):
        parse_grid('1:0:0.1')


def test_sweep_settings_horizon():
    cfg = ExperimentConfig(horizon_factor=100.0)
    settings = cfg.sweep_settings([0.5, 2.0])
    assert settings.horizon == pytest.approx(400.0)
    assert settings.dt == cfg.dt


def test_run_id_ignores_execution_fields():
    base = ExperimentConfig(kappa=6.0, seed=1)
    assert ExperimentConfig(kappa=6.0, seed=1, workers=4, batch_size=32).run_id == base.run_id
    assert ExperimentConfig(kappa=6.0, seed=1, chunk=512).run_id != base.run_id


def test_dumped_config_parses_back(tmp_path):
    """日志回显与清单中的配置可以原样作为配置文件重新读入"""
    cfg, _ = parse_config(overrides={'experiment': 'near-miss', 'kappa': 5.5, 'radii': [0.01, 0.02],
                                     'adjacent': [0.2, 0.4, 0.8], 'levels': [3, 6]})
    path = tmp_path / 'echo.json'
    path.write_text(json.dumps(cfg.model_dump(mode='json')), encoding='utf-8')
    again, prov = parse_config(str(path))
    assert again.model_dump() == cfg.model_dump()
    assert again.run_id == cfg.run_id
    assert set(prov.values()) == {'file'}


def test_sweep_settings_resolution():
    cfg = ExperimentConfig(resolve_eps=1e-3)
    settings = cfg.sweep_settings([0.5, 1.0], strides=(1,))
    assert settings.resolve_eps == 1e-3
    assert settings.strides == (1,)
    assert cfg.sweep_settings([0.5, 1.0], resolve=False).resolve_eps == 0.0


def test_resolve_eps_range():
    with pytest.raises(ConfigError):
        parse_config(overrides={'resolve_eps': 0.5})
