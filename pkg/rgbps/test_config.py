import pathlib

import pytest

from rgbps import config
from rgbps.common import THREADS_ENV, ConfigError
from rgbps.config import H_MAX_REAL, PipelineConfig
from rgbps.model import SelectionRule


def test_defaults():
    cfg = PipelineConfig()
    assert (cfg.patch_side, cfg.degree) == (8, 5)
    assert (cfg.n_chroma_elev, cfg.n_chroma_azim, cfg.n_lum) == (64, 64, 100)
    assert cfg.albedo_set_size == 100
    assert cfg.gamma == 4.0
    assert cfg.solver().schedule()[-1] == pytest.approx(256.0)
    assert cfg.selection is SelectionRule.objective
    assert cfg.geometry().n_coeff == 20


def test_parse_flat_file():
    cfg = config.parse('degree = 4\nh_max = 0.01\nselection = LITERAL\n')
    assert cfg.degree == 4
    assert cfg.h_max == H_MAX_REAL
    assert cfg.selection is SelectionRule.literal
    assert cfg.patch_side == 8


def test_parse_with_section():
    assert config.parse('[pipeline]\ngamma = 2.5\n').gamma == 2.5


@pytest.mark.parametrize('text', [
    'unknown = 1\n',
    'degree = five\n',
    'gamma = nan\n',
    'gamma = -1\n',
    'selection = greedy\n',
    'patch_side = 2\ndegree = 5\n',
])
def test_parse_rejects(text):
    with pytest.raises(ConfigError):
        config.parse(text)


def test_dumps_parse_roundtrip():
    cfg = PipelineConfig(degree=3, h_max=0.02, selection=SelectionRule.literal, lambda_init=1 / 3)
    assert config.parse(config.dumps(cfg)) == cfg


def test_load_creates_default_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert config.load() == PipelineConfig()
    assert pathlib.Path('rgbps.ini').is_file()

    config.save(PipelineConfig(n_lum=50))
    assert config.load().n_lum == 50
    config.clear()
    assert not pathlib.Path('rgbps.ini').exists()


def test_load_explicit_path(tmp_path):
    with pytest.raises(ConfigError):
        config.load(tmp_path / 'missing.ini')
    (tmp_path / 'custom.ini').write_text('albedo_set_size = 7\n')
    assert config.load(tmp_path / 'custom.ini').albedo_set_size == 7


def test_with_overrides():
    cfg = PipelineConfig().with_overrides(degree=3, gamma=None)
    assert cfg.degree == 3
    assert cfg.gamma == PipelineConfig().gamma
    with pytest.raises(ConfigError):
        PipelineConfig().with_overrides(colour=1)


def test_thread_env_wins(monkeypatch):
    cfg = PipelineConfig(threads=2)
    assert cfg.workers == 2
    monkeypatch.setenv(THREADS_ENV, '6')
    assert cfg.workers == 6
    monkeypatch.setenv(THREADS_ENV, 'many')
    with pytest.raises(ConfigError):
        cfg.workers
