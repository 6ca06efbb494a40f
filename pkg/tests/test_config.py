import pytest

from mravessel.libs import InvalidConfig, PipelineConfig, default_config_path
from mravessel.libs.config import CONFIG_ENV, parse_config_text


def test_defaults():
    cfg = PipelineConfig()
    assert cfg.sigma_low_mm == 0.47
    assert cfg.sigma_high_mm == 0.94
    assert cfg.frac_low_scale == (0.57, 0.67)
    assert cfg.frac_high_scale == (0.39, 0.49)
    assert cfg.min_component_mm3 == 10.0
    assert cfg.percentile == 99.9
    assert cfg.connectivity == 26
    assert (cfg.gamma23, cfg.gamma12, cfg.alpha) == (1.0, 1.0, 0.25)
    assert cfg.restrict_to_positive is True
    assert cfg.scale_normalized is False


def test_loads_overrides_only_given_keys():
    cfg = PipelineConfig.loads(
        """
        # thin vessels only
        sigma_low_mm = 0.5
        frac_low_scale = (0.47, 0.57)
        connectivity = 18   # face+edge
        restrict_to_positive = false
        """
    )
    assert cfg.sigma_low_mm == 0.5
    assert cfg.frac_low_scale == (0.47, 0.57)
    assert cfg.connectivity == 18
    assert cfg.restrict_to_positive is False
    assert cfg.sigma_high_mm == 0.94


def test_dumps_reloads_to_equal_config():
    cfg = PipelineConfig(sigma_high_mm=1.2, frac_high_scale=(0.29, 0.39), scale_normalized=True)
    assert PipelineConfig.loads(cfg.dumps()) == cfg


def test_from_file(tmp_path):
    path = tmp_path / 'pipeline.cfg'
    path.write_text('min_component_mm3 = 0\npercentile = 99.5\n', encoding='utf-8')
    cfg = PipelineConfig.from_file(path)
    assert cfg.min_component_mm3 == 0.0
    assert cfg.percentile == 99.5


def test_from_missing_file(tmp_path):
    with pytest.raises(InvalidConfig):
        PipelineConfig.from_file(tmp_path / 'absent.cfg')


@pytest.mark.parametrize(
    'text',
    [
        'sigma_low_mm 0.47',
        'unknown_key = 1',
        'sigma_low_mm = thin',
        'frac_low_scale = 0.57',
        'restrict_to_positive = maybe',
    ],
)
def test_malformed_text(text):
    with pytest.raises(InvalidConfig):
        parse_config_text(text)


@pytest.mark.parametrize(
    'overrides',
    [
        {'sigma_low_mm': 0.0},
        {'sigma_high_mm': -1.0},
        {'frac_low_scale': (0.67, 0.57)},
        {'frac_high_scale': (0.39, 1.2)},
        {'min_component_mm3': -1.0},
        {'percentile': 0.0},
        {'percentile': 100.1},
        {'connectivity': 8},
        {'alpha': 0.0},
    ],
)
def test_invalid_values(overrides):
    with pytest.raises(InvalidConfig):
        PipelineConfig().with_overrides(**overrides)


def test_with_overrides_ignores_none():
    cfg = PipelineConfig().with_overrides(sigma_low_mm=None, min_component_mm3=0)
    assert cfg.sigma_low_mm == 0.47
    assert cfg.min_component_mm3 == 0.0


def test_with_overrides_rejects_unknown():
    with pytest.raises(InvalidConfig):
        PipelineConfig().with_overrides(sigma=1.0)


def test_default_config_path(monkeypatch, tmp_path):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    assert default_config_path() is None
    monkeypatch.setenv(CONFIG_ENV, str(tmp_path / 'a.cfg'))
    assert default_config_path() == tmp_path / 'a.cfg'
