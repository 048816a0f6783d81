import pytest

from model.config import ScenarioConfig
from services.config_service import ConfigService


@pytest.fixture
def small_cfg():
    """A cheap scenario: 11/1 Mbps, a few simulated seconds."""
    def make(**settings) -> ScenarioConfig:
        cfg = ScenarioConfig()
        cfg.set('scenario.phy', '11/1')
        cfg.set('scenario.duration', '8')
        cfg.set('scenario.warmup', '2')
        cfg.set('scenario.wired_rtt', '0.05')
        for key, value in settings.items():
            cfg.set(key.replace('__', '.'), value)
        return cfg
    return make


@pytest.fixture
def config_service(tmp_path, monkeypatch):
    monkeypatch.setenv('BUFSIM_OUT_DIR', str(tmp_path / 'out'))
    monkeypatch.setenv('BUFSIM_WORKERS', '1')
    monkeypatch.setenv('BUFSIM_SEED', '7')
    return ConfigService()
