import pytest

from model.config import DEFAULT_REFERENCE_GRID, ModelConfig, ScenarioConfig
from model.errors import ConfigError
from model.validators import ensure_valid, validate_config, validate_model
from services.config_service import ConfigService


def write(tmp_path, text, name='scenario.env'):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return str(path)


def test_defaults():
    cfg = ScenarioConfig()
    assert cfg.scenario.phy == '54/6'
    assert cfg.buffer.ap == 'fixed(400)'
    assert cfg.reference.grid == DEFAULT_REFERENCE_GRID
    assert cfg.measured_time == 280
    assert validate_config(cfg) == (True, 'Configuration is valid')


def test_environment_settings(config_service, tmp_path):
    assert config_service.out_dir == str(tmp_path / 'out')
    assert config_service.workers == 1
    assert config_service.load_scenario().scenario.seed == 7


def test_bad_worker_count_is_rejected(monkeypatch):
    monkeypatch.setenv('BUFSIM_WORKERS', 'many')
    with pytest.raises(ValueError):
        ConfigService()
    monkeypatch.setenv('BUFSIM_WORKERS', '0')
    with pytest.raises(ValueError):
        ConfigService()


def test_scenario_file_then_overrides_then_seed(config_service, tmp_path):
    path = write(tmp_path, """
# two downloads under eBDP
scenario.downloads = 2
scenario.phy = 11/1
buffer.ap = ebdp
udp.sizes = 64,1000
scenario.seed = 3
""")
    cfg = config_service.load_scenario(path, ['scenario.downloads=5'])
    assert cfg.scenario.downloads == 5
    assert cfg.scenario.phy == '11/1'
    assert cfg.buffer.ap == 'ebdp'
    assert cfg.udp.sizes == [64, 1000]
    assert cfg.scenario.seed == 3
    assert config_service.load_scenario(path, seed=11).scenario.seed == 11


def test_missing_file_is_a_config_error(config_service, tmp_path):
    with pytest.raises(ConfigError) as err:
        config_service.load_scenario(str(tmp_path / 'absent.env'))
    assert err.value.key == 'config'


@pytest.mark.parametrize('override, key', [
    ('scenario.bogus=1', 'scenario.bogus'),
    ('nothing.downloads=1', 'nothing.downloads'),
    ('scenario.downloads=1.5', 'scenario.downloads'),
    ('tcp.slow_start=maybe', 'tcp.slow_start'),
    ('scenario.phy=600/54', 'scenario.phy'),
    ('buffer.ap=fifo', 'buffer.ap'),
    ('scenario.warmup=400', 'scenario.duration'),
    ('alt.q_min=0', 'alt.q_min'),
    ('udp.sizes=100', None),
])
def test_invalid_entries_name_their_key(config_service, override, key):
    if key is None:
        assert config_service.load_scenario(overrides=[override]).udp.count == 1
        return
    with pytest.raises(ConfigError) as err:
        config_service.load_scenario(overrides=[override])
    assert err.value.key == key


def test_override_without_equals_sign():
    with pytest.raises(ConfigError):
        ConfigService.parse_override('scenario.downloads')


def test_validate_config_reports_first_problem():
    cfg = ScenarioConfig()
    cfg.scenario.downloads = 0
    ok, message = validate_config(cfg)
    assert not ok
    assert message.startswith('scenario.downloads')
    with pytest.raises(ConfigError):
        ensure_valid(cfg)


def test_udp_lists_repeat_their_last_entry():
    cfg = ScenarioConfig()
    cfg.set('udp.sizes', '64,200,1000')
    cfg.set('udp.intervals', '0.02')
    cfg.set('udp.directions', 'up,down')
    assert cfg.udp.flow(2) == {'size': 1000, 'interval': 0.02, 'traffic_class': 'data', 'direction': 'down'}


def test_config_hash_ignores_seed_and_output():
    cfg = ScenarioConfig()
    reseeded = cfg.with_value('scenario.seed', '99').with_value('output.trace', 'true')
    assert cfg.config_hash() == reseeded.config_hash()
    assert cfg.config_hash() != cfg.with_value('buffer.ap', 'alt').config_hash()


def test_traffic_signature_ignores_buffer_settings():
    cfg = ScenarioConfig()
    assert cfg.traffic_signature() == cfg.with_value('buffer.ap', 'astar').traffic_signature()
    assert cfg.traffic_signature() != cfg.with_value('scenario.downloads', '3').traffic_signature()


def test_with_value_leaves_the_original_untouched():
    cfg = ScenarioConfig()
    cfg.with_value('udp.sizes', '100')
    assert cfg.udp.sizes == []


def test_model_file(config_service, tmp_path):
    path = write(tmp_path, 'model.a = 20\nmodel.rtts = 0.1,0.3\n', 'model.env')
    cfg = config_service.load_model(path, ['model.p_e=0.8'])
    assert isinstance(cfg, ModelConfig)
    assert (cfg.model.a, cfg.model.rtts, cfg.model.p_e) == (20.0, [0.1, 0.3], 0.8)
    with pytest.raises(ConfigError) as err:
        config_service.load_model(overrides=['model.betas=0.5,0.5,0.5'])
    assert err.value.key == 'model.betas'


def test_validate_model():
    cfg = ModelConfig()
    assert validate_model(cfg) == (True, 'Model parameters are valid')
    cfg.model.delta = 1.0
    assert validate_model(cfg)[1].startswith('model.delta')
