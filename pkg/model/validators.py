import logging
from typing import Iterator, Tuple

from model.bufsizing import parse_buffer_mode
from model.config import ModelConfig, ScenarioConfig
from model.errors import ConfigError
from model.mac80211 import PHY_PRESETS

logger = logging.getLogger(__name__)


def _scenario_problems(cfg: ScenarioConfig) -> Iterator[Tuple[str, str]]:
    s = cfg.scenario
    if s.phy not in PHY_PRESETS:
        yield "scenario.phy", f"unknown preset {s.phy!r}, expected one of {sorted(PHY_PRESETS)}"
    if s.mac_mode not in ("dcf", "edca"):
        yield "scenario.mac_mode", f"expected dcf or edca, got {s.mac_mode!r}"
    for key in ("downloads", "uploads", "saturated_stations"):
        if getattr(s, key) < 0:
            yield f"scenario.{key}", "must not be negative"
    if s.duration <= s.warmup or s.warmup < 0:
        yield "scenario.duration", f"need duration > warmup >= 0, got {s.duration} and {s.warmup}"
    if s.wired_rtt < 0:
        yield "scenario.wired_rtt", "must not be negative"
    if s.wired_bandwidth <= 0:
        yield "scenario.wired_bandwidth", "must be positive"
    if not 0 <= s.ber < 1:
        yield "scenario.ber", f"must lie in [0, 1), got {s.ber}"
    if s.upload_start < 0:
        yield "scenario.upload_start", "must not be negative"
    if s.downloads + s.uploads + s.saturated_stations + cfg.udp.count + len(cfg.short.sizes) < 1:
        yield "scenario.downloads", "scenario carries no traffic"

    for key in ("ap", "station", "ack"):
        try:
            parse_buffer_mode(getattr(cfg.buffer, key), f"buffer.{key}")
        except ConfigError as e:
            yield e.key, str(e).split(": ", 1)[1]
    if cfg.reference.buffer not in ("", "best-fixed"):
        try:
            parse_buffer_mode(cfg.reference.buffer, "reference.buffer")
        except ConfigError:
            yield "reference.buffer", f"expected fixed(N), best-fixed or empty, got {cfg.reference.buffer!r}"
    if cfg.reference.buffer == "best-fixed" and not cfg.reference.grid:
        yield "reference.grid", "best-fixed needs a non-empty grid"

    if not 0 < cfg.tcp.beta <= 1:
        yield "tcp.beta", f"must lie in (0, 1], got {cfg.tcp.beta}"
    if cfg.tcp.awnd < 1:
        yield "tcp.awnd", "must be at least 1"
    if not 1 <= cfg.tcp.initial_cwnd <= cfg.tcp.awnd:
        yield "tcp.initial_cwnd", "need 1 <= initial_cwnd <= awnd"
    if cfg.tcp.payload <= 0:
        yield "tcp.payload", "must be positive"

    for i in range(cfg.udp.count):
        flow = cfg.udp.flow(i)
        if flow["size"] <= 0:
            yield "udp.sizes", "sizes must be positive"
        if flow["interval"] <= 0:
            yield "udp.intervals", "intervals must be positive"
        if flow["traffic_class"] not in ("ack", "data"):
            yield "udp.classes", f"expected ack or data, got {flow['traffic_class']!r}"
        if flow["direction"] not in ("up", "down"):
            yield "udp.directions", f"expected up or down, got {flow['direction']!r}"

    if any(size <= 0 for size in cfg.short.sizes):
        yield "short.sizes", "sizes must be positive"
    if cfg.short.interval <= 0:
        yield "short.interval", "must be positive"
    if cfg.short.handshake_rtts < 0:
        yield "short.handshake_rtts", "must not be negative"

    e = cfg.ebdp
    if e.t_max <= 0:
        yield "ebdp.t_max", "must be positive"
    if not 0 < e.w < 1:
        yield "ebdp.w", f"must lie in (0, 1), got {e.w}"
    if not 0 <= e.c <= e.q_max:
        yield "ebdp.c", "need 0 <= c <= q_max"

    a = cfg.alt
    if a.a1 <= 0 or a.b1 <= 0:
        yield "alt.a1", "a1 and b1 must be positive"
    if a.interval <= 0:
        yield "alt.interval", "must be positive"
    if not 0 < a.q_min <= a.q_max:
        yield "alt.q_min", "need 0 < q_min <= q_max"
    if cfg.output.limit_sample_interval <= 0:
        yield "output.limit_sample_interval", "must be positive"


def _model_problems(cfg: ModelConfig) -> Iterator[Tuple[str, str]]:
    m = cfg.model
    if not m.rtts or any(t <= 0 for t in m.rtts):
        yield "model.rtts", "need at least one positive RTT"
    if not m.betas or any(not 0 < b <= 1 for b in m.betas):
        yield "model.betas", "every beta must lie in (0, 1]"
    if len(m.betas) not in (1, len(m.rtts)):
        yield "model.betas", "give one beta or one per RTT"
    if m.a < 0 or m.b < 0:
        yield "model.a", "a and b must not be negative"
    if m.service_rate <= 0:
        yield "model.service_rate", "must be positive"
    if not 0 <= m.delta < 1:
        yield "model.delta", "must lie in [0, 1)"
    if not 0 <= m.p_e <= 1:
        yield "model.p_e", "must lie in [0, 1]"
    if not 0 <= m.backoff_prob <= 1:
        yield "model.backoff_prob", "must lie in [0, 1]"
    if m.beta_spread < 0:
        yield "model.beta_spread", "must not be negative"
    if m.q0 < 0:
        yield "model.q0", "must not be negative"
    if m.k_max < 0:
        yield "model.k_max", "must not be negative"


def validate_config(cfg: ScenarioConfig) -> Tuple[bool, str]:
    for key, message in _scenario_problems(cfg):
        return False, f"{key}: {message}"
    return True, "Configuration is valid"


def validate_model(cfg: ModelConfig) -> Tuple[bool, str]:
    for key, message in _model_problems(cfg):
        return False, f"{key}: {message}"
    return True, "Model parameters are valid"


def ensure_valid(cfg) -> None:
    """Raise ConfigError for the first problem found in a scenario or model config."""
    problems = _model_problems(cfg) if isinstance(cfg, ModelConfig) else _scenario_problems(cfg)
    for key, message in problems:
        logger.error(f"Invalid configuration {key}: {message}")
        raise ConfigError(key, message)
