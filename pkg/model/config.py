import copy
import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, get_args, get_origin, get_type_hints

from model.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_REFERENCE_GRID = [2, 5, 10, 20, 50, 80, 100, 200, 400, 800, 1600]
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class ScenarioSection:
    phy: str = "54/6"
    downloads: int = 1
    uploads: int = 0
    wired_rtt: float = 0.2
    wired_bandwidth: float = 100e6
    duration: float = 300.0
    warmup: float = 20.0
    seed: int = 1
    mac_mode: str = "edca"
    ber: float = 0.0
    upload_start: float = 0.0
    saturated_stations: int = 0


@dataclass
class BufferSection:
    ap: str = "fixed(400)"
    station: str = "fixed(400)"
    ack: str = "fixed(400)"
    station_astar: bool = False


@dataclass
class EbdpSection:
    t_max: float = 0.2
    c: float = 5.0
    w: float = 0.001
    q_max: float = 1600.0


@dataclass
class AltSection:
    a1: float = 10.0
    b1: float = 1.0
    interval: float = 1.0
    q_thr: float = 0.0
    q_min: float = 5.0
    q_max: float = 1600.0
    q_init: float = 30.0


@dataclass
class TcpSection:
    beta: float = 0.5
    awnd: int = 4096
    initial_cwnd: float = 1.0
    slow_start: bool = True
    payload: int = 1000


@dataclass
class UdpSection:
    """One UDP flow per list position; shorter lists repeat their last entry."""

    sizes: List[int] = field(default_factory=list)
    intervals: List[float] = field(default_factory=list)
    classes: List[str] = field(default_factory=list)
    directions: List[str] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.sizes)

    def flow(self, i: int) -> Dict[str, Any]:
        def pick(values, default):
            return values[min(i, len(values) - 1)] if values else default
        return {
            "size": self.sizes[i],
            "interval": pick(self.intervals, 1.0),
            "traffic_class": pick(self.classes, "data"),
            "direction": pick(self.directions, "up"),
        }


@dataclass
class ShortSection:
    sizes: List[int] = field(default_factory=list)
    interval: float = 10.0
    handshake_rtts: float = 1.0


@dataclass
class ReferenceSection:
    buffer: str = ""
    grid: List[int] = field(default_factory=lambda: list(DEFAULT_REFERENCE_GRID))


@dataclass
class OutputSection:
    trace: bool = False
    limit_sample_interval: float = 0.1
    service_times: bool = False


@dataclass
class ModelSection:
    a: float = 10.0
    b: float = 1.0
    service_rate: float = 1500.0
    rtts: List[float] = field(default_factory=lambda: [0.2])
    betas: List[float] = field(default_factory=lambda: [0.5])
    backoff_prob: float = 1.0
    beta_spread: float = 0.0
    delta: float = 0.0
    p_e: float = 1.0
    q0: float = 0.0
    k_max: int = 50


def _coerce(key: str, raw: Any, hint) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if get_origin(hint) in (list, List):
            (item,) = get_args(hint)
            return [_coerce(key, part, item) for part in text.split(",") if part.strip()]
        if hint is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if hint is int:
            number = float(text)
            if not number.is_integer():
                raise ValueError(f"not an integer: {text!r}")
            return int(number)
        if hint is float:
            return float(text)
        return text
    except ValueError as e:
        raise ConfigError(key, str(e)) from e


class _Sections:
    """Dotted `section.key` access over a dataclass of section dataclasses."""

    def _section(self, key: str):
        section_name, _, name = key.partition(".")
        if not name or section_name not in {f.name for f in dataclasses.fields(self)}:
            raise ConfigError(key, "unknown section")
        section = getattr(self, section_name)
        if name not in {f.name for f in dataclasses.fields(section)}:
            raise ConfigError(key, "unknown key")
        return section, name

    def get(self, key: str) -> Any:
        section, name = self._section(key)
        return getattr(section, name)

    def set(self, key: str, raw: Any) -> None:
        section, name = self._section(key)
        hint = get_type_hints(type(section))[name]
        setattr(section, name, _coerce(key, raw, hint))

    def with_value(self, key: str, raw: Any):
        clone = copy.deepcopy(self)
        clone.set(key, raw)
        return clone

    def items(self) -> List[tuple]:
        rows = []
        for section_field in dataclasses.fields(self):
            section = getattr(self, section_field.name)
            for f in dataclasses.fields(section):
                rows.append((f"{section_field.name}.{f.name}", getattr(section, f.name)))
        return rows


@dataclass
class ScenarioConfig(_Sections):
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    buffer: BufferSection = field(default_factory=BufferSection)
    ebdp: EbdpSection = field(default_factory=EbdpSection)
    alt: AltSection = field(default_factory=AltSection)
    tcp: TcpSection = field(default_factory=TcpSection)
    udp: UdpSection = field(default_factory=UdpSection)
    short: ShortSection = field(default_factory=ShortSection)
    reference: ReferenceSection = field(default_factory=ReferenceSection)
    output: OutputSection = field(default_factory=OutputSection)

    # Keys that change neither the offered traffic nor the PHY.
    _NON_TRAFFIC = ("buffer.", "ebdp.", "alt.", "reference.", "output.", "scenario.seed")

    def config_hash(self) -> str:
        """Short digest of every setting except the seed and output switches."""
        text = ";".join(f"{k}={v!r}" for k, v in self.items()
                        if k != "scenario.seed" and not k.startswith("output."))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]

    def traffic_signature(self) -> tuple:
        return tuple((k, repr(v)) for k, v in self.items() if not k.startswith(self._NON_TRAFFIC))

    @property
    def measured_time(self) -> float:
        return self.scenario.duration - self.scenario.warmup


@dataclass
class ModelConfig(_Sections):
    model: ModelSection = field(default_factory=ModelSection)
