import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import pandas as pd

from model.config import DEFAULT_REFERENCE_GRID, ScenarioConfig
from model.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NamedScenario:
    name: str
    description: str
    settings: Dict[str, str] = field(default_factory=dict)
    axis: Optional[str] = None
    values: Tuple[str, ...] = ()
    replicates: int = 1


SCENARIOS: Dict[str, NamedScenario] = {s.name: s for s in (
    NamedScenario(
        "fixed-sweep",
        "Download efficiency and max sRTT against a fixed AP buffer size",
        {"scenario.phy": "54/6", "scenario.downloads": "1", "reference.buffer": ""},
        axis="buffer.ap",
        values=tuple(f"fixed({n})" for n in DEFAULT_REFERENCE_GRID),
    ),
    NamedScenario(
        "service-time-hist",
        "AP per-packet MAC service time with 2 and 12 active stations",
        {"scenario.phy": "11/1", "scenario.downloads": "1", "buffer.ap": "fixed(400)",
         "output.service_times": "true"},
        axis="scenario.saturated_stations",
        values=("1", "11"),
    ),
    NamedScenario(
        "ebdp-convergence",
        "eBDP limit after ten uploads start at 200 s",
        {"scenario.phy": "54/6", "scenario.downloads": "1", "scenario.uploads": "10",
         "scenario.upload_start": "200", "scenario.duration": "300", "buffer.ap": "ebdp"},
    ),
    NamedScenario(
        "alt-stability",
        "ALT limit at congestion events for a = 10 and a = 100 with b = 1",
        {"scenario.phy": "1/1", "scenario.duration": "1500", "scenario.warmup": "50", "scenario.downloads": "1",
         "buffer.ap": "alt", "alt.b1": "1", "alt.q_max": "50000", "output.service_times": "true"},
        axis="alt.a1",
        values=("10", "100"),
    ),
    NamedScenario(
        "alt-utilization",
        "ALT efficiency as b/a grows, one download and two uploads",
        {"scenario.phy": "11/1", "scenario.downloads": "1", "scenario.uploads": "2", "buffer.ap": "alt",
         "alt.a1": "10", "reference.buffer": "fixed(400)"},
        axis="alt.b1",
        values=("0.1", "0.5", "1"),
    ),
    NamedScenario(
        "astar-multiplexing",
        "A* with ten downloads against the best fixed buffer",
        {"scenario.downloads": "10", "buffer.ap": "astar", "reference.buffer": "best-fixed"},
    ),
    NamedScenario(
        "ber-robustness",
        "A* and fixed buffers on a channel with bit error rate 1e-5",
        {"scenario.ber": "1e-5", "scenario.downloads": "1", "scenario.uploads": "2",
         "reference.buffer": "best-fixed"},
        axis="buffer.ap",
        values=("astar", "fixed(50)", "fixed(400)"),
    ),
    NamedScenario(
        "dcf",
        "A* at the AP and on upload stations under DCF",
        {"scenario.mac_mode": "dcf", "scenario.downloads": "1", "buffer.ap": "astar",
         "buffer.station_astar": "true", "reference.buffer": "best-fixed"},
        axis="scenario.uploads",
        values=("0", "2", "5", "10"),
    ),
    NamedScenario(
        "traffic-mix",
        "Long TCP flows, prioritized and best-effort UDP, and short downloads",
        {"scenario.downloads": "2", "scenario.uploads": "2", "udp.sizes": "64,64",
         "udp.intervals": "1,1", "udp.classes": "ack,data", "udp.directions": "up,down",
         "short.sizes": "5120,20480,30720,102400"},
        axis="buffer.ap",
        values=("astar", "fixed(400)"),
    ),
)}


def get_scenario(name: str) -> NamedScenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError("scenario", f"unknown scenario {name!r}, expected one of {sorted(SCENARIOS)}")


def build_template(scenario: NamedScenario, base: ScenarioConfig, overrides: Iterable[Tuple[str, str]] = ()) -> ScenarioConfig:
    cfg = base
    for key, value in scenario.settings.items():
        cfg = cfg.with_value(key, value)
    for key, value in overrides:
        cfg = cfg.with_value(key, value)
    return cfg


def run_named(controller, name: str, overrides: Iterable[Tuple[str, str]] = (),
              out_dir: Optional[str] = None, replicates: Optional[int] = None) -> pd.DataFrame:
    scenario = get_scenario(name)
    base = ScenarioConfig()
    base.scenario.seed = controller.config_service.seed
    template = build_template(scenario, base, overrides)
    logger.info(f"Scenario {name}: {scenario.description}")
    return controller.sweep(template, scenario.axis, scenario.values,
                            replicates or scenario.replicates, out_dir)
