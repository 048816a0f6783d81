import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

logger = logging.getLogger(__name__)

SHORT_FLOW_LABELS = {5120: "5KB", 20480: "20KB", 30720: "33KB", 102400: "100KB"}


def size_label(size: int) -> str:
    return SHORT_FLOW_LABELS.get(size, f"{size}B")


@dataclass(frozen=True)
class FlowReport:
    flow: int
    direction: str
    goodput_bps: float
    max_srtt_s: float
    drops: int
    rtos: int


@dataclass(frozen=True)
class UdpReport:
    flow: int
    direction: str
    traffic_class: str
    sent: int
    received: int
    lost: int
    mean_delay_s: float
    max_delay_s: float


@dataclass(frozen=True)
class LimitSample:
    time: float
    node: int
    limit: float
    occupancy: int


@dataclass(frozen=True)
class CongestionEvent:
    """AP queue state when a download flow backed off."""

    time: float
    flow: int
    limit: float
    occupancy: int


@dataclass
class MetricsReport:
    config_hash: str
    seed: int
    measured_time: float
    flows: List[FlowReport] = field(default_factory=list)
    udp: List[UdpReport] = field(default_factory=list)
    short_flows: List[tuple] = field(default_factory=list)
    limit_samples: List[LimitSample] = field(default_factory=list)
    congestion_events: List[CongestionEvent] = field(default_factory=list)
    service_times: List[float] = field(default_factory=list)
    ap_drops: int = 0
    mac_drops: int = 0
    airtime_busy: float = 0.0
    airtime_idle: float = 0.0
    collisions: int = 0
    efficiency: Optional[float] = None
    traffic_signature: tuple = ()

    def _goodput(self, direction: str) -> float:
        return sum(f.goodput_bps for f in self.flows if f.direction == direction)

    @property
    def ap_goodput_bps(self) -> float:
        """Aggregate download goodput, the traffic the AP queue carries."""
        return self._goodput("download")

    @property
    def upload_goodput_bps(self) -> float:
        return self._goodput("upload")

    @property
    def rtos(self) -> int:
        return sum(f.rtos for f in self.flows)

    @property
    def drops(self) -> int:
        return sum(f.drops for f in self.flows)

    def max_srtt(self, direction: Optional[str] = None) -> float:
        values = [f.max_srtt_s for f in self.flows if direction is None or f.direction == direction]
        return max(values) if values else 0.0

    def _ap_samples(self) -> List[LimitSample]:
        return [s for s in self.limit_samples if s.node == 0]

    @property
    def mean_limit(self) -> float:
        samples = self._ap_samples()
        return float(np.mean([s.limit for s in samples])) if samples else float("nan")

    @property
    def mean_occupancy(self) -> float:
        samples = self._ap_samples()
        return float(np.mean([s.occupancy for s in samples])) if samples else float("nan")

    @property
    def max_occupancy(self) -> int:
        samples = self._ap_samples()
        return max(s.occupancy for s in samples) if samples else 0

    def limit_series(self, node: int = 0) -> np.ndarray:
        return np.array([[s.time, s.limit] for s in self.limit_samples if s.node == node]).reshape(-1, 2)

    def congestion_limits(self) -> np.ndarray:
        return np.array([e.limit for e in self.congestion_events])

    def summary_row(self) -> Dict[str, object]:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "download_goodput_bps": self.ap_goodput_bps,
            "upload_goodput_bps": self.upload_goodput_bps,
            "udp_received": sum(u.received for u in self.udp),
            "efficiency": self.efficiency,
            "max_srtt_s": self.max_srtt(),
            "max_srtt_download_s": self.max_srtt("download"),
            "max_srtt_upload_s": self.max_srtt("upload"),
            "mean_limit": self.mean_limit,
            "mean_occupancy": self.mean_occupancy,
            "drops": self.drops,
            "ap_drops": self.ap_drops,
            "rtos": self.rtos,
        }


def coefficient_of_variation(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0 or values.mean() == 0:
        return float("nan")
    return float(values.std() / values.mean())
