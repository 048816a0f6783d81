import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from model.errors import ConfigError
from model.sim_core import EventHandle, Simulator, TraceKind

logger = logging.getLogger(__name__)

MAC_HEADER_BYTES = 28
ACK_BYTES = 14


@dataclass(frozen=True)
class PhyParams:
    sifs: float = 10e-6
    slot: float = 9e-6
    data_rate: float = 54e6
    basic_rate: float = 6e6
    plcp_rate: float = 6e6
    plcp_overhead: float = 20e-6
    payload_default: int = 1000
    retry_limit: int = 11
    k_agg: int = 1

    def __post_init__(self):
        for name in ("sifs", "slot", "data_rate", "basic_rate", "plcp_rate", "plcp_overhead", "payload_default"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"phy.{name}", "must be positive")
        if self.retry_limit < 1:
            raise ConfigError("phy.retry_limit", "must be at least 1")
        if self.k_agg < 1:
            raise ConfigError("phy.k_agg", "must be at least 1")


# 802.11b rates use the 192 us long preamble; the others keep the 802.11g OFDM timing.
PHY_PRESETS: Dict[str, PhyParams] = {
    "1/1": PhyParams(data_rate=1e6, basic_rate=1e6, plcp_rate=1e6, plcp_overhead=192e-6),
    "11/1": PhyParams(data_rate=11e6, basic_rate=1e6, plcp_rate=1e6, plcp_overhead=192e-6),
    "54/6": PhyParams(),
    "216/54": PhyParams(data_rate=216e6, basic_rate=54e6, k_agg=8),
}


def phy_preset(name: str) -> PhyParams:
    try:
        return PHY_PRESETS[name]
    except KeyError:
        raise ConfigError("scenario.phy", f"unknown preset {name!r}, expected one of {sorted(PHY_PRESETS)}")


class TrafficClass(str, Enum):
    ACK = "ack"
    DATA = "data"


@dataclass(frozen=True)
class MacClassParams:
    cw_min: int
    cw_max: int
    aifs: int

    def __post_init__(self):
        if not 1 <= self.cw_min <= self.cw_max:
            raise ConfigError("mac.cw", f"need 1 <= cw_min <= cw_max, got {self.cw_min}, {self.cw_max}")
        if self.aifs < 1:
            raise ConfigError("mac.aifs", "must be at least one slot")


EDCA_CLASSES = {
    TrafficClass.ACK: MacClassParams(cw_min=4, cw_max=8, aifs=2),
    TrafficClass.DATA: MacClassParams(cw_min=32, cw_max=1024, aifs=6),
}
DCF_CLASS = MacClassParams(cw_min=32, cw_max=1024, aifs=2)


def class_params(mac_mode: str, traffic_class: TrafficClass) -> MacClassParams:
    if mac_mode == "dcf":
        return DCF_CLASS
    return EDCA_CLASSES[traffic_class]


def data_duration(frame_payload_bytes: int, phy: PhyParams) -> float:
    """Airtime of one data frame carrying `frame_payload_bytes` of MSDU payload."""
    return phy.plcp_overhead + 8 * (MAC_HEADER_BYTES + frame_payload_bytes) / phy.data_rate


def frame_duration(payload_bytes: int, k_agg: int, phy: PhyParams) -> float:
    if payload_bytes <= 0 or k_agg < 1:
        raise ValueError(f"need payload_bytes > 0 and k_agg >= 1, got {payload_bytes}, {k_agg}")
    return data_duration(k_agg * payload_bytes, phy)


def ack_duration(phy: PhyParams) -> float:
    return phy.plcp_overhead + 8 * ACK_BYTES / phy.basic_rate


def difs(aifs: int, phy: PhyParams) -> float:
    return phy.sifs + aifs * phy.slot


def exchange_duration(t_data: float, aifs: int, phy: PhyParams) -> float:
    """DATA + SIFS + MAC ACK + AIFS: the channel time of one acknowledged frame."""
    return t_data + phy.sifs + ack_duration(phy) + difs(aifs, phy)


def collision_duration(t_data_longest: float, aifs: int, phy: PhyParams) -> float:
    return t_data_longest + difs(aifs, phy)


@dataclass(frozen=True)
class ChannelModel:
    ber: float = 0.0
    aggregation_k: int = 1

    def __post_init__(self):
        if not 0 <= self.ber < 1:
            raise ConfigError("scenario.ber", f"must lie in [0, 1), got {self.ber}")
        if self.aggregation_k < 1:
            raise ConfigError("phy.k_agg", "must be at least 1")

    def frame_error_probability(self, frame_bytes: int) -> float:
        return 1.0 - (1.0 - self.ber) ** (8 * frame_bytes)


@dataclass(eq=False)
class StationMac:
    """Contention state of one transmit queue (an EDCA function, or the DCF)."""

    station_id: int
    node_id: int
    params: MacClassParams
    queue: object = None
    rng: Optional[np.random.Generator] = None
    retry_limit: int = 11
    traffic_class: TrafficClass = TrafficClass.DATA
    backoff_counter: int = 0
    cw: int = 0
    retries: int = 0
    defer_slots: int = 0
    has_backoff: bool = False
    head_of_queue_start: Optional[float] = None

    def __post_init__(self):
        if self.cw == 0:
            self.cw = self.params.cw_min

    @property
    def backlogged(self) -> bool:
        return self.queue is not None and len(self.queue) > 0

    @property
    def slots_to_go(self) -> int:
        return self.defer_slots + self.backoff_counter

    def draw_backoff(self, rng: Optional[np.random.Generator] = None) -> int:
        rng = self.rng if self.rng is not None else rng
        self.backoff_counter = int(rng.integers(0, self.cw))
        self.has_backoff = True
        return self.backoff_counter

    def advance(self, slots: int) -> None:
        """Count down `slots` idle slots, spending deferral before backoff."""
        spent = min(slots, self.defer_slots)
        self.defer_slots -= spent
        self.backoff_counter = max(0, self.backoff_counter - (slots - spent))

    def on_success(self, rng: Optional[np.random.Generator] = None) -> None:
        self.cw = self.params.cw_min
        self.retries = 0
        self.draw_backoff(rng)

    def on_failure(self, rng: Optional[np.random.Generator] = None) -> bool:
        """Failed attempt; returns True when the frame must be discarded."""
        self.retries += 1
        self.cw = min(2 * self.cw, self.params.cw_max)
        exhausted = self.retries > self.retry_limit
        if exhausted:
            self.retries = 0
            self.cw = self.params.cw_min
        self.draw_backoff(rng)
        return exhausted


class SlotKind(str, Enum):
    IDLE = "idle"
    SUCCESS = "success"
    COLLISION = "collision"


@dataclass
class SlotOutcome:
    kind: SlotKind
    stations: List[StationMac] = field(default_factory=list)

    @property
    def winner(self) -> Optional[StationMac]:
        return self.stations[0] if self.kind == SlotKind.SUCCESS else None


class TxResult(str, Enum):
    SUCCESS = "success"
    FRAME_ERROR = "frame_error"
    RETRY_EXHAUSTED = "retry_exhausted"


def _priority(station: StationMac) -> tuple:
    return (station.params.aifs, station.params.cw_min)


def resolve_internal(ready: Sequence[StationMac],
                     rng: Optional[np.random.Generator] = None) -> Tuple[List[StationMac], List[StationMac]]:
    """EDCA virtual collisions: per node, only the highest-priority ready queue transmits.

    Returns the transmitters and the losers whose retry budget ran out.
    """
    by_node: Dict[int, List[StationMac]] = {}
    for station in ready:
        by_node.setdefault(station.node_id, []).append(station)
    transmitters, exhausted = [], []
    for group in by_node.values():
        group.sort(key=_priority)
        transmitters.append(group[0])
        for loser in group[1:]:
            if loser.on_failure(rng):
                exhausted.append(loser)
    return transmitters, exhausted


def contention_step(stations: Sequence[StationMac], rng: np.random.Generator) -> SlotOutcome:
    """Resolve one slot: idle countdown, a lone transmitter, or a collision."""
    contenders = [s for s in stations if s.backlogged]
    for s in contenders:
        if not s.has_backoff:
            s.draw_backoff(rng)
    ready = [s for s in contenders if s.slots_to_go == 0]
    if not ready:
        for s in contenders:
            s.advance(1)
        return SlotOutcome(SlotKind.IDLE)
    transmitters, _ = resolve_internal(ready, rng)
    if len(transmitters) == 1:
        return SlotOutcome(SlotKind.SUCCESS, transmitters)
    for s in transmitters:
        s.on_failure(rng)
    return SlotOutcome(SlotKind.COLLISION, transmitters)


def transmit_attempt(winner: StationMac, channel: ChannelModel, rng: np.random.Generator,
                     frame_bytes: Optional[int] = None) -> TxResult:
    if frame_bytes is None:
        frame_bytes = MAC_HEADER_BYTES + winner.queue.frame_payload_bytes(channel.aggregation_k)
    # Backoff redraws below use the winner's own stream when it has one.
    if channel.ber > 0 and rng.random() < channel.frame_error_probability(frame_bytes):
        if winner.on_failure(rng):
            return TxResult.RETRY_EXHAUSTED
        return TxResult.FRAME_ERROR
    winner.on_success(rng)
    return TxResult.SUCCESS


@dataclass
class AirtimeStats:
    busy: float = 0.0
    idle: float = 0.0
    countdown_slots: int = 0
    successes: int = 0
    collisions: int = 0
    frame_errors: int = 0
    retry_drops: int = 0


class Channel:
    """Slot-synchronous shared medium.

    Idle slots are skipped in bulk: the next access happens after the
    smallest remaining countdown among contenders, which is equivalent to
    repeated contention_step calls.
    """

    def __init__(self, sim: Simulator, phy: PhyParams, model: ChannelModel,
                 on_delivered: Callable[[StationMac, list, float, float], None],
                 on_discarded: Callable[[StationMac, list], None]):
        self.sim = sim
        self.phy = phy
        self.model = model
        self.on_delivered = on_delivered
        self.on_discarded = on_discarded
        self.stations: List[StationMac] = []
        self.airtime = AirtimeStats()
        self._base_aifs: Optional[int] = None
        self._busy = False
        self._idle_since = 0.0
        self._busy_start = 0.0
        self._access: Optional[EventHandle] = None
        self._countdown_start = 0.0
        self._countdown_slots = 0
        self._members: List[StationMac] = []
        self._error_rng = sim.rng(10_000)

    def attach(self, station: StationMac) -> None:
        self.stations.append(station)
        aifs = station.params.aifs
        self._base_aifs = aifs if self._base_aifs is None else min(self._base_aifs, aifs)

    def _extra_defer(self, station: StationMac) -> int:
        return station.params.aifs - self._base_aifs

    def notify_backlog(self, station: StationMac) -> None:
        """Called when a queue goes from empty to non-empty."""
        if station.head_of_queue_start is None:
            station.head_of_queue_start = self.sim.now
        if not station.has_backoff:
            station.draw_backoff()
        if self._busy or station in self._members:
            return
        if self._access is None:
            station.defer_slots = self._extra_defer(station)
            self._start_countdown(self.sim.now)
            return
        # Join a running countdown at the next slot boundary.
        elapsed = int((self.sim.now - self._countdown_start) / self.phy.slot + 1e-9)
        elapsed = min(elapsed, max(self._countdown_slots - 1, 0))
        self.sim.cancel(self._access)
        self._access = None
        for member in self._members:
            member.advance(elapsed)
        self.airtime.countdown_slots += elapsed
        station.defer_slots = self._extra_defer(station) + 1
        self._start_countdown(self._countdown_start + elapsed * self.phy.slot)

    def _start_countdown(self, boundary: float) -> None:
        self._members = [s for s in self.stations if s.backlogged]
        if not self._members:
            self._access = None
            return
        self._countdown_slots = min(s.slots_to_go for s in self._members)
        self._countdown_start = boundary
        at = max(boundary + self._countdown_slots * self.phy.slot, self.sim.now)
        self._access = self.sim.schedule(self._on_access, at)

    def _on_access(self) -> None:
        self._access = None
        now = self.sim.now
        for member in self._members:
            member.advance(self._countdown_slots)
        self.airtime.countdown_slots += self._countdown_slots
        ready = [s for s in self._members if s.slots_to_go == 0]
        transmitters, exhausted = resolve_internal(ready)
        self._members = []
        self.airtime.idle += now - self._idle_since
        self._busy = True
        self._busy_start = now
        for loser in exhausted:
            self._discard(loser, loser.queue.head_frame(self.model.aggregation_k), now)

        frames = {s.station_id: s.queue.head_frame(self.model.aggregation_k) for s in transmitters}
        for s in transmitters:
            self.sim.trace(s.node_id, TraceKind.TX_START, len(frames[s.station_id]))

        if len(transmitters) == 1:
            winner = transmitters[0]
            frame = frames[winner.station_id]
            payload = sum(p.size for p in frame)
            t_data = data_duration(payload, self.phy)
            result = transmit_attempt(winner, self.model, self._error_rng, frame_bytes=MAC_HEADER_BYTES + payload)
            duration = exchange_duration(t_data, self._base_aifs, self.phy)
            self.sim.schedule(self._on_exchange_end, now + duration, winner, frame, result, duration)
            return

        longest = max(data_duration(sum(p.size for p in frames[s.station_id]), self.phy) for s in transmitters)
        duration = collision_duration(longest, self._base_aifs, self.phy)
        discarded = []
        for s in transmitters:
            if s.on_failure():
                discarded.append((s, frames[s.station_id]))
        self.airtime.collisions += 1
        self.sim.trace(transmitters[0].node_id, TraceKind.COLLISION, len(transmitters))
        self.sim.schedule(self._on_collision_end, now + duration, discarded, duration)

    def _on_exchange_end(self, winner: StationMac, frame: list, result: TxResult, duration: float) -> None:
        now = self.sim.now
        self.airtime.busy += duration
        if result == TxResult.SUCCESS:
            self.airtime.successes += 1
            t_s = winner.head_of_queue_start
            winner.queue.complete(len(frame), now)
            self.sim.trace(winner.node_id, TraceKind.TX_SUCCESS, sum(p.size for p in frame))
            self.on_delivered(winner, frame, t_s, now)
            self._reset_head(winner, now)
        elif result == TxResult.RETRY_EXHAUSTED:
            self._discard(winner, frame, now)
        else:
            self.airtime.frame_errors += 1
        self._end_busy(now)

    def _on_collision_end(self, discarded: list, duration: float) -> None:
        now = self.sim.now
        self.airtime.busy += duration
        for station, frame in discarded:
            self._discard(station, frame, now)
        self._end_busy(now)

    def _discard(self, station: StationMac, frame: list, now: float) -> None:
        self.airtime.retry_drops += 1
        station.queue.discard(len(frame), now)
        self.on_discarded(station, frame)
        self._reset_head(station, now)

    @staticmethod
    def _reset_head(station: StationMac, now: float) -> None:
        station.head_of_queue_start = now if station.backlogged else None

    def _end_busy(self, now: float) -> None:
        self._busy = False
        self._idle_since = now
        for s in self.stations:
            if s.backlogged:
                if not s.has_backoff:
                    s.draw_backoff()
                if s.head_of_queue_start is None:
                    s.head_of_queue_start = now
                s.defer_slots = self._extra_defer(s)
        self._start_countdown(now)

    def accounted_time(self, now: float) -> float:
        """Idle plus busy time, including the period still open at `now`."""
        if self._busy:
            return self.airtime.idle + self.airtime.busy + (now - self._busy_start)
        return self.airtime.idle + self.airtime.busy + (now - self._idle_since)
