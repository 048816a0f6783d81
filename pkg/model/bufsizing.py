import logging
import re
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass
from typing import Callable, Deque, List, Optional

from model.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class EbdpState:
    t_max: float = 0.2
    c: float = 5.0
    w: float = 0.001
    q_max_ebdp: float = 1600.0
    t_serv: Optional[float] = None
    samples: int = 0

    def __post_init__(self):
        if not 0 < self.w < 1:
            raise ConfigError("ebdp.w", f"must lie in (0, 1), got {self.w}")
        if self.t_max <= 0:
            raise ConfigError("ebdp.t_max", "must be positive")
        if self.c < 0 or self.q_max_ebdp < self.c:
            raise ConfigError("ebdp.q_max", "need 0 <= c <= q_max")


def ebdp_update_service_time(state: EbdpState, t_s: float, t_e: float) -> None:
    sample = t_e - t_s
    if sample <= 0:
        raise ValueError(f"service time sample must be positive, got {sample}")
    if state.t_serv is None:
        state.t_serv = sample
    else:
        state.t_serv = (1 - state.w) * state.t_serv + state.w * sample
    state.samples += 1


def ebdp_limit(state: EbdpState) -> float:
    if state.t_serv is None:
        return state.q_max_ebdp
    return min(state.t_max / state.t_serv + state.c, state.q_max_ebdp)


@dataclass
class AltState:
    a1: float = 10.0
    b1: float = 1.0
    t: float = 1.0
    q_thr: float = 0.0
    q_min: float = 5.0
    q_max: float = 1600.0
    q_alt: float = 30.0
    t_i_accum: float = 0.0
    t_b_accum: float = 0.0

    def __post_init__(self):
        if self.a1 <= 0 or self.b1 <= 0:
            raise ConfigError("alt.a1", f"a1 and b1 must be positive, got {self.a1}, {self.b1}")
        if self.t <= 0:
            raise ConfigError("alt.interval", "must be positive")
        if not 0 < self.q_min <= self.q_max:
            raise ConfigError("alt.q_min", f"need 0 < q_min <= q_max, got {self.q_min}, {self.q_max}")
        self.q_alt = min(max(self.q_alt, self.q_min), self.q_max)


def alt_accumulate(state: AltState, occupancy: float, dt: float) -> None:
    if dt < 0:
        raise ValueError(f"negative sojourn {dt}")
    if occupancy <= state.q_thr:
        state.t_i_accum += dt
    else:
        state.t_b_accum += dt


def alt_interval_update(state: AltState) -> float:
    q = state.q_alt + state.a1 * state.t_i_accum - state.b1 * state.t_b_accum
    state.q_alt = min(max(q, state.q_min), state.q_max)
    state.t_i_accum = 0.0
    state.t_b_accum = 0.0
    return state.q_alt


@dataclass
class AStarState:
    ebdp: EbdpState
    alt: AltState


def astar_limit(state: AStarState) -> float:
    return min(ebdp_limit(state.ebdp), state.alt.q_alt)


class BufferController(ABC):
    """Decides the admission limit of one transmit queue."""

    mode = "abstract"
    interval: Optional[float] = None

    @abstractmethod
    def limit(self) -> float:
        pass

    def on_service_time(self, t_s: float, t_e: float, packets: int = 1) -> None:
        pass

    def on_occupancy(self, old: int, new: int, now: float) -> None:
        """Occupancy changed from `old` (held since the previous change) to `new` at `now`."""
        pass

    def on_interval(self, now: float) -> float:
        return self.limit()


class FixedController(BufferController):
    mode = "fixed"

    def __init__(self, size: float):
        if size < 1:
            raise ConfigError("buffer", f"fixed buffer must hold at least one packet, got {size}")
        self.size = float(size)

    def limit(self) -> float:
        return self.size


class EbdpController(BufferController):
    mode = "ebdp"

    def __init__(self, state: EbdpState):
        self.state = state

    def limit(self) -> float:
        return ebdp_limit(self.state)

    def on_service_time(self, t_s: float, t_e: float, packets: int = 1) -> None:
        # Aggregated frames contribute their per-packet share.
        ebdp_update_service_time(self.state, t_s, t_s + (t_e - t_s) / max(packets, 1))


class AltController(BufferController):
    mode = "alt"

    def __init__(self, state: AltState):
        self.state = state
        self.interval = state.t
        self._last_change = 0.0
        self._occupancy = 0

    def limit(self) -> float:
        return self.state.q_alt

    def on_occupancy(self, old: int, new: int, now: float) -> None:
        alt_accumulate(self.state, old, now - self._last_change)
        self._last_change = now
        self._occupancy = new

    def on_interval(self, now: float) -> float:
        self.on_occupancy(self._occupancy, self._occupancy, now)
        limit = alt_interval_update(self.state)
        logger.debug(f"ALT interval at {now:.3f}s -> limit {limit:.2f}")
        return limit


class AStarController(AltController):
    mode = "astar"

    def __init__(self, ebdp: EbdpState, alt: AltState):
        super().__init__(alt)
        self.ebdp = ebdp

    @property
    def combined(self) -> AStarState:
        return AStarState(self.ebdp, self.state)

    def limit(self) -> float:
        return astar_limit(self.combined)

    def on_service_time(self, t_s: float, t_e: float, packets: int = 1) -> None:
        ebdp_update_service_time(self.ebdp, t_s, t_s + (t_e - t_s) / max(packets, 1))

    def on_interval(self, now: float) -> float:
        super().on_interval(now)
        return self.limit()


_FIXED = re.compile(r"^fixed\((\d+(?:\.\d+)?)\)$")


def parse_buffer_mode(text: str, key: str = "buffer") -> str:
    mode = text.strip().lower()
    if mode in ("ebdp", "alt", "astar") or _FIXED.match(mode):
        return mode
    raise ConfigError(key, f"unknown buffer mode {text!r}; expected fixed(N), ebdp, alt or astar")


class ControllerFactory:
    @staticmethod
    def build(mode: str, ebdp: EbdpState, alt: AltState) -> BufferController:
        """Fresh controller for `mode`; `ebdp` and `alt` are templates copied per queue."""
        mode = parse_buffer_mode(mode)
        fixed = _FIXED.match(mode)
        if fixed:
            return FixedController(float(fixed.group(1)))
        if mode == "ebdp":
            return EbdpController(EbdpState(ebdp.t_max, ebdp.c, ebdp.w, ebdp.q_max_ebdp))
        alt_copy = AltState(alt.a1, alt.b1, alt.t, alt.q_thr, alt.q_min, alt.q_max, alt.q_alt)
        if mode == "alt":
            return AltController(alt_copy)
        return AStarController(EbdpState(ebdp.t_max, ebdp.c, ebdp.w, ebdp.q_max_ebdp), alt_copy)


def ebdp_admit(occupancy: int, limit: float) -> bool:
    return occupancy < limit


class TxQueue:
    """Drop-tail FIFO whose admission limit comes from a BufferController.

    Packets stay queued while their frame is on the air, so the occupancy
    seen by the controller includes the head-of-line frame.
    """

    def __init__(self, node_id: int, traffic_class: str, controller: BufferController,
                 on_backlog: Optional[Callable[[], None]] = None,
                 on_drain: Optional[Callable[[], None]] = None):
        self.node_id = node_id
        self.traffic_class = traffic_class
        self.controller = controller
        self.on_backlog = on_backlog
        self.on_drain = on_drain
        self.packets: Deque = deque()
        self.drops = 0
        self.enqueued = 0
        self.mac_drops = 0

    def __len__(self) -> int:
        return len(self.packets)

    @property
    def occupancy(self) -> int:
        return len(self.packets)

    def limit(self) -> float:
        return self.controller.limit()

    def admit(self, packet, now: float) -> bool:
        if not ebdp_admit(len(self.packets), self.controller.limit()):
            self.drops += 1
            return False
        self.packets.append(packet)
        self.controller.on_occupancy(len(self.packets) - 1, len(self.packets), now)
        self.enqueued += 1
        if len(self.packets) == 1 and self.on_backlog is not None:
            self.on_backlog()
        return True

    def head_frame(self, k: int) -> List:
        return [self.packets[i] for i in range(min(k, len(self.packets)))]

    def frame_payload_bytes(self, k: int) -> int:
        return sum(p.size for p in self.head_frame(k))

    def _pop(self, n: int, now: float) -> None:
        old = len(self.packets)
        for _ in range(min(n, old)):
            self.packets.popleft()
        self.controller.on_occupancy(old, len(self.packets), now)
        if self.on_drain is not None:
            self.on_drain()

    def complete(self, n: int, now: float) -> None:
        self._pop(n, now)

    def discard(self, n: int, now: float) -> None:
        self.mac_drops += min(n, len(self.packets))
        self._pop(n, now)
