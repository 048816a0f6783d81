import heapq
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional

import numpy as np

from model.errors import ConfigError
from model.sim_core import EventHandle, Simulator, TraceKind

logger = logging.getLogger(__name__)

SRTT_GAIN = 1 / 8
RTO_MIN = 1.0
RTO_MAX = 64.0
TCP_ACK_BYTES = 40


class Direction(str, Enum):
    UPLOAD = "upload"
    DOWNLOAD = "download"


class PacketKind(str, Enum):
    DATA = "data"
    ACK = "ack"
    UDP = "udp"
    FILLER = "filler"


@dataclass(eq=False)
class Packet:
    flow_id: int
    kind: PacketKind
    size: int
    seq: int = 0
    sent_at: float = 0.0
    cum_ack: int = 0
    retransmit: bool = False


@dataclass
class TcpFlow:
    """Window state of one AIMD flow. The sender bookkeeping lives in TcpConnection."""

    flow_id: int
    direction: Direction
    rtt_wired: float
    cwnd: float = 1.0
    awnd: float = 4096
    beta: float = 0.5
    srtt: Optional[float] = None
    max_srtt: float = 0.0
    in_flight: int = 0
    slow_start: bool = False
    ssthresh: float = math.inf
    recovery_until: float = -math.inf
    last_backoff_at: float = -math.inf
    rto_backoff: int = 1
    measure_from: float = 0.0
    backoffs: int = 0
    rtos: int = 0

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ConfigError("tcp.beta", f"must lie in (0, 1], got {self.beta}")
        if not 1 <= self.cwnd <= self.awnd:
            raise ConfigError("tcp.initial_cwnd", f"need 1 <= cwnd <= awnd, got {self.cwnd}")

    @property
    def window(self) -> float:
        return min(self.cwnd, self.awnd)

    @property
    def alpha(self) -> float:
        """Additive increase rate in packets/s."""
        return 1.0 / (self.srtt if self.srtt else max(self.rtt_wired, 1e-9))

    @property
    def rto(self) -> float:
        base = max(RTO_MIN, 2 * self.srtt) if self.srtt is not None else RTO_MIN
        return min(base * self.rto_backoff, RTO_MAX)


def on_ack(flow: TcpFlow, acked: int, now: float, rtt_sample: Optional[float] = None) -> None:
    if acked < 1:
        return
    flow.in_flight = max(0, flow.in_flight - acked)
    # Exponential startup only runs inside the warmup; measured time is pure AIMD.
    if now >= flow.measure_from:
        flow.slow_start = False
    for _ in range(acked):
        if flow.slow_start and flow.cwnd < flow.ssthresh:
            flow.cwnd += 1
        else:
            flow.slow_start = False
            flow.cwnd += 1 / flow.cwnd
    flow.cwnd = min(flow.cwnd, flow.awnd)
    if rtt_sample is not None:
        flow.srtt = rtt_sample if flow.srtt is None else (1 - SRTT_GAIN) * flow.srtt + SRTT_GAIN * rtt_sample
        flow.rto_backoff = 1
        if now >= flow.measure_from:
            flow.max_srtt = max(flow.max_srtt, flow.srtt)


def on_loss_event(flow: TcpFlow, now: float, sent_at: Optional[float] = None) -> bool:
    """Multiplicative decrease, at most once per congestion episode.

    A loss is lumped into the previous backoff when it is detected inside the
    recovery window, or when its packet was sent before that backoff.
    """
    if now < flow.recovery_until:
        return False
    if sent_at is not None and sent_at <= flow.last_backoff_at:
        return False
    flow.cwnd = max(1.0, flow.beta * flow.cwnd)
    flow.slow_start = False
    flow.ssthresh = flow.cwnd
    flow.recovery_until = now + (flow.srtt if flow.srtt is not None else flow.rtt_wired)
    flow.last_backoff_at = now
    flow.backoffs += 1
    return True


def rto_check(flow: TcpFlow, now: float, oldest_sent: Optional[float]) -> bool:
    if oldest_sent is None or now - oldest_sent < flow.rto - 1e-12:
        return False
    flow.ssthresh = max(2.0, flow.beta * flow.cwnd)
    flow.cwnd = 1.0
    flow.slow_start = now < flow.measure_from
    flow.in_flight = 0
    flow.rto_backoff = min(flow.rto_backoff * 2, int(RTO_MAX))
    flow.recovery_until = now + (flow.srtt if flow.srtt is not None else flow.rtt_wired)
    flow.last_backoff_at = now
    flow.rtos += 1
    logger.debug(f"RTO on flow {flow.flow_id} at {now:.3f}s, next RTO {flow.rto:.2f}s")
    return True


@dataclass
class WiredLink:
    bandwidth: float = 100e6
    rtt: float = 0.2
    _last_arrival: Dict[str, float] = field(default_factory=lambda: {"up": 0.0, "down": 0.0})

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ConfigError("scenario.wired_bandwidth", "must be positive")
        if self.rtt < 0:
            raise ConfigError("scenario.wired_rtt", "must not be negative")

    def transit(self, size: int, now: float, way: str) -> float:
        arrival = max(now + self.rtt / 2 + 8 * size / self.bandwidth, self._last_arrival[way])
        self._last_arrival[way] = arrival
        return arrival


def wired_transit(packet: Packet, link: WiredLink, now: float, way: str = "down") -> float:
    return link.transit(packet.size, now, way)


class TcpConnection:
    """Sender and receiver of one TCP transfer.

    Every issued sequence number is in exactly one of: outstanding, pending
    retransmission, or acked.
    """

    def __init__(self, sim: Simulator, flow: TcpFlow, payload: int, node_id: int,
                 send: Callable[[Packet], None], total_packets: Optional[int] = None,
                 on_backoff: Optional[Callable[["TcpConnection"], None]] = None,
                 on_complete: Optional[Callable[["TcpConnection"], None]] = None):
        self.sim = sim
        self.flow = flow
        self.payload = payload
        self.node_id = node_id
        self.send = send
        self.total_packets = total_packets
        self.on_backoff = on_backoff
        self.on_complete = on_complete
        self.next_seq = 0
        self.acked = 0
        self.outstanding: Dict[int, float] = {}
        self.pending: Dict[int, None] = {}
        self._unacked_heap: List[int] = []
        self._retransmitted: set = set()
        self._rto_handle: Optional[EventHandle] = None
        self._rto_deadline = 0.0
        # receiver side
        self.rcv_next = 0
        self._rcv_out_of_order: set = set()
        self.delivered_bytes = 0
        self.data_drops = 0
        self.ack_drops = 0
        self.started_at: Optional[float] = None
        self.completed_at: Optional[float] = None

    @property
    def flow_id(self) -> int:
        return self.flow.flow_id

    @property
    def issued(self) -> int:
        return self.next_seq

    @property
    def done(self) -> bool:
        return self.total_packets is not None and self.acked >= self.total_packets

    def start(self) -> None:
        self.started_at = self.sim.now
        self._pump()

    def _has_new_data(self) -> bool:
        return self.total_packets is None or self.next_seq < self.total_packets

    def _pump(self) -> None:
        now = self.sim.now
        while len(self.outstanding) < self.flow.window and (self.pending or self._has_new_data()):
            if self.pending:
                seq = next(iter(self.pending))
                del self.pending[seq]
                self._retransmitted.add(seq)
            else:
                seq = self.next_seq
                self.next_seq += 1
                heapq.heappush(self._unacked_heap, seq)
            self.outstanding[seq] = now
            self.flow.in_flight = len(self.outstanding)
            self._arm_rto()
            self.send(Packet(self.flow_id, PacketKind.DATA, self.payload, seq=seq, sent_at=now,
                             retransmit=seq in self._retransmitted))

    def _settle(self, seq: int) -> bool:
        if seq in self.outstanding:
            del self.outstanding[seq]
        elif seq in self.pending:
            del self.pending[seq]
        else:
            return False
        self._retransmitted.discard(seq)
        self.acked += 1
        return True

    # receiver side

    def receive_data(self, packet: Packet) -> Packet:
        """Deliver a data packet to the receiver and build its ACK."""
        now = self.sim.now
        seq = packet.seq
        if seq >= self.rcv_next and seq not in self._rcv_out_of_order:
            if now >= self.flow.measure_from:
                self.delivered_bytes += packet.size
            self._rcv_out_of_order.add(seq)
            while self.rcv_next in self._rcv_out_of_order:
                self._rcv_out_of_order.discard(self.rcv_next)
                self.rcv_next += 1
        return Packet(self.flow_id, PacketKind.ACK, TCP_ACK_BYTES, seq=seq, sent_at=packet.sent_at,
                      cum_ack=self.rcv_next, retransmit=packet.retransmit)

    # sender side

    def receive_ack(self, ack: Packet) -> None:
        now = self.sim.now
        sample = None
        if ack.seq in self.outstanding and not ack.retransmit and ack.seq not in self._retransmitted:
            sample = now - ack.sent_at
        newly = 1 if self._settle(ack.seq) else 0
        while self._unacked_heap and self._unacked_heap[0] < ack.cum_ack:
            if self._settle(heapq.heappop(self._unacked_heap)):
                newly += 1
        if newly == 0:
            return
        self.flow.in_flight = len(self.outstanding) + newly
        on_ack(self.flow, newly, now, sample)
        self.flow.in_flight = len(self.outstanding)
        self._rto_deadline = now + self.flow.rto
        if self.done:
            self._finish()
            return
        self._pump()

    def _finish(self) -> None:
        if self.completed_at is None:
            self.completed_at = self.sim.now
            self.sim.cancel(self._rto_handle)
            self._rto_handle = None
            if self.on_complete is not None:
                self.on_complete(self)

    def on_data_lost(self, packet: Packet) -> None:
        self.data_drops += 1
        self.sim.schedule(self._detect_loss, self.sim.now + self._detection_delay(), packet.seq, packet.sent_at)

    def on_ack_lost(self, packet: Packet) -> None:
        # An ACK carries the send time of the data packet it acknowledges.
        self.ack_drops += 1
        self.sim.schedule(self._loss_event, self.sim.now + self._detection_delay(), packet.sent_at)

    def _detection_delay(self) -> float:
        return self.flow.srtt if self.flow.srtt is not None else self.flow.rtt_wired

    def _detect_loss(self, seq: int, sent_at: float) -> None:
        if self.outstanding.get(seq) != sent_at:
            return
        del self.outstanding[seq]
        self.pending[seq] = None
        self.flow.in_flight = len(self.outstanding)
        self._loss_event(sent_at)
        self._pump()

    def _loss_event(self, sent_at: Optional[float] = None) -> None:
        if self.completed_at is not None:
            return
        if on_loss_event(self.flow, self.sim.now, sent_at):
            self.sim.trace(self.node_id, TraceKind.CWND_UPDATE, self.flow.cwnd)
            if self.on_backoff is not None:
                self.on_backoff(self)

    def _arm_rto(self) -> None:
        if self._rto_handle is None or not self._rto_handle.pending:
            self._rto_deadline = self.sim.now + self.flow.rto
            self._rto_handle = self.sim.schedule(self._on_rto_timer, self._rto_deadline)

    def _on_rto_timer(self) -> None:
        self._rto_handle = None
        if not self.outstanding or self.completed_at is not None:
            return
        now = self.sim.now
        if now < self._rto_deadline - 1e-12:
            self._rto_handle = self.sim.schedule(self._on_rto_timer, self._rto_deadline)
            return
        # The deadline is pushed back by every ACK that makes progress.
        if not rto_check(self.flow, now, self._rto_deadline - self.flow.rto):
            return
        self.pending = dict.fromkeys(sorted([*self.pending, *self.outstanding]))
        self.outstanding.clear()
        self.sim.trace(self.node_id, TraceKind.CWND_UPDATE, self.flow.cwnd)
        if self.on_backoff is not None:
            self.on_backoff(self)
        self._pump()


@dataclass
class UdpFlow:
    flow_id: int
    packet_size: int
    interval: float
    direction: Direction
    traffic_class: str = "data"

    def __post_init__(self):
        if self.interval <= 0:
            raise ConfigError("udp.intervals", f"must be positive, got {self.interval}")
        if self.packet_size <= 0:
            raise ConfigError("udp.sizes", f"must be positive, got {self.packet_size}")


class UdpSource:
    """Poisson packet source with per-packet one-way delay accounting."""

    def __init__(self, sim: Simulator, flow: UdpFlow, node_id: int, rng: np.random.Generator,
                 send: Callable[[Packet], None], measure_from: float = 0.0):
        self.sim = sim
        self.flow = flow
        self.node_id = node_id
        self.rng = rng
        self.send = send
        self.measure_from = measure_from
        self.sent = 0
        self.received = 0
        self.lost = 0
        self.delays: List[float] = []

    def start(self) -> None:
        self.sim.schedule(self._emit, self.sim.now + self.rng.exponential(self.flow.interval))

    def _emit(self) -> None:
        now = self.sim.now
        self.sent += 1
        self.send(Packet(self.flow.flow_id, PacketKind.UDP, self.flow.packet_size, seq=self.sent, sent_at=now))
        self.sim.schedule(self._emit, now + self.rng.exponential(self.flow.interval))

    def receive(self, packet: Packet) -> None:
        self.received += 1
        if packet.sent_at >= self.measure_from:
            self.delays.append(self.sim.now - packet.sent_at)

    def on_lost(self, packet: Packet) -> None:
        self.lost += 1


class SaturatedSource:
    """Keeps a transmit queue backlogged with filler frames."""

    def __init__(self, flow_id: int, queue, size: int, depth: int = 2):
        self.flow_id = flow_id
        self.queue = queue
        self.size = size
        self.depth = depth
        self.delivered = 0

    def top_up(self, now: float) -> None:
        while len(self.queue) < self.depth:
            if not self.queue.admit(Packet(self.flow_id, PacketKind.FILLER, self.size, sent_at=now), now):
                break

    def receive(self, packet: Packet) -> None:
        self.delivered += 1
