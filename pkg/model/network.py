import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from model.bufsizing import AltState, ControllerFactory, EbdpState, FixedController, TxQueue
from model.config import ScenarioConfig
from model.mac80211 import Channel, ChannelModel, StationMac, TrafficClass, class_params, phy_preset
from model.metrics import CongestionEvent, FlowReport, LimitSample, MetricsReport, UdpReport
from model.sim_core import Simulator, TraceKind
from model.transport import (
    Direction, Packet, PacketKind, SaturatedSource, TcpConnection, TcpFlow, UdpFlow, UdpSource, WiredLink,
)

logger = logging.getLogger(__name__)

AP_NODE = 0
_MAC_STREAM = 1
_FLOW_STREAM = 20_000
_JITTER_STREAM = 30_000
START_JITTER = 1.0


@dataclass
class Node:
    node_id: int
    data: TxQueue
    ack: TxQueue
    macs: List[StationMac] = field(default_factory=list)

    def queue_for(self, traffic_class: str) -> TxQueue:
        return self.ack if traffic_class == TrafficClass.ACK.value else self.data


class Wlan:
    """One AP, its stations and the wired hosts behind the AP.

    Downloads: wired host -> AP data queue -> station -> station ACK queue
    -> AP -> wired host. Uploads run the mirror path, with their TCP ACKs
    queued in the AP's ACK-class queue. Under DCF each node has one queue.
    """

    def __init__(self, cfg: ScenarioConfig, sim: Simulator):
        self.cfg = cfg
        self.sim = sim
        s = cfg.scenario
        self.warmup = s.warmup
        self.phy = phy_preset(s.phy)
        self.channel = Channel(sim, self.phy, ChannelModel(s.ber, self.phy.k_agg),
                               self._on_delivered, self._on_discarded)
        self.link = WiredLink(s.wired_bandwidth, s.wired_rtt)
        self.ebdp_template = EbdpState(cfg.ebdp.t_max, cfg.ebdp.c, cfg.ebdp.w, cfg.ebdp.q_max)
        self.alt_template = AltState(cfg.alt.a1, cfg.alt.b1, cfg.alt.interval, cfg.alt.q_thr,
                                     cfg.alt.q_min, cfg.alt.q_max, cfg.alt.q_init)
        self._jitter = sim.rng(_JITTER_STREAM)
        self._next_station = 0
        self._next_flow = 0
        self.nodes: List[Node] = []
        self.connections: Dict[int, TcpConnection] = {}
        self.long_flows: List[TcpConnection] = []
        self.udp: Dict[int, UdpSource] = {}
        self.fillers: Dict[int, SaturatedSource] = {}
        self._flow_node: Dict[int, Node] = {}
        self.short_completions: List[tuple] = []
        self.limit_samples: List[LimitSample] = []
        self.congestion_events: List[CongestionEvent] = []
        self.service_times: List[float] = []

        self.ap = self._add_node(cfg.buffer.ap)
        self._build_flows()
        self._start_timers()

    # topology

    def _add_node(self, data_mode: str) -> Node:
        node_id = len(self.nodes)
        edca = self.cfg.scenario.mac_mode == "edca"
        data = self._make_queue(node_id, TrafficClass.DATA, data_mode)
        ack = self._make_queue(node_id, TrafficClass.ACK, self.cfg.buffer.ack) if edca else data
        node = Node(node_id, data, ack)
        for queue in ([data, ack] if edca else [data]):
            tc = TrafficClass(queue.traffic_class)
            mac = StationMac(self._next_station, node_id, class_params(self.cfg.scenario.mac_mode, tc),
                             queue=queue, rng=self.sim.rng(_MAC_STREAM + self._next_station),
                             retry_limit=self.phy.retry_limit, traffic_class=tc)
            self._next_station += 1
            queue.on_backlog = self._backlog_callback(mac)
            self.channel.attach(mac)
            node.macs.append(mac)
        self.nodes.append(node)
        return node

    def _make_queue(self, node_id: int, tc: TrafficClass, mode: str) -> TxQueue:
        controller = ControllerFactory.build(mode, self.ebdp_template, self.alt_template)
        return TxQueue(node_id, tc.value, controller)

    def _backlog_callback(self, mac: StationMac) -> Callable[[], None]:
        return lambda: self.channel.notify_backlog(mac)

    def _new_flow_id(self) -> int:
        self._next_flow += 1
        return self._next_flow

    def _tcp(self, direction: Direction, node: Node, total_packets: Optional[int] = None,
             initial_cwnd: Optional[float] = None) -> TcpConnection:
        t = self.cfg.tcp
        flow = TcpFlow(self._new_flow_id(), direction, self.cfg.scenario.wired_rtt,
                       cwnd=initial_cwnd if initial_cwnd is not None else t.initial_cwnd,
                       awnd=t.awnd, beta=t.beta, slow_start=t.slow_start, measure_from=self.warmup)
        send = self._download_sender() if direction == Direction.DOWNLOAD \
            else self._upload_sender(node)
        conn = TcpConnection(self.sim, flow, t.payload, node.node_id, send, total_packets=total_packets)
        self.connections[flow.flow_id] = conn
        self._flow_node[flow.flow_id] = node
        return conn

    def _build_flows(self) -> None:
        s = self.cfg.scenario
        for _ in range(s.downloads):
            conn = self._tcp(Direction.DOWNLOAD, self._add_node(self.cfg.buffer.station))
            conn.on_backoff = self._record_congestion_event
            self.long_flows.append(conn)
            self.sim.schedule(conn.start, self._jitter.uniform(0, START_JITTER))
        upload_mode = "astar" if self.cfg.buffer.station_astar else self.cfg.buffer.station
        for _ in range(s.uploads):
            conn = self._tcp(Direction.UPLOAD, self._add_node(upload_mode))
            self.long_flows.append(conn)
            self.sim.schedule(conn.start, s.upload_start + self._jitter.uniform(0, START_JITTER))
        for _ in range(s.saturated_stations):
            node = self._add_node(self.cfg.buffer.station)
            filler = SaturatedSource(self._new_flow_id(), node.data, self.cfg.tcp.payload)
            node.data.on_drain = self._drain_callback(filler)
            self.fillers[filler.flow_id] = filler
            self._flow_node[filler.flow_id] = node
            self.sim.schedule(filler.top_up, 0.0, 0.0)
        for i in range(self.cfg.udp.count):
            params = self.cfg.udp.flow(i)
            direction = Direction.DOWNLOAD if params["direction"] == "down" else Direction.UPLOAD
            node = self._add_node(self.cfg.buffer.station)
            flow = UdpFlow(self._new_flow_id(), params["size"], params["interval"], direction, params["traffic_class"])
            source = UdpSource(self.sim, flow, node.node_id, self.sim.rng(_FLOW_STREAM + flow.flow_id),
                               self._udp_sender(flow, node), measure_from=self.warmup)
            self.udp[flow.flow_id] = source
            self._flow_node[flow.flow_id] = node
            self.sim.schedule(source.start, 0.0)
        if self.cfg.short.sizes:
            self.short_node = self._add_node(self.cfg.buffer.station)
            self.sim.schedule(self._launch_short_flows, 0.0)
        logger.debug(f"WLAN built with {len(self.nodes) - 1} stations and {self._next_flow} flows")

    def _drain_callback(self, filler: SaturatedSource) -> Callable[[], None]:
        return lambda: filler.top_up(self.sim.now)

    def _launch_short_flows(self) -> None:
        now = self.sim.now
        handshake = self.cfg.short.handshake_rtts * self.cfg.scenario.wired_rtt
        for size in self.cfg.short.sizes:
            packets = math.ceil(size / self.cfg.tcp.payload)
            conn = self._tcp(Direction.DOWNLOAD, self.short_node, total_packets=packets, initial_cwnd=2.0)
            conn.on_complete = self._short_flow_callback(size, now)
            self.sim.schedule(conn.start, now + handshake)
        self.sim.schedule(self._launch_short_flows, now + self.cfg.short.interval)

    def _short_flow_callback(self, size: int, requested: float) -> Callable[[TcpConnection], None]:
        def record(conn: TcpConnection) -> None:
            if requested >= self.warmup:
                self.short_completions.append((size, conn.completed_at - requested))
            del self.connections[conn.flow_id]
        return record

    # senders

    def _download_sender(self) -> Callable[[Packet], None]:
        def send(packet: Packet) -> None:
            arrival = self.link.transit(packet.size, self.sim.now, "down")
            self.sim.schedule(self._enqueue, arrival, self.ap, self.ap.data, packet)
        return send

    def _upload_sender(self, node: Node) -> Callable[[Packet], None]:
        return lambda packet: self._enqueue(node, node.data, packet)

    def _udp_sender(self, flow: UdpFlow, node: Node) -> Callable[[Packet], None]:
        if flow.direction == Direction.DOWNLOAD:
            def send(packet: Packet) -> None:
                arrival = self.link.transit(packet.size, self.sim.now, "down")
                self.sim.schedule(self._enqueue, arrival, self.ap, self.ap.queue_for(flow.traffic_class), packet)
            return send
        return lambda packet: self._enqueue(node, node.queue_for(flow.traffic_class), packet)

    def _enqueue(self, node: Node, queue: TxQueue, packet: Packet) -> None:
        now = self.sim.now
        if queue.admit(packet, now):
            self.sim.trace(node.node_id, TraceKind.ENQUEUE, len(queue))
            return
        self.sim.trace(node.node_id, TraceKind.DROP, len(queue))
        self._lost(packet)

    def _lost(self, packet: Packet) -> None:
        if packet.kind == PacketKind.UDP:
            self.udp[packet.flow_id].on_lost(packet)
            return
        conn = self.connections.get(packet.flow_id)
        if conn is None:
            return
        if packet.kind == PacketKind.DATA:
            conn.on_data_lost(packet)
        elif packet.kind == PacketKind.ACK:
            conn.on_ack_lost(packet)

    # MAC callbacks

    def _on_delivered(self, mac: StationMac, frame: List[Packet], t_s: float, t_e: float) -> None:
        queue = mac.queue
        queue.controller.on_service_time(t_s, t_e, len(frame))
        if queue is self.ap.data and self.cfg.output.service_times and t_e >= self.warmup:
            self.service_times.append((t_e - t_s) / len(frame))
        for packet in frame:
            if mac.node_id == AP_NODE:
                self._arrive_at_station(packet)
            else:
                self._arrive_at_ap(packet)

    def _on_discarded(self, mac: StationMac, frame: List[Packet]) -> None:
        for packet in frame:
            self.sim.trace(mac.node_id, TraceKind.DROP, len(mac.queue))
            self._lost(packet)

    def _arrive_at_station(self, packet: Packet) -> None:
        if packet.kind == PacketKind.UDP:
            self.udp[packet.flow_id].receive(packet)
            return
        conn = self.connections.get(packet.flow_id)
        if conn is None:
            return
        if packet.kind == PacketKind.DATA:
            node = self._flow_node[packet.flow_id]
            self._enqueue(node, node.ack, conn.receive_data(packet))
        elif packet.kind == PacketKind.ACK:
            conn.receive_ack(packet)

    def _arrive_at_ap(self, packet: Packet) -> None:
        if packet.kind == PacketKind.FILLER:
            self.fillers[packet.flow_id].receive(packet)
            return
        arrival = self.link.transit(packet.size, self.sim.now, "up")
        self.sim.schedule(self._arrive_at_wired_host, arrival, packet)

    def _arrive_at_wired_host(self, packet: Packet) -> None:
        if packet.kind == PacketKind.UDP:
            self.udp[packet.flow_id].receive(packet)
            return
        conn = self.connections.get(packet.flow_id)
        if conn is None:
            return
        if packet.kind == PacketKind.ACK:
            conn.receive_ack(packet)
            return
        ack = conn.receive_data(packet)
        arrival = self.link.transit(ack.size, self.sim.now, "down")
        self.sim.schedule(self._enqueue, arrival, self.ap, self.ap.ack, ack)

    # periodic tasks

    def _start_timers(self) -> None:
        for node in self.nodes:
            for queue in {id(node.data): node.data, id(node.ack): node.ack}.values():
                interval = queue.controller.interval
                if interval is not None:
                    self.sim.schedule(self._controller_tick, interval, queue)
        self.sim.schedule(self._sample_limits, 0.0)

    def _controller_tick(self, queue: TxQueue) -> None:
        queue.controller.on_interval(self.sim.now)
        self.sim.schedule(self._controller_tick, self.sim.now + queue.controller.interval, queue)

    def sampled_queues(self) -> List[TxQueue]:
        """The AP data queue plus every station data queue with an adaptive limit."""
        queues = [self.ap.data]
        for node in self.nodes[1:]:
            if not isinstance(node.data.controller, FixedController):
                queues.append(node.data)
        return queues

    def _sample_limits(self) -> None:
        now = self.sim.now
        if now >= self.warmup:
            for queue in self.sampled_queues():
                limit = queue.limit()
                self.limit_samples.append(LimitSample(now, queue.node_id, limit, len(queue)))
                self.sim.trace(queue.node_id, TraceKind.LIMIT_UPDATE, limit)
        self.sim.schedule(self._sample_limits, now + self.cfg.output.limit_sample_interval)

    def _record_congestion_event(self, conn: TcpConnection) -> None:
        if self.sim.now >= self.warmup:
            self.congestion_events.append(
                CongestionEvent(self.sim.now, conn.flow_id, self.ap.data.limit(), len(self.ap.data)))

    # results

    def report(self) -> MetricsReport:
        measured = self.cfg.measured_time
        flows = [
            FlowReport(
                flow=conn.flow_id,
                direction=conn.flow.direction.value,
                goodput_bps=8 * conn.delivered_bytes / measured,
                max_srtt_s=conn.flow.max_srtt,
                drops=conn.data_drops + conn.ack_drops,
                rtos=conn.flow.rtos,
            )
            for conn in self.long_flows
        ]
        udp = [
            UdpReport(
                flow=src.flow.flow_id,
                direction=src.flow.direction.value,
                traffic_class=src.flow.traffic_class,
                sent=src.sent,
                received=src.received,
                lost=src.lost,
                mean_delay_s=sum(src.delays) / len(src.delays) if src.delays else float("nan"),
                max_delay_s=max(src.delays) if src.delays else float("nan"),
            )
            for src in self.udp.values()
        ]
        airtime = self.channel.airtime
        return MetricsReport(
            config_hash=self.cfg.config_hash(),
            seed=self.cfg.scenario.seed,
            measured_time=measured,
            flows=flows,
            udp=udp,
            short_flows=list(self.short_completions),
            limit_samples=list(self.limit_samples),
            congestion_events=list(self.congestion_events),
            service_times=list(self.service_times),
            ap_drops=self.ap.data.drops,
            mac_drops=sum(node.data.mac_drops for node in self.nodes),
            airtime_busy=airtime.busy,
            airtime_idle=airtime.idle,
            collisions=airtime.collisions,
            traffic_signature=self.cfg.traffic_signature(),
        )
