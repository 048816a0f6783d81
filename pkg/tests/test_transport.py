import pytest

from model.errors import ConfigError
from model.sim_core import Simulator
from model.transport import (
    Direction, Packet, PacketKind, TcpConnection, TcpFlow, UdpFlow, WiredLink, on_ack, on_loss_event,
    rto_check,
)


def flow(**kwargs):
    settings = dict(flow_id=0, direction=Direction.DOWNLOAD, rtt_wired=0.2)
    settings.update(kwargs)
    return TcpFlow(**settings)


def test_srtt_moves_an_eighth_of_the_way_to_each_sample():
    f = flow(srtt=0.2)
    on_ack(f, 1, now=1.0, rtt_sample=0.28)
    assert f.srtt == pytest.approx(0.21)
    assert f.max_srtt == pytest.approx(0.21)


def test_max_srtt_ignores_the_warmup():
    f = flow(measure_from=5.0)
    on_ack(f, 1, now=1.0, rtt_sample=0.3)
    assert f.srtt == pytest.approx(0.3)
    assert f.max_srtt == 0.0


def test_congestion_avoidance_adds_about_one_packet_per_window():
    f = flow(cwnd=10)
    on_ack(f, 10, now=0.0)
    assert f.cwnd == pytest.approx(10.95, abs=0.02)


def test_slow_start_grows_until_ssthresh():
    f = flow(slow_start=True, ssthresh=4, measure_from=10.0)
    on_ack(f, 3, now=0.0)
    assert f.cwnd == 4
    on_ack(f, 1, now=0.0)
    assert f.cwnd == pytest.approx(4.25)
    assert not f.slow_start


def test_slow_start_ends_when_measurement_begins():
    f = flow(cwnd=4, slow_start=True, measure_from=10.0)
    on_ack(f, 2, now=9.0)
    assert f.cwnd == 6
    on_ack(f, 6, now=10.0)
    assert not f.slow_start
    assert f.cwnd == pytest.approx(6.95, abs=0.02)


def test_timeout_restarts_slow_start_only_during_warmup():
    early = flow(srtt=0.2, cwnd=20, measure_from=30.0)
    assert rto_check(early, 5.0, oldest_sent=3.0)
    assert early.slow_start
    late = flow(srtt=0.2, cwnd=20, measure_from=30.0)
    assert rto_check(late, 40.0, oldest_sent=38.0)
    assert not late.slow_start
    on_ack(late, 3, now=40.5)
    assert late.cwnd < 3


def test_window_is_capped_by_the_advertised_window():
    f = flow(cwnd=10, awnd=10)
    on_ack(f, 5, now=0.0)
    assert f.cwnd == 10


def test_losses_within_one_rtt_are_a_single_backoff():
    f = flow(cwnd=20)
    assert on_loss_event(f, 1.0)
    assert f.cwnd == 10
    assert not on_loss_event(f, 1.1)
    assert f.cwnd == 10
    assert on_loss_event(f, 1.25)
    assert f.cwnd == 5
    assert f.backoffs == 2


def test_loss_of_a_packet_sent_before_the_backoff_is_lumped():
    f = flow(cwnd=20, srtt=0.2)
    assert on_loss_event(f, 1.0, sent_at=0.8)
    assert f.cwnd == 10
    # detected after the recovery window, but it left before the backoff
    assert not on_loss_event(f, 1.3, sent_at=0.95)
    assert f.cwnd == 10
    assert on_loss_event(f, 1.5, sent_at=1.1)
    assert f.cwnd == 5
    assert f.backoffs == 2


def test_timeout_is_a_recovery_point():
    f = flow(cwnd=20, srtt=0.2)
    assert rto_check(f, 5.0, oldest_sent=3.0)
    assert not on_loss_event(f, 5.5, sent_at=4.9)
    assert f.backoffs == 0
    assert on_loss_event(f, 5.5, sent_at=5.1)


def test_backoff_never_goes_below_one_packet():
    f = flow(cwnd=1.5)
    on_loss_event(f, 0.0)
    assert f.cwnd == 1.0


def test_rto_is_at_least_one_second_and_backs_off_to_64():
    f = flow(srtt=0.2, cwnd=20)
    assert f.rto == 1.0
    assert not rto_check(f, 2.0, oldest_sent=1.5)
    assert rto_check(f, 2.0, oldest_sent=1.0)
    assert (f.cwnd, f.ssthresh, f.slow_start) == (1.0, 10.0, False)
    assert f.rto == 2.0
    for step in range(10):
        rto_check(f, 1000.0 * (step + 1), oldest_sent=0.0)
    assert f.rto == 64.0
    on_ack(f, 1, now=20000.0, rtt_sample=0.2)
    assert f.rto == 1.0


def test_invalid_flow_parameters_are_rejected():
    with pytest.raises(ConfigError) as err:
        flow(beta=0.0)
    assert err.value.key == "tcp.beta"
    with pytest.raises(ConfigError):
        UdpFlow(0, 100, 0.0, Direction.UPLOAD)


def test_wired_transit_adds_half_rtt_and_serialisation():
    link = WiredLink(bandwidth=100e6, rtt=0.2)
    assert link.transit(1000, 0.0, "down") == pytest.approx(0.10008)
    # a small packet cannot overtake the one ahead of it
    assert link.transit(40, 0.0, "down") == pytest.approx(0.10008)
    assert link.transit(40, 0.0, "up") == pytest.approx(0.1 + 320 / 100e6)


class Loopback:
    """Carries a connection's data and ACKs over a fixed one-way delay."""

    def __init__(self, total, one_way=0.05, lose=()):
        self.sim = Simulator(seed=1)
        self.one_way = one_way
        self.lose = set(lose)
        self.completed = []
        self.conn = TcpConnection(self.sim, flow(rtt_wired=2 * one_way), 1000, 1, self.send,
                                  total_packets=total, on_complete=self.completed.append)

    def conserved(self):
        conn = self.conn
        return conn.issued == conn.acked + len(conn.outstanding) + len(conn.pending)

    def send(self, packet):
        assert packet.kind == PacketKind.DATA
        if packet.seq in self.lose:
            self.lose.discard(packet.seq)
            self.conn.on_data_lost(packet)
            return
        self.sim.schedule(self.deliver, self.sim.now + self.one_way, packet)

    def deliver(self, packet):
        ack = self.conn.receive_data(packet)
        self.sim.schedule(self.return_ack, self.sim.now + self.one_way, ack)

    def return_ack(self, ack):
        self.conn.receive_ack(ack)
        assert self.conserved()


def test_transfer_completes_and_conserves_packets():
    loop = Loopback(total=50)
    loop.conn.start()
    loop.sim.run_until(30.0)
    conn = loop.conn
    assert conn.done
    assert loop.completed == [conn]
    assert conn.acked == 50
    assert not conn.outstanding and not conn.pending
    assert conn.delivered_bytes == 50 * 1000
    assert conn.flow.srtt == pytest.approx(0.1)


def test_lost_packet_is_retransmitted_after_one_backoff():
    loop = Loopback(total=60, lose={12})
    loop.conn.start()
    loop.sim.run_until(60.0)
    conn = loop.conn
    assert conn.done
    assert conn.data_drops == 1
    assert conn.flow.backoffs == 1
    assert conn.delivered_bytes == 60 * 1000
    assert loop.conserved()


def test_lost_acks_straddling_a_backoff_halve_the_window_once():
    loop = Loopback(total=2000)
    conn = loop.conn
    conn.start()
    loop.sim.run_until(2.0)
    assert conn.flow.srtt == pytest.approx(0.1)

    conn.on_ack_lost(Packet(conn.flow_id, PacketKind.ACK, 40, seq=0, sent_at=1.95))
    loop.sim.run_until(2.15)
    assert conn.flow.backoffs == 1
    halved = conn.flow.cwnd

    # detected at 2.25, after the recovery window, for data sent before the backoff
    conn.on_ack_lost(Packet(conn.flow_id, PacketKind.ACK, 40, seq=0, sent_at=2.05))
    loop.sim.run_until(2.3)
    assert conn.flow.backoffs == 1
    assert conn.flow.cwnd >= halved

    conn.on_ack_lost(Packet(conn.flow_id, PacketKind.ACK, 40, seq=0, sent_at=2.28))
    loop.sim.run_until(2.45)
    assert conn.flow.backoffs == 2
    assert conn.ack_drops == 3
