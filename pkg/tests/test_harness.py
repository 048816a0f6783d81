import math

import numpy as np
import pandas as pd
import pytest

import bufsim
from controller.controller import (
    SimulationController, efficiency, replicate_seed, service_time_histogram, short_flow_stats, simulate,
)
from controller.scenarios import SCENARIOS, build_template, get_scenario, run_named
from model.config import ScenarioConfig
from model.errors import ConfigError, ReportMismatchError
from model.metrics import FlowReport, MetricsReport
from model.network import Wlan
from model.sim_core import MemoryTraceSink, Simulator, TraceKind


@pytest.fixture
def controller(config_service):
    return SimulationController(config_service, workers=1)


def run_wlan(cfg):
    sim = Simulator(seed=cfg.scenario.seed)
    wlan = Wlan(cfg, sim)
    sim.run_until(cfg.scenario.duration)
    return sim, wlan


def test_same_seed_gives_identical_traces(small_cfg):
    cfg = small_cfg(scenario__downloads='2', scenario__uploads='1', buffer__ap='astar')
    first, second = MemoryTraceSink(), MemoryTraceSink()
    report_a = simulate(cfg, first)
    report_b = simulate(cfg, second)
    assert first.records
    assert [r.as_row() for r in first.records] == [r.as_row() for r in second.records]
    assert report_a.summary_row() == report_b.summary_row()


def test_different_seeds_diverge(small_cfg):
    cfg = small_cfg(scenario__downloads='2')
    a, b = MemoryTraceSink(), MemoryTraceSink()
    simulate(cfg, a)
    simulate(cfg.with_value('scenario.seed', '2'), b)
    assert [r.as_row() for r in a.records] != [r.as_row() for r in b.records]


def test_airtime_and_packets_are_conserved(small_cfg):
    cfg = small_cfg(scenario__downloads='2', scenario__uploads='2', buffer__ap='fixed(10)')
    sim, wlan = run_wlan(cfg)
    assert wlan.channel.accounted_time(sim.now) == pytest.approx(sim.now, abs=1e-9)
    for conn in wlan.connections.values():
        assert conn.issued == conn.acked + len(conn.outstanding) + len(conn.pending)
    assert all(conn.acked > 0 for conn in wlan.long_flows)


def test_small_buffer_drops_at_the_ap(small_cfg):
    report = simulate(small_cfg(scenario__downloads='2', buffer__ap='fixed(2)'))
    assert report.ap_drops > 0
    assert report.drops > 0
    assert report.ap_goodput_bps > 0


def test_download_goodput_matches_ap_transmissions(small_cfg):
    cfg = small_cfg(tcp__awnd='32')
    sink = MemoryTraceSink()
    report = simulate(cfg, sink)
    sent = sum(r.value for r in sink.records
               if r.kind == TraceKind.TX_SUCCESS and r.station == 0 and r.time >= cfg.scenario.warmup)
    assert report.drops == 0
    assert report.ap_goodput_bps == pytest.approx(8 * sent / cfg.measured_time)
    assert report.ap_goodput_bps > 1e6


def test_ebdp_limit_follows_the_service_rate(small_cfg):
    report = simulate(small_cfg(buffer__ap='ebdp'))
    assert 50 < report.mean_limit < 400
    assert report.limit_series().shape[1] == 2


def test_alt_limit_moves_from_its_initial_value(small_cfg):
    report = simulate(small_cfg(buffer__ap='alt', alt__q_init='200'))
    series = report.limit_series()
    assert len(series) > 0
    assert not np.all(series[:, 1] == 200)


def test_dcf_carries_both_directions(small_cfg):
    report = simulate(small_cfg(scenario__mac_mode='dcf', scenario__uploads='1', buffer__ap='astar',
                                buffer__station_astar='true'))
    assert report.ap_goodput_bps > 0
    assert report.upload_goodput_bps > 0


def test_udp_flows_are_delivered(small_cfg):
    report = simulate(small_cfg(scenario__downloads='0', udp__sizes='64,200', udp__intervals='0.05',
                                udp__directions='up,down', udp__classes='ack,data'))
    assert len(report.udp) == 2
    for udp in report.udp:
        assert udp.received > 0
        assert udp.mean_delay_s > 0


def test_short_flow_completion_times(small_cfg):
    cfg = small_cfg(scenario__downloads='0', short__sizes='5120,20480', short__interval='2')
    report = simulate(cfg)
    stats = short_flow_stats(report)
    assert list(stats) == ['5KB', '20KB']
    assert stats['20KB'] > stats['5KB'] > cfg.scenario.wired_rtt
    assert sorted(size for size, _ in report.short_flows) == [5120] * 3 + [20480] * 3


def test_service_time_histogram(small_cfg):
    report = simulate(small_cfg(scenario__saturated_stations='1', output__service_times='true'))
    counts, edges, mean = service_time_histogram(report, bins=20)
    assert counts.sum() == len(report.service_times) > 0
    assert len(edges) == 21
    assert edges[0] <= mean <= edges[-1]
    empty_counts, _, empty_mean = service_time_histogram(MetricsReport('x', 1, 1.0))
    assert empty_counts.size == 0
    assert math.isnan(empty_mean)


def _report(goodput, signature=(('scenario.phy', "'11/1'"),)):
    return MetricsReport('h', 1, 10.0, flows=[FlowReport(1, 'download', goodput, 0.1, 0, 0)],
                         traffic_signature=signature)


def test_efficiency_is_a_goodput_ratio():
    assert efficiency(_report(2e6), _report(4e6)) == pytest.approx(0.5)
    with pytest.raises(ReportMismatchError):
        efficiency(_report(2e6), _report(4e6, signature=(('scenario.phy', "'54/6'"),)))
    with pytest.raises(ReportMismatchError):
        efficiency(_report(2e6), _report(0.0))


def test_run_scenario_against_an_identical_reference(controller, small_cfg, tmp_path):
    cfg = small_cfg(reference__buffer='fixed(400)', output__trace='true')
    report = controller.run_scenario(cfg, str(tmp_path))
    assert report.efficiency == pytest.approx(1.0)
    for name in ('summary.csv', 'flows.csv', 'limits.csv', 'trace.csv'):
        assert (tmp_path / name).exists()
    summary = pd.read_csv(tmp_path / 'summary.csv', dtype={'config_hash': str})
    assert summary.loc[0, 'config_hash'] == cfg.config_hash()
    assert list(pd.read_csv(tmp_path / 'trace.csv').columns) == ['time', 'station', 'kind', 'value']
    assert list(pd.read_csv(tmp_path / 'limits.csv').columns) == ['time', 'node', 'limit', 'occupancy']


def test_replicate_seeds_are_distinct_and_stable():
    seeds = [replicate_seed(1, r) for r in range(5)]
    assert len(set(seeds)) == 5
    assert seeds == [replicate_seed(1, r) for r in range(5)]


def test_sweep_without_axis_runs_the_template_once_per_replicate(controller, small_cfg, tmp_path):
    summary = controller.sweep(small_cfg(), None, [], replicates=2, out_dir=str(tmp_path))
    assert len(summary) == 2
    assert summary['seed'].nunique() == 2
    assert (summary['rel_sweep_max'] == 1.0).all()
    aggregate = pd.read_csv(tmp_path / 'sweep_summary.csv')
    assert aggregate.loc[0, 'replicates'] == 2
    assert aggregate.loc[0, 'efficiency_mean'] == pytest.approx(1.0)


def test_sweep_relative_to_the_best_point(controller, small_cfg, tmp_path):
    summary = controller.sweep(small_cfg(scenario__downloads='2'), 'buffer.ap', ['fixed(2)', 'fixed(200)'],
                               out_dir=str(tmp_path))
    assert list(summary['value']) == ['fixed(2)', 'fixed(200)']
    assert summary['rel_sweep_max'].max() == 1.0
    assert (summary['rel_sweep_max'] <= 1.0).all()
    assert summary['efficiency'].isna().all()


def test_sweep_summary_flags_noisy_points():
    rows = pd.DataFrame({'value': ['a'] * 5 + ['b'] * 5,
                         'efficiency': [0.9, 0.5, 0.95, 0.6, 0.99] + [0.9] * 5})
    aggregate = SimulationController.sweep_summary(rows).set_index('value')
    assert bool(aggregate.loc['a', 'non_convergent'])
    assert not bool(aggregate.loc['b', 'non_convergent'])


def test_named_scenarios_apply_settings_then_overrides():
    assert set(SCENARIOS) >= {'fixed-sweep', 'ebdp-convergence', 'astar-multiplexing', 'dcf'}
    template = build_template(get_scenario('astar-multiplexing'), ScenarioConfig(),
                              [('scenario.downloads', '3')])
    assert template.buffer.ap == 'astar'
    assert template.reference.buffer == 'best-fixed'
    assert template.scenario.downloads == 3
    with pytest.raises(ConfigError):
        get_scenario('nonexistent')


def test_run_named_scenario(controller, tmp_path):
    overrides = [('scenario.phy', '11/1'), ('scenario.duration', '4'), ('scenario.warmup', '1'),
                 ('scenario.wired_rtt', '0.05')]
    summary = run_named(controller, 'alt-stability', overrides, str(tmp_path))
    assert list(summary['value']) == ['10', '100']
    assert (tmp_path / 'sweep_summary.csv').exists()


def test_analyze_writes_the_trajectory(controller, tmp_path):
    model_cfg = controller.config_service.load_model()
    rows = dict(controller.analyze(model_cfg, str(tmp_path), oracle_paths=20, write_trajectory=True))
    assert rows['fixed_point'] == pytest.approx(250)
    assert rows['stable']
    trajectory = pd.read_csv(tmp_path / 'trajectory.csv')
    assert list(trajectory.columns) == ['k', 'EQ', 'oracle_mean']
    assert trajectory['EQ'].iloc[1] == pytest.approx(250)
    assert trajectory['oracle_mean'].iloc[-1] == pytest.approx(250)


def test_cli_return_codes(config_service, tmp_path):
    out = str(tmp_path / 'cli')
    fast = ['--set', 'scenario.phy=11/1', '--set', 'scenario.duration=3', '--set', 'scenario.warmup=1',
            '--out', out]
    assert bufsim.main(['run', *fast]) == 0
    assert (tmp_path / 'cli' / 'summary.csv').exists()
    assert bufsim.main(['run', '--set', 'scenario.bogus=1', '--out', out]) == 2
    assert bufsim.main(['run', str(tmp_path / 'missing.env'), '--out', out]) == 2
    assert bufsim.main(['analyze', '--trajectory', '--out', out]) == 0
    assert (tmp_path / 'cli' / 'trajectory.csv').exists()


def test_cli_rejects_a_malformed_axis():
    with pytest.raises(SystemExit):
        bufsim.build_parser().parse_args(['sweep', '--axis', 'no-values'])
