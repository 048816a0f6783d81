import logging
import os
from collections import OrderedDict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from model.analysis import (
    convergence_rate, epoch_oracle, fixed_point, is_stable, lambda_gamma, model_from_config, practical_rule,
    recursion_trajectory, utilization_bounds,
)
from model.config import ModelConfig, ScenarioConfig
from model.errors import AnalysisError, ReportMismatchError
from model.metrics import MetricsReport, size_label
from model.network import Wlan
from model.sim_core import CsvTraceSink, Simulator, TraceSink
from model.validators import ensure_valid
from services.config_service import ConfigService
from services.sweep_service import SweepJob, SweepService
from view.view import ReportView

logger = logging.getLogger(__name__)

NON_CONVERGENT_STD = 0.05
NON_CONVERGENT_MIN_REPLICATES = 5


def simulate(cfg: ScenarioConfig, trace_sink: Optional[TraceSink] = None) -> MetricsReport:
    """Build the WLAN for `cfg` and run it to the configured duration."""
    sink = trace_sink if trace_sink is not None else TraceSink()
    sim = Simulator(seed=cfg.scenario.seed, trace_sink=sink)
    wlan = Wlan(cfg, sim)
    try:
        summary = sim.run_until(cfg.scenario.duration)
    finally:
        sink.close()
    logger.debug(f"Run {cfg.config_hash()} seed {cfg.scenario.seed}: {summary.dispatched} events")
    return wlan.report()


def replicate_seed(base: int, replicate: int) -> int:
    return int(np.random.SeedSequence([base, replicate]).generate_state(1)[0])


def efficiency(report: MetricsReport, reference: MetricsReport) -> float:
    if report.traffic_signature != reference.traffic_signature:
        logger.error("Efficiency requested across runs with different traffic or PHY")
        raise ReportMismatchError("reference run differs in traffic or PHY configuration")
    if reference.ap_goodput_bps <= 0:
        raise ReportMismatchError("reference run carried no download traffic")
    return report.ap_goodput_bps / reference.ap_goodput_bps


def short_flow_stats(report: MetricsReport) -> "OrderedDict[str, float]":
    """Mean completion time per transfer size, smallest size first; empty sizes are omitted."""
    by_size: Dict[int, List[float]] = {}
    for size, completion in report.short_flows:
        by_size.setdefault(size, []).append(completion)
    return OrderedDict((size_label(size), float(np.mean(by_size[size]))) for size in sorted(by_size))


def short_flow_counts(report: MetricsReport) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for size, _ in report.short_flows:
        counts[size_label(size)] = counts.get(size_label(size), 0) + 1
    return counts


def service_time_histogram(report: MetricsReport, bins: int = 50) -> Tuple[np.ndarray, np.ndarray, float]:
    samples = np.asarray(report.service_times)
    if samples.size == 0:
        return np.zeros(0, dtype=int), np.zeros(1), float("nan")
    counts, edges = np.histogram(samples, bins=bins)
    return counts, edges, float(samples.mean())


class SimulationController:
    def __init__(self, config_service: Optional[ConfigService] = None, view: Optional[ReportView] = None,
                 workers: Optional[int] = None):
        self.config_service = config_service or ConfigService()
        self.view = view or ReportView()
        self.sweeps = SweepService(workers or self.config_service.workers)

    # references

    def _reference_configs(self, cfg: ScenarioConfig) -> List[ScenarioConfig]:
        mode = cfg.reference.buffer
        if not mode:
            return []
        if mode == "best-fixed":
            return [cfg.with_value("buffer.ap", f"fixed({n})") for n in cfg.reference.grid]
        return [cfg.with_value("buffer.ap", mode)]

    def reference_report(self, cfg: ScenarioConfig) -> Optional[MetricsReport]:
        configs = self._reference_configs(cfg)
        if not configs:
            return None
        jobs = [SweepJob(c.buffer.ap, 0, c) for c in configs]
        reports = self.sweeps.run_all(jobs, simulate)
        return max(reports, key=lambda r: r.ap_goodput_bps)

    # harness operations

    def run_scenario(self, cfg: ScenarioConfig, out_dir: Optional[str] = None) -> MetricsReport:
        ensure_valid(cfg)
        out_dir = out_dir or self.config_service.out_dir
        logger.info(f"Running scenario {cfg.config_hash()} seed {cfg.scenario.seed} "
                    f"({cfg.scenario.phy}, {cfg.scenario.downloads} down / {cfg.scenario.uploads} up, "
                    f"AP buffer {cfg.buffer.ap})")
        sink = None
        if cfg.output.trace:
            os.makedirs(out_dir, exist_ok=True)
            sink = CsvTraceSink(os.path.join(out_dir, 'trace.csv'))
        report = simulate(cfg, sink)
        reference = self.reference_report(cfg)
        if reference is not None:
            report.efficiency = efficiency(report, reference)
        self.write_run(report, out_dir)
        logger.info(f"Finished scenario {cfg.config_hash()}: download goodput "
                    f"{report.ap_goodput_bps / 1e6:.3f} Mbps")
        return report

    def write_run(self, report: MetricsReport, out_dir: str) -> None:
        self.view.write_csv(self.view.summary_frame([report.summary_row()]), out_dir, 'summary.csv')
        self.view.write_csv(self.view.flows_frame(report), out_dir, 'flows.csv')
        self.view.write_csv(self.view.limits_frame(report), out_dir, 'limits.csv')
        if report.udp:
            self.view.write_csv(self.view.udp_frame(report), out_dir, 'udp.csv')
        if report.short_flows:
            stats = short_flow_stats(report)
            self.view.write_csv(self.view.short_flow_frame(stats, short_flow_counts(report)), out_dir,
                                'short_flows.csv')
        if report.service_times:
            counts, edges, mean = service_time_histogram(report)
            self.view.write_csv(self.view.histogram_frame(counts, edges), out_dir, 'service_times.csv')
            logger.info(f"Mean AP service time {mean * 1e3:.3f} ms over {len(report.service_times)} packets")

    def sweep(self, template: ScenarioConfig, axis_key: Optional[str], values: Sequence[str],
              replicates: int = 1, out_dir: Optional[str] = None) -> pd.DataFrame:
        ensure_valid(template)
        if replicates < 1:
            raise ValueError("replicates must be at least 1")
        out_dir = out_dir or self.config_service.out_dir
        axis = list(values) if axis_key and values else [None]
        base = template.scenario.seed
        jobs = []
        for value in axis:
            cfg = template.with_value(axis_key, value) if value is not None else template
            ensure_valid(cfg)
            for r in range(replicates):
                jobs.append(SweepJob(value, r, cfg.with_value("scenario.seed", replicate_seed(base, r))))
        logger.info(f"Sweeping {axis_key or '<none>'} over {len(axis)} values x {replicates} replicates")
        reports = self.sweeps.run_all(jobs, simulate)

        reference_jobs, reference_index = [], {}
        for job in jobs:
            for ref_cfg in self._reference_configs(job.cfg):
                key = (ref_cfg.traffic_signature(), ref_cfg.scenario.seed, ref_cfg.buffer.ap)
                if key not in reference_index:
                    reference_index[key] = len(reference_jobs)
                    reference_jobs.append(SweepJob(ref_cfg.buffer.ap, job.replicate, ref_cfg))
        reference_reports = self.sweeps.run_all(reference_jobs, simulate)

        rows = []
        for job, report in zip(jobs, reports):
            refs = [reference_reports[reference_index[(c.traffic_signature(), c.scenario.seed, c.buffer.ap)]]
                    for c in self._reference_configs(job.cfg)]
            if refs:
                report.efficiency = efficiency(report, max(refs, key=lambda r: r.ap_goodput_bps))
            row = {'axis': axis_key or '', 'value': job.axis_value, 'replicate': job.replicate}
            row.update(report.summary_row())
            rows.append(row)
        summary = self.view.summary_frame(rows)
        best = summary.groupby('replicate')['download_goodput_bps'].transform('max')
        summary['rel_sweep_max'] = np.where(best > 0, summary['download_goodput_bps'] / best.where(best > 0, 1), np.nan)
        self.view.write_csv(summary, out_dir, 'summary.csv')
        aggregate = self.sweep_summary(summary)
        self.view.write_csv(aggregate, out_dir, 'sweep_summary.csv')
        return summary

    @staticmethod
    def sweep_summary(summary: pd.DataFrame) -> pd.DataFrame:
        column = 'efficiency' if summary['efficiency'].notna().any() else 'rel_sweep_max'
        values = summary.assign(value=summary['value'].astype(str))
        values[column] = pd.to_numeric(values[column], errors='coerce')
        grouped = values.groupby('value', sort=False)[column]
        aggregate = grouped.agg(['mean', 'std', 'count']).reset_index()
        aggregate = aggregate.rename(columns={'mean': 'efficiency_mean', 'std': 'efficiency_std',
                                              'count': 'replicates'})
        aggregate['efficiency_std'] = aggregate['efficiency_std'].fillna(0.0)
        aggregate['non_convergent'] = ((aggregate['replicates'] >= NON_CONVERGENT_MIN_REPLICATES)
                                       & (aggregate['efficiency_std'] >= NON_CONVERGENT_STD))
        flagged = aggregate.loc[aggregate['non_convergent'], 'value'].tolist()
        if flagged:
            logger.warning(f"Non-convergent sweep points: {flagged}")
        return aggregate

    def analyze(self, model_cfg: ModelConfig, out_dir: Optional[str] = None, oracle_paths: int = 0,
                write_trajectory: bool = False) -> List[tuple]:
        ensure_valid(model_cfg)
        ens, mp = model_from_config(model_cfg)
        lambda_e, lambda_f, gamma_e = lambda_gamma(mp)
        stable, margin = is_stable(mp)
        try:
            q_star = fixed_point(mp)
            tight, loose = utilization_bounds(mp)
        except AnalysisError as e:
            logger.error(f"Closed form undefined: {str(e)}")
            q_star, tight, loose = float("nan"), float("nan"), float("nan")
        rows = [
            ('flows', ens.n), ('alpha_T', mp.alpha_t), ('A_T', mp.a_t), ('T_T', mp.t_t),
            ('beta_T', mp.beta_t), ('lambda_e', lambda_e), ('lambda_f', lambda_f), ('gamma_e', gamma_e),
            ('stable', stable), ('margin', margin), ('practical_rule', practical_rule(mp)),
            ('convergence_rate', convergence_rate(mp)), ('fixed_point', q_star),
            ('utilization_tight', tight), ('utilization_loose', loose),
        ]
        m = model_cfg.model
        if write_trajectory or oracle_paths:
            trajectory = recursion_trajectory(mp, m.q0, m.k_max)
            oracle_mean = None
            if oracle_paths:
                rng = np.random.default_rng(self.config_service.seed)
                result = epoch_oracle(ens, mp, m.q0, m.k_max, rng, paths=oracle_paths)
                oracle_mean = result.mean
                rows.append(('oracle_p_e', float(result.p_e.mean()) if m.k_max else float("nan")))
            self.view.write_csv(self.view.trajectory_frame(trajectory, oracle_mean),
                                out_dir or self.config_service.out_dir, 'trajectory.csv')
        return rows
