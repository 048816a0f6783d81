import logging
import os
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from model.metrics import MetricsReport

logger = logging.getLogger(__name__)


class ReportView:
    @staticmethod
    def write_csv(df: pd.DataFrame, out_dir: str, name: str) -> str:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, name)
        df.to_csv(path, index=False, encoding='utf-8', lineterminator='\n')
        logger.info(f"Wrote {len(df)} rows to {path}")
        return path

    @staticmethod
    def summary_frame(rows: Iterable[Dict[str, object]]) -> pd.DataFrame:
        return pd.DataFrame(list(rows))

    @staticmethod
    def flows_frame(report: MetricsReport) -> pd.DataFrame:
        df = pd.DataFrame([vars(f) for f in report.flows],
                          columns=['flow', 'direction', 'goodput_bps', 'max_srtt_s', 'drops', 'rtos'])
        df.insert(0, 'seed', report.seed)
        df.insert(0, 'config_hash', report.config_hash)
        return df

    @staticmethod
    def limits_frame(report: MetricsReport) -> pd.DataFrame:
        return pd.DataFrame([vars(s) for s in report.limit_samples],
                            columns=['time', 'node', 'limit', 'occupancy'])

    @staticmethod
    def udp_frame(report: MetricsReport) -> pd.DataFrame:
        return pd.DataFrame([vars(u) for u in report.udp])

    @staticmethod
    def short_flow_frame(stats: Dict[str, float], counts: Dict[str, int]) -> pd.DataFrame:
        return pd.DataFrame({'size': list(stats), 'mean_completion_s': list(stats.values()),
                             'count': [counts[label] for label in stats]})

    @staticmethod
    def histogram_frame(counts: np.ndarray, edges: np.ndarray) -> pd.DataFrame:
        return pd.DataFrame({'bin_start': edges[:-1], 'bin_end': edges[1:], 'count': counts})

    @staticmethod
    def trajectory_frame(trajectory: np.ndarray, oracle_mean: Optional[np.ndarray] = None) -> pd.DataFrame:
        df = pd.DataFrame({'k': np.arange(len(trajectory)), 'EQ': trajectory})
        if oracle_mean is not None:
            df['oracle_mean'] = oracle_mean
        return df

    @staticmethod
    def print_report(report: MetricsReport) -> None:
        print(f"config {report.config_hash}  seed {report.seed}  measured {report.measured_time:.1f}s")
        print(f"  download goodput {report.ap_goodput_bps / 1e6:8.3f} Mbps")
        print(f"  upload goodput   {report.upload_goodput_bps / 1e6:8.3f} Mbps")
        if report.efficiency is not None:
            print(f"  efficiency       {report.efficiency:8.3f}")
        print(f"  max sRTT         {report.max_srtt() * 1e3:8.1f} ms")
        print(f"  mean AP limit    {report.mean_limit:8.1f} packets "
              f"(mean occupancy {report.mean_occupancy:.1f}, max {report.max_occupancy})")
        print(f"  drops {report.drops}  RTOs {report.rtos}  collisions {report.collisions}")

    @staticmethod
    def print_table(df: pd.DataFrame) -> None:
        print(df.to_string(index=False, float_format=lambda v: f"{v:.4g}"))

    @staticmethod
    def print_analysis(rows: List[tuple]) -> None:
        width = max(len(name) for name, _ in rows)
        for name, value in rows:
            text = f"{value:.6g}" if isinstance(value, float) else str(value)
            print(f"{name.ljust(width)}  {text}")
