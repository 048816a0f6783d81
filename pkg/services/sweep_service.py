import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Sequence

from model.config import ScenarioConfig

logger = logging.getLogger(__name__)


@dataclass
class SweepJob:
    axis_value: Any
    replicate: int
    cfg: ScenarioConfig


class SweepService:
    """Fans independent runs out over worker processes; results keep job order."""

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be at least 1")
        self.workers = workers

    def run_all(self, jobs: Sequence[SweepJob], runner: Callable[[ScenarioConfig], Any]) -> List[Any]:
        if self.workers == 1 or len(jobs) <= 1:
            return [self._run_one(job, runner) for job in jobs]
        results: List[Any] = [None] * len(jobs)
        with ProcessPoolExecutor(max_workers=min(self.workers, len(jobs))) as pool:
            futures = [pool.submit(runner, job.cfg) for job in jobs]
            for i, (job, future) in enumerate(zip(jobs, futures)):
                try:
                    results[i] = future.result()
                except Exception as e:
                    logger.error(f"Sweep run failed at {job.axis_value!r} (seed {job.cfg.scenario.seed}): {str(e)}")
                    raise
                logger.info(f"Sweep progress {i + 1}/{len(jobs)}")
        return results

    @staticmethod
    def _run_one(job: SweepJob, runner: Callable[[ScenarioConfig], Any]) -> Any:
        try:
            return runner(job.cfg)
        except Exception as e:
            logger.error(f"Sweep run failed at {job.axis_value!r} (seed {job.cfg.scenario.seed}): {str(e)}")
            raise
