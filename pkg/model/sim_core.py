import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, TextIO

import numpy as np
import simpy

from model.errors import SchedulingError

logger = logging.getLogger(__name__)

# Run boundaries sort after every ordinary event at the same instant, so
# run_until(t) dispatches everything scheduled at exactly t.
_BOUNDARY_PRIORITY = 2


class TraceKind(str, Enum):
    ENQUEUE = "enqueue"
    DROP = "drop"
    TX_START = "tx-start"
    TX_SUCCESS = "tx-success"
    COLLISION = "collision"
    LIMIT_UPDATE = "limit-update"
    CWND_UPDATE = "cwnd-update"


@dataclass(frozen=True)
class TraceRecord:
    time: float
    station: int
    kind: TraceKind
    value: float

    def as_row(self) -> List[str]:
        return [repr(self.time), str(self.station), self.kind.value, repr(float(self.value))]


class TraceSink:
    """Receives trace records in dispatch order. The base sink discards them."""

    def emit(self, record: TraceRecord) -> None:
        pass

    def close(self) -> None:
        pass


class MemoryTraceSink(TraceSink):
    def __init__(self):
        self.records: List[TraceRecord] = []

    def emit(self, record: TraceRecord) -> None:
        self.records.append(record)


class CsvTraceSink(TraceSink):
    HEADER = ["time", "station", "kind", "value"]

    def __init__(self, path: str):
        self.path = path
        self._handle: TextIO = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._handle, lineterminator="\n")
        self._writer.writerow(self.HEADER)

    def emit(self, record: TraceRecord) -> None:
        self._writer.writerow(record.as_row())

    def close(self) -> None:
        if not self._handle.closed:
            self._handle.close()
            logger.info(f"Trace written to {self.path}")


@dataclass
class EventHandle:
    time: float
    seq: int
    callback: Callable[..., Any]
    args: tuple = ()
    cancelled: bool = False
    fired: bool = False

    @property
    def pending(self) -> bool:
        return not (self.cancelled or self.fired)


@dataclass(frozen=True)
class SimulationSummary:
    clock: float
    scheduled: int
    dispatched: int
    cancelled: int
    pending: int


class _RunBoundary(simpy.Event):
    def __init__(self, env: simpy.Environment, delay: float):
        super().__init__(env)
        self._ok = True
        self._value = None
        env.schedule(self, _BOUNDARY_PRIORITY, delay)


@dataclass
class Simulator:
    """Single-threaded event kernel on top of a simpy environment.

    Ties at equal times dispatch in insertion order (simpy breaks heap ties
    with a monotonically increasing event id).
    """

    seed: int = 1
    trace_sink: TraceSink = field(default_factory=TraceSink)
    env: simpy.Environment = field(default_factory=simpy.Environment)

    def __post_init__(self):
        self._streams: Dict[int, np.random.Generator] = {}
        self._scheduled = 0
        self._dispatched = 0
        self._cancelled = 0

    @property
    def now(self) -> float:
        return self.env.now

    def schedule(self, callback: Callable[..., Any], at: float, *args) -> EventHandle:
        if at < self.env.now:
            logger.error(f"Refusing to schedule at {at} with clock at {self.env.now}")
            raise SchedulingError(f"cannot schedule at {at}: clock is already {self.env.now}")
        handle = EventHandle(time=at, seq=self._scheduled, callback=callback, args=args)
        self._scheduled += 1
        timeout = self.env.timeout(at - self.env.now)
        timeout.callbacks.append(lambda _event: self._dispatch(handle))
        return handle

    def cancel(self, handle: Optional[EventHandle]) -> bool:
        if handle is None or not handle.pending:
            return False
        handle.cancelled = True
        self._cancelled += 1
        return True

    def _dispatch(self, handle: EventHandle) -> None:
        if handle.cancelled:
            return
        handle.fired = True
        self._dispatched += 1
        handle.callback(*handle.args)

    def run_until(self, t_end: float) -> SimulationSummary:
        if t_end < self.env.now:
            raise SchedulingError(f"cannot run back to {t_end}: clock is already {self.env.now}")
        self.env.run(until=_RunBoundary(self.env, t_end - self.env.now))
        return self.summary()

    def summary(self) -> SimulationSummary:
        return SimulationSummary(
            clock=self.env.now,
            scheduled=self._scheduled,
            dispatched=self._dispatched,
            cancelled=self._cancelled,
            pending=self._scheduled - self._dispatched - self._cancelled,
        )

    def rng(self, stream_id: int) -> np.random.Generator:
        """Independent generator per (seed, stream_id)."""
        if stream_id not in self._streams:
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(stream_id,))
            self._streams[stream_id] = np.random.Generator(np.random.PCG64(seq))
        return self._streams[stream_id]

    def trace(self, station: int, kind: TraceKind, value: float) -> None:
        self.trace_sink.emit(TraceRecord(self.env.now, station, kind, value))
