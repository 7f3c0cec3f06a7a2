# Discrete-event primitives: the time-ordered event heap and the JSON-lines event trace

import heapq
import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import IO, List, Optional, Tuple


class EventKind(IntEnum):
    """Simultaneous events are processed in this order"""

    VERIFY_DONE = 0
    PREVERIFY_DONE = 1
    SWITCH_DONE = 2
    DRAFT_DONE = 3
    QUEUE_DELIVERY = 4
    SCHEDULER_TICK = 5


@dataclass(frozen=True)
class SimEvent:
    time_ps: int
    kind: EventKind
    seq: int
    payload: dict = field(default_factory=dict, compare=False)


class EventQueue:
    """Min-heap keyed by (time, kind, insertion order)"""

    def __init__(self):
        self._heap: List[Tuple[int, int, int, SimEvent]] = []
        self._seq = 0
        self.now = 0

    def __len__(self):
        return len(self._heap)

    def push(self, time_ps: int, kind: EventKind, **payload) -> SimEvent:
        if time_ps < self.now:
            raise ValueError(f"event at {time_ps} ps scheduled in the past (now {self.now} ps)")
        event = SimEvent(int(time_ps), EventKind(kind), self._seq, payload)
        self._seq += 1
        heapq.heappush(self._heap, (event.time_ps, int(event.kind), event.seq, event))
        return event

    def pop(self) -> SimEvent:
        if not self._heap:
            raise IndexError("pop from an empty event queue")
        event = heapq.heappop(self._heap)[-1]
        self.now = event.time_ps
        return event


class EventTrace:
    """Writes one JSON object per line; a no-op without a stream"""

    def __init__(self, stream: Optional[IO[str]] = None):
        self.stream = stream

    @property
    def enabled(self) -> bool:
        return self.stream is not None

    def write(self, record_type: str, time_ps: int, **fields) -> None:
        if self.stream is None:
            return
        record = {"type": record_type, "time_ps": int(time_ps), **fields}
        self.stream.write(json.dumps(record, sort_keys=True) + "\n")
