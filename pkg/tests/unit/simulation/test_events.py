import io
import json

import pytest

from ahasdsim.simulation.events import EventKind, EventQueue, EventTrace


@pytest.fixture
def queue():
    return EventQueue()


def test_events_pop_in_time_order(queue):
    queue.push(30, EventKind.SCHEDULER_TICK)
    queue.push(10, EventKind.DRAFT_DONE, job=1)
    queue.push(20, EventKind.VERIFY_DONE)

    assert [queue.pop().time_ps for _ in range(3)] == [10, 20, 30]
    assert queue.now == 30
    assert len(queue) == 0


def test_simultaneous_events_follow_kind_then_insertion(queue):
    queue.push(5, EventKind.SCHEDULER_TICK)
    queue.push(5, EventKind.DRAFT_DONE, job=2)
    queue.push(5, EventKind.DRAFT_DONE, job=1)
    queue.push(5, EventKind.VERIFY_DONE)

    popped = [queue.pop() for _ in range(4)]
    assert [e.kind for e in popped] == [
        EventKind.VERIFY_DONE,
        EventKind.DRAFT_DONE,
        EventKind.DRAFT_DONE,
        EventKind.SCHEDULER_TICK,
    ]
    assert [e.payload.get("job") for e in popped[1:3]] == [2, 1]


def test_no_events_in_the_past(queue):
    queue.push(100, EventKind.SCHEDULER_TICK)
    queue.pop()
    with pytest.raises(ValueError):
        queue.push(99, EventKind.SCHEDULER_TICK)
    queue.push(100, EventKind.SCHEDULER_TICK)


def test_pop_from_empty_queue(queue):
    with pytest.raises(IndexError):
        queue.pop()


def test_trace_writes_json_lines():
    stream = io.StringIO()
    trace = EventTrace(stream)
    trace.write("draft_start", 12, batch_id=3, length=4)
    trace.write("abort", 20, elapsed_ps=8)

    records = [json.loads(line) for line in stream.getvalue().splitlines()]
    assert records[0] == {"type": "draft_start", "time_ps": 12, "batch_id": 3, "length": 4}
    assert records[1]["elapsed_ps"] == 8


def test_disabled_trace_is_silent():
    trace = EventTrace()
    assert not trace.enabled
    trace.write("event", 0, kind="tick")
