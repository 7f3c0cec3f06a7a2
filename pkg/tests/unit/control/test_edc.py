import numpy as np
import pytest

from ahasdsim.control.edc import (
    COUNTER_INIT,
    LLR_MAX,
    PHT_ENTRIES,
    EdcState,
    bucketize,
    group_means,
    on_dispatch,
    on_draft,
    on_verify,
    pht_index,
    predicts_continue,
    should_continue_drafting,
)
from ahasdsim.control.queues import DraftBatch, FeedbackRecord

H_MAX = 4.0


@pytest.fixture
def state():
    return EdcState(h_max=H_MAX)


def batch(batch_id, entropy, length=2):
    return DraftBatch(batch_id, list(range(length)), [entropy] * length)


def accept(b):
    return FeedbackRecord(b.batch_id, len(b), True)


def reject(b):
    return FeedbackRecord(b.batch_id, 0, False, correction_token=-1)


def test_bucketize():
    assert bucketize(0.0, H_MAX) == 0
    assert bucketize(0.49, H_MAX) == 0
    assert bucketize(1.0, H_MAX) == 2
    assert bucketize(H_MAX, H_MAX) == 7
    assert bucketize(10 * H_MAX, H_MAX) == 7
    with pytest.raises(ValueError):
        bucketize(-0.1, H_MAX)
    with pytest.raises(ValueError):
        bucketize(1.0, 0.0)


def test_pht_index_layout():
    assert group_means([1, 2, 3, 4, 7, 7, 7, 6]) == (2, 6)
    assert pht_index([0] * 8, 0) == 0
    assert pht_index([7] * 8, LLR_MAX) == PHT_ENTRIES - 1
    assert pht_index([7, 7, 7, 7, 0, 0, 0, 0], 1) == (7 << 3) | 1


def test_fresh_state(state):
    assert state.llr == 0
    assert (state.pht == COUNTER_INIT).all()
    assert should_continue_drafting(state)
    with pytest.raises(ValueError):
        EdcState(h_max=0.0)


def test_draft_updates_history(state):
    b = batch(1, 1.0)
    on_draft(state, b)

    assert b.pht_index_snapshot == 0
    assert b.entropy_bucket == 2
    assert state.leht == [2, 0, 0, 0, 0, 0, 0, 0]
    assert state.llr == 1


def test_leading_length_saturates(state):
    for i in range(LLR_MAX + 3):
        on_draft(state, batch(i + 1, 0.5))
    assert state.llr == LLR_MAX


def test_prediction_reads_the_counter_msb(state):
    on_draft(state, batch(1, 1.0))
    index = pht_index(state.leht, state.llr)

    state.pht[index] = 2
    assert should_continue_drafting(state)
    state.pht[index] = 1
    assert not should_continue_drafting(state)


def test_acceptance_trains_towards_continue(state):
    b = batch(1, 1.0)
    on_draft(state, b)
    on_verify(state, b, accept(b))

    assert state.llr == 0
    assert state.lceht[0] == 2
    assert state.pht[0] == COUNTER_INIT + 1


def test_rejection_restores_committed_history(state):
    first, second, third = batch(1, 1.0), batch(2, 3.9), batch(3, 3.9)
    for b in (first, second, third):
        on_draft(state, b)
    on_verify(state, first, accept(first))
    on_verify(state, second, reject(second), waiting=0)

    assert state.pht[second.pht_index_snapshot] == COUNTER_INIT - 1
    assert state.leht == state.lceht == [2, 0, 0, 0, 0, 0, 0, 0]
    assert state.llr == 0


def test_rollback_keeps_surviving_batches(state):
    b = batch(1, 1.0)
    on_draft(state, b)
    on_verify(state, b, reject(b), waiting=3)
    assert state.llr == 3

    b = batch(2, 1.0)
    on_draft(state, b)
    on_verify(state, b, reject(b), waiting=20)
    assert state.llr == LLR_MAX


def test_verify_requires_registration(state):
    b = batch(1, 1.0)
    with pytest.raises(ValueError):
        on_verify(state, b, accept(b))


def test_learns_to_stop_after_repeated_second_batch_failures(state):
    for round_ in range(12):
        first, second = batch(2 * round_ + 1, 3.9), batch(2 * round_ + 2, 3.9)
        on_draft(state, first)
        on_draft(state, second)
        on_verify(state, first, accept(first))
        on_verify(state, second, reject(second), waiting=0)

    on_draft(state, batch(100, 3.9))
    assert not should_continue_drafting(state)
    assert state.pht[pht_index([7] * 8, 0)] == 3


def test_snapshot(state):
    on_draft(state, batch(1, 1.0))
    snapshot = state.snapshot()
    assert snapshot["llr"] == 1
    assert snapshot["leht"][0] == 2
    assert snapshot["pht_continue"] == PHT_ENTRIES


def test_dispatch_sets_the_leading_length(state):
    for i in range(3):
        on_draft(state, batch(i + 1, 1.0))
    on_dispatch(state, 2)
    assert state.llr == 2
    on_dispatch(state, 40)
    assert state.llr == LLR_MAX
    with pytest.raises(ValueError):
        on_dispatch(state, -1)


def test_acceptance_sets_the_waiting_count(state):
    first, second = batch(1, 1.0), batch(2, 1.0)
    on_draft(state, first)
    on_draft(state, second)
    on_verify(state, first, accept(first), waiting=1)
    assert state.llr == 1


PATTERN = [1, 3, 5, 2, 4, 0]


def accepted_by_pattern(index):
    g_recent, llr = (index >> 3) & 7, index & 7
    return g_recent + llr <= 4


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_table_converges_on_a_deterministic_workload(state, seed):
    rng = np.random.default_rng(seed)
    waiting = []
    drafts, agree, stops, consulted = 0, 0, 0, 0
    while drafts < 1000:
        index = pht_index(state.leht, state.llr)
        go_on = predicts_continue(state)
        if drafts >= 500:
            consulted += 1
            stops += not accepted_by_pattern(index)
            agree += go_on == accepted_by_pattern(index)
        if waiting and (len(waiting) == LLR_MAX or not go_on or rng.random() < 0.3):
            head = waiting.pop(0)
            if accepted_by_pattern(head.pht_index_snapshot):
                on_verify(state, head, accept(head), waiting=len(waiting))
            else:
                waiting.clear()
                on_verify(state, head, reject(head), waiting=0)
            continue
        bucket = PATTERN[drafts % len(PATTERN)]
        b = batch(drafts + 1, bucket * H_MAX / 8 + 0.25)
        on_draft(state, b)
        assert b.entropy_bucket == bucket
        waiting.append(b)
        drafts += 1

    assert stops / consulted > 0.1
    assert agree / consulted > 0.9


def test_state_stays_in_range_under_random_traffic(state):
    rng = np.random.default_rng(7)
    waiting = []
    for step in range(5000):
        if waiting and rng.random() < 0.4:
            head = waiting.pop(0)
            if rng.random() < 0.6:
                on_verify(state, head, accept(head), waiting=len(waiting))
            else:
                if rng.random() < 0.5:
                    waiting.clear()
                on_verify(state, head, reject(head), waiting=len(waiting))
        elif waiting and rng.random() < 0.1:
            on_dispatch(state, int(rng.integers(0, len(waiting) + 1)))
        else:
            b = batch(step + 1, float(rng.uniform(0.0, 2 * H_MAX)))
            on_draft(state, b)
            waiting.append(b)
        assert 0 <= state.pht.min() and state.pht.max() <= 3
        assert 0 <= state.llr <= LLR_MAX
        assert all(0 <= entry <= 7 for entry in state.leht + state.lceht)
        assert len(state.leht) == len(state.lceht) == 8
