# Entropy-history-aware drafting control: a pattern history table over entropy buckets

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ahasdsim.control import logger
from ahasdsim.control.queues import DraftBatch, FeedbackRecord
from ahasdsim.utilities.utilities import saturating_decrement, saturating_increment

HISTORY_ENTRIES = 8
BUCKETS = 8
LLR_MAX = 7
PHT_ENTRIES = 512
COUNTER_MAX = 3
COUNTER_INIT = 2


@dataclass
class EdcState:
    h_max: float
    leht: List[int] = field(default_factory=lambda: [0] * HISTORY_ENTRIES)
    lceht: List[int] = field(default_factory=lambda: [0] * HISTORY_ENTRIES)
    llr: int = 0
    pht: np.ndarray = field(
        default_factory=lambda: np.full(PHT_ENTRIES, COUNTER_INIT, dtype=np.int8)
    )

    def __post_init__(self):
        if self.h_max <= 0:
            raise ValueError("h_max must be positive")

    def snapshot(self) -> dict:
        return {
            "leht": list(self.leht),
            "lceht": list(self.lceht),
            "llr": self.llr,
            "pht_continue": int((self.pht >= 2).sum()),
        }


def bucketize(avg_entropy: float, h_max: float) -> int:
    if h_max <= 0:
        raise ValueError("h_max must be positive")
    if avg_entropy < 0:
        raise ValueError("avg_entropy must be non-negative")
    return min(int(BUCKETS * avg_entropy / h_max), BUCKETS - 1)


def group_means(leht: List[int]) -> Tuple[int, int]:
    """Truncating means of the recent (0..3) and old (4..7) history groups"""
    half = HISTORY_ENTRIES // 2
    return sum(leht[:half]) // half, sum(leht[half:]) // half


def pht_index(leht: List[int], llr: int) -> int:
    g_recent, g_old = group_means(leht)
    return (g_old << 6) | (g_recent << 3) | llr


def predicts_continue(state: EdcState) -> bool:
    """Highest bit of the selected 2-bit counter"""
    return bool(state.pht[pht_index(state.leht, state.llr)] >= 2)


def should_continue_drafting(state: EdcState) -> bool:
    return state.llr == 0 or predicts_continue(state)


def on_draft(state: EdcState, batch: DraftBatch) -> None:
    batch.pht_index_snapshot = pht_index(state.leht, state.llr)
    batch.entropy_bucket = bucketize(batch.avg_entropy, state.h_max)
    state.leht = [batch.entropy_bucket] + state.leht[:-1]
    state.llr = saturating_increment(state.llr, LLR_MAX)


def on_dispatch(state: EdcState, waiting: int) -> None:
    """Batches handed to the verifier leave the leading length"""
    if waiting < 0:
        raise ValueError("waiting must be non-negative")
    state.llr = min(waiting, LLR_MAX)


def on_verify(
    state: EdcState, batch: DraftBatch, record: FeedbackRecord, waiting: Optional[int] = None
) -> None:
    """
    Trains the counter selected at draft time. A rejection restores the speculative history
    from the committed one.

    Parameters
    ----------
    state : EdcState
        predictor state, updated in place.
    batch : DraftBatch
        the batch whose outcome is known, registered earlier with on_draft.
    record : FeedbackRecord
        its outcome.
    waiting : int, optional
        batches still in the unverified queue once the outcome is applied. The leading length
        is set to it; without it the verified batch counts as the only one leaving the queue.
    """
    if batch.pht_index_snapshot is None:
        raise ValueError(f"batch {batch.batch_id} was never registered with on_draft")
    index = batch.pht_index_snapshot
    if record.fully_accepted:
        state.lceht = [batch.entropy_bucket] + state.lceht[:-1]
        state.pht[index] = saturating_increment(int(state.pht[index]), COUNTER_MAX)
        llr = saturating_decrement(state.llr) if waiting is None else waiting
    else:
        state.pht[index] = saturating_decrement(int(state.pht[index]))
        state.leht = list(state.lceht)
        llr = waiting or 0
        logger.debug(f"EDC rollback after batch {batch.batch_id}, llr={min(llr, LLR_MAX)}")
    state.llr = min(llr, LLR_MAX)
