from collections import OrderedDict, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, List, Optional

import numpy as np

from ahasdsim.control import logger


class QueueError(ValueError):
    pass


class BatchStatus(str, Enum):
    UNVERIFIED = "unverified"
    PREVERIFIED_ACCEPTED = "preverified_accepted"
    COMMITTED = "committed"
    REJECTED = "rejected"
    PURGED = "purged"


@dataclass(eq=False)
class DraftBatch:
    batch_id: int
    tokens: List[int]
    entropies: List[float]
    entropy_bucket: int = 0
    lookahead_depth_at_creation: int = 0
    pht_index_snapshot: Optional[int] = None
    base_kv_len: int = 0
    status: BatchStatus = BatchStatus.UNVERIFIED
    preverified_len: int = 0
    delivered: bool = True
    resolution: Optional["FeedbackRecord"] = None
    arm: Optional[int] = None
    drafted_len: int = 0

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a draft batch holds at least one token")
        if len(self.tokens) != len(self.entropies):
            raise ValueError("tokens and entropies must have the same length")
        if not self.drafted_len:
            self.drafted_len = len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    @property
    def avg_entropy(self) -> float:
        return float(np.mean(self.entropies))

    @property
    def resolved(self) -> bool:
        return self.status is BatchStatus.PREVERIFIED_ACCEPTED or self.resolution is not None

    @property
    def end_position(self) -> int:
        """Sequence length once this batch's known outcome is committed"""
        if self.resolution is not None:
            return self.base_kv_len + self.resolution.accepted_prefix_len + 1
        return self.base_kv_len + len(self.tokens)


@dataclass(frozen=True)
class FeedbackRecord:
    batch_id: int
    accepted_prefix_len: int
    fully_accepted: bool
    correction_token: Optional[int] = None

    def __post_init__(self):
        if self.accepted_prefix_len < 0:
            raise ValueError("accepted_prefix_len must be non-negative")
        if not self.fully_accepted and self.correction_token is None:
            raise ValueError("a rejection carries a correction token")


@dataclass(frozen=True)
class RollbackInfo:
    purged_batches: int = 0
    purged_tokens: int = 0
    purged_ids: tuple = ()
    committed_tokens: int = 0


@dataclass
class QueueSet:
    unverified: Deque[DraftBatch] = field(default_factory=deque)
    preverify: Deque[int] = field(default_factory=deque)
    in_verification: Dict[int, DraftBatch] = field(default_factory=OrderedDict)
    committed: List[int] = field(default_factory=list)
    last_batch_id: int = 0
    drafted_tokens: int = 0
    accepted_tokens: int = 0
    rejected_tokens: int = 0
    purged_tokens: int = 0
    correction_tokens: int = 0


def _find(qs: QueueSet, batch_id: int) -> Optional[DraftBatch]:
    if batch_id in qs.in_verification:
        return qs.in_verification[batch_id]
    for batch in qs.unverified:
        if batch.batch_id == batch_id:
            return batch
    return None


def find_batch(qs: QueueSet, batch_id: int) -> DraftBatch:
    batch = _find(qs, batch_id)
    if batch is None:
        raise QueueError(f"unknown batch id {batch_id}")
    return batch


def is_outstanding(qs: QueueSet, batch_id: int) -> bool:
    return _find(qs, batch_id) is not None


def head_batch(qs: QueueSet) -> Optional[DraftBatch]:
    """Oldest outstanding batch, whether waiting or under verification"""
    candidates = []
    if qs.in_verification:
        candidates.append(next(iter(qs.in_verification.values())))
    if qs.unverified:
        candidates.append(qs.unverified[0])
    return min(candidates, key=lambda b: b.batch_id) if candidates else None


def _remove(qs: QueueSet, batch: DraftBatch) -> None:
    if batch.batch_id in qs.in_verification:
        del qs.in_verification[batch.batch_id]
    else:
        qs.unverified.remove(batch)
    unmark_preverify(qs, batch.batch_id)


def _commit(qs: QueueSet, batch: DraftBatch, tokens: List[int]) -> None:
    if batch.base_kv_len != len(qs.committed):
        raise QueueError(
            f"batch {batch.batch_id} starts at {batch.base_kv_len} but {len(qs.committed)} "
            f"tokens are committed"
        )
    qs.committed.extend(tokens)
    batch.base_kv_len += len(tokens)


def push_draft(qs: QueueSet, batch: DraftBatch) -> None:
    if batch.batch_id <= qs.last_batch_id:
        raise QueueError(
            f"batch id {batch.batch_id} is not above the last pushed id {qs.last_batch_id}"
        )
    batch.status = BatchStatus.UNVERIFIED
    qs.unverified.append(batch)
    qs.last_batch_id = batch.batch_id
    qs.drafted_tokens += len(batch.tokens)
    logger.debug(f"push batch {batch.batch_id} ({len(batch.tokens)} tokens)")


def flush_resolved(qs: QueueSet) -> List[DraftBatch]:
    """Commits, in order, every resolved batch that has reached the commit head"""
    flushed = []
    while True:
        head = head_batch(qs)
        if head is None or head.base_kv_len != len(qs.committed):
            return flushed
        if not head.resolved:
            if head.preverified_len and head.batch_id not in qs.in_verification:
                commit_preverified_prefix(qs, head)
            return flushed
        if head.resolution is not None:
            _commit_rejection(qs, head, head.resolution)
        else:
            qs.accepted_tokens += len(head.tokens)
            _commit(qs, head, head.tokens)
            head.status = BatchStatus.COMMITTED
        _remove(qs, head)
        flushed.append(head)


def pop_for_verify(qs: QueueSet, max_batches: int) -> List[DraftBatch]:
    """Hands the oldest delivered, unresolved batches to the verifier"""
    if max_batches < 1:
        raise ValueError("max_batches must be at least 1")
    flush_resolved(qs)
    popped = []
    for batch in list(qs.unverified):
        if len(popped) == max_batches:
            break
        if batch.resolved:
            continue
        if not batch.delivered:
            break
        qs.unverified.remove(batch)
        unmark_preverify(qs, batch.batch_id)
        qs.in_verification[batch.batch_id] = batch
        popped.append(batch)
    if popped:
        logger.debug(f"pop for verify {[b.batch_id for b in popped]}")
    return popped


def _purge_younger(qs: QueueSet, batch_id: int) -> RollbackInfo:
    victims = [b for b in qs.unverified if b.batch_id > batch_id]
    victims += [b for b in qs.in_verification.values() if b.batch_id > batch_id]
    for victim in victims:
        _remove(qs, victim)
        victim.status = BatchStatus.PURGED
    tokens = sum(len(v.tokens) for v in victims)
    qs.purged_tokens += tokens
    return RollbackInfo(
        purged_batches=len(victims),
        purged_tokens=tokens,
        purged_ids=tuple(sorted(v.batch_id for v in victims)),
    )


def _commit_rejection(qs: QueueSet, batch: DraftBatch, record: FeedbackRecord) -> int:
    prefix = batch.tokens[: record.accepted_prefix_len]
    _commit(qs, batch, prefix + [record.correction_token])
    qs.accepted_tokens += len(prefix)
    qs.rejected_tokens += len(batch.tokens) - len(prefix)
    qs.correction_tokens += 1
    batch.status = BatchStatus.REJECTED
    return len(prefix) + 1


def apply_feedback(qs: QueueSet, record: FeedbackRecord) -> RollbackInfo:
    """
    Confirms or rolls back a verified batch. A rejection purges every younger batch at once.
    A batch that is not yet at the commit head (pre-verified while an older batch is still
    under verification) keeps its outcome until flush_resolved reaches it.
    """
    batch = _find(qs, record.batch_id)
    if batch is None or batch.resolved:
        raise QueueError(f"unknown batch id {record.batch_id}")
    if record.accepted_prefix_len > len(batch.tokens):
        raise QueueError(
            f"accepted prefix {record.accepted_prefix_len} exceeds batch of {len(batch.tokens)}"
        )
    if record.fully_accepted != (record.accepted_prefix_len == len(batch.tokens)):
        raise QueueError("fully_accepted must match a prefix covering the whole batch")
    at_head = batch.base_kv_len == len(qs.committed) and head_batch(qs) is batch

    if record.fully_accepted:
        if at_head:
            before = len(qs.committed)
            qs.accepted_tokens += len(batch.tokens)
            _commit(qs, batch, batch.tokens)
            batch.status = BatchStatus.COMMITTED
            _remove(qs, batch)
            flush_resolved(qs)
            return RollbackInfo(committed_tokens=len(qs.committed) - before)
        if batch.batch_id in qs.in_verification:
            raise QueueError(f"batch {batch.batch_id} verified out of order")
        batch.status = BatchStatus.PREVERIFIED_ACCEPTED
        return RollbackInfo()

    info = _purge_younger(qs, batch.batch_id)
    committed = 0
    if at_head:
        committed = _commit_rejection(qs, batch, record)
        _remove(qs, batch)
    else:
        if batch.batch_id in qs.in_verification:
            raise QueueError(f"batch {batch.batch_id} verified out of order")
        batch.resolution = record
        batch.status = BatchStatus.REJECTED
        unmark_preverify(qs, batch.batch_id)
    logger.debug(f"reject batch {batch.batch_id}, purged {list(info.purged_ids)}")
    return RollbackInfo(info.purged_batches, info.purged_tokens, info.purged_ids, committed)


def apply_partial_preverify(qs: QueueSet, batch_id: int, accepted_len: int) -> int:
    """
    Records that the first `accepted_len` tokens of an unverified batch passed pre-verification
    without a rejection. At the commit head they are committed and the batch shrinks; returns
    the number of tokens committed.
    """
    batch = find_batch(qs, batch_id)
    if batch_id in qs.in_verification:
        raise QueueError(f"batch {batch_id} is already under verification")
    if not 1 <= accepted_len < len(batch.tokens):
        raise QueueError(
            f"partial pre-verification of {accepted_len} tokens on a batch of {len(batch.tokens)}"
        )
    batch.preverified_len = max(batch.preverified_len, accepted_len)
    unmark_preverify(qs, batch_id)
    if head_batch(qs) is not batch or batch.base_kv_len != len(qs.committed):
        return 0
    return commit_preverified_prefix(qs, batch)


def commit_preverified_prefix(qs: QueueSet, batch: DraftBatch) -> int:
    n = batch.preverified_len
    if n == 0:
        return 0
    _commit(qs, batch, batch.tokens[:n])
    qs.accepted_tokens += n
    batch.tokens = batch.tokens[n:]
    batch.entropies = batch.entropies[n:]
    batch.preverified_len = 0
    return n


def mark_preverify(qs: QueueSet, batch_id: int) -> None:
    batch = _find(qs, batch_id)
    if batch is None or batch.batch_id in qs.in_verification or batch.resolved:
        raise QueueError(f"batch {batch_id} is not unverified")
    if batch_id not in qs.preverify:
        qs.preverify.append(batch_id)


def unmark_preverify(qs: QueueSet, batch_id: int) -> None:
    if batch_id in qs.preverify:
        qs.preverify.remove(batch_id)


def outstanding_batches(qs: QueueSet) -> int:
    """Batches drafted but not yet resolved by any verification"""
    return len(qs.in_verification) + waiting_batches(qs)


def waiting_batches(qs: QueueSet) -> int:
    """Unresolved batches still in the unverified queue, not yet handed to the verifier"""
    return sum(1 for b in qs.unverified if not b.resolved)


def commit_target_token(qs: QueueSet, token: int) -> None:
    """Commits a token the verifier produced itself; only possible with no batch outstanding"""
    if qs.unverified or qs.in_verification:
        raise QueueError("a target token can only be committed while no batch is outstanding")
    qs.committed.append(token)


def speculative_length(qs: QueueSet) -> int:
    """Sequence position where the next draft batch starts"""
    tail = max(
        [b for b in qs.unverified] + list(qs.in_verification.values()),
        key=lambda b: b.batch_id,
        default=None,
    )
    return tail.end_position if tail is not None else len(qs.committed)


def oldest_unverified(qs: QueueSet) -> Optional[DraftBatch]:
    """Oldest delivered batch still waiting in the unverified queue without an outcome"""
    for batch in qs.unverified:
        if batch.resolved:
            continue
        return batch if batch.delivered else None
    return None
