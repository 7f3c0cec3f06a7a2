# Time-aware pre-verification control: bilateral cycle prediction in the PIM clock domain

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Deque, Optional

from ahasdsim.utilities.utilities import from_fixed_point, to_fixed_point

TABLE_SIZE = 4


class TableRole(str, Enum):
    NVCT = "nvct"
    PDCT = "pdct"
    PVCT = "pvct"


@dataclass
class CycleHistoryTable:
    role: TableRole
    entries: Deque[int] = field(default_factory=lambda: deque(maxlen=TABLE_SIZE))

    def mean_ratio(self) -> Fraction:
        if not self.entries:
            return Fraction(0)
        return from_fixed_point(sum(self.entries)) / len(self.entries)

    def ratios(self):
        return [from_fixed_point(entry) for entry in self.entries]


@dataclass
class TvcState:
    freq_ratio: Fraction
    nvct: CycleHistoryTable = field(default_factory=lambda: CycleHistoryTable(TableRole.NVCT))
    pdct: CycleHistoryTable = field(default_factory=lambda: CycleHistoryTable(TableRole.PDCT))
    pvct: CycleHistoryTable = field(default_factory=lambda: CycleHistoryTable(TableRole.PVCT))
    ncr: Fraction = Fraction(0)

    def __post_init__(self):
        if self.freq_ratio <= 0:
            raise ValueError("freq_ratio must be positive")

    @property
    def warm(self) -> bool:
        return all(len(t.entries) == TABLE_SIZE for t in (self.nvct, self.pdct, self.pvct))

    def snapshot(self) -> dict:
        return {
            "ncr": float(self.ncr),
            **{
                t.role.value: [float(r) for r in t.ratios()]
                for t in (self.nvct, self.pdct, self.pvct)
            },
        }


def _check_length(length: int, name: str) -> None:
    if length < 1:
        raise ValueError(f"{name} must be at least 1")


def predict_npu_cycles(state: TvcState, kv_len: int) -> Fraction:
    _check_length(kv_len, "kv_len")
    return state.nvct.mean_ratio() * kv_len


def predict_pim_draft_cycles(state: TvcState, draft_len: int) -> Fraction:
    _check_length(draft_len, "draft_len")
    return state.pdct.mean_ratio() * draft_len


def predict_pim_verify_cycles(state: TvcState, draft_len: int) -> Fraction:
    _check_length(draft_len, "draft_len")
    return state.pvct.mean_ratio() * draft_len


def remaining_cycles(state: TvcState, c_npu_pred, next_draft_len: int) -> Fraction:
    """Cycles left for pre-verification once the NPU's elapsed time and the next draft are paid"""
    return Fraction(c_npu_pred) - (state.ncr + predict_pim_draft_cycles(state, next_draft_len))


def preverify_decision(
    state: TvcState, kv_len: int, next_draft_len: int, max_len: Optional[int] = None
) -> Optional[int]:
    """
    Length of the pre-verification that fits in the remaining NPU window, or None.
    Parameters
    ----------
    state : TvcState
        tables and the current NPU execution register.
    kv_len : int
        KV length of the verification currently running on the NPU.
    next_draft_len : int
        expected length of the draft that must still fit after the pre-verification.
    max_len : int, optional
        cap, typically the token count of the oldest unverified batch.
    Returns
    -------
    length : int or None
        None when fewer than one token fits.
    """
    ratio = state.pvct.mean_ratio()
    if ratio <= 0:
        return None
    left = remaining_cycles(state, predict_npu_cycles(state, kv_len), next_draft_len)
    if left <= 0:
        return None
    length = math.floor(left / ratio)
    if max_len is not None:
        length = min(length, max_len)
    return length if length >= 1 else None


def record_observation(table: CycleHistoryTable, observed_cycles, length: int) -> None:
    if length < 1:
        raise ValueError("length must be at least 1")
    if observed_cycles < 0:
        raise ValueError("observed_cycles must be non-negative")
    table.entries.append(to_fixed_point(Fraction(observed_cycles) / length))


def record_npu_observation(state: TvcState, observed_npu_cycles, kv_len: int) -> None:
    """NPU cycles enter the table converted to the PIM clock"""
    record_observation(state.nvct, Fraction(observed_npu_cycles) * state.freq_ratio, kv_len)


def update_ncr(state: TvcState, elapsed_pim_cycles) -> None:
    state.ncr = Fraction(max(elapsed_pim_cycles, 0))
