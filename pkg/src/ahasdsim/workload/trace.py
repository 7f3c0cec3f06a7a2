from typing import IO, List

import pandas as pd

from ahasdsim.config import ExperimentConfig, WorkloadConfig
from ahasdsim.workload import TraceRecord, WorkloadSource, logger
from ahasdsim.workload.synthetic import SyntheticWorkload

TRACE_COLUMNS = ["step_index", "entropy", "accepted"]


class TraceFormatError(ValueError):
    def __init__(self, message: str, row: int = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


def _parse_row(row_number: int, step_index: str, entropy: str, accepted: str) -> TraceRecord:
    try:
        index_value = int(step_index)
    except ValueError:
        raise TraceFormatError(f"step_index '{step_index}' is not an integer", row_number) from None
    try:
        entropy_value = float(entropy)
    except ValueError:
        raise TraceFormatError(f"entropy '{entropy}' is not a number", row_number) from None
    if accepted not in ("0", "1"):
        raise TraceFormatError(f"accepted must be 0 or 1, got '{accepted}'", row_number)
    if entropy_value < 0:
        raise TraceFormatError(f"entropy must be non-negative, got {entropy_value}", row_number)
    return TraceRecord(step_index=index_value, entropy=entropy_value, accepted=accepted == "1")


def read_trace(stream: IO[str]) -> List[TraceRecord]:
    """Parses a step_index,entropy,accepted CSV. Rows are numbered from 1, header excluded."""
    try:
        table = pd.read_csv(stream, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise TraceFormatError("trace is empty, a header is required") from None
    except pd.errors.ParserError as e:
        raise TraceFormatError(f"malformed trace: {e}") from e
    if list(table.columns) != TRACE_COLUMNS:
        raise TraceFormatError(f"trace header must be {','.join(TRACE_COLUMNS)}")

    records = []
    for row_number, row in enumerate(table.itertuples(index=False), start=1):
        if any(value == "" for value in row):
            raise TraceFormatError("missing field", row_number)
        records.append(_parse_row(row_number, row.step_index, row.entropy, row.accepted))
    if not records:
        raise TraceFormatError("trace holds no records")
    return records


class TraceWorkload(WorkloadSource):
    """Replays captured entropies and acceptances; the look-ahead decay stays an independent coin"""

    def __init__(
        self,
        records: List[TraceRecord],
        config: WorkloadConfig,
        h_max: float,
        vocab_size: int,
        seed: int,
    ):
        super().__init__(config, h_max, vocab_size, seed)
        if not records:
            raise TraceFormatError("trace holds no records")
        self.records = records
        self._wrapped = False

    def __len__(self):
        return len(self.records)

    def _record(self, position: int) -> TraceRecord:
        if position >= len(self.records) and not self._wrapped:
            logger.warning(
                f"Trace of {len(self.records)} records is shorter than the run; "
                f"replaying it cyclically"
            )
            self._wrapped = True
        return self.records[position % len(self.records)]

    def entropy(self, position: int) -> float:
        return min(self._record(position).entropy, self.h_max)

    def acceptance_probability(self, position: int, lookahead_depth: int) -> float:
        if not self._record(position).accepted:
            return 0.0
        return self.config.lookahead_decay**lookahead_depth


def ingest_trace(
    stream: IO[str], config: WorkloadConfig, h_max: float, vocab_size: int, seed: int
) -> TraceWorkload:
    return TraceWorkload(read_trace(stream), config, h_max, vocab_size, seed)


def export_trace(source: WorkloadSource, length: int, stream: IO[str]) -> None:
    """Writes the first `length` positions of a workload at look-ahead depth 0"""
    rows = []
    for position in range(length):
        outcome = source.step(position, lookahead_depth=0)
        rows.append((position, repr(outcome.entropy), int(outcome.accepted)))
    pd.DataFrame(rows, columns=TRACE_COLUMNS).to_csv(stream, index=False)


def make_workload(config: ExperimentConfig) -> WorkloadSource:
    """The configured trace replay if a trace path is set, the synthetic process otherwise"""
    if config.workload.trace_path:
        logger.info(f"Replaying trace {config.workload.trace_path}")
        with open(config.workload.trace_path, "r") as f:
            return ingest_trace(
                f, config.workload, config.model.h_max, config.model.vocab_size, config.seed
            )
    return SyntheticWorkload(
        config.workload, config.model.h_max, config.model.vocab_size, config.seed
    )
