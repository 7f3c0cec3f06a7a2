# Per-run counters, the finalized report and its table/JSON forms

import io
import json
import logging
from dataclasses import dataclass, field, fields
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from ahasdsim.config import ExperimentConfig
from ahasdsim.utilities.utilities import PS_PER_SECOND, coefficient_of_variation

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"

PJ_PER_JOULE = 1e12
MW_PER_PJ_PER_SEC = 1e-9


@dataclass
class RawCounters:
    """Additive simulation counters. Times are in picoseconds."""

    committed_tokens: int = 0
    wall_time_ps: int = 0
    drafted_tokens: int = 0
    accepted_draft_tokens: int = 0
    rejected_draft_tokens: int = 0
    purged_tokens: int = 0
    correction_tokens: int = 0
    draft_batches: int = 0
    draft_len_sum: int = 0
    lookahead_depth_sum: int = 0
    npu_busy_ps: int = 0
    npu_starved_ps: int = 0
    pim_busy_ps: int = 0
    pim_wasted_ps: int = 0
    preverify_count: int = 0
    preverify_tokens: int = 0
    sync_overhead_ps: int = 0
    compute_energy_pj: float = 0.0
    memory_energy_pj: float = 0.0
    events: int = 0
    depth_trials: Dict[int, int] = field(default_factory=dict)
    depth_accepts: Dict[int, int] = field(default_factory=dict)
    pim_shares: List[float] = field(default_factory=list)

    def tally_depth(self, depth: int, accepted: bool) -> None:
        self.depth_trials[depth] = self.depth_trials.get(depth, 0) + 1
        if accepted:
            self.depth_accepts[depth] = self.depth_accepts.get(depth, 0) + 1

    def merge(self, other: "RawCounters") -> "RawCounters":
        merged = RawCounters()
        for f in fields(self):
            mine, theirs = getattr(self, f.name), getattr(other, f.name)
            if isinstance(mine, dict):
                value = dict(mine)
                for key, count in theirs.items():
                    value[key] = value.get(key, 0) + count
            else:
                value = mine + theirs
            setattr(merged, f.name, value)
        return merged


class MetricsReport(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: str = SCHEMA_VERSION
    label: str
    variant: str
    seed: int
    committed_tokens: int
    wall_time_sec: float
    throughput_tokens_per_sec: float
    drafted_tokens: int
    accepted_draft_tokens: int
    rejected_draft_tokens: int
    purged_tokens: int
    correction_tokens: int
    acceptance_rate: float
    mean_draft_len: float
    mean_lookahead_depth: float
    acceptance_by_depth: Dict[str, float]
    npu_busy_frac: float
    npu_idle_frac: float
    npu_starved_frac: float
    pim_busy_frac: float
    pim_idle_frac: float
    pim_wasted_frac: float
    preverify_count: int
    preverify_tokens: int
    sync_overhead_sec: float
    pim_share_cv: float
    energy_pj_total: float
    energy_pj_per_token: float
    tokens_per_joule: float
    memory_energy_pj: float
    npu_energy_pj: float
    memory_power_mw: float
    npu_power_mw: float
    events: int
    overrides: List[str] = []
    note: str = ""


STRUCTURED_FIELDS = ("acceptance_by_depth", "overrides")


def _fraction(part: int, whole: int) -> float:
    return part / whole if whole > 0 else 0.0


def _power_mw(energy_pj: float, wall_sec: float) -> float:
    return energy_pj / wall_sec * MW_PER_PJ_PER_SEC if wall_sec > 0 else 0.0


def finalize(
    counters: RawCounters,
    config: ExperimentConfig,
    overrides: Sequence[str] = (),
    note: str = "",
) -> MetricsReport:
    """Derives every report field from the raw counters, guarding each division"""
    wall_ps = counters.wall_time_ps
    wall_sec = wall_ps / PS_PER_SECOND
    energy = counters.compute_energy_pj + counters.memory_energy_pj
    tokens = counters.committed_tokens
    npu_busy = _fraction(counters.npu_busy_ps, wall_ps)
    pim_busy = _fraction(counters.pim_busy_ps, wall_ps)
    by_depth = {
        str(depth): counters.depth_accepts.get(depth, 0) / trials
        for depth, trials in sorted(counters.depth_trials.items())
        if trials > 0
    }
    return MetricsReport(
        label=config.label_or_variant,
        variant=config.variant.value,
        seed=config.seed,
        committed_tokens=counters.committed_tokens,
        wall_time_sec=wall_sec,
        throughput_tokens_per_sec=counters.committed_tokens / wall_sec if wall_sec > 0 else 0.0,
        drafted_tokens=counters.drafted_tokens,
        accepted_draft_tokens=counters.accepted_draft_tokens,
        rejected_draft_tokens=counters.rejected_draft_tokens,
        purged_tokens=counters.purged_tokens,
        correction_tokens=counters.correction_tokens,
        acceptance_rate=counters.accepted_draft_tokens / max(counters.drafted_tokens, 1),
        mean_draft_len=_fraction(counters.draft_len_sum, counters.draft_batches),
        mean_lookahead_depth=_fraction(counters.lookahead_depth_sum, counters.draft_batches),
        acceptance_by_depth=by_depth,
        npu_busy_frac=npu_busy,
        npu_idle_frac=1.0 - npu_busy if wall_ps > 0 else 0.0,
        npu_starved_frac=_fraction(counters.npu_starved_ps, wall_ps),
        pim_busy_frac=pim_busy,
        pim_idle_frac=1.0 - pim_busy if wall_ps > 0 else 0.0,
        pim_wasted_frac=_fraction(counters.pim_wasted_ps, wall_ps),
        preverify_count=counters.preverify_count,
        preverify_tokens=counters.preverify_tokens,
        sync_overhead_sec=counters.sync_overhead_ps / PS_PER_SECOND,
        pim_share_cv=coefficient_of_variation(counters.pim_shares),
        energy_pj_total=energy,
        energy_pj_per_token=energy / tokens if tokens else 0.0,
        tokens_per_joule=tokens / (energy / PJ_PER_JOULE) if energy > 0 else 0.0,
        memory_energy_pj=counters.memory_energy_pj,
        npu_energy_pj=counters.compute_energy_pj,
        memory_power_mw=_power_mw(counters.memory_energy_pj, wall_sec),
        npu_power_mw=_power_mw(counters.compute_energy_pj, wall_sec),
        events=counters.events,
        overrides=list(overrides),
        note=note,
    )


def _to_row(report: MetricsReport) -> dict:
    row = report.model_dump()
    for name in STRUCTURED_FIELDS:
        row[name] = json.dumps(row[name], sort_keys=True)
    return row


def to_frame(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    columns = list(MetricsReport.model_fields)
    return pd.DataFrame([_to_row(r) for r in reports], columns=columns)


def emit(reports: Union[MetricsReport, Sequence[MetricsReport]], fmt: str = "json") -> str:
    """
    Serializes one report or a set of reports with a stable field order.
    JSON gives an object for a single report and a list otherwise; CSV gives one row per report.
    """
    single = isinstance(reports, MetricsReport)
    items = [reports] if single else list(reports)
    if fmt == "json":
        payload = items[0].model_dump() if single else [r.model_dump() for r in items]
        return json.dumps(payload, indent=2) + "\n"
    if fmt == "csv":
        buffer = io.StringIO()
        to_frame(items).to_csv(buffer, index=False)
        return buffer.getvalue()
    raise ValueError(f"Unknown report format '{fmt}'")


def parse_reports(text: str, fmt: str = "json") -> List[MetricsReport]:
    if fmt == "json":
        payload = json.loads(text)
        if isinstance(payload, dict):
            payload = [payload]
        logger.debug(f"Parsed {len(payload)} JSON reports")
        return [MetricsReport.model_validate(item) for item in payload]
    if fmt == "csv":
        table = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
        reports = []
        for row in table.to_dict(orient="records"):
            for name in STRUCTURED_FIELDS:
                row[name] = json.loads(row[name])
            reports.append(MetricsReport.model_validate(row))
        return reports
    raise ValueError(f"Unknown report format '{fmt}'")


def summarize(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    """Mean and standard deviation of every numeric field per variant"""
    frame = to_frame(reports)
    numeric = frame.select_dtypes(include=[np.number]).drop(columns=["seed"], errors="ignore")
    numeric["variant"] = frame["variant"]
    grouped = numeric.groupby("variant", sort=True)
    means = grouped.mean().add_suffix("_mean")
    stds = grouped.std(ddof=0).add_suffix("_std")
    summary = pd.concat([means, stds], axis=1)
    summary.insert(0, "runs", grouped.size())
    return summary.reset_index()


RATIO_COLUMNS = {
    "throughput_ratio": "throughput_tokens_per_sec_mean",
    "energy_efficiency_ratio": "tokens_per_joule_mean",
    "energy_per_token_ratio": "energy_pj_per_token_mean",
    "memory_power_ratio": "memory_power_mw_mean",
    "npu_power_ratio": "npu_power_mw_mean",
}


def with_ratios(summary: pd.DataFrame, baseline: str) -> pd.DataFrame:
    """Adds ratio columns against the named baseline variant of a summarize() table"""
    if baseline not in set(summary["variant"]):
        raise ValueError(f"baseline variant '{baseline}' is not in the summary")
    reference = summary.set_index("variant").loc[baseline]
    result = summary.copy()
    for ratio, column in RATIO_COLUMNS.items():
        base = reference[column]
        result[ratio] = result[column] / base if base else np.nan
    return result
