import numpy as np
import pytest

from ahasdsim.simulation.baselines import ITERATION_COLUMNS, IterationTiming
from ahasdsim.simulation.runner import make_simulator
from tests.test_utilities import NO_ACCEPTANCE, PERFECT_ACCEPTANCE, get_config, small_config

FIXED_FOUR = ("workload.algorithm=fixed", "workload.max_draft_len=4", *PERFECT_ACCEPTANCE)


def simulate(config):
    simulator = make_simulator(config)
    simulator.run()
    return simulator


def test_iteration_timing():
    timing = IterationTiming(draft_ps=5, npu_phase_ps=30, pim_phase_ps=10, energy=(1.0, 2.0))
    assert timing.verify_ps == 30
    assert timing.sync_ps == 20
    assert timing.pim_share == pytest.approx(15 / 35)

    alone = IterationTiming(draft_ps=5, npu_phase_ps=30, pim_phase_ps=0, energy=(1.0, 0.0))
    assert alone.sync_ps == 0
    assert alone.pim_share == pytest.approx(5 / 35)
    assert IterationTiming(0, 0, 0, (0.0, 0.0)).pim_share == 0.0


@pytest.mark.parametrize("variant", ["gpu_only", "npu_only", "op_sync"])
def test_full_acceptance_commits_the_batch_plus_one(variant):
    config = small_config(variant, generation_length=60, overrides=FIXED_FOUR)
    simulator = simulate(config)
    iterations = simulator.iterations

    assert list(iterations.columns) == ITERATION_COLUMNS
    assert len(iterations) == 12
    assert (iterations["draft_len"] == 4).all()
    assert (iterations["accepted"] == 4).all()
    assert list(iterations["position"]) == list(range(0, 60, 5))
    assert simulator.report.committed_tokens == 60
    assert simulator.report.correction_tokens == 0


def test_no_acceptance_takes_one_iteration_per_token():
    simulator = simulate(small_config("op_sync", overrides=NO_ACCEPTANCE))
    assert simulator.counters.draft_batches == 64
    assert simulator.report.correction_tokens == 64
    assert simulator.report.accepted_draft_tokens == 0


def test_sequential_baseline_keeps_one_device_busy():
    report = simulate(small_config("gpu_only")).report
    assert report.npu_busy_frac == pytest.approx(1.0)
    assert report.pim_busy_frac == 0.0
    assert report.sync_overhead_sec == 0.0
    assert report.energy_pj_total > 0


def test_operator_sync_phases():
    config = small_config("op_sync", generation_length=60, overrides=FIXED_FOUR)
    simulator = simulate(config)
    iterations = simulator.iterations

    assert iterations["npu_phase_ps"].nunique() == 1
    assert np.abs(np.diff(iterations["pim_phase_ps"].to_numpy(), 2)).max() < 10**6
    assert (
        iterations["sync_ps"] == (iterations["npu_phase_ps"] - iterations["pim_phase_ps"]).abs()
    ).all()
    assert simulator.report.sync_overhead_sec == pytest.approx(iterations["sync_ps"].sum() / 1e12)
    assert simulator.report.note


def test_operator_sync_without_pim_attention():
    config = small_config("op_sync", overrides=["baseline.opsync_attention_on_pim=false"])
    simulator = simulate(config)
    assert (simulator.iterations["pim_phase_ps"] == 0).all()
    assert simulator.report.sync_overhead_sec == 0.0
    assert simulator.report.pim_share_cv == 0.0


def test_volatile_workload_shifts_the_device_balance():
    report = simulate(get_config("volatile")).report
    assert report.variant == "op_sync"
    assert report.pim_share_cv > 0.25
