import io
import json

import numpy as np
import pytest

from ahasdsim.config import Variant
from ahasdsim.metrics import summarize, with_ratios
from ahasdsim.simulation import SimulationError
from ahasdsim.simulation.runner import make_simulator, run_experiment, run_many
from tests.test_utilities import NO_ACCEPTANCE, PERFECT_ACCEPTANCE, get_config, small_config

ASYNC_VARIANTS = [Variant.ASYNC, Variant.ASYNC_AAU, Variant.ASYNC_AAU_EDC, Variant.FULL]


def traced_run(config, **kwargs):
    stream = io.StringIO()
    simulator = make_simulator(config, event_trace=stream, **kwargs)
    simulator.run()
    records = [json.loads(line) for line in stream.getvalue().splitlines()]
    return simulator, records


@pytest.fixture(scope="module")
def fast_pim_run():
    return traced_run(get_config("fast_pim"))


@pytest.mark.parametrize("variant", list(Variant))
def test_every_variant_commits_the_target_sequence(variant):
    report = run_experiment(small_config(variant.value))
    assert report.committed_tokens == 64
    assert report.variant == variant.value
    assert 0.0 <= report.acceptance_rate <= 1.0
    assert report.throughput_tokens_per_sec > 0


@pytest.mark.parametrize("variant", ASYNC_VARIANTS)
def test_single_token_generation(variant):
    report = run_experiment(small_config(variant.value, generation_length=1))
    assert report.committed_tokens == 1
    assert report.wall_time_sec > 0


def test_runs_are_deterministic():
    config = small_config("full", seed=11)
    first, first_records = traced_run(config)
    second, second_records = traced_run(config)
    assert first.report.model_dump() == second.report.model_dump()
    assert first_records == second_records


def test_perfect_acceptance_never_rolls_back():
    report = run_experiment(small_config("full", overrides=PERFECT_ACCEPTANCE))
    assert report.acceptance_rate == 1.0
    assert report.accepted_draft_tokens == report.drafted_tokens <= 64
    assert report.purged_tokens == 0
    assert report.correction_tokens == 0


def test_no_acceptance_commits_only_corrections():
    report = run_experiment(small_config("async", overrides=NO_ACCEPTANCE))
    assert report.committed_tokens == 64
    assert report.accepted_draft_tokens == 0
    assert report.correction_tokens == 64


def test_time_fractions_stay_in_range():
    report = run_experiment(small_config("async_aau_edc", seed=5))
    assert report.npu_busy_frac + report.npu_starved_frac <= 1.0 + 1e-9
    assert 0.0 <= report.pim_busy_frac <= 1.0 + 1e-9
    assert report.pim_wasted_frac <= report.pim_busy_frac + 1e-9
    assert report.energy_pj_total == pytest.approx(
        report.memory_energy_pj + report.npu_energy_pj
    )


def test_preverification_fires_with_a_fast_pim(fast_pim_run):
    simulator, records = fast_pim_run
    assert simulator.counters.preverify_count > 0
    assert simulator.preverify_audit
    assert any(r["type"] == "preverify_start" for r in records)


def test_preverification_fits_the_predicted_window(fast_pim_run):
    simulator, _ = fast_pim_run
    for entry in simulator.preverify_audit:
        assert 1 <= entry["length"] <= entry["remaining_tokens"]
        assert entry["npu_pred"] >= entry["ncr"] + entry["preverify_pred"] + entry["draft_pred"]


def test_wasted_pim_time_matches_the_trace(fast_pim_run):
    simulator, records = fast_pim_run
    purged = sum(r["draft_ps"] for r in records if r["type"] == "purge")
    aborted = sum(r["elapsed_ps"] for r in records if r["type"] == "abort")
    assert purged + aborted == simulator.counters.pim_wasted_ps


def test_every_event_is_traced(fast_pim_run):
    simulator, records = fast_pim_run
    assert sum(r["type"] == "event" for r in records) == simulator.counters.events


def test_debug_dumps():
    _, records = traced_run(small_config("full"), debug_dump_every=5)
    dumps = [r for r in records if r["type"] == "debug"]
    assert dumps
    assert {"committed", "outstanding", "npu_state", "edc", "tvc"} <= set(dumps[0])
    with pytest.raises(ValueError):
        make_simulator(small_config("full"), debug_dump_every=-1)


def test_event_cap():
    with pytest.raises(SimulationError):
        run_experiment(small_config("full", overrides=["policy.max_events=10"]))


def test_lookahead_depth_is_bounded():
    config = small_config("async", overrides=["hardware.pim_ops_per_cycle_per_unit=64"])
    report = run_experiment(config)
    assert 0.0 <= report.mean_lookahead_depth < config.policy.max_unverified_batches
    depths = [int(depth) for depth in report.acceptance_by_depth]
    assert max(depths) < config.policy.max_unverified_batches


def test_target_tokens_fill_what_drafts_leave():
    simulator, records = traced_run(small_config("async", overrides=PERFECT_ACCEPTANCE))
    report = simulator.report
    target = [r for r in records if r["type"] == "target_token"]
    assert report.correction_tokens == 0
    assert len(target) + report.accepted_draft_tokens == report.committed_tokens == 64
    assert all(r["position"] < 64 for r in target)


def test_leading_length_is_checked_after_every_event(monkeypatch):
    report = run_experiment(small_config("async_aau_edc", seed=4))
    assert report.committed_tokens == 64

    monkeypatch.setattr("ahasdsim.simulation.engine.on_dispatch", lambda state, waiting: None)
    with pytest.raises(SimulationError, match="leading length"):
        run_experiment(small_config("async_aau_edc", seed=4))


WORKLOAD_FLAVORS = {
    "stationary": ["workload.difficulty_walk_step=0.0"],
    "volatile": ["workload.difficulty_walk_step=0.25", "workload.entropy_noise_sd=1.0"],
    "fast_pim": ["hardware.pim_ops_per_cycle_per_unit=64"],
}


@pytest.mark.slow
@pytest.mark.parametrize("flavor", sorted(WORKLOAD_FLAVORS))
@pytest.mark.parametrize("variant", ASYNC_VARIANTS)
def test_committed_sequence_matches_the_target_model(variant, flavor):
    for seed in range(1, 9):
        config = small_config(
            variant.value, generation_length=48, seed=seed, overrides=WORKLOAD_FLAVORS[flavor]
        )
        report = run_experiment(config)
        assert report.committed_tokens == 48


LADDER = ["op_sync", "async", "async_aau", "async_aau_edc", "full"]


@pytest.fixture(scope="module")
def reference_ladder():
    configs = [
        get_config("reference", [f"variant={variant}", f"seed={seed}"])
        for variant in LADDER
        for seed in range(1, 6)
    ]
    return with_ratios(summarize(run_many(configs)), "op_sync").set_index("variant")


@pytest.mark.slow
def test_each_technique_adds_throughput(reference_ladder):
    ratios = reference_ladder.loc[LADDER, "throughput_ratio"]
    assert (reference_ladder["runs"] == 5).all()
    assert ratios["async"] > 1.0
    for previous, current in zip(LADDER[1:], LADDER[2:]):
        assert ratios[current] >= 0.98 * ratios[previous], current
    assert ratios["full"] >= 1.5


@pytest.mark.slow
def test_edc_raises_acceptance(reference_ladder):
    acceptance = reference_ladder["acceptance_rate_mean"]
    assert acceptance["async_aau_edc"] - acceptance["async"] >= 0.10


@pytest.mark.slow
def test_tvc_does_not_add_npu_starvation(reference_ladder):
    starved = reference_ladder["npu_starved_frac_mean"]
    assert starved["full"] <= starved["async_aau_edc"]


@pytest.mark.slow
def test_npu_cycle_prediction_tracks_the_run():
    simulator, records = traced_run(get_config("reference"))
    ratio = float(simulator.tvc.freq_ratio)
    starts = [r for r in records if r["type"] == "verify_start"]
    errors = np.array([abs(r["npu_pred"] / (r["cycles"] * ratio) - 1.0) for r in starts])
    late = np.array([r["kv_len"] >= 512 for r in starts])

    assert len(starts) > 100
    assert errors.mean() < 0.05
    assert errors[late].max() < 0.10
