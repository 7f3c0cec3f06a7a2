import pytest

from ahasdsim.config import EnergyCoefficients, ExperimentConfig, apply_overrides
from ahasdsim.hardware.timing import (
    OpCost,
    attention_comm_cycles,
    dlm_draft_cycles,
    energy_breakdown,
    energy_of,
    gemm_cycles,
    get_device,
    npu_device,
    pim_device,
    pim_preverify_cycles,
    tlm_attention_phase,
    tlm_projection_phase,
    tlm_verify_cycles,
)
from tests.constants import (
    ATTENTION_COMM_MEDIUM_ONE_TOKEN_CYCLES,
    DLM_DRAFT_MEDIUM_ONE_TOKEN_KV512_CYCLES,
    DLM_DRAFT_MEDIUM_PER_LAYER_CYCLES,
    ENERGY_NPU_EXAMPLE_PJ,
    GEMM_NPU_4_4096_4096_COMPUTE_CYCLES,
    GEMM_NPU_4_4096_4096_CYCLES,
    PREVERIFY_MEDIUM_ONE_TOKEN_KV512_CYCLES,
    PREVERIFY_MEDIUM_PER_LAYER_CYCLES,
)


@pytest.fixture
def config():
    return ExperimentConfig()


def test_device_rates(config):
    npu = npu_device(config.hardware)
    pim = pim_device(config.hardware)
    assert npu.bytes_per_cycle == pytest.approx(51.2)
    assert pim.matrix_ops_per_cycle == 128
    assert pim.bytes_per_cycle == 320
    assert get_device("gpu", config).name == "gpu"
    with pytest.raises(ValueError):
        get_device("tpu", config)


def test_gemm_streamed_weights_are_memory_bound(config):
    cost = gemm_cycles(npu_device(config.hardware), 4, 4096, 4096)
    assert cost.cycles == GEMM_NPU_4_4096_4096_CYCLES
    assert cost.compute_cycles == GEMM_NPU_4_4096_4096_COMPUTE_CYCLES
    assert cost.offchip_bytes_moved == 4 * 4096 * 2 + 4096 * 4096


def test_gemm_resident_weights(config):
    cost = gemm_cycles(npu_device(config.hardware), 4, 4096, 4096, weight_resident=True)
    assert cost.cycles == GEMM_NPU_4_4096_4096_COMPUTE_CYCLES
    with pytest.raises(ValueError):
        gemm_cycles(npu_device(config.hardware), 0, 4096, 4096)


def test_attention_transfer_without_attention_unit(config):
    hardware = config.hardware.model_copy(update={"aau_enabled": False})
    cost = attention_comm_cycles(hardware, config.model, 1, "dlm")
    assert cost.cycles == ATTENTION_COMM_MEDIUM_ONE_TOKEN_CYCLES
    assert cost.device == "npu"


def test_attention_unit_removes_transfer(config):
    cost = attention_comm_cycles(config.hardware, config.model, 1, "dlm")
    assert cost.cycles == 0
    assert cost.aau_ops == 4096 * 4 * 32
    with pytest.raises(ValueError):
        attention_comm_cycles(config.hardware, config.model, 1, "oracle")


def test_dlm_draft_golden(config):
    cost = dlm_draft_cycles(config.hardware, config.model, 1, 512)
    assert cost.cycles == DLM_DRAFT_MEDIUM_ONE_TOKEN_KV512_CYCLES
    assert cost.cycles == 32 * DLM_DRAFT_MEDIUM_PER_LAYER_CYCLES
    assert cost.device == "pim"


def test_draft_tokens_see_growing_cache(config):
    two = dlm_draft_cycles(config.hardware, config.model, 2, 512)
    first = dlm_draft_cycles(config.hardware, config.model, 1, 512)
    second = dlm_draft_cycles(config.hardware, config.model, 1, 513)
    assert two.cycles == first.cycles + second.cycles


def test_preverify_golden():
    config = apply_overrides(ExperimentConfig(), ["hardware.gtsu_switch_cycles=0"])
    cost = pim_preverify_cycles(config.hardware, config.model, 1, 512)
    assert cost.cycles == PREVERIFY_MEDIUM_ONE_TOKEN_KV512_CYCLES
    assert cost.cycles == 40 * PREVERIFY_MEDIUM_PER_LAYER_CYCLES


def test_preverify_pays_two_switches(config):
    switched = pim_preverify_cycles(config.hardware, config.model, 1, 512)
    assert switched.cycles == PREVERIFY_MEDIUM_ONE_TOKEN_KV512_CYCLES + 2 * 400


def test_verify_is_projection_plus_attention(config):
    npu = npu_device(config.hardware)
    verify = tlm_verify_cycles(config.hardware, config.model, 3, 700)
    parts = tlm_projection_phase(config.hardware, config.model, 3, npu) + tlm_attention_phase(
        config.model, 3, 700, npu
    )
    assert verify == parts
    assert tlm_verify_cycles(config.hardware, config.model, 3, 900).cycles > verify.cycles
    with pytest.raises(ValueError):
        tlm_verify_cycles(config.hardware, config.model, 0, 700)


def test_zero_layer_model_costs_nothing():
    config = apply_overrides(ExperimentConfig(), ["model.dlm_layers=0"])
    assert dlm_draft_cycles(config.hardware, config.model, 3, 100).cycles == 0


def test_energy_of_npu_example():
    cost = OpCost("npu", cycles=1000, ops=2000, dram_bytes_moved=100, offchip_bytes_moved=100)
    assert energy_of(cost, EnergyCoefficients()) == pytest.approx(ENERGY_NPU_EXAMPLE_PJ)
    compute, memory = energy_breakdown(cost, EnergyCoefficients())
    assert memory == pytest.approx(100 * 4.0 + 100 * 32.0)
    assert compute + memory == pytest.approx(ENERGY_NPU_EXAMPLE_PJ)


def test_energy_follows_the_counts(config):
    coeffs = EnergyCoefficients()
    draft = dlm_draft_cycles(config.hardware, config.model, 2, 64)
    verify = tlm_verify_cycles(config.hardware, config.model, 2, 66)
    assert energy_of(draft.scaled(3), coeffs) == pytest.approx(3 * energy_of(draft, coeffs))
    assert energy_of(verify + verify, coeffs) == pytest.approx(2 * energy_of(verify, coeffs))
    assert sum(energy_breakdown(verify, coeffs)) == pytest.approx(energy_of(verify, coeffs))


def test_pim_energy_is_memory_side():
    cost = OpCost("pim", cycles=10, ops=100)
    assert energy_breakdown(cost, EnergyCoefficients()) == (0.0, pytest.approx(1050.0))
    with pytest.raises(ValueError):
        energy_of(OpCost("fpga", cycles=1), EnergyCoefficients())


def test_costs_of_different_devices_do_not_add():
    with pytest.raises(ValueError):
        OpCost("npu", cycles=1) + OpCost("pim", cycles=1)
