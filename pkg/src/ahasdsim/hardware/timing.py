# Roofline cycle and energy models for every simulated operation

from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Tuple

from ahasdsim.config import (
    BaselineConfig,
    EnergyCoefficients,
    ExperimentConfig,
    HardwareConfig,
    ModelConfig,
)
from ahasdsim.utilities.utilities import ceil_div, to_fraction

VECTOR_OPS_PER_ELEMENT = 5
ATTENTION_TRANSFERS_PER_LAYER = 4
FFN_EXPANSION = 4


@dataclass(frozen=True)
class Device:
    name: str
    freq_hz: Fraction
    matrix_ops_per_cycle: Fraction
    vector_ops_per_cycle: Fraction
    bytes_per_cycle: Fraction
    offchip: bool


@dataclass(frozen=True)
class OpCost:
    device: str
    cycles: int = 0
    compute_cycles: int = 0
    memory_cycles: int = 0
    ops: int = 0
    vector_ops: int = 0
    aau_ops: int = 0
    dram_bytes_moved: int = 0
    offchip_bytes_moved: int = 0

    def __add__(self, other: "OpCost") -> "OpCost":
        if other.device != self.device:
            raise ValueError(f"cannot add {other.device} cost to {self.device} cost")
        return OpCost(
            self.device,
            **{
                f.name: getattr(self, f.name) + getattr(other, f.name)
                for f in fields(self)
                if f.name != "device"
            },
        )

    def scaled(self, factor: int) -> "OpCost":
        return OpCost(
            self.device,
            **{f.name: getattr(self, f.name) * factor for f in fields(self) if f.name != "device"},
        )


def npu_device(hardware: HardwareConfig) -> Device:
    freq = to_fraction(hardware.npu_freq_hz)
    return Device(
        name="npu",
        freq_hz=freq,
        matrix_ops_per_cycle=Fraction(hardware.npu_matrix_ops_per_cycle),
        vector_ops_per_cycle=Fraction(hardware.npu_vector_ops_per_cycle),
        bytes_per_cycle=to_fraction(hardware.offchip_bw_bytes_per_sec) / freq,
        offchip=True,
    )


def pim_device(hardware: HardwareConfig) -> Device:
    freq = to_fraction(hardware.pim_freq_hz)
    total = hardware.pim_units * to_fraction(hardware.pim_ops_per_cycle_per_unit)
    return Device(
        name="pim",
        freq_hz=freq,
        matrix_ops_per_cycle=total,
        vector_ops_per_cycle=total,
        bytes_per_cycle=to_fraction(hardware.pim_onchip_bw_bytes_per_sec) / freq,
        offchip=False,
    )


def gpu_device(baseline: BaselineConfig) -> Device:
    freq = to_fraction(baseline.gpu_freq_hz)
    return Device(
        name="gpu",
        freq_hz=freq,
        matrix_ops_per_cycle=Fraction(baseline.gpu_ops_per_cycle),
        vector_ops_per_cycle=Fraction(baseline.gpu_ops_per_cycle),
        bytes_per_cycle=to_fraction(baseline.gpu_mem_bw_bytes_per_sec) / freq,
        offchip=True,
    )


def get_device(name: str, config: ExperimentConfig) -> Device:
    if name == "npu":
        return npu_device(config.hardware)
    if name == "pim":
        return pim_device(config.hardware)
    if name == "gpu":
        return gpu_device(config.baseline)
    raise ValueError(f"Unknown device '{name}'")


def _memory_cost(device: Device, bytes_moved: int) -> dict:
    return {
        "memory_cycles": ceil_div(bytes_moved, device.bytes_per_cycle) if bytes_moved else 0,
        "dram_bytes_moved": bytes_moved,
        "offchip_bytes_moved": bytes_moved if device.offchip else 0,
    }


def gemm_cycles(device: Device, M: int, K: int, N: int, weight_resident: bool = False) -> OpCost:
    """
    Roofline cost of an (M x K) by (K x N) INT8 matrix product.
    Parameters
    ----------
    device : Device
        the executing device; its bandwidth is the governing link.
    M, K, N : int
        matrix dimensions, all at least 1.
    weight_resident : bool
        skip the K x N weight bytes when the weights are already local.
    Returns
    -------
    cost : OpCost
        cycles = max(compute_cycles, memory_cycles).
    """
    if min(M, K, N) < 1:
        raise ValueError(f"gemm dimensions must be at least 1, got M={M} K={K} N={N}")
    ops = 2 * M * K * N
    bytes_moved = M * K + M * N + (0 if weight_resident else K * N)
    compute = ceil_div(ops, device.matrix_ops_per_cycle)
    memory = _memory_cost(device, bytes_moved)
    return OpCost(
        device.name,
        cycles=max(compute, memory["memory_cycles"]),
        compute_cycles=compute,
        ops=ops,
        **memory,
    )


def vector_cycles(device: Device, elements: int) -> OpCost:
    """Softmax and normalization on the vector path"""
    ops = VECTOR_OPS_PER_ELEMENT * elements
    compute = ceil_div(ops, device.vector_ops_per_cycle) if ops else 0
    return OpCost(device.name, cycles=compute, compute_cycles=compute, vector_ops=ops)


def _heads(model: ModelConfig, hidden: int) -> int:
    return max(hidden // model.head_dim, 1)


def projection_cycles(device: Device, hidden: int, M: int, weight_resident: bool) -> OpCost:
    """QKV, output and the two FFN products of one decoder layer, plus its two normalizations"""
    cost = gemm_cycles(device, M, hidden, 3 * hidden, weight_resident)
    cost += gemm_cycles(device, M, hidden, hidden, weight_resident)
    cost += gemm_cycles(device, M, hidden, FFN_EXPANSION * hidden, weight_resident)
    cost += gemm_cycles(device, M, FFN_EXPANSION * hidden, hidden, weight_resident)
    cost += vector_cycles(device, 2 * M * hidden)
    return cost


def attention_cycles(device: Device, hidden: int, heads: int, M: int, kv_len: int) -> OpCost:
    """Score and weighted-sum products over a streamed KV cache, with softmax"""
    if kv_len <= 0:
        return OpCost(device.name)
    cost = gemm_cycles(device, M, hidden, kv_len)
    cost += gemm_cycles(device, M, kv_len, hidden)
    cost += vector_cycles(device, M * heads * kv_len)
    return cost


def layer_cycles(
    device: Device, model: ModelConfig, hidden: int, M: int, kv_len: int, weight_resident: bool
) -> OpCost:
    return projection_cycles(device, hidden, M, weight_resident) + attention_cycles(
        device, hidden, _heads(model, hidden), M, kv_len
    )


def dlm_draft_cycles(
    hardware: HardwareConfig,
    model: ModelConfig,
    draft_len: int,
    kv_len: int,
    device: Device = None,
) -> OpCost:
    """Sequential drafting: token i runs every DLM layer with M = 1 over kv_len + i cache entries"""
    if draft_len < 1:
        raise ValueError("draft_len must be at least 1")
    if kv_len < 0:
        raise ValueError("kv_len must be non-negative")
    device = device or pim_device(hardware)
    cost = OpCost(device.name)
    if model.dlm_layers == 0:
        return cost
    for i in range(draft_len):
        cost += layer_cycles(device, model, model.dlm_hidden, 1, kv_len + i, False).scaled(
            model.dlm_layers
        )
    return cost


def weight_stream_cycles(device: Device, params_bytes: int) -> OpCost:
    if params_bytes <= 0:
        return OpCost(device.name)
    memory = _memory_cost(device, params_bytes)
    return OpCost(device.name, cycles=memory["memory_cycles"], **memory)


def tlm_projection_phase(
    hardware: HardwareConfig, model: ModelConfig, batch_len: int, device: Device = None
) -> OpCost:
    """Verification minus attention: SPM-resident projections plus one off-chip weight stream"""
    device = device or npu_device(hardware)
    if model.tlm_layers == 0:
        return OpCost(device.name)
    cost = projection_cycles(device, model.tlm_hidden, batch_len, True).scaled(model.tlm_layers)
    return cost + weight_stream_cycles(device, model.tlm_params_bytes)


def tlm_attention_phase(
    model: ModelConfig, batch_len: int, kv_len: int, device: Device
) -> OpCost:
    if model.tlm_layers == 0:
        return OpCost(device.name)
    heads = _heads(model, model.tlm_hidden)
    return attention_cycles(device, model.tlm_hidden, heads, batch_len, kv_len).scaled(
        model.tlm_layers
    )


def tlm_verify_cycles(
    hardware: HardwareConfig,
    model: ModelConfig,
    batch_len: int,
    kv_len: int,
    device: Device = None,
) -> OpCost:
    if batch_len < 1:
        raise ValueError("batch_len must be at least 1")
    if kv_len < 0:
        raise ValueError("kv_len must be non-negative")
    device = device or npu_device(hardware)
    return tlm_projection_phase(hardware, model, batch_len, device) + tlm_attention_phase(
        model, batch_len, kv_len, device
    )


def pim_preverify_cycles(
    hardware: HardwareConfig, model: ModelConfig, preverify_len: int, kv_len: int
) -> OpCost:
    """TLM forward on the PIM ranks, bracketed by two rank switches"""
    if preverify_len < 1:
        raise ValueError("preverify_len must be at least 1")
    if kv_len < 0:
        raise ValueError("kv_len must be non-negative")
    device = pim_device(hardware)
    switches = 2 * hardware.gtsu_switch_cycles
    cost = OpCost(device.name, cycles=switches)
    if model.tlm_layers == 0:
        return cost
    return cost + layer_cycles(
        device, model, model.tlm_hidden, preverify_len, kv_len, False
    ).scaled(model.tlm_layers)


def attention_comm_cycles(
    hardware: HardwareConfig, model: ModelConfig, tokens: int, role: str = "dlm"
) -> OpCost:
    """
    Intermediate activations shipped to the NPU for nonlinear and reduction operators, in NPU
    cycles. With the in-memory attention unit the transfer disappears and the unit's ops are
    counted instead.
    """
    if tokens < 1:
        raise ValueError("tokens must be at least 1")
    if role not in ("dlm", "tlm"):
        raise ValueError(f"Unknown model role '{role}'")
    hidden = model.dlm_hidden if role == "dlm" else model.tlm_hidden
    layers = model.dlm_layers if role == "dlm" else model.tlm_layers
    elements = tokens * hidden * ATTENTION_TRANSFERS_PER_LAYER * layers
    if hardware.aau_enabled:
        return OpCost("pim", aau_ops=elements)
    device = npu_device(hardware)
    cycles = ceil_div(elements, device.bytes_per_cycle) if elements else 0
    return OpCost(
        device.name, cycles=cycles, memory_cycles=cycles, offchip_bytes_moved=elements
    )


def energy_of(cost: OpCost, coeffs: EnergyCoefficients) -> float:
    """Dynamic per-op and per-byte terms plus background energy of the executing device"""
    dynamic = {
        "npu": coeffs.npu_dynamic_pj_per_op,
        "pim": coeffs.pim_dynamic_pj_per_op,
        "gpu": coeffs.gpu_dynamic_pj_per_op,
    }
    background = {
        "npu": coeffs.npu_background_pj_per_cycle,
        "pim": coeffs.pim_background_pj_per_cycle,
        "gpu": coeffs.gpu_background_pj_per_cycle,
    }
    if cost.device not in dynamic:
        raise ValueError(f"Unknown device '{cost.device}'")
    return (
        (cost.ops + cost.vector_ops) * dynamic[cost.device]
        + cost.aau_ops * coeffs.aau_pj_per_op
        + cost.dram_bytes_moved * coeffs.dram_pj_per_byte
        + cost.offchip_bytes_moved * coeffs.offchip_pj_per_byte
        + cost.cycles * background[cost.device]
    )


def energy_breakdown(cost: OpCost, coeffs: EnergyCoefficients) -> Tuple[float, float]:
    """Splits energy_of into (compute side, memory side); PIM work is memory-side"""
    total = energy_of(cost, coeffs)
    if cost.device == "pim":
        return 0.0, total
    memory = (
        cost.dram_bytes_moved * coeffs.dram_pj_per_byte
        + cost.offchip_bytes_moved * coeffs.offchip_pj_per_byte
    )
    return total - memory, memory
