# Per-operation cycle tables over random operating points, for checking against an external oracle

import numpy as np
import pandas as pd

from ahasdsim.config import ExperimentConfig
from ahasdsim.hardware.timing import (
    attention_cycles,
    attention_comm_cycles,
    dlm_draft_cycles,
    gemm_cycles,
    npu_device,
    pim_device,
    pim_preverify_cycles,
    tlm_verify_cycles,
)

POINT_RANGES = {
    "M": (1, 16),
    "K": (1, 8192),
    "N": (1, 8192),
    "kv_len": (0, 2048),
    "draft_len": (1, 8),
}

COST_COLUMNS = [
    "gemm_npu",
    "gemm_npu_resident",
    "gemm_pim",
    "attention_npu",
    "attention_pim",
    "dlm_draft_pim",
    "tlm_verify_npu",
    "preverify_pim",
    "comm_dlm_offchip",
]


def random_points(seed: int, count: int) -> pd.DataFrame:
    """Operating points drawn uniformly (bounds inclusive) from POINT_RANGES"""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    return pd.DataFrame(
        {
            name: rng.integers(low, high, size=count, endpoint=True)
            for name, (low, high) in POINT_RANGES.items()
        }
    )


def cost_table(config: ExperimentConfig, points: pd.DataFrame) -> pd.DataFrame:
    """Cycles of every modelled operation at each point, with the point's dimensions first"""
    hardware, model = config.hardware, config.model
    offchip = hardware.model_copy(update={"aau_enabled": False})
    npu, pim = npu_device(hardware), pim_device(hardware)
    heads = max(model.tlm_hidden // model.head_dim, 1)
    rows = []
    for point in points.itertuples(index=False):
        M, K, N = int(point.M), int(point.K), int(point.N)
        kv, draft = int(point.kv_len), int(point.draft_len)
        rows.append(
            {
                "gemm_npu": gemm_cycles(npu, M, K, N).cycles,
                "gemm_npu_resident": gemm_cycles(npu, M, K, N, weight_resident=True).cycles,
                "gemm_pim": gemm_cycles(pim, M, K, N).cycles,
                "attention_npu": attention_cycles(npu, model.tlm_hidden, heads, M, kv).cycles,
                "attention_pim": attention_cycles(pim, model.tlm_hidden, heads, M, kv).cycles,
                "dlm_draft_pim": dlm_draft_cycles(hardware, model, draft, kv, pim).cycles,
                "tlm_verify_npu": tlm_verify_cycles(hardware, model, M, kv, npu).cycles,
                "preverify_pim": pim_preverify_cycles(hardware, model, draft, kv).cycles,
                "comm_dlm_offchip": attention_comm_cycles(offchip, model, draft, "dlm").cycles,
            }
        )
    costs = pd.DataFrame(rows, columns=COST_COLUMNS)
    return pd.concat([points.reset_index(drop=True), costs], axis=1)
