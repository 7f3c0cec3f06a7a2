# Brute-force cycle counts for the default hardware and the Medium model pair.
# Written without the simulator's code so that cost-dump tables can be checked against it.

NPU_MATRIX_OPS = 16000
NPU_VECTOR_OPS = 8200
NPU_BYTES_PER_CYCLE = (512, 10)  # 51.2 as a fraction
PIM_OPS = 16 * 8
PIM_BYTES_PER_CYCLE = (320, 1)
VECTOR_OPS_PER_ELEMENT = 5
HEAD_DIM = 128
GTSU_SWITCH = 400

DLM = {"hidden": 4096, "layers": 32}
TLM = {"hidden": 5120, "layers": 40}

DEVICES = {
    "npu": {"matrix": NPU_MATRIX_OPS, "vector": NPU_VECTOR_OPS, "bytes": NPU_BYTES_PER_CYCLE},
    "pim": {"matrix": PIM_OPS, "vector": PIM_OPS, "bytes": PIM_BYTES_PER_CYCLE},
}


def ceil_div(numerator, denominator):
    return -(-numerator // denominator)


def memory_cycles(device, byte_count):
    num, den = DEVICES[device]["bytes"]
    return ceil_div(byte_count * den, num) if byte_count else 0


def gemm(device, M, K, N, resident=False):
    ops = 0
    for _ in range(M):
        ops += 2 * K * N
    byte_count = M * K + M * N + (0 if resident else K * N)
    return max(ceil_div(ops, DEVICES[device]["matrix"]), memory_cycles(device, byte_count))


def vector(device, elements):
    ops = VECTOR_OPS_PER_ELEMENT * elements
    return ceil_div(ops, DEVICES[device]["vector"]) if ops else 0


def attention(device, hidden, M, kv):
    if kv <= 0:
        return 0
    heads = max(hidden // HEAD_DIM, 1)
    scores = gemm(device, M, hidden, kv)
    weighted = gemm(device, M, kv, hidden)
    return scores + weighted + vector(device, M * heads * kv)


def projections(device, hidden, M, resident):
    total = 0
    shapes = ((hidden, 3 * hidden), (hidden, hidden), (hidden, 4 * hidden), (4 * hidden, hidden))
    for K, N in shapes:
        total += gemm(device, M, K, N, resident)
    return total + vector(device, 2 * M * hidden)


def dlm_draft_pim(draft_len, kv):
    total = 0
    for token in range(draft_len):
        for _ in range(DLM["layers"]):
            total += projections("pim", DLM["hidden"], 1, False)
            total += attention("pim", DLM["hidden"], 1, kv + token)
    return total


def tlm_verify_npu(M, kv):
    total = 0
    for _ in range(TLM["layers"]):
        total += projections("npu", TLM["hidden"], M, True)
        total += attention("npu", TLM["hidden"], M, kv)
    params = 12 * TLM["layers"] * TLM["hidden"] * TLM["hidden"]
    return total + memory_cycles("npu", params)


def preverify_pim(length, kv):
    total = 2 * GTSU_SWITCH
    for _ in range(TLM["layers"]):
        total += projections("pim", TLM["hidden"], length, False)
        total += attention("pim", TLM["hidden"], length, kv)
    return total


def comm_dlm_offchip(tokens):
    return memory_cycles("npu", tokens * DLM["hidden"] * 4 * DLM["layers"])


def oracle_row(M, K, N, kv_len, draft_len):
    return {
        "gemm_npu": gemm("npu", M, K, N),
        "gemm_npu_resident": gemm("npu", M, K, N, resident=True),
        "gemm_pim": gemm("pim", M, K, N),
        "attention_npu": attention("npu", TLM["hidden"], M, kv_len),
        "attention_pim": attention("pim", TLM["hidden"], M, kv_len),
        "dlm_draft_pim": dlm_draft_pim(draft_len, kv_len),
        "tlm_verify_npu": tlm_verify_npu(M, kv_len),
        "preverify_pim": preverify_pim(draft_len, kv_len),
        "comm_dlm_offchip": comm_dlm_offchip(draft_len),
    }
