# Shared paths and golden values for the tests
from os import path

CONFIG_DIR = path.join(path.dirname(path.abspath(__file__)), "..", "configs")

# Hand-derived costs of the default hardware and the Medium model pair
GEMM_NPU_4_4096_4096_CYCLES = 328_320
GEMM_NPU_4_4096_4096_COMPUTE_CYCLES = 8_389
ATTENTION_COMM_MEDIUM_ONE_TOKEN_CYCLES = 10_240
DLM_DRAFT_MEDIUM_ONE_TOKEN_KV512_CYCLES = 102_791_168
DLM_DRAFT_MEDIUM_PER_LAYER_CYCLES = 3_212_224
PREVERIFY_MEDIUM_ONE_TOKEN_KV512_CYCLES = 199_932_800
PREVERIFY_MEDIUM_PER_LAYER_CYCLES = 4_998_320
ENERGY_NPU_EXAMPLE_PJ = 504_100.0
