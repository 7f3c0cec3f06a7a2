"""This file demonstrates how the simulator can be driven from Python rather than from the CLI.
It runs the full design and two baselines over a few seeds on a modified reference experiment,
then prints the mean throughput of each variant and its ratio against the GPU baseline.

The procedure to follow is, in short:
- load a config (a file, or the defaults) and derive the experiments with apply_overrides
- run them with run_many, which returns one MetricsReport per experiment
- aggregate the reports with summarize and with_ratios, which return pandas DataFrames
"""
from ahasdsim.config import Variant, apply_overrides, load_config_file
from ahasdsim.metrics import summarize, with_ratios
from ahasdsim.simulation.runner import run_many

SEEDS = range(1, 4)
VARIANTS = (Variant.FULL, Variant.OP_SYNC, Variant.GPU_ONLY)

# Shorter generations on the Small model pair keep the example quick
config = load_config_file("configs/reference.yaml", ["model.scale=Small", "generation_length=256"])

experiments = [
    apply_overrides(config, [f"variant={variant.value}", f"seed={seed}"])
    for variant in VARIANTS
    for seed in SEEDS
]
reports = run_many(experiments)

table = with_ratios(summarize(reports), baseline=Variant.GPU_ONLY.value)
print(table[["variant", "runs", "throughput_tokens_per_sec_mean", "throughput_ratio"]])
