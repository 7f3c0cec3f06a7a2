"""Finds, for each entropy-driven drafting rule, the threshold giving a target mean draft length.

Batches are drafted back to back over the synthetic workload of the given config, so the
result only depends on the entropy sequence and not on any timing. Thresholds are searched
by bisection on [0, 1]; the direction of the search is read from the two bounds.

    python scripts/calibrate_thresholds.py --target 4 --positions 20000
"""
import argparse
import logging

import numpy as np

from ahasdsim.config import ExperimentConfig, apply_overrides, load_config_file
from ahasdsim.workload.stop_rules import draft_length
from ahasdsim.workload.synthetic import SyntheticWorkload

logger = logging.getLogger("calibrate_thresholds")

THRESHOLD_RULES = ("adaedl", "svip", "specdecpp")


def mean_draft_length(config: ExperimentConfig, positions: int) -> float:
    workload_config = config.workload
    workload = SyntheticWorkload(
        workload_config, config.model.h_max, config.model.vocab_size, config.seed
    )
    lengths = []
    position = 0
    while position < positions:
        entropies = [
            workload.entropy(p) for p in range(position, position + workload_config.max_draft_len)
        ]
        n = draft_length(entropies, config.model.h_max, workload_config)
        lengths.append(n)
        position += n
    return float(np.mean(lengths))


def calibrate(
    config: ExperimentConfig, algorithm: str, target: float, positions: int, steps: int = 30
) -> float:
    def length_at(threshold: float) -> float:
        candidate = apply_overrides(
            config,
            [f"workload.algorithm={algorithm}", f"workload.algorithm_threshold={threshold}"],
        )
        return mean_draft_length(candidate, positions)

    low, high = 0.0, 1.0
    increasing = length_at(high) > length_at(low)
    for _ in range(steps):
        middle = (low + high) / 2
        if (length_at(middle) < target) == increasing:
            low = middle
        else:
            high = middle
    threshold = (low + high) / 2
    logger.info(f"{algorithm}: threshold {threshold:.4f} gives {length_at(threshold):.3f} tokens")
    return threshold


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="YAML experiment config; defaults apply without one")
    parser.add_argument("--target", type=float, default=4.0, help="mean draft length to reach")
    parser.add_argument("--positions", type=int, default=20000, help="workload positions to draft")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(name)s %(levelname)s %(message)s")

    config = load_config_file(args.config)
    if not 1.0 <= args.target <= config.workload.max_draft_len:
        parser.error(f"--target must lie in [1, {config.workload.max_draft_len}]")
    for algorithm in THRESHOLD_RULES:
        threshold = calibrate(config, algorithm, args.target, args.positions)
        print(f"{algorithm}: {threshold:.4f}")


if __name__ == "__main__":
    main()
