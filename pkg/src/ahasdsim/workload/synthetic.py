import numpy as np

from ahasdsim.config import WorkloadConfig
from ahasdsim.workload import WorkloadSource


def next_difficulty(state: float, rng: np.random.Generator, step: float) -> float:
    """Bounded random walk step reflected into [0, 1]"""
    if not 0.0 <= state <= 1.0:
        raise ValueError(f"difficulty must lie in [0, 1], got {state}")
    proposal = state + rng.uniform(-step, step)
    if proposal < 0.0:
        proposal = -proposal
    elif proposal > 1.0:
        proposal = 2.0 - proposal
    return min(max(proposal, 0.0), 1.0)


def draft_entropy(
    difficulty: float, h_max: float, rng: np.random.Generator, noise_sd: float
) -> float:
    if not 0.0 <= difficulty <= 1.0:
        raise ValueError(f"difficulty must lie in [0, 1], got {difficulty}")
    value = difficulty * h_max + rng.normal(0.0, noise_sd)
    return min(max(value, 0.0), h_max)


def acceptance_probability(
    entropy: float, h_max: float, lookahead_depth: int, config: WorkloadConfig
) -> float:
    """
    Probability that a drafted token matches the target model.
    Parameters
    ----------
    entropy : float
        softmax entropy of the drafted token in nats.
    h_max : float
        the entropy bound used for normalization.
    lookahead_depth : int
        number of unverified batches older than the one holding the token.
    config : WorkloadConfig
        provides the slope, floor, ceiling and per-depth decay.
    Returns
    -------
    p : float
        clamp(1 - slope * entropy / h_max, floor, ceiling) * decay ** depth
    """
    if lookahead_depth < 0:
        raise ValueError("lookahead_depth must be non-negative")
    base = 1.0 - config.accept_slope * entropy / h_max
    base = min(max(base, config.accept_floor), config.accept_ceiling)
    return base * config.lookahead_decay**lookahead_depth


def acceptance_outcome(
    entropy: float,
    h_max: float,
    lookahead_depth: int,
    rng: np.random.Generator,
    config: WorkloadConfig,
) -> bool:
    return bool(rng.random() < acceptance_probability(entropy, h_max, lookahead_depth, config))


class SyntheticWorkload(WorkloadSource):
    """Difficulty random walk driving per-position entropies, extended lazily"""

    def __init__(self, config: WorkloadConfig, h_max: float, vocab_size: int, seed: int):
        super().__init__(config, h_max, vocab_size, seed)
        walk_seq, entropy_seq = np.random.SeedSequence([seed, 0xD1FF]).spawn(2)
        self._walk_rng = np.random.default_rng(walk_seq)
        self._entropy_rng = np.random.default_rng(entropy_seq)
        self._difficulties = [config.initial_difficulty]
        self._entropies = []

    def difficulty(self, position: int) -> float:
        while len(self._difficulties) <= position:
            self._difficulties.append(
                next_difficulty(
                    self._difficulties[-1], self._walk_rng, self.config.difficulty_walk_step
                )
            )
        return self._difficulties[position]

    def entropy(self, position: int) -> float:
        while len(self._entropies) <= position:
            index = len(self._entropies)
            self._entropies.append(
                draft_entropy(
                    self.difficulty(index),
                    self.h_max,
                    self._entropy_rng,
                    self.config.entropy_noise_sd,
                )
            )
        return self._entropies[position]

    def acceptance_probability(self, position: int, lookahead_depth: int) -> float:
        return acceptance_probability(
            self.entropy(position), self.h_max, lookahead_depth, self.config
        )
