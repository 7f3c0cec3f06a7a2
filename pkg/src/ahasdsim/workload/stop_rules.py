import math
from typing import List, Optional, Sequence

import numpy as np

from ahasdsim.config import WorkloadConfig
from ahasdsim.workload import STOP_RULE_REGISTRY, register_stop_rule


class BanditState:
    """UCB1 over candidate draft lengths. Rewards are accepted tokens per draft, normalized."""

    def __init__(self, arms: Sequence[int], max_draft_len: int):
        capped = sorted({min(arm, max_draft_len) for arm in arms})
        self.arms: List[int] = capped
        self.counts = np.zeros(len(capped), dtype=np.int64)
        self.reward_sums = np.zeros(len(capped), dtype=float)
        self.current_arm: Optional[int] = None

    @property
    def rounds(self) -> int:
        return int(self.counts.sum())

    def select_arm(self) -> int:
        untried = np.flatnonzero(self.counts == 0)
        if untried.size:
            index = int(untried[0])
        else:
            means = self.reward_sums / self.counts
            bonus = np.sqrt(2.0 * math.log(self.rounds) / self.counts)
            index = int(np.argmax(means + bonus))
        self.current_arm = self.arms[index]
        return self.current_arm

    def update(self, arm: int, accepted_tokens: int) -> None:
        index = self.arms.index(arm)
        self.counts[index] += 1
        self.reward_sums[index] += accepted_tokens / max(self.arms)


@register_stop_rule("adaedl")
def _adaedl_stop(entropies, h_max, config, bandit):
    return 1.0 - math.sqrt(entropies[-1] / h_max) < config.algorithm_threshold


@register_stop_rule("svip")
def _svip_stop(entropies, h_max, config, bandit):
    return entropies[-1] > config.algorithm_threshold * h_max


@register_stop_rule("specdecpp")
def _specdecpp_stop(entropies, h_max, config, bandit):
    survival = 1.0
    for entropy in entropies:
        survival *= max(1.0 - config.accept_slope * entropy / h_max, 0.0)
    return 1.0 - survival > config.algorithm_threshold


@register_stop_rule("banditspec")
def _banditspec_stop(entropies, h_max, config, bandit):
    if bandit is None or bandit.current_arm is None:
        raise ValueError("banditspec needs a bandit state with a selected arm")
    return len(entropies) >= bandit.current_arm


@register_stop_rule("fixed")
def _fixed_stop(entropies, h_max, config, bandit):
    return False


def adaptive_stop(
    algorithm: str,
    entropies: Sequence[float],
    h_max: float,
    config: WorkloadConfig,
    bandit: Optional[BanditState] = None,
) -> bool:
    """True when the current draft batch should end after its last token"""
    if not entropies:
        raise ValueError("adaptive_stop needs at least one drafted token")
    if len(entropies) > config.max_draft_len:
        raise ValueError("draft batch already exceeds max_draft_len")
    try:
        rule = STOP_RULE_REGISTRY[algorithm]
    except KeyError:
        raise ValueError(f"Unknown drafting algorithm '{algorithm}'") from None
    if len(entropies) == config.max_draft_len:
        return True
    return bool(rule(entropies, h_max, config, bandit))


def draft_length(
    entropies: Sequence[float],
    h_max: float,
    config: WorkloadConfig,
    bandit: Optional[BanditState] = None,
) -> int:
    """
    Length at which the configured rule stops a batch. `entropies` covers the positions up to
    max_draft_len or up to the end of generation, whichever comes first; the batch never runs
    past the last entropy given.
    """
    if not entropies:
        raise ValueError("draft_length needs the entropy of at least one position")
    limit = min(len(entropies), config.max_draft_len)
    for length in range(1, limit):
        if adaptive_stop(config.algorithm, entropies[:length], h_max, config, bandit):
            return length
    return limit
