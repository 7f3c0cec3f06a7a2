# Main workload module defining the token process consumed by the simulators

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ahasdsim.config import WorkloadConfig
from ahasdsim.utilities.utilities import keyed_generator

# A global dictionary to register the adaptive drafting stop rules
STOP_RULE_REGISTRY = {}

ACCEPTANCE_STREAM_KEY = 0xACCE


# Decorator to register a stop rule under its algorithm tag
def register_stop_rule(name: str):
    def decorator(func):
        STOP_RULE_REGISTRY[name] = func
        return func

    return decorator


# Create a logging service
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepOutcome:
    entropy: float
    accepted: bool
    oracle_token: int


@dataclass(frozen=True)
class TraceRecord:
    step_index: int
    entropy: float
    accepted: bool

    def __post_init__(self):
        if self.entropy < 0:
            raise ValueError(f"entropy must be non-negative, got {self.entropy}")


class WorkloadSource(ABC):
    """
    Per-position token process. Entropies and oracle tokens depend only on the seed and the
    sequence position, so every variant sees the same sequence. Acceptance coins come from a
    counter-based stream keyed by (position, attempt).
    """

    def __init__(self, config: WorkloadConfig, h_max: float, vocab_size: int, seed: int):
        self.config = config
        self.h_max = h_max
        self.vocab_size = vocab_size
        self.seed = seed
        self._oracle_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0AC1E]))
        self._oracle_tokens = []

    @abstractmethod
    def entropy(self, position: int) -> float:
        pass

    @abstractmethod
    def acceptance_probability(self, position: int, lookahead_depth: int) -> float:
        pass

    def oracle_token(self, position: int) -> int:
        while len(self._oracle_tokens) <= position:
            self._oracle_tokens.append(int(self._oracle_rng.integers(0, self.vocab_size)))
        return self._oracle_tokens[position]

    def acceptance_uniform(self, position: int, attempt: int) -> float:
        return float(
            keyed_generator(self.seed, ACCEPTANCE_STREAM_KEY, position, attempt).random()
        )

    def step(self, position: int, lookahead_depth: int, attempt: int = 0) -> StepOutcome:
        p = self.acceptance_probability(position, lookahead_depth)
        return StepOutcome(
            entropy=self.entropy(position),
            accepted=self.acceptance_uniform(position, attempt) < p,
            oracle_token=self.oracle_token(position),
        )

    def draft_token(self, position: int, lookahead_depth: int, attempt: int = 0) -> int:
        """The token the draft model proposes: the oracle token when the step is accepted"""
        outcome = self.step(position, lookahead_depth, attempt)
        if outcome.accepted:
            return outcome.oracle_token
        return (outcome.oracle_token + 1) % self.vocab_size
