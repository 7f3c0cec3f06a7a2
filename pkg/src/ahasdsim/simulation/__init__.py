# Main simulation module defining the simulator superclass and its registry

import logging
from abc import ABC, abstractmethod
from typing import IO, Dict, List, Optional, Sequence, Tuple, Type

from ahasdsim.config import ExperimentConfig, HardwareConfig, Variant
from ahasdsim.hardware.timing import OpCost, energy_breakdown
from ahasdsim.metrics import MetricsReport, RawCounters, finalize
from ahasdsim.simulation.events import EventTrace
from ahasdsim.utilities.utilities import convert_time
from ahasdsim.workload import WorkloadSource
from ahasdsim.workload.trace import make_workload

# We are defining a global dictionary to register the simulator of every variant
SIMULATOR_REGISTRY: Dict[str, Type["SimulatorMixin"]] = {}


# Decorator to register a simulator class for one or more variants
def register_simulator(*variants: Variant):
    def decorator(cls):
        for variant in variants:
            SIMULATOR_REGISTRY[Variant(variant).value] = cls
        return cls

    return decorator


# Create a logging service
logger = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """Raised when a run cannot complete: an event cap, a stall or a broken invariant"""


def effective_hardware(config: ExperimentConfig) -> HardwareConfig:
    """The hardware section with the attention unit switched off for variants that lack it"""
    hardware = config.hardware
    return hardware.model_copy(
        update={"aau_enabled": hardware.aau_enabled and config.variant.uses_aau}
    )


class SimulatorMixin(ABC):
    """Shared state and bookkeeping for every simulated variant"""

    def __init__(
        self,
        config: ExperimentConfig,
        overrides: Sequence[str] = (),
        event_trace: Optional[IO[str]] = None,
        debug_dump_every: int = 0,
    ):
        if debug_dump_every < 0:
            raise ValueError("debug_dump_every must be non-negative")
        self.config = config
        self.overrides = list(overrides)
        self.trace = EventTrace(event_trace)
        self.debug_dump_every = debug_dump_every
        self.counters = RawCounters()
        self.workload: WorkloadSource = make_workload(config)
        self.note = ""
        self.report: Optional[MetricsReport] = None

    @property
    def generation_length(self) -> int:
        return self.config.generation_length

    def charge(self, energy: Tuple[float, float], fraction: float = 1.0) -> None:
        compute, memory = energy
        self.counters.compute_energy_pj += compute * fraction
        self.counters.memory_energy_pj += memory * fraction

    def price(self, cost: OpCost) -> Tuple[float, float]:
        return energy_breakdown(cost, self.config.energy)

    def check_lossless(self, committed: List[int]) -> None:
        """Every committed token must equal the target model's own greedy choice"""
        for position, token in enumerate(committed):
            expected = self.workload.oracle_token(position)
            if token != expected:
                raise SimulationError(
                    f"committed token {token} at position {position} differs from the target "
                    f"model's token {expected}"
                )

    def finish(self, committed: List[int]) -> None:
        self.check_lossless(committed)
        self.counters.committed_tokens = len(committed)
        self.report = finalize(self.counters, self.config, self.overrides, self.note)
        logger.info(
            f"{self.config.label_or_variant} seed {self.config.seed}: "
            f"{self.report.throughput_tokens_per_sec:.2f} tokens/s over "
            f"{convert_time(self.counters.wall_time_ps, 'picosecond', 'millisecond'):.1f} ms"
        )

    @abstractmethod
    def run(self) -> bool:
        pass
