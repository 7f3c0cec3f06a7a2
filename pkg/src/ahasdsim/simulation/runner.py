# Entry points that pick the simulator for a config and return its report

from typing import IO, Iterable, List, Optional, Sequence

from ahasdsim.config import ExperimentConfig, Variant
from ahasdsim.metrics import MetricsReport
from ahasdsim.simulation import SIMULATOR_REGISTRY, SimulatorMixin, logger

# Importing the simulator modules fills the registry
from ahasdsim.simulation import baselines, engine  # noqa: F401


def make_simulator(
    config: ExperimentConfig,
    overrides: Sequence[str] = (),
    event_trace: Optional[IO[str]] = None,
    debug_dump_every: int = 0,
) -> SimulatorMixin:
    try:
        simulator_class = SIMULATOR_REGISTRY[Variant(config.variant).value]
    except KeyError:
        raise ValueError(f"No simulator registered for variant '{config.variant}'")
    return simulator_class(
        config,
        overrides=overrides,
        event_trace=event_trace,
        debug_dump_every=debug_dump_every,
    )


def run_experiment(
    config: ExperimentConfig,
    overrides: Sequence[str] = (),
    event_trace: Optional[IO[str]] = None,
    debug_dump_every: int = 0,
) -> MetricsReport:
    """
    Simulates one configuration to completion.
    Parameters
    ----------
    config : ExperimentConfig
        the validated experiment; its variant selects the simulator.
    overrides : Sequence[str]
        the key=value overrides that produced the config, echoed into the report.
    event_trace : IO[str], optional
        stream receiving one JSON record per event.
    debug_dump_every : int
        when positive, add a state snapshot to the trace every that many events.
    Returns
    -------
    report : MetricsReport
    """
    simulator = make_simulator(config, overrides, event_trace, debug_dump_every)
    simulator.run()
    return simulator.report


def run_many(
    configs: Iterable[ExperimentConfig], overrides: Sequence[str] = ()
) -> List[MetricsReport]:
    """Runs every config in turn; reports come back sorted by (variant, seed)"""
    reports = []
    for config in configs:
        logger.info(f"Running {config.label_or_variant} with seed {config.seed}")
        reports.append(run_experiment(config, overrides))
    return sorted(reports, key=lambda r: (r.variant, r.seed))
