# Baselines without draft/verify overlap: one device doing everything, and operator-level splitting

from abc import abstractmethod
from dataclasses import dataclass
from typing import List, Tuple

import pandas as pd

from ahasdsim.config import ExperimentConfig, Variant
from ahasdsim.hardware.timing import (
    Device,
    attention_comm_cycles,
    dlm_draft_cycles,
    gpu_device,
    npu_device,
    pim_device,
    tlm_attention_phase,
    tlm_projection_phase,
    tlm_verify_cycles,
)
from ahasdsim.simulation import SimulatorMixin, effective_hardware, logger, register_simulator
from ahasdsim.utilities.utilities import cycles_to_ps, ps_to_cycles
from ahasdsim.workload.stop_rules import BanditState, draft_length

ITERATION_COLUMNS = [
    "position",
    "draft_len",
    "accepted",
    "draft_ps",
    "npu_phase_ps",
    "pim_phase_ps",
    "sync_ps",
    "pim_share",
]


@dataclass
class IterationTiming:
    draft_ps: int
    npu_phase_ps: int
    pim_phase_ps: int
    energy: Tuple[float, float]

    @property
    def verify_ps(self) -> int:
        return max(self.npu_phase_ps, self.pim_phase_ps)

    @property
    def sync_ps(self) -> int:
        if not self.pim_phase_ps or not self.npu_phase_ps:
            return 0
        return abs(self.npu_phase_ps - self.pim_phase_ps)

    @property
    def pim_share(self) -> float:
        """Fraction of the iteration the PIM spends drafting or in its attention phase"""
        total = self.draft_ps + self.verify_ps
        return (self.draft_ps + self.pim_phase_ps) / total if total else 0.0


class LockstepSimulator(SimulatorMixin):
    """
    Draft a batch, verify it, commit, repeat. The verifier also emits the target model's next
    token when the whole batch is accepted.
    """

    def __init__(self, config: ExperimentConfig, **kwargs):
        super().__init__(config, **kwargs)
        self.hardware = effective_hardware(config)
        self.model = config.model
        workload = config.workload
        self.bandit = (
            BanditState(workload.bandit_arms, workload.max_draft_len)
            if workload.algorithm == "banditspec"
            else None
        )
        self.committed: List[int] = []
        self.rows: List[dict] = []

    @property
    def iterations(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=ITERATION_COLUMNS)

    @abstractmethod
    def iteration_timing(self, position: int, draft_len: int) -> IterationTiming:
        pass

    @abstractmethod
    def account(self, timing: IterationTiming) -> None:
        """Adds one iteration's busy and stall time to the counters"""

    def settle(self) -> None:
        """Charges whatever the loop itself does not, once the run is over"""

    def _draft(self, position: int) -> List[int]:
        workload = self.config.workload
        if self.bandit is not None:
            self.bandit.select_arm()
        horizon = min(position + workload.max_draft_len, self.generation_length)
        entropies = [self.workload.entropy(p) for p in range(position, horizon)]
        n = draft_length(entropies, self.model.h_max, workload, self.bandit)
        return [self.workload.draft_token(p, 0) for p in range(position, position + n)]

    def _verify(self, position: int, tokens: List[int]) -> int:
        accepted = 0
        for i, token in enumerate(tokens):
            ok = token == self.workload.oracle_token(position + i)
            self.counters.tally_depth(0, ok)
            if not ok:
                break
            accepted += 1
        self.committed.extend(tokens[:accepted])
        end = position + accepted
        if accepted < len(tokens):
            self.committed.append(self.workload.oracle_token(end))
            self.counters.correction_tokens += 1
        elif end < self.generation_length:
            self.committed.append(self.workload.oracle_token(end))
        return accepted

    def run(self) -> bool:
        logger.info(
            f"Simulating {self.config.variant.value} for {self.generation_length} tokens "
            f"(seed {self.config.seed})"
        )
        counters = self.counters
        while len(self.committed) < self.generation_length:
            position = len(self.committed)
            tokens = self._draft(position)
            timing = self.iteration_timing(position, len(tokens))
            accepted = self._verify(position, tokens)
            if self.bandit is not None:
                self.bandit.update(self.bandit.current_arm, accepted)
            counters.events += 1
            counters.draft_batches += 1
            counters.draft_len_sum += len(tokens)
            counters.drafted_tokens += len(tokens)
            counters.accepted_draft_tokens += accepted
            counters.rejected_draft_tokens += len(tokens) - accepted
            counters.wall_time_ps += timing.draft_ps + timing.verify_ps
            self.charge(timing.energy)
            self.account(timing)
            self.rows.append(
                {
                    "position": position,
                    "draft_len": len(tokens),
                    "accepted": accepted,
                    "draft_ps": timing.draft_ps,
                    "npu_phase_ps": timing.npu_phase_ps,
                    "pim_phase_ps": timing.pim_phase_ps,
                    "sync_ps": timing.sync_ps,
                    "pim_share": timing.pim_share,
                }
            )
            self.trace.write(
                "iteration",
                counters.wall_time_ps,
                position=position,
                draft_len=len(tokens),
                accepted=accepted,
            )
        self.settle()
        self.finish(self.committed[: self.generation_length])
        return True


@register_simulator(Variant.GPU_ONLY, Variant.NPU_ONLY)
class SequentialSimulator(LockstepSimulator):
    """Both models on a single device; the other devices stay unused"""

    def __init__(self, config: ExperimentConfig, **kwargs):
        super().__init__(config, **kwargs)
        if config.variant is Variant.GPU_ONLY:
            self.device: Device = gpu_device(config.baseline)
        else:
            self.device = npu_device(self.hardware)

    def iteration_timing(self, position: int, draft_len: int) -> IterationTiming:
        kv_len = self.config.workload.prompt_len + position
        draft = dlm_draft_cycles(self.hardware, self.model, draft_len, kv_len, self.device)
        verify = tlm_verify_cycles(
            self.hardware, self.model, draft_len, kv_len + draft_len, self.device
        )
        energy = tuple(a + b for a, b in zip(self.price(draft), self.price(verify)))
        return IterationTiming(
            draft_ps=cycles_to_ps(draft.cycles, self.device.freq_hz),
            npu_phase_ps=cycles_to_ps(verify.cycles, self.device.freq_hz),
            pim_phase_ps=0,
            energy=energy,
        )

    def account(self, timing: IterationTiming) -> None:
        self.counters.npu_busy_ps += timing.draft_ps + timing.npu_phase_ps


@register_simulator(Variant.OP_SYNC)
class OperatorSyncSimulator(LockstepSimulator):
    """
    Drafting on the PIM, then a verification split by operator: projections on the NPU and
    attention on the PIM, joined by a barrier at the end of every step. Operator placement is
    approximated at the granularity of these two phases.
    """

    def __init__(self, config: ExperimentConfig, **kwargs):
        super().__init__(config, **kwargs)
        self.npu = npu_device(self.hardware)
        self.pim = pim_device(self.hardware)
        self.note = "operator placement approximated as a projection/attention split"

    def iteration_timing(self, position: int, draft_len: int) -> IterationTiming:
        kv_len = self.config.workload.prompt_len + position
        draft = dlm_draft_cycles(self.hardware, self.model, draft_len, kv_len, self.pim)
        draft_comm = attention_comm_cycles(self.hardware, self.model, draft_len, "dlm")
        draft_ps = cycles_to_ps(draft.cycles, self.pim.freq_hz) + cycles_to_ps(
            draft_comm.cycles, self.npu.freq_hz
        )
        costs = [draft, draft_comm]
        if self.config.baseline.opsync_attention_on_pim:
            projections = tlm_projection_phase(self.hardware, self.model, draft_len, self.npu)
            attention = tlm_attention_phase(self.model, draft_len, kv_len + draft_len, self.pim)
            verify_comm = attention_comm_cycles(self.hardware, self.model, draft_len, "tlm")
            costs += [projections, attention, verify_comm]
            npu_ps = cycles_to_ps(projections.cycles, self.npu.freq_hz)
            pim_ps = cycles_to_ps(attention.cycles, self.pim.freq_hz) + cycles_to_ps(
                verify_comm.cycles, self.npu.freq_hz
            )
        else:
            verify = tlm_verify_cycles(
                self.hardware, self.model, draft_len, kv_len + draft_len, self.npu
            )
            costs.append(verify)
            npu_ps, pim_ps = cycles_to_ps(verify.cycles, self.npu.freq_hz), 0
        compute = sum(self.price(c)[0] for c in costs)
        memory = sum(self.price(c)[1] for c in costs)
        return IterationTiming(draft_ps, npu_ps, pim_ps, (compute, memory))

    def account(self, timing: IterationTiming) -> None:
        counters = self.counters
        counters.npu_busy_ps += timing.npu_phase_ps
        counters.npu_starved_ps += timing.draft_ps + timing.verify_ps - timing.npu_phase_ps
        counters.pim_busy_ps += timing.draft_ps + timing.pim_phase_ps
        counters.sync_overhead_ps += timing.sync_ps
        if timing.pim_phase_ps:
            counters.pim_shares.append(timing.pim_share)

    def settle(self) -> None:
        counters = self.counters
        energy = self.config.energy
        wall = counters.wall_time_ps
        npu_idle = ps_to_cycles(max(wall - counters.npu_busy_ps, 0), self.npu.freq_hz)
        pim_idle = ps_to_cycles(max(wall - counters.pim_busy_ps, 0), self.pim.freq_hz)
        counters.compute_energy_pj += float(npu_idle) * energy.npu_background_pj_per_cycle
        counters.memory_energy_pj += float(pim_idle) * energy.pim_background_pj_per_cycle
