# Event-driven simulation of asynchronous drafting on PIM and verification on the NPU

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from ahasdsim.config import ExperimentConfig, Variant
from ahasdsim.control.edc import (
    LLR_MAX,
    EdcState,
    on_dispatch,
    on_draft,
    on_verify,
    should_continue_drafting,
)
from ahasdsim.control.queues import (
    DraftBatch,
    FeedbackRecord,
    QueueSet,
    RollbackInfo,
    apply_feedback,
    apply_partial_preverify,
    commit_target_token,
    find_batch,
    head_batch,
    is_outstanding,
    mark_preverify,
    oldest_unverified,
    outstanding_batches,
    pop_for_verify,
    push_draft,
    speculative_length,
    unmark_preverify,
    waiting_batches,
)
from ahasdsim.control.tvc import (
    TABLE_SIZE,
    TvcState,
    predict_npu_cycles,
    predict_pim_draft_cycles,
    predict_pim_verify_cycles,
    preverify_decision,
    record_npu_observation,
    record_observation,
    update_ncr,
)
from ahasdsim.hardware.timing import (
    OpCost,
    attention_comm_cycles,
    dlm_draft_cycles,
    npu_device,
    pim_device,
    pim_preverify_cycles,
    tlm_verify_cycles,
)
from ahasdsim.simulation import (
    SimulationError,
    SimulatorMixin,
    effective_hardware,
    logger,
    register_simulator,
)
from ahasdsim.simulation.events import EventKind, EventQueue, SimEvent
from ahasdsim.utilities.utilities import cycles_to_ps, ps_to_cycles, to_fraction
from ahasdsim.workload.stop_rules import BanditState, draft_length


class NpuState(str, Enum):
    IDLE = "idle"
    VERIFYING = "verifying"
    AWAITING_FEEDBACK = "awaiting_feedback"


@dataclass
class Job:
    """One unit of device work between its start and completion events"""

    job_id: int
    kind: str
    start_ps: int
    end_ps: int
    energy: Tuple[float, float]
    batch_ids: Tuple[int, ...] = ()
    cycles: int = 0
    length: int = 0
    start_position: int = 0
    kv_len: int = 0
    phase: str = ""

    @property
    def duration_ps(self) -> int:
        return self.end_ps - self.start_ps

    def done_fraction(self, now_ps: int) -> float:
        return (now_ps - self.start_ps) / self.duration_ps if self.duration_ps else 1.0


@register_simulator(Variant.ASYNC, Variant.ASYNC_AAU, Variant.ASYNC_AAU_EDC, Variant.FULL)
class AsyncSimulator(SimulatorMixin):
    """
    The PIM drafts batches into the unverified queue while the NPU verifies the oldest ones.
    Depending on the variant the attention unit removes the activation round trips, the entropy
    predictor gates drafting and the cycle predictor slots pre-verifications into NPU windows.
    """

    def __init__(self, config: ExperimentConfig, **kwargs):
        super().__init__(config, **kwargs)
        variant = config.variant
        self.hardware = effective_hardware(config)
        self.model = config.model
        self.npu = npu_device(self.hardware)
        self.pim = pim_device(self.hardware)
        self.use_edc = variant.uses_edc
        self.use_tvc = variant.uses_tvc
        self.queues = QueueSet()
        self.edc = EdcState(h_max=self.model.h_max)
        freq_ratio = to_fraction(self.pim.freq_hz) / to_fraction(self.npu.freq_hz)
        self.tvc = TvcState(freq_ratio=freq_ratio)
        workload = config.workload
        self.bandit = (
            BanditState(workload.bandit_arms, workload.max_draft_len)
            if workload.algorithm == "banditspec"
            else None
        )
        self.events = EventQueue()
        self.transfer_ps = cycles_to_ps(self.hardware.queue_transfer_cycles, self.npu.freq_hz)
        self.switch_ps = cycles_to_ps(self.hardware.gtsu_switch_cycles, self.pim.freq_hz)
        self.attempts: Dict[int, int] = {}
        self.draft_ps: Dict[int, int] = {}
        self.next_batch_id = 1
        self.next_job_id = 1
        self.last_draft_len = 1
        self.pim_job: Optional[Job] = None
        self.npu_job: Optional[Job] = None
        self.npu_state = NpuState.IDLE
        self.npu_state_since = 0
        self.pending_feedback: List[FeedbackRecord] = []
        self.pending_target_position: Optional[int] = None
        self.tick_pending = False
        self.done = False
        self.finish_ps = 0
        self.preverify_audit: List[dict] = []

    @property
    def now(self) -> int:
        return self.events.now

    # Bookkeeping

    def _new_job(self, kind: str, duration_ps: int, energy, **fields) -> Job:
        job = Job(self.next_job_id, kind, self.now, self.now + duration_ps, energy, **fields)
        self.next_job_id += 1
        return job

    def _set_npu_state(self, state: NpuState) -> None:
        elapsed = self.now - self.npu_state_since
        if self.npu_state is NpuState.VERIFYING:
            self.counters.npu_busy_ps += elapsed
        elif self.npu_state is NpuState.IDLE:
            self.counters.npu_starved_ps += elapsed
        self.npu_state = state
        self.npu_state_since = self.now

    def _schedule_tick(self) -> None:
        if not self.tick_pending and not self.done:
            self.events.push(self.now, EventKind.SCHEDULER_TICK)
            self.tick_pending = True

    def _check_done(self) -> None:
        if not self.done and len(self.queues.committed) >= self.generation_length:
            self.done = True
            self.finish_ps = self.now

    def _close_pim_job(self, fraction: float = 1.0) -> int:
        job = self.pim_job
        elapsed = self.now - job.start_ps
        self.counters.pim_busy_ps += elapsed
        self.charge(job.energy, fraction)
        self.pim_job = None
        return elapsed

    def _warm_up(self) -> None:
        """Fills the three cycle tables from analytic profiles of short batches"""
        logger.info("Warming up cycle tables...")
        prompt = self.config.workload.prompt_len
        max_len = self.config.workload.max_draft_len
        for i in range(TABLE_SIZE):
            n = min(i + 1, max_len)
            draft, comm = self._draft_costs(n, prompt)
            draft_cycles = draft.cycles + comm.cycles * self.tvc.freq_ratio
            record_observation(self.tvc.pdct, draft_cycles, n)
            verify = pim_preverify_cycles(self.hardware, self.model, n, prompt)
            record_observation(self.tvc.pvct, verify.cycles, n)
            npu = tlm_verify_cycles(self.hardware, self.model, n, prompt + n, self.npu)
            record_npu_observation(self.tvc, npu.cycles, prompt + n)

    def _draft_costs(self, n: int, kv_len: int) -> Tuple[OpCost, OpCost]:
        draft = dlm_draft_cycles(self.hardware, self.model, n, kv_len, self.pim)
        comm = attention_comm_cycles(self.hardware, self.model, n, "dlm")
        if comm.device == draft.device:
            return draft + comm, OpCost(self.npu.name)
        return draft, comm

    # Drafting

    def _start_draft(self, start: int) -> None:
        workload = self.config.workload
        if self.bandit is not None:
            self.bandit.select_arm()
        horizon = min(start + workload.max_draft_len, self.generation_length)
        entropies = [self.workload.entropy(p) for p in range(start, horizon)]
        n = draft_length(entropies, self.model.h_max, workload, self.bandit)
        depth = waiting_batches(self.queues)
        tokens = []
        for position in range(start, start + n):
            attempt = self.attempts.get(position, 0)
            self.attempts[position] = attempt + 1
            tokens.append(self.workload.draft_token(position, depth, attempt))
        batch = DraftBatch(
            self.next_batch_id,
            tokens,
            entropies[:n],
            lookahead_depth_at_creation=depth,
            base_kv_len=start,
            delivered=False,
            arm=self.bandit.current_arm if self.bandit is not None else None,
        )
        self.next_batch_id += 1
        if self.use_edc:
            on_draft(self.edc, batch)
        push_draft(self.queues, batch)
        self.counters.draft_batches += 1
        self.counters.draft_len_sum += n
        self.counters.lookahead_depth_sum += depth

        draft, comm = self._draft_costs(n, workload.prompt_len + start)
        duration = cycles_to_ps(draft.cycles, self.pim.freq_hz) + cycles_to_ps(
            comm.cycles, self.npu.freq_hz
        )
        energy = tuple(a + b for a, b in zip(self.price(draft), self.price(comm)))
        self.pim_job = self._new_job(
            "draft", duration, energy, batch_ids=(batch.batch_id,), length=n
        )
        self.events.push(self.pim_job.end_ps, EventKind.DRAFT_DONE, job_id=self.pim_job.job_id)
        self.trace.write(
            "draft_start", self.now, batch_id=batch.batch_id, length=n, position=start, depth=depth
        )

    def _on_draft_done(self, event: SimEvent) -> None:
        job = self.pim_job
        if job is None or job.job_id != event.payload["job_id"]:
            return
        duration = self._close_pim_job()
        batch_id = job.batch_ids[0]
        self.draft_ps[batch_id] = duration
        self.last_draft_len = job.length
        record_observation(self.tvc.pdct, ps_to_cycles(duration, self.pim.freq_hz), job.length)
        self.trace.write("draft_done", self.now, batch_id=batch_id, draft_ps=duration)
        self.events.push(
            self.now + self.transfer_ps, EventKind.QUEUE_DELIVERY, queue="draft", batch_id=batch_id
        )
        self._schedule_tick()

    # Verification

    def _kick_npu(self) -> None:
        if self.done or self.npu_state is not NpuState.IDLE:
            return
        batches = pop_for_verify(self.queues, self.config.policy.max_batches_per_verify)
        if batches and self.use_edc:
            on_dispatch(self.edc, waiting_batches(self.queues))
        self._check_done()
        if not batches or self.done:
            return
        ids = tuple(b.batch_id for b in batches)
        if self.pim_job is not None and self.pim_job.kind == "preverify":
            if self.pim_job.phase != "switch_out" and self.pim_job.batch_ids[0] in ids:
                self._abort_pim_job("popped for verification")
        total = sum(len(b) for b in batches)
        kv_len = self.config.workload.prompt_len + batches[0].base_kv_len + total
        cost = tlm_verify_cycles(self.hardware, self.model, total, kv_len, self.npu)
        duration = cycles_to_ps(cost.cycles, self.npu.freq_hz)
        self.npu_job = self._new_job(
            "verify", duration, self.price(cost), batch_ids=ids, cycles=cost.cycles, kv_len=kv_len
        )
        self._set_npu_state(NpuState.VERIFYING)
        update_ncr(self.tvc, 0)
        self.events.push(self.npu_job.end_ps, EventKind.VERIFY_DONE, job_id=self.npu_job.job_id)
        predicted = {}
        if self.use_tvc:
            predicted["npu_pred"] = float(predict_npu_cycles(self.tvc, kv_len))
        self.trace.write(
            "verify_start",
            self.now,
            batch_ids=list(ids),
            kv_len=kv_len,
            cycles=cost.cycles,
            **predicted,
        )
        self._schedule_tick()

    def _judge(self, batch: DraftBatch, offset: int, length: int, tally_from: int = 0) -> int:
        """Accepted run of batch tokens [offset, offset + length) against the target model"""
        accepted = 0
        depth = batch.lookahead_depth_at_creation
        for i in range(offset, offset + length):
            ok = batch.tokens[i] == self.workload.oracle_token(batch.base_kv_len + i)
            if i >= tally_from:
                self.counters.tally_depth(depth, ok)
            if not ok:
                break
            accepted += 1
        return accepted

    def _on_verify_done(self, event: SimEvent) -> None:
        job = self.npu_job
        if job is None or job.job_id != event.payload["job_id"]:
            return
        self.charge(job.energy)
        record_npu_observation(self.tvc, job.cycles, job.kv_len)
        records = []
        target_position = None
        for batch_id in job.batch_ids:
            if not is_outstanding(self.queues, batch_id):
                continue
            batch = find_batch(self.queues, batch_id)
            accepted = self._judge(batch, 0, len(batch), tally_from=batch.preverified_len)
            full = accepted == len(batch)
            correction = None if full else self.workload.oracle_token(batch.base_kv_len + accepted)
            records.append(FeedbackRecord(batch_id, accepted, full, correction))
            target_position = batch.base_kv_len + len(batch) if full else None
            if not full:
                break
        self.pending_target_position = target_position
        self.npu_job = None
        self._set_npu_state(NpuState.AWAITING_FEEDBACK)
        self.pending_feedback = records
        self.events.push(
            self.now + self.transfer_ps,
            EventKind.QUEUE_DELIVERY,
            queue="feedback",
            batch_ids=[r.batch_id for r in records],
        )

    def _on_delivery(self, event: SimEvent) -> None:
        if event.payload["queue"] == "draft":
            batch_id = event.payload["batch_id"]
            if is_outstanding(self.queues, batch_id):
                find_batch(self.queues, batch_id).delivered = True
            self._kick_npu()
            return
        records, self.pending_feedback = self.pending_feedback, []
        for record in records:
            if not is_outstanding(self.queues, record.batch_id):
                continue
            batch = find_batch(self.queues, record.batch_id)
            self._resolve(batch, record)
        if self.pending_target_position is not None:
            self._take_target_token(self.pending_target_position)
            self.pending_target_position = None
        self._set_npu_state(NpuState.IDLE)
        self._check_done()
        self._kick_npu()
        self._schedule_tick()

    def _resolve(self, batch: DraftBatch, record: FeedbackRecord) -> RollbackInfo:
        accepted_before = batch.drafted_len - len(batch)
        info = apply_feedback(self.queues, record)
        if self.use_edc:
            on_verify(self.edc, batch, record, waiting=waiting_batches(self.queues))
        if self.bandit is not None and batch.arm is not None:
            self.bandit.update(batch.arm, accepted_before + record.accepted_prefix_len)
        self.trace.write(
            "feedback",
            self.now,
            batch_id=batch.batch_id,
            accepted=record.accepted_prefix_len,
            fully_accepted=record.fully_accepted,
        )
        for purged in info.purged_ids:
            wasted = self.draft_ps.pop(purged, 0)
            self.counters.pim_wasted_ps += wasted
            self.trace.write("purge", self.now, batch_id=purged, draft_ps=wasted)
        if (
            self.pim_job is not None
            and self.pim_job.batch_ids
            and self.pim_job.phase != "switch_out"
            and not is_outstanding(self.queues, self.pim_job.batch_ids[0])
        ):
            self._abort_pim_job("batch settled or rolled back")
        self._check_done()
        return info

    def _take_target_token(self, position: int) -> None:
        """
        A pass that accepts all of its batches also yields the target model's token after them.
        With nothing outstanding it is committed as is; otherwise it settles the first token of
        the batch drafted from that position, unless a verification or pre-verification already
        holds that batch.
        """
        qs = self.queues
        if position != len(qs.committed) or position >= self.generation_length:
            return
        token = self.workload.oracle_token(position)
        head = head_batch(qs)
        if head is None:
            commit_target_token(qs, token)
            self.trace.write("target_token", self.now, position=position)
            self._check_done()
            return
        if (
            head.base_kv_len != position
            or head.resolved
            or head.preverified_len
            or head.batch_id in qs.preverify
            or head.batch_id in qs.in_verification
        ):
            return
        if not self._judge(head, 0, 1):
            self._resolve(head, FeedbackRecord(head.batch_id, 0, False, token))
        elif len(head) == 1:
            self._resolve(head, FeedbackRecord(head.batch_id, 1, True))
        else:
            apply_partial_preverify(qs, head.batch_id, 1)
            self._check_done()

    def _abort_pim_job(self, reason: str) -> None:
        job = self.pim_job
        elapsed = self._close_pim_job(job.done_fraction(self.now))
        self.counters.pim_wasted_ps += elapsed
        self.trace.write(
            "abort", self.now, job=job.kind, batch_id=job.batch_ids[0], elapsed_ps=elapsed
        )
        logger.debug(f"abort {job.kind} of batch {job.batch_ids[0]}: {reason}")
        if job.kind == "preverify":
            unmark_preverify(self.queues, job.batch_ids[0])
            switch = OpCost(self.pim.name, cycles=self.hardware.gtsu_switch_cycles)
            self.pim_job = self._new_job("switch", self.switch_ps, self.price(switch))
            self.events.push(self.pim_job.end_ps, EventKind.SWITCH_DONE, job_id=self.pim_job.job_id)
        else:
            self._schedule_tick()

    # Pre-verification

    def _try_preverify(self) -> bool:
        job = self.npu_job
        if not self.tvc.warm or job is None:
            return False
        target = oldest_unverified(self.queues)
        if target is None:
            return False
        remaining = len(target) - target.preverified_len
        if remaining < 1:
            return False
        update_ncr(self.tvc, ps_to_cycles(self.now - job.start_ps, self.pim.freq_hz))
        length = preverify_decision(self.tvc, job.kv_len, self.last_draft_len, remaining)
        if length is None:
            return False
        self.preverify_audit.append(
            {
                "time_ps": self.now,
                "batch_id": target.batch_id,
                "length": length,
                "npu_pred": predict_npu_cycles(self.tvc, job.kv_len),
                "ncr": self.tvc.ncr,
                "preverify_pred": predict_pim_verify_cycles(self.tvc, length),
                "draft_pred": predict_pim_draft_cycles(self.tvc, self.last_draft_len),
                "remaining_tokens": remaining,
            }
        )
        mark_preverify(self.queues, target.batch_id)
        start = target.base_kv_len + target.preverified_len
        cost = pim_preverify_cycles(
            self.hardware, self.model, length, self.config.workload.prompt_len + start
        )
        compute_cycles = cost.cycles - 2 * self.hardware.gtsu_switch_cycles
        compute_ps = cycles_to_ps(compute_cycles, self.pim.freq_hz)
        self.pim_job = self._new_job(
            "preverify",
            2 * self.switch_ps + compute_ps,
            self.price(cost),
            batch_ids=(target.batch_id,),
            cycles=cost.cycles,
            length=length,
            start_position=start,
            phase="switch_in",
        )
        self.counters.preverify_count += 1
        self.counters.preverify_tokens += length
        self.events.push(
            self.now + self.switch_ps, EventKind.SWITCH_DONE, job_id=self.pim_job.job_id
        )
        self.trace.write(
            "preverify_start", self.now, batch_id=target.batch_id, length=length, position=start
        )
        return True

    def _on_switch_done(self, event: SimEvent) -> None:
        job = self.pim_job
        if job is None or job.job_id != event.payload["job_id"]:
            return
        if job.kind == "preverify" and job.phase == "switch_in":
            job.phase = "compute"
            self.events.push(
                job.end_ps - self.switch_ps, EventKind.PREVERIFY_DONE, job_id=job.job_id
            )
            return
        self._close_pim_job()
        self._schedule_tick()

    def _on_preverify_done(self, event: SimEvent) -> None:
        job = self.pim_job
        if job is None or job.job_id != event.payload["job_id"] or job.phase != "compute":
            return
        record_observation(self.tvc.pvct, job.cycles, job.length)
        batch = find_batch(self.queues, job.batch_ids[0])
        offset = job.start_position - batch.base_kv_len
        accepted = self._judge(batch, offset, job.length)
        unmark_preverify(self.queues, batch.batch_id)
        self.trace.write(
            "preverify_done",
            self.now,
            batch_id=batch.batch_id,
            accepted=accepted,
            length=job.length,
        )
        job.phase = "switch_out"
        job.batch_ids = ()
        self.events.push(job.end_ps, EventKind.SWITCH_DONE, job_id=job.job_id)
        if accepted < job.length:
            prefix = offset + accepted
            correction = self.workload.oracle_token(batch.base_kv_len + prefix)
            self._resolve(batch, FeedbackRecord(batch.batch_id, prefix, False, correction))
        elif offset + job.length == len(batch):
            self._resolve(batch, FeedbackRecord(batch.batch_id, len(batch), True))
        else:
            apply_partial_preverify(self.queues, batch.batch_id, offset + job.length)
            self._check_done()
        self._kick_npu()

    # Scheduling

    def _on_tick(self, event: SimEvent) -> None:
        self.tick_pending = False
        if self.done or self.pim_job is not None:
            return
        start = speculative_length(self.queues)
        room = (
            start < self.generation_length
            and outstanding_batches(self.queues) < self.config.policy.max_unverified_batches
        )
        if not room:
            if self.use_tvc:
                self._try_preverify()
            return
        if self.use_edc and not should_continue_drafting(self.edc):
            if not self.use_tvc or self._try_preverify():
                return
        self._start_draft(start)

    def _check_leading_length(self) -> None:
        waiting = waiting_batches(self.queues)
        if self.edc.llr != min(waiting, LLR_MAX):
            raise SimulationError(
                f"leading length {self.edc.llr} disagrees with {waiting} waiting batches "
                f"at {self.now} ps"
            )

    def _debug_dump(self) -> None:
        self.trace.write(
            "debug",
            self.now,
            committed=len(self.queues.committed),
            outstanding=outstanding_batches(self.queues),
            npu_state=self.npu_state.value,
            edc=self.edc.snapshot() if self.use_edc else None,
            tvc=self.tvc.snapshot() if self.use_tvc else None,
        )

    def run(self) -> bool:
        logger.info(
            f"Simulating {self.config.variant.value} for {self.generation_length} tokens "
            f"(seed {self.config.seed})"
        )
        handlers = {
            EventKind.VERIFY_DONE: self._on_verify_done,
            EventKind.PREVERIFY_DONE: self._on_preverify_done,
            EventKind.SWITCH_DONE: self._on_switch_done,
            EventKind.DRAFT_DONE: self._on_draft_done,
            EventKind.QUEUE_DELIVERY: self._on_delivery,
            EventKind.SCHEDULER_TICK: self._on_tick,
        }
        if self.use_tvc:
            self._warm_up()
        self._schedule_tick()
        max_events = self.config.policy.max_events
        while not self.done:
            if not self.events:
                raise SimulationError(
                    f"simulation stalled at {self.now} ps with "
                    f"{len(self.queues.committed)} of {self.generation_length} tokens committed"
                )
            event = self.events.pop()
            self.counters.events += 1
            if self.counters.events > max_events:
                raise SimulationError(f"event cap of {max_events} reached at {self.now} ps")
            self.trace.write("event", event.time_ps, kind=event.kind.name.lower(), **event.payload)
            handlers[event.kind](event)
            if self.use_edc:
                self._check_leading_length()
            if self.debug_dump_every and self.counters.events % self.debug_dump_every == 0:
                self._debug_dump()
        self._finalize_counters()
        self.finish(self.queues.committed[: self.generation_length])
        return True

    def _finalize_counters(self) -> None:
        counters = self.counters
        self._set_npu_state(self.npu_state)
        if self.npu_job is not None:
            self.charge(self.npu_job.energy, self.npu_job.done_fraction(self.now))
        if self.pim_job is not None:
            self._close_pim_job(self.pim_job.done_fraction(self.now))
        wall = self.finish_ps
        counters.wall_time_ps = wall
        energy = self.config.energy
        npu_idle = ps_to_cycles(max(wall - counters.npu_busy_ps, 0), self.npu.freq_hz)
        pim_idle = ps_to_cycles(max(wall - counters.pim_busy_ps, 0), self.pim.freq_hz)
        counters.compute_energy_pj += float(npu_idle) * energy.npu_background_pj_per_cycle
        counters.memory_energy_pj += float(pim_idle) * energy.pim_background_pj_per_cycle
        qs = self.queues
        counters.drafted_tokens = qs.drafted_tokens
        counters.accepted_draft_tokens = qs.accepted_tokens
        counters.rejected_draft_tokens = qs.rejected_tokens
        counters.purged_tokens = qs.purged_tokens
        counters.correction_tokens = qs.correction_tokens
