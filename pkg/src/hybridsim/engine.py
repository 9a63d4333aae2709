"""Time-stepped engine: logical processes, end-of-step barrier, routing.

Entities are partitioned across logical processes (LPs). Each timestep
every LP updates its owned entities in ascending id order, then reports
end-of-step. At the barrier the engine updates the global position
table, runs any sub-simulator coordination, and routes the step's
broadcasts: wireless reach is evaluated against the position table and
every envelope is delivered at the start of the next timestep. One
timestep of flight latency, per-entity random streams and a canonical
inbox ordering together make results independent of the LP count.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import rng
from .metrics import InvariantMonitor, RunMetrics, StepReport
from .territory import World, broadcast_reach, entity_to_record, record_to_entity


class EngineError(Exception):
    pass


class StepExecutionError(EngineError):
    """An entity update failed; carries enough context to find it."""

    def __init__(self, lp_id: int, step: int, entity_id, cause):
        self.lp_id = lp_id
        self.step = step
        self.entity_id = entity_id
        super().__init__(
            f"entity update failed in lp={lp_id} step={step}"
            f" entity={entity_id}: {cause}"
        )


class BarrierTimeoutError(EngineError):
    """The end-of-step barrier did not complete in time."""

    def __init__(self, step: int, silent_lp_ids):
        self.step = step
        self.silent_lp_ids = tuple(silent_lp_ids)
        super().__init__(
            f"end-of-step barrier timed out at step {step};"
            f" no report from lp(s) {list(self.silent_lp_ids)}"
        )


@dataclass(frozen=True)
class EngineConfig:
    num_lps: int = 1
    total_timesteps: int = 900
    master_seed: int = 1
    timestep_duration: float = 1.0
    barrier_timeout: float = 60.0

    def __post_init__(self):
        if self.num_lps < 1:
            raise ValueError("num_lps must be >= 1")
        if self.total_timesteps < 1:
            raise ValueError("total_timesteps must be >= 1")
        if self.timestep_duration <= 0:
            raise ValueError("timestep_duration must be positive")


def partition_entities(entity_ids, num_lps: int, seed: int) -> dict:
    """Deal entity ids round-robin over a seeded shuffle.

    Sizes differ by at most one. The shuffle uses a dedicated named
    stream so partitioning never perturbs entity randomness.
    """
    ids = sorted(entity_ids)
    if not ids:
        raise ValueError("cannot partition an empty entity set")
    if num_lps < 1:
        raise ValueError("num_lps must be >= 1")
    if num_lps > len(ids):
        raise ValueError(
            f"num_lps ({num_lps}) exceeds entity count ({len(ids)})"
        )
    perm = rng.named_generator(seed, "partition").permutation(len(ids))
    shuffled = [ids[i] for i in perm]
    return {lp: sorted(shuffled[lp::num_lps]) for lp in range(num_lps)}


class InterLpEnvelope(NamedTuple):
    """One routed message copy in flight between steps."""

    produced_at: int
    dest: int
    sender: int
    sender_x: float
    sender_y: float
    message: object  # DisseminationMessage


def _envelope_order(env: InterLpEnvelope):
    return (env.message.message_id, env.sender)


class LogicalProcess:
    """Owns a disjoint set of entities and steps them in id order."""

    def __init__(self, lp_id: int, entities: dict):
        self.lp_id = lp_id
        self.entities = entities  # entity_id -> SimulatedEntity
        self.inbox: list = []

    def run_step(self, t: int, model, report: StepReport) -> list:
        """Update every owned entity once; returns this step's broadcasts.

        Per entity: consume pending envelopes in canonical order
        (message id, then sender id), then move, then maybe generate.
        A failure in any hook is re-raised with lp, step and entity ids.
        """
        inbox = self.inbox
        self.inbox = []
        by_dest = {}
        for env in inbox:
            if env.produced_at != t - 1:
                raise EngineError(
                    f"stale envelope in lp={self.lp_id} inbox at step {t}:"
                    f" produced_at={env.produced_at}"
                )
            by_dest.setdefault(env.dest, []).append(env)
        if by_dest:
            unknown = set(by_dest) - set(self.entities)
            if unknown:
                raise EngineError(
                    f"lp={self.lp_id} received envelopes for entities it"
                    f" does not own: {sorted(unknown)}"
                )
        outbox = []
        for eid in sorted(self.entities):
            e = self.entities[eid]
            try:
                model.begin_entity_step(e, t)
                pending = by_dest.get(eid)
                if pending:
                    pending.sort(key=_envelope_order)
                    for env in pending:
                        b = model.process_delivery(e, env, t, report)
                        if b is not None:
                            outbox.append(b)
                model.move(e, t)
                b = model.generate(e, t, report)
                if b is not None:
                    outbox.append(b)
            except Exception as exc:
                raise StepExecutionError(self.lp_id, t, eid, exc) from exc
        return outbox

    def positions(self):
        n = len(self.entities)
        ids = np.fromiter(sorted(self.entities), dtype=np.int64, count=n)
        xs = np.array([self.entities[i].x for i in ids])
        ys = np.array([self.entities[i].y for i in ids])
        return ids, xs, ys


class StepBarrier:
    """End-of-step bookkeeping: which LPs have reported for step t.

    wait_complete raises a timeout error naming the silent LPs. With a
    single LP the barrier completes immediately on its arrival. Arrival
    wall-clock times are kept for scheduling audits.
    """

    def __init__(self, lp_ids):
        self.lp_ids = frozenset(lp_ids)
        self._cond = threading.Condition()
        self._arrived = {}
        self._step = None
        self.trace = []  # (step, lp_id, perf_counter arrival)

    def begin_step(self, t: int) -> None:
        with self._cond:
            self._step = t
            self._arrived = {}

    def arrive(self, lp_id: int, t: int, payload=None) -> None:
        with self._cond:
            if t != self._step:
                raise EngineError(
                    f"lp={lp_id} reported end of step {t} during step"
                    f" {self._step}"
                )
            if lp_id not in self.lp_ids:
                raise EngineError(f"unknown lp_id {lp_id} at barrier")
            self._arrived[lp_id] = payload
            self.trace.append((t, lp_id, time.perf_counter()))
            self._cond.notify_all()

    def wait_complete(self, t: int, timeout: float) -> dict:
        """Block until every LP has arrived for step t; return payloads."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while set(self._arrived) != self.lp_ids:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    silent = sorted(self.lp_ids - set(self._arrived))
                    raise BarrierTimeoutError(t, silent)
                self._cond.wait(remaining)
            return dict(self._arrived)


class StepResult(NamedTuple):
    """What one LP hands to the barrier for one step."""

    lp_id: int
    report: StepReport
    outbox: list
    ids: np.ndarray
    xs: np.ndarray
    ys: np.ndarray


def route_broadcasts(world: World, broadcasts, interaction_range: float,
                     t: int, frozen, owner_of) -> tuple:
    """Turn this step's broadcasts into next step's per-LP inboxes.

    Reach is computed against the global position table (squared
    toroidal distance, sender excluded). Envelopes addressed to frozen
    entities are dropped here and counted; everything else is delivered
    at t + 1. Returns (inboxes by lp, routed count, frozen drop count).
    """
    inboxes = {}
    routed = 0
    frozen_drops = 0
    for b in broadcasts:
        receivers = broadcast_reach(world, (b.sender_x, b.sender_y),
                                    interaction_range, exclude=b.sender)
        routed += len(receivers)
        for r in receivers:
            r = int(r)
            if r in frozen:
                frozen_drops += 1
                continue
            env = InterLpEnvelope(t, r, b.sender, b.sender_x, b.sender_y,
                                  b.message)
            lp = owner_of[r]
            if lp in inboxes:
                inboxes[lp].append(env)
            else:
                inboxes[lp] = [env]
    return inboxes, routed, frozen_drops


class InProcessBackend:
    """All LPs stepped round-robin on one thread.

    With num_lps == 1 this is the plain sequential simulator; with more
    it keeps exactly the same barrier semantics as the process backend,
    which is what makes the two comparable event for event.
    """

    def __init__(self, config: EngineConfig, model_spec):
        self.config = config
        self.params = model_spec.params
        self.monitor = InvariantMonitor()
        self.model = model_spec.build_model(config.master_seed, self.monitor)
        assignment = partition_entities(range(model_spec.num_entities),
                                        config.num_lps, config.master_seed)
        self.lps = {lp_id: LogicalProcess(lp_id, self.model.build_entities(ids))
                    for lp_id, ids in assignment.items()}
        self.owner_of = {eid: lp_id for lp_id, ids in assignment.items()
                         for eid in ids}
        self.barrier = StepBarrier(assignment.keys())

    def initial_positions(self):
        return [lp.positions() for lp in self.lps.values()]

    def step(self, t: int, inboxes: dict) -> dict:
        self.barrier.begin_step(t)
        for lp_id in sorted(self.lps):
            lp = self.lps[lp_id]
            lp.inbox = inboxes.get(lp_id, [])
            report = StepReport()
            outbox = lp.run_step(t, self.model, report)
            ids, xs, ys = lp.positions()
            self.barrier.arrive(lp_id, t,
                                StepResult(lp_id, report, outbox, ids, xs, ys))
        return self.barrier.wait_complete(t, self.config.barrier_timeout)

    def extract(self, entity_ids) -> list:
        """Serialize and remove entities from their LPs."""
        records = []
        for eid in entity_ids:
            lp = self.lps[self.owner_of[eid]]
            records.append(entity_to_record(lp.entities.pop(eid)))
        return records

    def restore(self, records) -> None:
        for rec in records:
            e = record_to_entity(rec, self.config.master_seed, self.params)
            self.lps[self.owner_of[e.entity_id]].entities[e.entity_id] = e

    def entity_count(self) -> int:
        return sum(len(lp.entities) for lp in self.lps.values())

    def finish(self) -> InvariantMonitor:
        for lp in self.lps.values():
            self.model.collect_cache_stats(lp.entities)
        return self.monitor

    def close(self) -> None:
        pass


def run_simulation(config: EngineConfig, model_spec, hybrid=None,
                   mode: str = "auto", config_echo: Optional[dict] = None,
                   trace_barriers: bool = False) -> RunMetrics:
    """Run a complete simulation and return its metrics.

    mode selects the execution backend: "inprocess" steps every LP on
    this thread, "process" runs one OS process per LP, "auto" picks
    "process" when num_lps > 1. Counters are identical either way.
    hybrid, when given, is a coordination.HybridSpec describing when to
    hand entities off to fine-grained sub-simulators.
    """
    if mode not in ("auto", "inprocess", "process"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "auto":
        mode = "process" if config.num_lps > 1 else "inprocess"
    if config.num_lps > model_spec.num_entities:
        raise ValueError("num_lps exceeds entity count")

    start = time.perf_counter()
    if mode == "process":
        from .parallel import ProcessBackend
        backend = ProcessBackend(config, model_spec)
    else:
        backend = InProcessBackend(config, model_spec)

    metrics = RunMetrics(
        num_entities=model_spec.num_entities,
        num_lps=config.num_lps,
        total_timesteps=config.total_timesteps,
        master_seed=config.master_seed,
        config_echo=dict(config_echo or {}),
    )
    coordinator = None
    if hybrid is not None:
        from .coordination import HybridCoordinator
        coordinator = HybridCoordinator(hybrid, config, model_spec)

    try:
        world = World(model_spec.side, model_spec.num_entities)
        for ids, xs, ys in backend.initial_positions():
            world.update(ids, xs, ys)

        interaction_range = model_spec.params.interaction_range
        frozen = {}  # entity_id -> wrapper handle
        inboxes = {}
        final_step = config.total_timesteps - 1
        for t in range(config.total_timesteps):
            results = backend.step(t, inboxes)

            step_report = StepReport()
            all_broadcasts = []
            for lp_id in sorted(results):
                res = results[lp_id]
                step_report.merge(res.report)
                all_broadcasts.extend(res.outbox)
                world.update(res.ids, res.xs, res.ys)

            if coordinator is not None:
                coordinator.at_barrier(t, world, backend, frozen, metrics,
                                       force_end=(t == final_step))

            active = backend.entity_count()
            if active + len(frozen) != model_spec.num_entities:
                raise EngineError(
                    f"conservation violated at step {t}: {active} active"
                    f" + {len(frozen)} frozen != {model_spec.num_entities}"
                )

            if t < final_step:
                inboxes, routed, drops = route_broadcasts(
                    world, all_broadcasts, interaction_range, t, frozen,
                    backend.owner_of)
            else:
                # nothing can be delivered beyond the horizon: final-step
                # broadcasts die on the air and are not counted as routed
                inboxes, routed, drops = {}, 0, 0

            metrics.totals.merge(step_report)
            metrics.per_step.append(step_report)
            metrics.routed += routed
            metrics.routed_per_step.append(routed)
            metrics.frozen_drops += drops

        if coordinator is not None:
            coordinator.finish(metrics)
            if frozen:
                raise EngineError(
                    f"entities still frozen after final step: {sorted(frozen)}"
                )
            metrics.wrapper_transcripts = [
                {"wrapper_id": h.wrapper_id, "spawned_at": h.spawned_at,
                 "state": h.state, "lines": list(h.transcript)}
                for h in coordinator.history
            ]
        metrics.monitor = backend.finish()
        if trace_barriers:
            metrics.barrier_trace = list(backend.barrier.trace)
    finally:
        backend.close()

    metrics.wall_clock_seconds = time.perf_counter() - start
    metrics.check_accounting()
    return metrics
