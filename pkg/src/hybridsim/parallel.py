"""Process-parallel backend: one OS process per logical process.

The parent owns the barrier, routing and coordination; workers own
entity state and step it on command. Command/response traffic runs
over pipes. Counters are bit-identical to the in-process backend
because partitioning, per-entity streams and the canonical inbox
order are all independent of where an entity happens to live.
"""

from __future__ import annotations

import multiprocessing as mp
import time
from multiprocessing.connection import wait as conn_wait

from .engine import (
    BarrierTimeoutError,
    EngineError,
    StepBarrier,
    StepExecutionError,
    StepResult,
    partition_entities,
)
from .metrics import InvariantMonitor, StepReport


def _worker(lp_id: int, conn, config, model_spec, entity_ids) -> None:
    from .engine import LogicalProcess  # fresh import under spawn start method

    monitor = InvariantMonitor()
    model = model_spec.build_model(config.master_seed, monitor)
    lp = LogicalProcess(lp_id, model.build_entities(entity_ids))
    ids, xs, ys = lp.positions()
    conn.send(("hello", lp_id, ids, xs, ys))
    while True:
        msg = conn.recv()
        op = msg[0]
        if op == "step":
            _, t, inbox = msg
            lp.inbox = inbox
            report = StepReport()
            try:
                outbox = lp.run_step(t, model, report)
            except StepExecutionError as exc:
                conn.send(("error", lp_id, t, exc.entity_id, str(exc)))
                continue
            except EngineError as exc:
                conn.send(("error", lp_id, t, None, str(exc)))
                continue
            ids, xs, ys = lp.positions()
            conn.send(("result",
                       StepResult(lp_id, report, outbox, ids, xs, ys)))
        elif op == "extract":
            from .territory import entity_to_record
            _, eids = msg
            records = [entity_to_record(lp.entities.pop(e)) for e in eids]
            conn.send(("extracted", records))
        elif op == "restore":
            from .territory import record_to_entity
            _, records = msg
            for rec in records:
                e = record_to_entity(rec, config.master_seed,
                                     model_spec.params)
                lp.entities[e.entity_id] = e
            conn.send(("restored", len(records)))
        elif op == "finish":
            model.collect_cache_stats(lp.entities)
            conn.send(("finished", monitor))
        elif op == "close":
            conn.close()
            return
        else:
            raise EngineError(f"worker {lp_id}: unknown command {op!r}")


class ProcessBackend:
    """Drives the worker pool and mirrors entity ownership.

    The parent tracks per-LP entity counts so conservation checks and
    frozen-entity bookkeeping never need a round trip.
    """

    def __init__(self, config, model_spec):
        self.config = config
        try:
            ctx = mp.get_context("fork")
        except ValueError:
            ctx = mp.get_context("spawn")
        assignment = partition_entities(range(model_spec.num_entities),
                                        config.num_lps, config.master_seed)
        self.owner_of = {eid: lp_id for lp_id, ids in assignment.items()
                         for eid in ids}
        self.barrier = StepBarrier(assignment.keys())
        self._counts = {lp_id: len(ids) for lp_id, ids in assignment.items()}
        self._conns = {}
        self._procs = {}
        self._hello = []
        for lp_id, ids in assignment.items():
            parent, child = ctx.Pipe()
            proc = ctx.Process(target=_worker,
                               args=(lp_id, child, config, model_spec, ids),
                               daemon=True)
            proc.start()
            child.close()
            self._conns[lp_id] = parent
            self._procs[lp_id] = proc
        for lp_id in assignment:
            kind, hlp, ids, xs, ys = self._recv(lp_id)
            if kind != "hello":
                raise EngineError(f"worker {lp_id} sent {kind!r} before hello")
            self._hello.append((ids, xs, ys))

    def _recv(self, lp_id):
        try:
            return self._conns[lp_id].recv()
        except EOFError:
            raise EngineError(f"worker for lp={lp_id} died") from None

    def initial_positions(self):
        return list(self._hello)

    def step(self, t: int, inboxes: dict) -> dict:
        self.barrier.begin_step(t)
        for lp_id, conn in self._conns.items():
            conn.send(("step", t, inboxes.get(lp_id, [])))
        deadline = time.monotonic() + self.config.barrier_timeout
        pending = dict(self._conns)
        results = {}
        while pending:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BarrierTimeoutError(t, sorted(pending))
            by_conn = {conn: lp_id for lp_id, conn in pending.items()}
            for conn in conn_wait(list(by_conn), timeout=remaining):
                lp_id = by_conn[conn]
                msg = self._recv(lp_id)
                if msg[0] == "error":
                    _, elp, estep, eid, text = msg
                    if eid is not None:
                        raise StepExecutionError(elp, estep, eid, text)
                    raise EngineError(text)
                if msg[0] != "result":
                    raise EngineError(
                        f"worker {lp_id} sent {msg[0]!r} during step")
                res = msg[1]
                self.barrier.arrive(lp_id, t, res)
                results[lp_id] = res
                del pending[lp_id]
        return results

    def extract(self, entity_ids) -> list:
        by_lp = {}
        for eid in entity_ids:
            by_lp.setdefault(self.owner_of[eid], []).append(eid)
        records = {}
        for lp_id, eids in by_lp.items():
            self._conns[lp_id].send(("extract", eids))
        for lp_id, eids in by_lp.items():
            kind, recs = self._recv(lp_id)
            if kind != "extracted":
                raise EngineError(f"worker {lp_id} sent {kind!r} to extract")
            for rec in recs:
                records[rec.entity_id] = rec
            self._counts[lp_id] -= len(recs)
        return [records[eid] for eid in entity_ids]

    def restore(self, records) -> None:
        by_lp = {}
        for rec in records:
            by_lp.setdefault(self.owner_of[rec.entity_id], []).append(rec)
        for lp_id, recs in by_lp.items():
            self._conns[lp_id].send(("restore", recs))
        for lp_id, recs in by_lp.items():
            kind, n = self._recv(lp_id)
            if kind != "restored":
                raise EngineError(f"worker {lp_id} sent {kind!r} to restore")
            self._counts[lp_id] += n

    def entity_count(self) -> int:
        return sum(self._counts.values())

    def finish(self) -> InvariantMonitor:
        merged = InvariantMonitor()
        for lp_id, conn in self._conns.items():
            conn.send(("finish",))
        for lp_id in self._conns:
            kind, monitor = self._recv(lp_id)
            if kind != "finished":
                raise EngineError(f"worker {lp_id} sent {kind!r} to finish")
            merged.merge(monitor)
        return merged

    def close(self) -> None:
        for lp_id, conn in self._conns.items():
            try:
                conn.send(("close",))
            except (OSError, BrokenPipeError):
                pass
        for lp_id, proc in self._procs.items():
            proc.join(timeout=5.0)
            if proc.is_alive():
                proc.terminate()
                proc.join(timeout=5.0)
        for conn in self._conns.values():
            try:
                conn.close()
            except OSError:
                pass
