"""Multi-level orchestration: freeze, hand off, supervise, reintegrate.

A trigger fires at a coarse barrier and names a set of entities. They
are serialized, removed from their logical processes and sent to a
sub-simulator wrapper together with the full session configuration
(spawn). From the next barrier on, the wrapper reports one STATUS per
coarse step and the coordinator answers CONTINUE or END per policy;
the barrier does not complete until every active wrapper's STATUS has
been processed, so coarse simulated time never outruns a wrapper. On
END the wrapper returns RESULT plus the updated entity records, which
are validated (set equality, rng cursor accounting) and restored
(reintegrate).

The transfer snapshot is retained until RESULT validates. A wrapper
that breaks protocol mid-session is terminated and its entities are
restored from the snapshot; the run continues. Conservation failures
(lost or duplicated entities, bad cursor accounting) are hard errors.

Timeline of a wrapper spawned at barrier T with a fixed duration of
three coarse steps: STATUS at T+1 and T+2 are answered CONTINUE (the
wrapper then runs one window of fine substeps each), STATUS at T+3 is
answered END, and the entities rejoin before barrier T+3 completes.
"""

from __future__ import annotations

import dataclasses
import os
import socket
import sys
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .engine import EngineError
from .protocol import (
    LineChannel,
    ProtocolError,
    entity_fields,
    entity_from_fields,
    field_float,
    field_int,
)
from .rng import derive_seed

ENDPOINT_ENV_VAR = "HYBRIDSIM_L1_ENDPOINT"

RUNNING_L1A = "RUNNING_L1A"
RUNNING_L1B = "RUNNING_L1B"
DONE = "DONE"
FAILED = "FAILED"


class ConservationError(EngineError):
    """Entities were lost, duplicated or corrupted across a hand-off."""


class WrapperFailure(EngineError):
    """A wrapper could not be started; its entities were put back."""


@dataclass(frozen=True)
class TimestepAlignment:
    """How fine steps nest inside one coarse step."""

    coarse_dt: float = 1.0
    fine_substeps: int = 3

    def __post_init__(self):
        if self.coarse_dt <= 0:
            raise ValueError("coarse_dt must be positive")
        if self.fine_substeps < 1:
            raise ValueError("fine_substeps must be >= 1")

    @property
    def fine_dt(self) -> float:
        return self.coarse_dt / self.fine_substeps


class TriggerEvent(NamedTuple):
    """One firing: which entities leave, and why."""

    tag: str
    region: Optional[tuple]  # (center_x, center_y, radius) or None
    entity_ids: tuple


@dataclass(frozen=True)
class ScriptedTrigger:
    """Fire at fixed coarse steps, taking the lowest-id free entities.

    spawn_at may repeat a step to start several wrappers at once; each
    firing takes the next transfer_count entities from the free pool.
    Selection ignores the LP layout entirely, which keeps hybrid runs
    identical across LP counts.
    """

    spawn_at: tuple = ()
    transfer_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "spawn_at", tuple(self.spawn_at))
        if any(int(t) != t or t < 0 for t in self.spawn_at):
            raise ValueError("spawn_at steps must be nonnegative integers")
        if self.transfer_count < 1:
            raise ValueError("transfer_count must be >= 1")

    def check(self, world, t: int, frozen) -> list:
        fires = self.spawn_at.count(t)
        if fires == 0:
            return []
        pool = [eid for eid in range(world.num_entities) if eid not in frozen]
        events = []
        for _ in range(fires):
            take, pool = pool[:self.transfer_count], pool[self.transfer_count:]
            if take:
                events.append(TriggerEvent("scripted", None, tuple(take)))
        return events


@dataclass(frozen=True)
class DensityTrigger:
    """Fire when some circular region holds at least threshold entities.

    Candidate regions are disks of the given radius centered on each
    free entity (the center counts itself; the disk boundary is
    inclusive). The lowest-id firing center wins and every free entity
    inside its disk is transferred. An infinite threshold never fires.
    """

    threshold: float = float("inf")
    radius: float = 250.0

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def check(self, world, t: int, frozen) -> list:
        eligible = np.array(
            [eid for eid in range(world.num_entities) if eid not in frozen],
            dtype=np.int64)
        if eligible.size == 0 or self.threshold > eligible.size:
            return []
        xs = world.pos_x[eligible]
        ys = world.pos_y[eligible]
        side = world.side
        r2 = self.radius * self.radius
        for lo in range(0, eligible.size, 512):
            hi = min(lo + 512, eligible.size)
            dx = np.abs(xs[None, :] - xs[lo:hi, None])
            dy = np.abs(ys[None, :] - ys[lo:hi, None])
            np.minimum(dx, side - dx, out=dx)
            np.minimum(dy, side - dy, out=dy)
            inside = dx * dx + dy * dy <= r2
            counts = inside.sum(axis=1)
            hits = np.nonzero(counts >= self.threshold)[0]
            if hits.size:
                k = int(hits[0])  # chunks scan ids ascending: first hit wins
                members = eligible[inside[k]]
                region = (float(xs[lo + k]), float(ys[lo + k]), self.radius)
                return [TriggerEvent("density", region,
                                     tuple(int(m) for m in members))]
        return []


def check_trigger(world, t: int, policy, frozen=frozenset()) -> list:
    """Evaluate a trigger policy; returns the firings for this step."""
    if policy is None:
        return []
    return policy.check(world, t, frozen)


@dataclass(frozen=True)
class FixedDurationPolicy:
    """END after a fixed number of coarse steps in the wrapper."""

    coarse_steps: int = 3

    def __post_init__(self):
        if self.coarse_steps < 1:
            raise ValueError("coarse_steps must be >= 1")

    def decide(self, handle, t: int, status: dict) -> str:
        return "END" if t - handle.spawned_at >= self.coarse_steps else "CONTINUE"


@dataclass(frozen=True)
class UntilArrivedPolicy:
    """END once the wrapper reports no pedestrian still underway."""

    def decide(self, handle, t: int, status: dict) -> str:
        remaining = field_int(status, "querying") + field_int(status, "walking")
        return "END" if remaining == 0 else "CONTINUE"


class _EndPolicy:
    def decide(self, handle, t, status):
        return "END"


_END_POLICY = _EndPolicy()


@dataclass(frozen=True)
class Level1Settings:
    """Sub-simulator configuration forwarded verbatim in INIT."""

    parking_capacity: int = 100
    mean_cruise_time: float = 10.0
    mean_search_time: float = 5.0
    idle_time: float = 5.0
    cruise_rate: float = 2.0
    search_rate: float = 1.5
    idle_rate: float = 1.0
    grid_side: int = 10
    spacing: float = 25.0
    radio_range: float = 30.0
    walking_speed: float = 1.4
    hop_limit: int = 32

    def init_fields(self) -> dict:
        return {f.name: getattr(self, f.name)
                for f in dataclasses.fields(self)}


@dataclass(frozen=True)
class HybridSpec:
    """Everything run_simulation needs to run hybrid: what fires, how
    time nests, when wrappers end, what the sub-simulators get."""

    trigger: object = None
    align: TimestepAlignment = TimestepAlignment()
    policy: object = FixedDurationPolicy()
    level1: Level1Settings = Level1Settings()
    endpoint: Optional[str] = None  # HOST:PORT; None runs wrappers in-process
    io_timeout: float = 60.0

    def __post_init__(self):
        if self.io_timeout <= 0:
            raise ValueError("io_timeout must be positive")
        if self.endpoint is not None:
            _parse_endpoint(self.endpoint)


def _parse_endpoint(endpoint: str) -> tuple:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host:
        raise ValueError(f"endpoint must be HOST:PORT, got {endpoint!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ValueError(f"endpoint port is not an integer: {endpoint!r}") from None


def resolve_endpoint(spec: HybridSpec) -> Optional[str]:
    """Environment beats configuration; None means in-process."""
    return os.environ.get(ENDPOINT_ENV_VAR) or spec.endpoint


class WrapperHandle:
    """One live sub-simulator session, L0 side."""

    def __init__(self, wrapper_id: int, spawned_at: int, records, channel,
                 sock):
        self.wrapper_id = wrapper_id
        self.spawned_at = spawned_at
        self.records = tuple(records)  # snapshot kept until RESULT validates
        self.entity_ids = tuple(r.entity_id for r in self.records)
        self.channel = channel
        self._sock = sock
        self.state = RUNNING_L1A
        self.end_sent_at: Optional[int] = None

    @property
    def transcript(self) -> list:
        return self.channel.transcript

    def close(self) -> None:
        self.channel.close()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass

    def __repr__(self):
        return (f"WrapperHandle(id={self.wrapper_id},"
                f" spawned_at={self.spawned_at}, state={self.state},"
                f" entities={len(self.entity_ids)})")


def _connect(endpoint: Optional[str], timeout: float):
    if endpoint is None:
        from . import wrapper
        sock = wrapper.start_local()
    else:
        host, port = _parse_endpoint(endpoint)
        sock = socket.create_connection((host, port), timeout=timeout)
    sock.settimeout(timeout)
    channel = LineChannel(sock.makefile("rb"), sock.makefile("wb"),
                          transcript=[])
    return sock, channel


def spawn_level1(backend, entity_ids, t: int, spec: HybridSpec,
                 master_seed: int, side: float,
                 wrapper_id: int) -> WrapperHandle:
    """Freeze entities out of the engine and start a wrapper session.

    Blocks until the wrapper answers READY, i.e. until its transport
    stage has completed (the two sub-simulators run in sequence). On
    connection or handshake failure the entities are restored to their
    logical processes before WrapperFailure is raised.
    """
    ids = sorted(entity_ids)
    if not ids:
        raise ValueError("nothing to transfer: empty entity set")
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate entity ids in transfer: {ids}")
    endpoint = resolve_endpoint(spec)
    if endpoint is not None:
        _parse_endpoint(endpoint)  # refuse malformed config before freezing

    records = backend.extract(ids)
    sock = None
    channel = None
    try:
        sock, channel = _connect(endpoint, spec.io_timeout)
        handle = WrapperHandle(wrapper_id, t, records, channel, sock)
        init = spec.level1.init_fields()
        init.update(entities=len(records),
                    seed=derive_seed(master_seed, "wrapper", t, wrapper_id),
                    master_seed=master_seed, side=side,
                    substeps=spec.align.fine_substeps)
        channel.send("INIT", t, **init)
        for rec in records:
            channel.send("ENTITY", t, **entity_fields(rec))
        kind, rstep, _ = channel.recv(expect="READY")
        if rstep != t:
            raise ProtocolError(f"READY for step {rstep}, expected {t}")
    except (OSError, ProtocolError) as exc:
        if channel is not None:
            channel.close()
        if sock is not None:
            try:
                sock.close()
            except OSError:
                pass
        backend.restore(records)
        where = endpoint or "local wrapper"
        raise WrapperFailure(
            f"wrapper {wrapper_id} failed to start on {where}: {exc}"
        ) from exc
    handle.state = RUNNING_L1B
    return handle


def coordinate_step(handle: WrapperHandle, t: int, decision_policy) -> dict:
    """Process one STATUS/response exchange for coarse step t.

    Returns the STATUS body. After an END reply the caller must follow
    up with reintegrate before the barrier completes.
    """
    if handle.state != RUNNING_L1B:
        raise EngineError(
            f"wrapper {handle.wrapper_id} is {handle.state}, cannot step")
    kind, sstep, status = handle.channel.recv(expect="STATUS")
    if sstep != t:
        raise ProtocolError(
            f"wrapper {handle.wrapper_id} sent STATUS for step {sstep}"
            f" at coarse step {t}")
    decision = decision_policy.decide(handle, t, status)
    if decision not in ("CONTINUE", "END"):
        raise EngineError(f"policy produced {decision!r}")
    handle.channel.send(decision, t)
    if decision == "END":
        handle.end_sent_at = t
    return status


def reintegrate(backend, handle: WrapperHandle, world, metrics=None) -> None:
    """Validate RESULT and returned records, restore the entities.

    Checks: entity set equality with the transfer, per-entity fields
    unchanged except position and rng cursor, cursors advanced by
    exactly the draw total the wrapper reported. Violations are
    ConservationError (hard). Positions land in the global table so
    routing sees them immediately. The caller owns the frozen map.
    """
    if handle.end_sent_at is None:
        raise EngineError(
            f"reintegrate before END on wrapper {handle.wrapper_id}")
    ch = handle.channel
    t = handle.end_sent_at
    kind, rstep, rf = ch.recv(expect="RESULT")
    if rstep != t:
        raise ProtocolError(f"RESULT for step {rstep}, expected {t}")
    n = field_int(rf, "entities")
    if n != len(handle.entity_ids):
        raise ConservationError(
            f"wrapper {handle.wrapper_id} returned {n} entities,"
            f" transferred {len(handle.entity_ids)}")
    returned = []
    for _ in range(n):
        ekind, estep, ef = ch.recv(expect="ENTITY")
        if estep != t:
            raise ProtocolError(f"returned ENTITY for step {estep},"
                                f" expected {t}")
        returned.append(entity_from_fields(ef))
    ch.recv(expect="BYE")

    sent = set(handle.entity_ids)
    got = [r.entity_id for r in returned]
    if len(set(got)) != len(got) or set(got) != sent:
        missing = sorted(sent - set(got))
        extra = sorted(set(got) - sent)
        raise ConservationError(
            f"wrapper {handle.wrapper_id} entity set mismatch:"
            f" missing {missing}, unexpected {extra}")

    by_id = {r.entity_id: r for r in handle.records}
    draw_total = 0
    for r in returned:
        snap = by_id[r.entity_id]
        if (r.kind != snap.kind or r.speed != snap.speed
                or r.target != snap.target or r.cache_ids != snap.cache_ids):
            raise ConservationError(
                f"entity {r.entity_id} came back altered beyond position"
                f" and rng cursor")
        if r.cursor < snap.cursor:
            raise ConservationError(
                f"entity {r.entity_id} rng cursor moved backwards:"
                f" {snap.cursor} -> {r.cursor}")
        draw_total += r.cursor - snap.cursor
    reported = field_int(rf, "rng_draws")
    if draw_total != reported:
        raise ConservationError(
            f"wrapper {handle.wrapper_id} draw accounting: cursors advanced"
            f" by {draw_total}, RESULT claims {reported}")

    backend.restore(returned)
    world.update([r.entity_id for r in returned],
                 [r.x for r in returned], [r.y for r in returned])
    if metrics is not None:
        lv = metrics.level1
        lv.emissions_g += field_float(rf, "emissions")
        lv.customers += field_int(rf, "customers")
        lv.arrived += field_int(rf, "arrived")
        lv.market_messages += field_int(rf, "msgs")
        lv.route_discoveries += field_int(rf, "routes")
        lv.fine_steps += field_int(rf, "fine_steps")
    handle.state = DONE
    handle.close()


def _terminate(backend, handle: WrapperHandle, frozen, metrics,
               reason: str) -> None:
    """Protocol breakdown: drop the wrapper, restore the snapshot."""
    handle.close()
    backend.restore(handle.records)
    for eid in handle.entity_ids:
        frozen.pop(eid, None)
    if metrics is not None:
        metrics.level1.failures += 1
    handle.state = FAILED
    print(f"wrapper {handle.wrapper_id} terminated: {reason}",
          file=sys.stderr)


class HybridCoordinator:
    """Drives every wrapper session from the engine's barrier hook.

    Active handles are serviced in wrapper id order, then triggers are
    evaluated and new wrappers spawned (their first STATUS arrives at
    the next barrier). With force_end every session is told END and
    reintegrated regardless of policy, so a run always finishes clean.
    """

    def __init__(self, spec: HybridSpec, config, model_spec):
        self.spec = spec
        self.master_seed = config.master_seed
        self.side = model_spec.side
        self.active = {}  # wrapper_id -> handle
        self.history = []  # every handle ever spawned, for audits
        self._next_id = 0

    def at_barrier(self, t: int, world, backend, frozen, metrics,
                   force_end: bool = False) -> None:
        policy = _END_POLICY if force_end else self.spec.policy
        for wid in sorted(self.active):
            handle = self.active[wid]
            try:
                coordinate_step(handle, t, policy)
                if handle.end_sent_at is not None:
                    reintegrate(backend, handle, world, metrics)
                    for eid in handle.entity_ids:
                        del frozen[eid]
                    del self.active[wid]
            except ProtocolError as exc:
                _terminate(backend, handle, frozen, metrics, str(exc))
                del self.active[wid]

        if force_end:
            return
        for event in check_trigger(world, t, self.spec.trigger, frozen):
            wid = self._next_id
            self._next_id += 1
            try:
                handle = spawn_level1(backend, event.entity_ids, t, self.spec,
                                      self.master_seed, self.side, wid)
            except WrapperFailure as exc:
                if metrics is not None:
                    metrics.level1.failures += 1
                print(str(exc), file=sys.stderr)
                continue
            self.active[wid] = handle
            self.history.append(handle)
            for eid in handle.entity_ids:
                frozen[eid] = handle
            if metrics is not None:
                metrics.level1.spawns += 1
                metrics.level1.entities_transferred += len(handle.entity_ids)

    def finish(self, metrics) -> None:
        if self.active:
            raise EngineError(
                f"wrappers still active at end of run:"
                f" {sorted(self.active)}")
