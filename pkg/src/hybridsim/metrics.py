"""Counters and run-level metrics.

StepReport counts one logical process's events for one timestep; reports
merge across processes and steps. RunMetrics is the full outcome of a
run, including the always-on invariant monitor and sub-simulator totals.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

# Per-delivery outcomes, in decision order. Every delivered message is
# counted under exactly one of: relayed or one drop reason.
DROP_REASONS = (
    "cache_filtered",
    "ttl_filtered",
    "geofiltered",
    "ring_filtered",
    "budget_filtered",
    "gossip_declined",
)


@dataclass
class StepReport:
    """Event counts for one (lp, timestep)."""

    generated: int = 0
    delivered: int = 0
    relayed: int = 0
    cache_filtered: int = 0
    ttl_filtered: int = 0
    geofiltered: int = 0
    ring_filtered: int = 0
    budget_filtered: int = 0
    gossip_declined: int = 0

    def merge(self, other: "StepReport") -> None:
        for f in dataclasses.fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def dropped(self) -> int:
        return sum(getattr(self, r) for r in DROP_REASONS)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class InvariantMonitor:
    """Always-on extrema used by the invariant checks.

    Tracked during normal runs (not only under test) so that any
    configuration can be audited after the fact.
    """

    max_delivered_hop: int = 0
    relay_ring_min: float = math.inf
    relay_ring_max: float = 0.0
    relay_origin_max: float = 0.0
    max_relays_entity_step: int = 0
    cache_high_water: int = 0

    def note_delivery(self, hop_count: int) -> None:
        if hop_count > self.max_delivered_hop:
            self.max_delivered_hop = hop_count

    def note_relay(self, ring_distance: float, origin_distance: float,
                   relays_this_step: int) -> None:
        if ring_distance < self.relay_ring_min:
            self.relay_ring_min = ring_distance
        if ring_distance > self.relay_ring_max:
            self.relay_ring_max = ring_distance
        if origin_distance > self.relay_origin_max:
            self.relay_origin_max = origin_distance
        if relays_this_step > self.max_relays_entity_step:
            self.max_relays_entity_step = relays_this_step

    def note_cache(self, high_water: int) -> None:
        if high_water > self.cache_high_water:
            self.cache_high_water = high_water

    def merge(self, other: "InvariantMonitor") -> None:
        self.max_delivered_hop = max(self.max_delivered_hop, other.max_delivered_hop)
        self.relay_ring_min = min(self.relay_ring_min, other.relay_ring_min)
        self.relay_ring_max = max(self.relay_ring_max, other.relay_ring_max)
        self.relay_origin_max = max(self.relay_origin_max, other.relay_origin_max)
        self.max_relays_entity_step = max(
            self.max_relays_entity_step, other.max_relays_entity_step
        )
        self.cache_high_water = max(self.cache_high_water, other.cache_high_water)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if math.isinf(d["relay_ring_min"]):
            d["relay_ring_min"] = None
        return d


@dataclass
class Level1Totals:
    """Aggregated sub-simulator outcomes across all spawns in a run."""

    spawns: int = 0
    entities_transferred: int = 0
    emissions_g: float = 0.0
    customers: int = 0
    arrived: int = 0
    market_messages: int = 0
    route_discoveries: int = 0
    fine_steps: int = 0
    failures: int = 0

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunMetrics:
    """Complete outcome of one simulation run.

    Everything except wall_clock_seconds must be bit-identical across
    repeated runs with the same seed, and across LP counts.
    """

    num_entities: int = 0
    num_lps: int = 0
    total_timesteps: int = 0
    master_seed: int = 0
    totals: StepReport = field(default_factory=StepReport)
    routed: int = 0
    frozen_drops: int = 0
    per_step: list = field(default_factory=list)  # StepReport per timestep
    routed_per_step: list = field(default_factory=list)
    monitor: InvariantMonitor = field(default_factory=InvariantMonitor)
    level1: Level1Totals = field(default_factory=Level1Totals)
    wall_clock_seconds: float = 0.0
    config_echo: dict = field(default_factory=dict)
    barrier_trace: list = field(default_factory=list)
    wrapper_transcripts: list = field(default_factory=list)

    def check_accounting(self) -> None:
        """Raise AssertionError if the counter identities do not hold."""
        t = self.totals
        assert self.routed == t.delivered + self.frozen_drops, (
            f"routed {self.routed} != delivered {t.delivered}"
            f" + frozen_drops {self.frozen_drops}"
        )
        assert t.delivered == t.relayed + t.dropped(), (
            f"delivered {t.delivered} != relayed {t.relayed}"
            f" + dropped {t.dropped()}"
        )

    def comparable(self) -> dict:
        """Deterministic view: everything except wall clock time."""
        return {
            "num_entities": self.num_entities,
            "total_timesteps": self.total_timesteps,
            "master_seed": self.master_seed,
            "totals": self.totals.as_dict(),
            "routed": self.routed,
            "frozen_drops": self.frozen_drops,
            "per_step": [r.as_dict() for r in self.per_step],
            "routed_per_step": list(self.routed_per_step),
            "monitor": self.monitor.as_dict(),
            "level1": self.level1.as_dict(),
            "wrapper_transcripts": [dict(t) for t in self.wrapper_transcripts],
        }

    def summary_row(self) -> dict:
        """Flat row used by campaign CSV output."""
        row = {
            "ses": self.num_entities,
            "lps": self.num_lps,
            "steps": self.total_timesteps,
            "seed": self.master_seed,
        }
        row.update(self.totals.as_dict())
        row["routed"] = self.routed
        row["frozen_drops"] = self.frozen_drops
        row.update(self.level1.as_dict())
        row["wall_clock_seconds"] = self.wall_clock_seconds
        return row

    def to_json(self, indent: int = 2) -> str:
        doc = self.comparable()
        doc["num_lps"] = self.num_lps
        doc["wall_clock_seconds"] = self.wall_clock_seconds
        doc["config"] = self.config_echo
        return json.dumps(doc, indent=indent, sort_keys=True)
