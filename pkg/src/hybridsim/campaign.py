"""Seeded experiment campaigns: sweep cells, aggregate, emit CSV.

A campaign is the cross product of entity counts, LP counts and
presets. Every cell runs the same repetition seeds (base_seed + rep
index), so cells differ only in the axis under study. Cells execute
sequentially to keep wall-clock measurements honest.

Output is two CSV files with a fixed, documented column order:
detail.csv has one row per (cell, repetition); summary.csv has one row
per cell with mean and sample standard deviation of every counter plus
the wall-clock speedup against the LP=1 cell of the same (ses, preset)
when that cell exists and completed.
"""

from __future__ import annotations

import csv
import os
import statistics
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .config import make_params
from .coordination import (
    FixedDurationPolicy,
    HybridSpec,
    ScriptedTrigger,
    TimestepAlignment,
)
from .engine import EngineConfig, run_simulation
from .territory import TerritorySpec

DETAIL_COLUMNS = (
    "ses", "lps", "preset", "rep", "seed", "steps",
    "generated", "delivered", "relayed",
    "cache_filtered", "ttl_filtered", "geofiltered", "ring_filtered",
    "budget_filtered", "gossip_declined",
    "routed", "frozen_drops",
    "spawns", "entities_transferred", "emissions_g", "customers", "arrived",
    "market_messages", "route_discoveries", "fine_steps", "failures",
    "wall_clock_seconds",
)

# the aggregated portion of a detail row
STAT_COLUMNS = DETAIL_COLUMNS[6:]

SUMMARY_COLUMNS = (
    ("ses", "lps", "preset", "repetitions", "completed")
    + tuple(f"{c}_mean" for c in STAT_COLUMNS)
    + tuple(f"{c}_sd" for c in STAT_COLUMNS)
    + ("speedup",)
)


class CellKey(NamedTuple):
    ses: int
    lps: int
    preset: str


def hybrid_from(spawn_at, transfer_count=1, substeps=3, duration=3,
                endpoint=None) -> Optional[HybridSpec]:
    """Scripted hand-off shape shared by runs and campaigns; None if
    no spawn steps are configured."""
    if not spawn_at:
        return None
    return HybridSpec(
        trigger=ScriptedTrigger(spawn_at=tuple(spawn_at),
                                transfer_count=transfer_count),
        align=TimestepAlignment(fine_substeps=substeps),
        policy=FixedDurationPolicy(coarse_steps=duration),
        endpoint=endpoint or None,
    )


@dataclass(frozen=True)
class CampaignSpec:
    """One sweep: axes, repetitions, seeding, shared run shape."""

    ses_values: tuple = (4000,)
    lps_values: tuple = (1,)
    presets: tuple = ("good",)
    repetitions: int = 5
    base_seed: int = 1
    steps: int = 900
    mode: str = "auto"
    spawn_at: tuple = ()
    transfer_count: int = 1
    substeps: int = 3
    duration: int = 3
    endpoint: Optional[str] = None
    barrier_timeout: float = 60.0
    param_overrides: tuple = ()
    seeds: Optional[tuple] = None  # explicit per-repetition seeds

    def __post_init__(self):
        if not self.ses_values or not self.lps_values or not self.presets:
            raise ValueError("every sweep axis needs at least one value")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.seeds is not None and len(self.seeds) != self.repetitions:
            raise ValueError(
                f"{len(self.seeds)} explicit seeds for"
                f" {self.repetitions} repetitions")

    def rep_seed(self, rep: int) -> int:
        if self.seeds is not None:
            return self.seeds[rep]
        return self.base_seed + rep

    def cells(self) -> list:
        return [CellKey(ses, lps, preset)
                for ses in self.ses_values
                for lps in self.lps_values
                for preset in self.presets]

    def hybrid_spec(self) -> Optional[HybridSpec]:
        return hybrid_from(self.spawn_at, self.transfer_count,
                           self.substeps, self.duration, self.endpoint)


@dataclass
class CellResult:
    key: CellKey
    rows: list = field(default_factory=list)    # detail row dicts, rep order
    errors: list = field(default_factory=list)  # (rep, seed, message)

    @property
    def complete(self) -> bool:
        return not self.errors

    def stats(self) -> dict:
        """column -> (mean, sample sd); sd is 0.0 below two rows."""
        out = {}
        for col in STAT_COLUMNS:
            values = [row[col] for row in self.rows]
            if not values:
                out[col] = (0.0, 0.0)
                continue
            mean = statistics.fmean(values)
            sd = statistics.stdev(values) if len(values) >= 2 else 0.0
            out[col] = (mean, sd)
        return out

    def mean_wall_clock(self) -> Optional[float]:
        if not self.rows:
            return None
        return statistics.fmean(r["wall_clock_seconds"] for r in self.rows)


@dataclass
class CampaignResult:
    spec: CampaignSpec
    cells: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return all(c.complete for c in self.cells)

    def cell(self, ses: int, lps: int, preset: str) -> Optional[CellResult]:
        for c in self.cells:
            if c.key == CellKey(ses, lps, preset):
                return c
        return None

    def speedup(self, cell: CellResult) -> Optional[float]:
        """WCT(LP=1) / WCT(LP=k) against the same (ses, preset)."""
        base = self.cell(cell.key.ses, 1, cell.key.preset)
        if base is None or not base.complete or not cell.complete:
            return None
        base_wct = base.mean_wall_clock()
        cell_wct = cell.mean_wall_clock()
        if not base_wct or not cell_wct:
            return None
        return base_wct / cell_wct


def _detail_row(key: CellKey, rep: int, metrics) -> dict:
    row = metrics.summary_row()
    row["preset"] = key.preset
    row["rep"] = rep
    return {col: row[col] for col in DETAIL_COLUMNS}


def run_campaign(spec: CampaignSpec, log=None) -> CampaignResult:
    """Execute every cell x repetition; failures never stop the sweep."""
    say = log or (lambda msg: None)
    hybrid = spec.hybrid_spec()
    result = CampaignResult(spec=spec)
    for key in spec.cells():
        cell = CellResult(key)
        result.cells.append(cell)
        params = make_params(key.preset, dict(spec.param_overrides))
        for rep in range(spec.repetitions):
            seed = spec.rep_seed(rep)
            say(f"cell ses={key.ses} lps={key.lps} preset={key.preset}"
                f" rep={rep} seed={seed}")
            try:
                cfg = EngineConfig(num_lps=key.lps,
                                   total_timesteps=spec.steps,
                                   master_seed=seed,
                                   barrier_timeout=spec.barrier_timeout)
                metrics = run_simulation(
                    cfg, TerritorySpec(key.ses, params),
                    hybrid=hybrid, mode=spec.mode,
                    config_echo={"preset": key.preset, "rep": rep})
            except Exception as exc:
                message = f"{type(exc).__name__}: {exc}"
                cell.errors.append((rep, seed, message))
                say(f"  failed: {message}")
                continue
            cell.rows.append(_detail_row(key, rep, metrics))
    return result


def emit_results(result: CampaignResult, out_dir: str) -> tuple:
    """Write detail.csv and summary.csv; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    detail_path = os.path.join(out_dir, "detail.csv")
    summary_path = os.path.join(out_dir, "summary.csv")

    with open(detail_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.DictWriter(fh, fieldnames=DETAIL_COLUMNS)
        writer.writeheader()
        for cell in result.cells:
            for row in cell.rows:
                writer.writerow(row)

    with open(summary_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for cell in result.cells:
            stats = cell.stats()
            row = {
                "ses": cell.key.ses,
                "lps": cell.key.lps,
                "preset": cell.key.preset,
                "repetitions": result.spec.repetitions,
                "completed": len(cell.rows),
            }
            for col in STAT_COLUMNS:
                mean, sd = stats[col]
                row[f"{col}_mean"] = mean
                row[f"{col}_sd"] = sd
            speedup = result.speedup(cell)
            row["speedup"] = "" if speedup is None else speedup
            writer.writerow(row)

    return detail_path, summary_path
