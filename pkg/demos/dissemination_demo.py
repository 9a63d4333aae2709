"""Run the reference dissemination setup once and show where the
traffic went: counters, drop reasons, invariant extremes."""

from hybridsim.engine import EngineConfig, run_simulation
from hybridsim.territory import TerritorySpec


def main():
    cfg = EngineConfig(num_lps=1, total_timesteps=300, master_seed=7)
    spec = TerritorySpec(2000)
    m = run_simulation(cfg, spec, mode="inprocess")

    t = m.totals
    print(f"{spec.num_entities} entities on a {spec.side:.0f} x"
          f" {spec.side:.0f} torus, {cfg.total_timesteps} steps")
    print()
    print(f"  generated        {t.generated:>8}")
    print(f"  delivered        {t.delivered:>8}   (routed {m.routed},"
          f" frozen drops {m.frozen_drops})")
    print(f"  relayed          {t.relayed:>8}")
    print()
    print("dropped instead of relayed, by reason:")
    print(f"  duplicate cache  {t.cache_filtered:>8}")
    print(f"  ttl exhausted    {t.ttl_filtered:>8}")
    print(f"  origin fence     {t.geofiltered:>8}")
    print(f"  outside ring     {t.ring_filtered:>8}")
    print(f"  budget spent     {t.budget_filtered:>8}")
    print(f"  coin said no     {t.gossip_declined:>8}")
    print()
    mon = m.monitor
    print("invariant extremes over the whole run:")
    print(f"  max hop count           {mon.max_delivered_hop} (limit 6)")
    print(f"  relay ring distances    ({mon.relay_ring_min:.1f},"
          f" {mon.relay_ring_max:.1f}] (ring (225, 250])")
    print(f"  max origin distance     {mon.relay_origin_max:.1f}"
          f" (fence 1000)")
    print(f"  max relays/entity/step  {mon.max_relays_entity_step}"
          f" (budget 10)")
    print(f"  cache high water        {mon.cache_high_water} (capacity 128)")
    print(f"\nwall clock: {m.wall_clock_seconds:.2f}s")


if __name__ == "__main__":
    main()
