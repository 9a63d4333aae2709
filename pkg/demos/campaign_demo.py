"""Small factorial campaign: two populations x two presets, three
repetitions each, results written as CSV next to this script."""

import os

from hybridsim.campaign import CampaignSpec, emit_results, run_campaign


def main():
    spec = CampaignSpec(
        ses_values=(500, 1000),
        lps_values=(1,),
        presets=("good", "bad"),
        repetitions=3,
        base_seed=400,
        steps=150,
    )
    result = run_campaign(spec, log=lambda msg: print("  " + msg))

    print()
    for cell in result.cells:
        mean, sd = cell.stats()["delivered"]
        print(f"ses={cell.key.ses} preset={cell.key.preset}:"
              f" delivered {mean:.0f} +- {sd:.0f}"
              f" over {len(cell.rows)} reps")
        for rep, seed, msg in cell.errors:
            print(f"  rep {rep} (seed {seed}) failed: {msg}")

    out = os.path.join(os.path.dirname(__file__), "campaign_out")
    detail, summary = emit_results(result, out)
    print(f"\nwrote {detail}")
    print(f"wrote {summary}")


if __name__ == "__main__":
    main()
