"""Measure how model size grows with the planning horizon.

Keeping one value node per period keeps clusters small, so the count of
local-consistency rows grows linearly with the horizon.  Merging all value
nodes into one is required for CVaR, but the merged node's cluster must
hold every decision, so the same row family grows geometrically.  This
script builds both model families for increasing horizons and tabulates
the counts.

Run:  python3 demos/model_scaling.py [--max-n N]
"""

import argparse

from limid.generators import PigFarmSpec, gen_pigfarm
from limid.mip import build_base_model, model_stats
from limid.rjt import build_rjt
from limid.transform import merge_value_nodes


def consistency_rows(diagram):
    model, _ = build_base_model(build_rjt(diagram), diagram)
    stats = model_stats(model)
    return stats["constraints"]["consistency"], stats["variables"]["total"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-n", type=int, default=6, help="largest horizon")
    args = ap.parse_args()

    print(f"{'N':>3} {'plain rows':>11} {'plain vars':>11} "
          f"{'merged rows':>12} {'merged vars':>12} {'ratio':>6}")
    prev = None
    for n in range(1, args.max_n + 1):
        d = gen_pigfarm(PigFarmSpec(n_periods=n))
        plain_rows, plain_vars = consistency_rows(d)
        merged, _ = merge_value_nodes(d)
        merged_rows, merged_vars = consistency_rows(merged)
        ratio = f"{merged_rows / prev:6.2f}" if prev else "     -"
        print(f"{n:>3} {plain_rows:>11} {plain_vars:>11} "
              f"{merged_rows:>12} {merged_vars:>12} {ratio}")
        prev = merged_rows

    print("\nplain trees add a constant number of rows per period;")
    print("merged trees multiply their row count with every period.")


if __name__ == "__main__":
    main()
