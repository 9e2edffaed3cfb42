"""Compare risk-neutral and risk-averse planning on the same problem.

Maximizing expected utility ignores how bad the bad outcomes are.  Two
alternatives on the three-period herd problem:

* CVaR objective — maximize the average utility of the worst alpha-tail
  (needs a single merged value node so total utility is one variable);
* chance constraint — maximize expected utility subject to a cap on the
  probability that the pig is ever ill.

The script sweeps alpha, prints how the optimal strategy and its utility
distribution change, then solves the chance-constrained variant.

Run:  python3 demos/risk_profiles.py
"""

from limid.generators import PigFarmSpec, gen_pigfarm
from limid.inference import cvar_of_distribution
from limid.mip import add_risk, build_base_model
from limid.risk import CvarObjective, parse_chance_text
from limid.rjt import build_rjt, modify_rjt
from limid.solve import decode, solve_reference
from limid.transform import merge_value_nodes


def rule_text(diagram, strategy):
    parts = []
    for d, rule in strategy.rules.items():
        names = "".join(diagram.states(d)[s][0] for s in rule)
        parts.append(f"{d}:{names}")
    return " ".join(parts)


def main():
    base = gen_pigfarm(PigFarmSpec(n_periods=3))
    merged, _ = merge_value_nodes(base)
    tree = build_rjt(merged)

    print("risk-neutral baseline (maximum expected utility):")
    model, ctx = build_base_model(tree, merged)
    sol = solve_reference(model, ctx)
    dec = decode(sol, model, ctx)
    print(f"  value {sol.objective_value:9.3f}   strategy "
          f"{rule_text(merged, dec.strategy)}")

    print("\nCVaR objective, sweeping the tail level alpha:")
    print(f"  {'alpha':>6} {'CVaR':>9} {'E[u]':>9}  strategy / distribution")
    for alpha in (0.05, 0.15, 0.5, 1.0):
        model, ctx = build_base_model(tree, merged)
        add_risk(model, CvarObjective(alpha=alpha), ctx)
        sol = solve_reference(model, ctx)
        dec = decode(sol, model, ctx)
        dist = dec.distribution
        atoms = "  ".join(
            f"u={u:.0f} p={p:.3f}" for u, p in dist.atoms
        )
        check = cvar_of_distribution(dist, alpha).cvar
        print(f"  {alpha:6.2f} {sol.objective_value:9.3f} "
              f"{dist.expected():9.3f}  {rule_text(merged, dec.strategy)}")
        print(f"         (recomputed CVaR {check:.3f})  {atoms}")

    print("\nchance constraint: P(ill in any month) <= 0.4")
    wide = modify_rjt(build_rjt(base), ["H1", "H2", "H3", "H4"])
    model, ctx = build_base_model(wide, base)
    add_risk(
        model,
        parse_chance_text("P(H1=ill|H2=ill|H3=ill|H4=ill) <= 0.4"),
        ctx,
    )
    sol = solve_reference(model, ctx)
    dec = decode(sol, model, ctx)
    print(f"  value {sol.objective_value:9.3f}   strategy "
          f"{rule_text(base, dec.strategy)}")
    print("  (the farmer now treats on negative tests early: paying for")
    print("   medicine keeps the illness probability under the cap)")


if __name__ == "__main__":
    main()
