"""Show how an existing junction tree is widened to cover extra nodes.

Constraints on the joint behaviour of several nodes (say, "the pig is never
ill in any month") need one cluster whose members include all of them.  The
tree-modification routine grows clusters and re-hangs arcs until such a
cluster exists, keeping the tree valid at every step.

The script runs the routine on a small six-node diagram with a trace, then
prints each intermediate tree so the extend / fill / re-hang steps can be
followed by eye.

Run:  python3 demos/tree_surgery.py
"""

import numpy as np

from limid.diagram import Cpt, InfluenceDiagram, Node, NodeKind
from limid.rjt import build_rjt, modify_rjt, validate_rjt


def six_node_diagram():
    names = ["A", "B", "C", "D", "E", "F"]
    parents = {"A": (), "B": ("A",), "C": ("B",), "D": ("B",),
               "E": ("C",), "F": ("B",)}
    nodes = tuple(
        Node(n, NodeKind.CHANCE, ("0", "1"), parents[n]) for n in names
    )
    cpts = {
        n: Cpt(n, np.full((2 ** len(parents[n]), 2), 0.5)) for n in names
    }
    return InfluenceDiagram(nodes=nodes, cpts=cpts, utilities={})


def show(tree, title):
    print(f"\n{title}")
    for root in tree.order:
        members = " ".join(tree.members(root))
        parent = tree.parent.get(root)
        arrow = f" <- {parent}" if parent else " (top)"
        print(f"  C[{root}]: {{{members}}}{arrow}")


def main():
    d = six_node_diagram()
    tree = build_rjt(d)
    show(tree, "initial tree:")

    targets = ["A", "E", "F"]
    print(f"\nwidening so one cluster holds {{{', '.join(targets)}}} ...")
    trace = []
    final = modify_rjt(tree, targets, trace=trace)

    for (step, node), snapshot in trace:
        show(snapshot, f"after {step}({node}):")

    show(final, "final tree:")
    last = targets[-1]
    print(f"\ncluster C[{last}] now holds: {{{' '.join(final.members(last))}}}")
    problems = validate_rjt(final, d)
    print("validator:", "clean" if not problems else problems)


if __name__ == "__main__":
    main()
