"""Gradual rooted junction trees over influence diagrams.

A rooted junction tree assigns every diagram node j a cluster C_j (the
node's *root cluster*) and arranges the clusters in a directed tree such
that

  (a) for any two clusters, every cluster on the undirected path between
      them contains their intersection (running intersection),
  (b) each cluster is the root of the subtree formed by the clusters
      containing its root node, and
  (c) each cluster contains the parents of its root node.

These force the tree to be *gradual*: each non-root cluster holds exactly
one node its parent cluster lacks.  Cluster state spaces therefore factor
the joint distribution cluster by cluster, which is what the MIP model
exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .diagram import InfluenceDiagram, check_order, topological_order


@dataclass(frozen=True)
class Cluster:
    root: str
    members: Tuple[str, ...]

    def __contains__(self, name: str) -> bool:
        return name in self.members


@dataclass(frozen=True)
class RootedJunctionTree:
    """Clusters keyed by their root node, parent links, and the build order."""

    order: Tuple[str, ...]
    clusters: Dict[str, Cluster]
    parent: Dict[str, Optional[str]]

    def members(self, root: str) -> Tuple[str, ...]:
        return self.clusters[root].members

    def children(self, root: str) -> List[str]:
        return [r for r in self.order if self.parent.get(r) == root]

    @property
    def tree_root(self) -> str:
        roots = [r for r in self.order if self.parent.get(r) is None]
        if len(roots) != 1:
            raise ValueError(f"tree has {len(roots)} parentless clusters")
        return roots[0]

    def arcs(self) -> List[Tuple[str, str]]:
        return [(p, c) for c, p in self.parent.items() if p is not None]

    def position(self, name: str) -> int:
        return self.order.index(name)

    def width(self) -> int:
        return max(len(c.members) for c in self.clusters.values()) - 1


def build_rjt(
    diagram: InfluenceDiagram, order: Optional[Sequence[str]] = None
) -> RootedJunctionTree:
    """Construct the gradual rooted junction tree for a topological order.

    Nodes are processed last to first.  Each cluster starts as the node plus
    its parents, then absorbs everything later clusters still need below
    this point: when a finished cluster C_k attaches to the root cluster of
    q = max(C_k minus k), the members it shares must appear in C_q too, and
    so on down the tree.  Each cluster then hangs off the root cluster of
    its largest other member; singleton clusters of a disconnected piece
    hang off the order predecessor's cluster so one tree covers everything.
    """
    if order is None:
        order = topological_order(diagram)
    else:
        check_order(diagram, order)
        order = list(order)
    pos = {n: i for i, n in enumerate(order)}

    pending: Dict[str, Set[str]] = {}
    members: Dict[str, Set[str]] = {}
    parent: Dict[str, Optional[str]] = {}
    for j in reversed(order):
        cluster = {j} | set(diagram.parents(j)) | pending.pop(j, set())
        members[j] = cluster
        rest = cluster - {j}
        if rest:
            q = max(rest, key=pos.__getitem__)
            parent[j] = q
            pending.setdefault(q, set()).update(rest)
        else:
            parent[j] = None

    # Disconnected pieces: a parentless singleton that is not the first node
    # attaches to its order predecessor's cluster.
    for i, j in enumerate(order):
        if i > 0 and parent[j] is None:
            parent[j] = order[i - 1]

    clusters = {
        j: Cluster(root=j, members=tuple(sorted(ms, key=pos.__getitem__)))
        for j, ms in members.items()
    }
    return RootedJunctionTree(order=tuple(order), clusters=clusters, parent=parent)


def validate_rjt(tree: RootedJunctionTree, diagram: InfluenceDiagram) -> List[str]:
    """Check Definition 2.1 plus tree shape; returns violations as data."""
    problems: List[str] = []
    names = diagram.names()
    if sorted(tree.order) != sorted(names):
        problems.append("tree order is not a permutation of the diagram's nodes")
        return problems
    pos = {n: i for i, n in enumerate(tree.order)}

    if set(tree.clusters) != set(names):
        missing = set(names) - set(tree.clusters)
        extra = set(tree.clusters) - set(names)
        if missing:
            problems.append(f"nodes without a root cluster: {sorted(missing)}")
        if extra:
            problems.append(f"clusters rooted at unknown nodes: {sorted(extra)}")
        return problems

    for r, cluster in tree.clusters.items():
        if cluster.root != r:
            problems.append(f"cluster stored under {r!r} has root {cluster.root!r}")
        if r not in cluster.members:
            problems.append(f"cluster of {r!r} does not contain its root")
        if list(cluster.members) != sorted(cluster.members, key=pos.__getitem__):
            problems.append(f"members of cluster {r!r} are not in topological order")
        for p in diagram.parents(r):
            if p not in cluster.members:
                problems.append(f"cluster of {r!r} is missing parent {p!r}")

    # Parent links must form one tree.
    roots = [r for r in tree.clusters if tree.parent.get(r) is None]
    if len(roots) != 1:
        problems.append(f"expected one parentless cluster, found {sorted(roots)}")
        return problems
    seen = set()
    cur_level = [roots[0]]
    while cur_level:
        nxt = []
        for r in cur_level:
            if r in seen:
                problems.append(f"cluster {r!r} reached twice; parent links cycle")
                return problems
            seen.add(r)
            nxt.extend(c for c in tree.clusters if tree.parent.get(c) == r)
        cur_level = nxt
    if seen != set(tree.clusters):
        problems.append(
            f"clusters unreachable from the tree root: {sorted(set(tree.clusters) - seen)}"
        )
        return problems

    # Running intersection, checked per node: the clusters containing u must
    # form a connected subtree whose topmost cluster is u's own.
    for u in names:
        holding = [r for r, c in tree.clusters.items() if u in c.members]
        tops = []
        for r in holding:
            p = tree.parent.get(r)
            if p is None or u not in tree.clusters[p].members:
                tops.append(r)
        if len(tops) != 1:
            problems.append(
                f"clusters containing {u!r} form {len(tops)} disconnected groups"
            )
        elif tops[0] != u:
            problems.append(
                f"topmost cluster containing {u!r} is rooted at {tops[0]!r}, "
                f"not at {u!r}"
            )

    # Gradual property: one fresh member per non-root cluster.
    for r in tree.clusters:
        p = tree.parent.get(r)
        if p is None:
            continue
        fresh = set(tree.clusters[r].members) - set(tree.clusters[p].members)
        if fresh != {r}:
            problems.append(
                f"cluster {r!r} introduces {sorted(fresh)} over its parent, "
                f"expected exactly {{{r!r}}}"
            )
    return problems


def reachable_roots(tree: RootedJunctionTree, j: str) -> FrozenSet[str]:
    """Nodes whose root cluster sits in the subtree of C_j (j included)."""
    out = set()
    stack = [j]
    while stack:
        cur = stack.pop()
        out.add(cur)
        stack.extend(c for c in tree.clusters if tree.parent.get(c) == cur)
    return frozenset(out)


def directed_path_clusters(
    tree: RootedJunctionTree, start: str, end: str
) -> Tuple[str, ...]:
    """Roots of the clusters on the directed path C_start -> C_end.

    Inclusive of both ends; empty when no such path exists.
    """
    walk = [end]
    cur = end
    while cur != start:
        nxt = tree.parent.get(cur)
        if nxt is None:
            return ()
        cur = nxt
        walk.append(cur)
    return tuple(reversed(walk))


def modify_rjt(
    tree: RootedJunctionTree,
    targets: Iterable[str],
    trace: Optional[List[Tuple[Tuple[str, str], RootedJunctionTree]]] = None,
) -> RootedJunctionTree:
    """Grow the tree so some cluster contains every node in ``targets``.

    Let m be the topologically largest target.  Every other target n is
    routed into C_m: if C_m is not reachable from C_n, the subtree holding
    C_m is first re-hung below C_n (filling the clusters between the common
    ancestor and C_n with the severed arc's intersection so running
    intersection survives), then n is added to every cluster on the path
    from C_n to C_m.  Clusters and nodes are never removed, so the result
    contains the input clusters member-wise.

    ``trace``, when given, collects ``((step, node), snapshot)`` pairs after
    each fill / rehang / extend step.
    """
    targets = list(targets)
    if not targets:
        raise ValueError("targets must name at least one node")
    for t in targets:
        if t not in tree.clusters:
            raise ValueError(f"target {t!r} is not a diagram node")
    pos = {n: i for i, n in enumerate(tree.order)}

    members: Dict[str, Set[str]] = {
        r: set(c.members) for r, c in tree.clusters.items()
    }
    parent: Dict[str, Optional[str]] = dict(tree.parent)

    def snapshot() -> RootedJunctionTree:
        return RootedJunctionTree(
            order=tree.order,
            clusters={
                r: Cluster(root=r, members=tuple(sorted(ms, key=pos.__getitem__)))
                for r, ms in members.items()
            },
            parent=dict(parent),
        )

    def children_of(r: str) -> List[str]:
        return [c for c in tree.order if parent.get(c) == r]

    def subtree_roots(r: str) -> Set[str]:
        out, stack = set(), [r]
        while stack:
            cur = stack.pop()
            out.add(cur)
            stack.extend(children_of(cur))
        return out

    def path(a: str, b: str) -> List[str]:
        walk, cur = [b], b
        while cur != a:
            cur = parent.get(cur)
            if cur is None:
                return []
            walk.append(cur)
        return list(reversed(walk))

    m = max(targets, key=pos.__getitem__)
    rest = sorted((set(targets) - {m}), key=pos.__getitem__)
    for n in rest:
        if n in members[m]:
            continue
        if m not in subtree_roots(n):
            # Find the lowest (topologically largest) cluster from which both
            # C_n and C_m are reachable, and the child branch leading to C_m.
            common = [j for j in tree.order if {n, m} <= subtree_roots(j)]
            if not common:
                raise ValueError(f"no cluster reaches both {n!r} and {m!r}")
            e = max(common, key=pos.__getitem__)
            branches = [
                g
                for g in children_of(e)
                if m in subtree_roots(g) and n not in subtree_roots(g)
            ]
            if len(branches) != 1:
                raise ValueError(
                    f"expected one branch from {e!r} toward {m!r} avoiding "
                    f"{n!r}, found {branches}"
                )
            g = branches[0]
            carried = members[e] & members[g]
            for c in path(e, n):
                members[c] |= carried
            if trace is not None:
                trace.append((("fill", n), snapshot()))
            parent[g] = n
            if trace is not None:
                trace.append((("rehang", n), snapshot()))
        walk = path(n, m)
        if not walk:
            raise ValueError(f"re-hang failed to connect {n!r} to {m!r}")
        for c in walk:
            members[c].add(n)
        if trace is not None:
            trace.append((("extend", n), snapshot()))
    return snapshot()


def tree_from_members(
    order: Sequence[str],
    member_map: Dict[str, Sequence[str]],
    parent: Dict[str, Optional[str]],
) -> RootedJunctionTree:
    """Assemble a tree from explicit clusters (members get sorted)."""
    pos = {n: i for i, n in enumerate(order)}
    clusters = {
        r: Cluster(root=r, members=tuple(sorted(ms, key=pos.__getitem__)))
        for r, ms in member_map.items()
    }
    return RootedJunctionTree(order=tuple(order), clusters=clusters, parent=dict(parent))


def to_dot(tree: RootedJunctionTree) -> str:
    """Cluster tree in DOT syntax (one box per cluster, arcs parent->child)."""
    lines = ["digraph clusters {", "  node [shape=box];"]
    for r in tree.order:
        label = " ".join(tree.members(r))
        lines.append(f'  "{r}" [label="{label}"];')
    for p, c in tree.arcs():
        lines.append(f'  "{p}" -> "{c}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
