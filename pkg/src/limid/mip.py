"""Compile a junction tree into a mixed-integer linear program.

Variables: one probability-mass variable per cluster configuration
(``mu_<root>_<config>``) and one binary policy variable per decision,
parent configuration, and state (``delta_<d>_<pcfg>_<state>``).

Rows: each cluster's mass sums to one; adjacent clusters agree on the
marginal of their shared nodes; inside a chance or value cluster, the
mass of a configuration is the cluster's own marginal over the root node
times the root's CPT entry; inside a decision cluster, the analogous
product against the binary policy variable is written exactly with two
linear rows per configuration (valid because all masses live in [0, 1]),
plus one pick-one row per parent configuration.

Risk extensions: chance / logical / budget rows bound the mass of marked
configurations inside one covering cluster, and a CVaR block introduces
tail-bookkeeping variables over the distinct utilities of a single value
node, usable as objective or as a lower-bound constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .diagram import CapExceededError, ConfigIndexer, InfluenceDiagram, NodeKind
from .inference import round_to_sig
from .risk import (
    BudgetConstraint,
    ChanceConstraint,
    CvarConstraint,
    CvarObjective,
    LogicalConstraint,
    validate_risk_spec,
)
from .rjt import RootedJunctionTree

CLUSTER_STATES_CAP = 1 << 20

VAR_UNIT = "unit"
VAR_BINARY = "binary"
VAR_FREE = "free"


@dataclass(frozen=True)
class VarRef:
    index: int
    name: str
    kind: str


@dataclass(frozen=True)
class LinearConstraint:
    """sum(coef * var) sense rhs, with a provenance tag.

    Terms are merged per variable (no duplicates) and zero coefficients are
    dropped at construction.
    """

    terms: Tuple[Tuple[float, int], ...]
    sense: str
    rhs: float
    tag: str

    def __post_init__(self):
        if self.sense not in ("==", "<=", ">="):
            raise ValueError(f"bad constraint sense {self.sense!r}")

    @property
    def family(self) -> str:
        return self.tag.split("[", 1)[0]


def make_constraint(terms, sense: str, rhs: float, tag: str) -> LinearConstraint:
    merged: Dict[int, float] = {}
    order: List[int] = []
    for coef, var in terms:
        if var not in merged:
            merged[var] = 0.0
            order.append(var)
        merged[var] += coef
    packed = tuple((merged[v], v) for v in order if merged[v] != 0.0)
    return LinearConstraint(terms=packed, sense=sense, rhs=float(rhs), tag=tag)


@dataclass(frozen=True)
class ClusterLayout:
    """Precomputed index arithmetic for one cluster.

    ``group_of[cfg]`` drops the root node's coordinate (identifying the
    configuration of the other members), ``root_state[cfg]`` extracts it,
    and ``table_row[cfg]`` is the root's CPT row (its parents' configuration
    in declared parent order).  ``parent_groups`` maps each configuration of
    the tree-parent cluster to the group it projects onto, so local
    consistency and downward propagation use the same arithmetic.
    """

    root: str
    members: Tuple[str, ...]
    radices: Tuple[int, ...]
    total: int
    n_groups: int
    group_of: np.ndarray
    root_state: np.ndarray
    table_row: np.ndarray
    parent_groups: Optional[np.ndarray]


class CompileContext:
    """Diagram + tree + per-cluster layouts, shared by compiler and solvers."""

    def __init__(
        self,
        diagram: InfluenceDiagram,
        tree: RootedJunctionTree,
        cluster_cap: int = CLUSTER_STATES_CAP,
    ):
        self.diagram = diagram
        self.tree = tree
        self.layouts: Dict[str, ClusterLayout] = {}
        self.tree_order = self._tree_order()
        for root in tree.order:
            self.layouts[root] = self._layout(root, cluster_cap)

    def _tree_order(self) -> List[str]:
        # Parents before children; siblings by node order.  After a re-hang
        # the node order itself may put a cluster before its tree parent, so
        # the walk goes from the tree root.
        order: List[str] = []
        stack = [self.tree.tree_root]
        while stack:
            cur = stack.pop()
            order.append(cur)
            kids = [c for c in self.tree.order if self.tree.parent.get(c) == cur]
            stack.extend(reversed(kids))
        return order

    def _coords(self, members, radices, configs):
        coords = {}
        stride = 1
        for m, r in zip(reversed(members), reversed(radices)):
            coords[m] = (configs // stride) % r
            stride *= r
        return coords

    def _layout(self, root: str, cluster_cap: int) -> ClusterLayout:
        d, tree = self.diagram, self.tree
        members = tree.members(root)
        radices = tuple(d.n_states(m) for m in members)
        total = 1
        for r in radices:
            total *= r
        if total > cluster_cap:
            raise CapExceededError(
                f"cluster {root!r} state space (width drives exponential growth)",
                total,
                cluster_cap,
            )
        configs = np.arange(total)
        coords = self._coords(members, radices, configs)

        others = [m for m in members if m != root]
        group_of = np.zeros(total, dtype=np.int64)
        stride = 1
        for m in reversed(others):
            group_of += coords[m] * stride
            stride *= d.n_states(m)

        parents = d.parents(root)
        absent = [p for p in parents if p not in coords]
        if absent:
            raise ValueError(
                f"cluster {root!r} lacks the information set {absent}; "
                f"the tree is invalid (see validate_rjt)"
            )
        table_row = np.zeros(total, dtype=np.int64)
        stride = 1
        for p in reversed(parents):
            table_row += coords[p] * stride
            stride *= d.n_states(p)

        parent_root = tree.parent.get(root)
        parent_groups = None
        if parent_root is not None:
            pmembers = tree.members(parent_root)
            pradices = tuple(d.n_states(m) for m in pmembers)
            ptotal = 1
            for r in pradices:
                ptotal *= r
            missing = [m for m in others if m not in pmembers]
            if missing:
                raise ValueError(
                    f"tree is not gradual: cluster {root!r} members {missing} "
                    f"are absent from parent {parent_root!r}"
                )
            pcoords = self._coords(pmembers, pradices, np.arange(ptotal))
            parent_groups = np.zeros(ptotal, dtype=np.int64)
            stride = 1
            for m in reversed(others):
                parent_groups += pcoords[m] * stride
                stride *= d.n_states(m)

        return ClusterLayout(
            root=root,
            members=members,
            radices=radices,
            total=total,
            n_groups=total // d.n_states(root),
            group_of=group_of,
            root_state=coords[root],
            table_row=table_row,
            parent_groups=parent_groups,
        )


@dataclass
class CvarBlock:
    """Catalog of one CVaR tail block over a value cluster's utilities."""

    value_root: str
    alpha: float
    eps: float
    big_m: float
    utilities: np.ndarray
    config_groups: Tuple[Tuple[int, ...], ...]
    eta: int
    lam: Tuple[int, ...]
    lambar: Tuple[int, ...]
    rho: Tuple[int, ...]
    rhobar: Tuple[int, ...]
    mode: str  # "objective" or "constraint"
    bound: Optional[float] = None


@dataclass
class MipModel:
    """Solver-agnostic model: variables, rows, objective, catalogs."""

    variables: List[VarRef] = field(default_factory=list)
    constraints: List[LinearConstraint] = field(default_factory=list)
    objective: Tuple[Tuple[float, int], ...] = ()
    objective_sense: str = "max"
    mu_start: Dict[str, int] = field(default_factory=dict)
    mu_total: Dict[str, int] = field(default_factory=dict)
    delta_start: Dict[str, int] = field(default_factory=dict)
    delta_shape: Dict[str, Tuple[int, int]] = field(default_factory=dict)
    cvar: Optional[CvarBlock] = None

    def add_var(self, name: str, kind: str) -> int:
        idx = len(self.variables)
        self.variables.append(VarRef(index=idx, name=name, kind=kind))
        return idx

    def add_row(self, terms, sense: str, rhs: float, tag: str) -> None:
        self.constraints.append(make_constraint(terms, sense, rhs, tag))

    def mu_var(self, root: str, cfg: int) -> int:
        if not 0 <= cfg < self.mu_total[root]:
            raise IndexError(f"config {cfg} out of range for cluster {root!r}")
        return self.mu_start[root] + cfg

    def delta_var(self, decision: str, pcfg: int, state: int) -> int:
        n_pcfg, n_states = self.delta_shape[decision]
        if not (0 <= pcfg < n_pcfg and 0 <= state < n_states):
            raise IndexError(f"bad policy coordinates for {decision!r}")
        return self.delta_start[decision] + pcfg * n_states + state

    def var_name(self, idx: int) -> str:
        return self.variables[idx].name


def build_base_model(
    tree: RootedJunctionTree,
    diagram: InfluenceDiagram,
    cluster_cap: int = CLUSTER_STATES_CAP,
) -> Tuple[MipModel, CompileContext]:
    """Emit the expected-utility model for a diagram and its junction tree.

    Deterministic emission: clusters in topological root order with
    configurations ascending; mass variables first, then policy variables;
    row families in the order normalization, local consistency, chance
    coupling, decision coupling, pick-one.  The objective sums utility
    times mass over every value cluster (zero-utility terms omitted).
    """
    ctx = CompileContext(diagram, tree, cluster_cap=cluster_cap)
    model = MipModel()

    for root in tree.order:
        lay = ctx.layouts[root]
        model.mu_start[root] = len(model.variables)
        model.mu_total[root] = lay.total
        for cfg in range(lay.total):
            model.add_var(f"mu_{root}_{cfg}", VAR_UNIT)
    for d in diagram.decision_nodes:
        n_pcfg = diagram.parent_indexer(d).total
        n_states = diagram.n_states(d)
        model.delta_start[d] = len(model.variables)
        model.delta_shape[d] = (n_pcfg, n_states)
        for pcfg in range(n_pcfg):
            for s in range(n_states):
                model.add_var(f"delta_{d}_{pcfg}_{s}", VAR_BINARY)

    for root in tree.order:
        lay = ctx.layouts[root]
        model.add_row(
            [(1.0, model.mu_var(root, c)) for c in range(lay.total)],
            "==",
            1.0,
            f"normalize[{root}]",
        )

    for child in tree.order:
        parent = tree.parent.get(child)
        if parent is None:
            continue
        lay = ctx.layouts[child]
        parent_members = [
            [] for _ in range(lay.n_groups)
        ]  # parent configs projecting onto each group
        for pcfg, g in enumerate(lay.parent_groups):
            parent_members[g].append(pcfg)
        child_members = [[] for _ in range(lay.n_groups)]
        for cfg, g in enumerate(lay.group_of):
            child_members[g].append(cfg)
        for g in range(lay.n_groups):
            terms = [(1.0, model.mu_var(parent, p)) for p in parent_members[g]]
            terms += [(-1.0, model.mu_var(child, c)) for c in child_members[g]]
            model.add_row(terms, "==", 0.0, f"consistency[{parent}->{child}][g={g}]")

    for root in tree.order:
        if diagram.kind(root) == NodeKind.DECISION:
            continue
        lay = ctx.layouts[root]
        rows = diagram.cpts[root].rows
        siblings = _group_members(lay)
        for cfg in range(lay.total):
            p = float(rows[lay.table_row[cfg], lay.root_state[cfg]])
            terms = [(1.0, model.mu_var(root, cfg))]
            terms += [
                (-p, model.mu_var(root, c)) for c in siblings[lay.group_of[cfg]]
            ]
            model.add_row(terms, "==", 0.0, f"cpt_link[{root}][c={cfg}]")

    for root in tree.order:
        if diagram.kind(root) != NodeKind.DECISION:
            continue
        linearize_decision_coupling(model, ctx, root)
    for d in diagram.decision_nodes:
        n_pcfg, n_states = model.delta_shape[d]
        for pcfg in range(n_pcfg):
            model.add_row(
                [(1.0, model.delta_var(d, pcfg, s)) for s in range(n_states)],
                "==",
                1.0,
                f"policy_pick[{d}][i={pcfg}]",
            )

    objective: List[Tuple[float, int]] = []
    for root in tree.order:
        if diagram.kind(root) != NodeKind.VALUE:
            continue
        lay = ctx.layouts[root]
        values = diagram.utilities[root].values
        for cfg in range(lay.total):
            u = float(values[lay.root_state[cfg]])
            if u != 0.0:
                objective.append((u, model.mu_var(root, cfg)))
    model.objective = tuple(objective)
    return model, ctx


def _group_members(lay: ClusterLayout) -> List[List[int]]:
    out: List[List[int]] = [[] for _ in range(lay.n_groups)]
    for cfg, g in enumerate(lay.group_of):
        out[g].append(cfg)
    return out


def linearize_decision_coupling(model: MipModel, ctx: CompileContext, root: str) -> None:
    """Exact two-row linearization of mass = marginal * policy.

    For each configuration: mass is capped by the policy bit, and mass must
    reach the cluster's own root-marginal less the bit's slack.  Both rows
    are exact because masses live in [0, 1]; the root marginal is written as
    the sum over the root node's states inside the same cluster.
    """
    lay = ctx.layouts[root]
    siblings = _group_members(lay)
    for cfg in range(lay.total):
        dvar = model.delta_var(root, int(lay.table_row[cfg]), int(lay.root_state[cfg]))
        model.add_row(
            [(1.0, model.mu_var(root, cfg)), (-1.0, dvar)],
            "<=",
            0.0,
            f"policy_ub[{root}][c={cfg}]",
        )
        terms = [(1.0, model.mu_var(root, cfg))]
        terms += [(-1.0, model.mu_var(root, c)) for c in siblings[lay.group_of[cfg]]]
        terms.append((-1.0, dvar))
        model.add_row(terms, ">=", -1.0, f"policy_lb[{root}][c={cfg}]")


def _matching_configs(ctx: CompileContext, root: str, spec) -> List[int]:
    """Cluster configurations whose scope assignment triggers the spec."""
    d = ctx.diagram
    lay = ctx.layouts[root]
    scope = spec.scope
    indexer = ConfigIndexer(lay.members, lay.radices)
    hits = []
    for cfg in range(lay.total):
        states = indexer.states_of(cfg)
        assignment = {m: d.states(m)[s] for m, s in zip(lay.members, states)}
        if isinstance(spec, BudgetConstraint):
            hit = spec.violated(assignment)
        else:
            hit = spec.event.matches(assignment)
        if hit:
            hits.append(cfg)
    return hits


def _select_cluster(ctx: CompileContext, scope: Sequence[str], requested: Optional[str]):
    tree = ctx.tree
    need = set(scope)
    if requested is not None:
        if requested not in tree.clusters:
            raise ValueError(f"no cluster rooted at {requested!r}")
        have = set(tree.members(requested))
        if not need <= have:
            raise ValueError(
                f"cluster {requested!r} lacks {sorted(need - have)}; "
                f"extend the tree with modify_rjt over {sorted(need)} first"
            )
        return requested
    covering = [r for r in tree.order if need <= set(tree.members(r))]
    if not covering:
        raise ValueError(
            f"no cluster contains {sorted(need)}; extend the tree with "
            f"modify_rjt over {sorted(need)} (or merge value nodes) first"
        )
    pos = {n: i for i, n in enumerate(tree.order)}
    return min(covering, key=lambda r: (len(tree.members(r)), pos[r]))


def add_risk(model: MipModel, spec, ctx: CompileContext) -> MipModel:
    """Install a risk constraint or objective into the model."""
    problems = validate_risk_spec(ctx.diagram, spec)
    if problems:
        raise ValueError("; ".join(problems))
    if isinstance(spec, (ChanceConstraint, LogicalConstraint, BudgetConstraint)):
        root = _select_cluster(ctx, spec.scope, spec.cluster_root)
        hits = _matching_configs(ctx, root, spec)
        terms = [(1.0, model.mu_var(root, c)) for c in hits]
        if isinstance(spec, ChanceConstraint):
            model.add_row(terms, spec.sense, spec.p, f"chance[{root}]")
        elif isinstance(spec, LogicalConstraint):
            model.add_row(terms, "<=", 0.0, f"logical[{root}]")
        else:
            model.add_row(terms, "<=", 0.0, f"budget[{root}]")
        return model
    if isinstance(spec, (CvarObjective, CvarConstraint)):
        _add_cvar_block(model, spec, ctx)
        return model
    raise ValueError(f"unsupported risk spec {type(spec).__name__}")


def _add_cvar_block(model: MipModel, spec, ctx: CompileContext) -> None:
    if model.cvar is not None:
        raise ValueError("model already carries a CVaR block")
    d = ctx.diagram
    values = d.value_nodes
    if len(values) != 1:
        raise ValueError(
            f"CVaR needs a single value node, found {len(values)}; "
            f"run merge_value_nodes first"
        )
    v = values[0]
    lay = ctx.layouts[v]
    per_cfg = round_to_sig(d.utilities[v].values[lay.root_state])
    utils = np.unique(per_cfg)
    groups = tuple(
        tuple(int(c) for c in np.nonzero(per_cfg == u)[0]) for u in utils
    )
    if utils.size > 1:
        eps = float(np.min(np.diff(utils))) / 2.0
    else:
        eps = 1.0
    big_m = float(utils[-1] - utils[0]) + eps

    eta = model.add_var("eta", VAR_FREE)
    lam = tuple(model.add_var(f"lam_{k}", VAR_BINARY) for k in range(utils.size))
    lambar = tuple(model.add_var(f"lambar_{k}", VAR_BINARY) for k in range(utils.size))
    rho = tuple(model.add_var(f"rho_{k}", VAR_UNIT) for k in range(utils.size))
    rhobar = tuple(model.add_var(f"rhobar_{k}", VAR_UNIT) for k in range(utils.size))

    alpha = spec.alpha
    for k, u in enumerate(utils):
        u = float(u)
        mass = [(1.0, model.mu_var(v, c)) for c in groups[k]]
        model.add_row(
            [(1.0, eta), (-big_m, lam[k])], "<=", u, f"cvar_below_ub[k={k}]"
        )
        model.add_row(
            [(1.0, eta), (-(big_m + eps), lam[k])], ">=", u - big_m,
            f"cvar_below_lb[k={k}]",
        )
        model.add_row(
            [(1.0, eta), (-(big_m + eps), lambar[k])], "<=", u - eps,
            f"cvar_at_ub[k={k}]",
        )
        model.add_row(
            [(1.0, eta), (-big_m, lambar[k])], ">=", u - big_m,
            f"cvar_at_lb[k={k}]",
        )
        model.add_row(
            [(1.0, rhobar[k]), (-1.0, lambar[k])], "<=", 0.0,
            f"cvar_share_cap[k={k}]",
        )
        model.add_row(
            mass + [(1.0, lam[k]), (-1.0, rho[k])], "<=", 1.0,
            f"cvar_tail_lo[k={k}]",
        )
        model.add_row(
            [(1.0, rho[k]), (-1.0, lam[k])], "<=", 0.0, f"cvar_tail_hi[k={k}]"
        )
        model.add_row(
            [(1.0, rho[k]), (-1.0, rhobar[k])], "<=", 0.0,
            f"cvar_share_order[k={k}]",
        )
        model.add_row(
            [(1.0, rhobar[k])] + [(-c, v_) for c, v_ in mass], "<=", 0.0,
            f"cvar_share_mass[k={k}]",
        )
    model.add_row(
        [(1.0, r) for r in rhobar], "==", alpha, "cvar_share_total"
    )

    tail_terms = tuple(
        (float(u) / alpha, rhobar[k]) for k, u in enumerate(utils) if u != 0.0
    )
    if isinstance(spec, CvarObjective):
        mode = "objective"
        bound = None
        model.objective = tail_terms
    else:
        mode = "constraint"
        bound = spec.bound
        model.add_row(list(tail_terms), ">=", spec.bound, "cvar_floor")
    model.cvar = CvarBlock(
        value_root=v,
        alpha=alpha,
        eps=eps,
        big_m=big_m,
        utilities=utils,
        config_groups=groups,
        eta=eta,
        lam=lam,
        lambar=lambar,
        rho=rho,
        rhobar=rhobar,
        mode=mode,
        bound=bound,
    )


def model_stats(model: MipModel) -> Dict[str, Dict[str, int]]:
    """Variable counts by name family and row counts by tag family."""
    variables: Dict[str, int] = {"total": len(model.variables)}
    for v in model.variables:
        stem = v.name.split("_", 1)[0]
        variables[stem] = variables.get(stem, 0) + 1
        variables[v.kind] = variables.get(v.kind, 0) + 1
    constraints: Dict[str, int] = {"total": len(model.constraints)}
    for c in model.constraints:
        constraints[c.family] = constraints.get(c.family, 0) + 1
    return {"variables": variables, "constraints": constraints}
