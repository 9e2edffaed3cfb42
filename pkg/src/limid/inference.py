"""Exact inference over the full joint state space.

Everything here works on the explicit joint probability tensor: one axis
per node in topological order, each CPT (and each decision rule, as a 0/1
table) broadcast-multiplied in.  No elimination order, no message passing;
simplicity is the guarantee of correctness, which is what an oracle is
for.  Sizes are guarded by caps and refused beyond them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import reduce
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ._tensor import place_table
from .diagram import (
    CapExceededError,
    ConfigIndexer,
    InfluenceDiagram,
    NodeKind,
    Strategy,
    check_strategy,
    topological_order,
)
from .risk import (
    BudgetConstraint,
    ChanceConstraint,
    CvarConstraint,
    CvarObjective,
    LogicalConstraint,
    MeuObjective,
)

JOINT_STATES_CAP = 1 << 26
STRATEGY_CAP = 1 << 24
ATOM_PROB_FLOOR = 1e-15
UTILITY_SIG_DIGITS = 12


def round_to_sig(values: np.ndarray, digits: int = UTILITY_SIG_DIGITS) -> np.ndarray:
    """Round to ``digits`` significant digits (aggregation key for utilities)."""
    arr = np.asarray(values, dtype=float)
    out = arr.copy()
    nz = (arr != 0) & np.isfinite(arr)
    mag = np.floor(np.log10(np.abs(arr[nz])))
    scale = np.power(10.0, digits - 1 - mag)
    out[nz] = np.round(arr[nz] * scale) / scale
    return out


@dataclass(frozen=True)
class UtilityDistribution:
    """Distribution of total utility: ascending atoms, probabilities > 0.

    Atoms are aggregated by exact equality of the utility after rounding to
    12 significant digits; atoms below probability 1e-15 are dropped; the
    remaining probabilities must sum to 1 within 1e-9.
    """

    utilities: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.utilities, dtype=float)
        p = np.asarray(self.probabilities, dtype=float)
        if u.shape != p.shape or u.ndim != 1:
            raise ValueError("utilities and probabilities must be equal-length 1-d")
        if u.size and np.any(np.diff(u) <= 0):
            raise ValueError("utilities must be strictly ascending")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()!r}, expected 1")
        object.__setattr__(self, "utilities", u)
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def from_values(
        cls, values: np.ndarray, probs: np.ndarray
    ) -> "UtilityDistribution":
        keys = round_to_sig(np.asarray(values, dtype=float))
        uniq, inverse = np.unique(keys, return_inverse=True)
        mass = np.bincount(inverse, weights=np.asarray(probs, dtype=float),
                           minlength=uniq.size)
        keep = mass > ATOM_PROB_FLOOR
        return cls(utilities=uniq[keep], probabilities=mass[keep])

    @property
    def atoms(self) -> List[Tuple[float, float]]:
        return list(zip(self.utilities.tolist(), self.probabilities.tolist()))

    def expected(self) -> float:
        return float(np.dot(self.utilities, self.probabilities))


@dataclass(frozen=True)
class TailRisk:
    var: float
    cvar: float


def cvar_of_distribution(dist: UtilityDistribution, alpha: float) -> TailRisk:
    """Lower-tail value at risk and conditional value at risk.

    The value at risk is the smallest utility whose cumulative probability
    reaches alpha; CVaR averages utility over that worst alpha-tail, taking
    only the needed share of probability at the boundary atom.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    cum = np.cumsum(dist.probabilities)
    idx = int(np.searchsorted(cum, alpha - 1e-15))
    idx = min(idx, dist.utilities.size - 1)
    var = float(dist.utilities[idx])
    below = float(np.dot(dist.utilities[:idx], dist.probabilities[:idx]))
    boundary_mass = alpha - (float(cum[idx - 1]) if idx > 0 else 0.0)
    return TailRisk(var=var, cvar=(below + boundary_mass * var) / alpha)


def tail_witness(
    dist: UtilityDistribution, alpha: float, eta: Optional[float] = None
) -> Dict[str, np.ndarray]:
    """Per-atom tail bookkeeping for a distribution at level alpha.

    Returns arrays over the atoms: ``below`` marks utilities under eta,
    ``at_or_below`` marks utilities not above eta, ``tail_share`` is the
    probability each atom contributes to the worst alpha-tail (full mass
    under eta, the remaining share at eta, zero above), and ``eta`` itself.
    With the default eta (the alpha-quantile) the shares sum to alpha and
    average to CVaR.
    """
    if eta is None:
        eta = cvar_of_distribution(dist, alpha).var
    u = dist.utilities
    p = dist.probabilities
    below = u < eta
    at_or_below = u <= eta
    tail = np.where(below, p, 0.0)
    remaining = alpha - tail.sum()
    shares = tail.copy()
    shares[u == eta] = remaining
    return {
        "eta": float(eta),
        "below": below,
        "at_or_below": at_or_below,
        "tail_share": shares,
    }


class Evaluator:
    """Joint-tensor evaluator with the strategy-independent parts cached."""

    def __init__(self, diagram: InfluenceDiagram, cap: int = JOINT_STATES_CAP):
        self.diagram = diagram
        self.order = topological_order(diagram)
        self.sizes = [diagram.n_states(n) for n in self.order]
        total = 1
        for s in self.sizes:
            total *= s
            if total > cap:
                raise CapExceededError("joint state space", total, cap)
        self.total = total
        self.pos = {n: i for i, n in enumerate(self.order)}

        factors = []
        for name in self.order:
            if diagram.kind(name) == NodeKind.DECISION:
                continue
            factors.append(self._placed_table(name, diagram.cpts[name].rows))
        self.base = reduce(np.multiply, factors) if factors else np.ones(self.sizes)

        value_axes = [
            place_table(self.sizes, [self.pos[v]], diagram.utilities[v].values)
            for v in diagram.value_nodes
        ]
        if value_axes:
            utils = np.broadcast_to(reduce(np.add, value_axes), self.sizes)
        else:
            utils = np.zeros(self.sizes)
        flat_utils = utils.ravel()
        keys = round_to_sig(flat_utils)
        self.unique_utilities, self._inverse = np.unique(keys, return_inverse=True)
        self._inverse = self._inverse.ravel()
        self._flat_utils = np.ascontiguousarray(flat_utils)

    def _placed_table(self, name: str, rows: np.ndarray) -> np.ndarray:
        ps = self.diagram.parents(name)
        shaped = rows.reshape(
            [self.diagram.n_states(p) for p in ps] + [self.diagram.n_states(name)]
        )
        return place_table(self.sizes, [self.pos[p] for p in ps] + [self.pos[name]], shaped)

    def _rule_table(self, d: str, rule: Tuple[int, ...]) -> np.ndarray:
        rows = np.zeros((len(rule), self.diagram.n_states(d)))
        rows[np.arange(len(rule)), list(rule)] = 1.0
        return self._placed_table(d, rows)

    def joint(self, strategy: Strategy) -> np.ndarray:
        problems = check_strategy(self.diagram, strategy)
        if problems:
            raise ValueError("; ".join(problems))
        grid = self.base
        for d in self.diagram.decision_nodes:
            grid = grid * self._rule_table(d, strategy.rules[d])
        return np.broadcast_to(grid, self.sizes)

    def distribution(self, strategy: Strategy) -> UtilityDistribution:
        mass = np.bincount(
            self._inverse,
            weights=self.joint(strategy).ravel(),
            minlength=self.unique_utilities.size,
        )
        keep = mass > ATOM_PROB_FLOOR
        return UtilityDistribution(
            utilities=self.unique_utilities[keep], probabilities=mass[keep]
        )

    def expected(self, strategy: Strategy) -> float:
        """Expected total utility from the unrounded utility grid.

        More precise than ``distribution(...).expected()``, whose atoms are
        rounded to 12 significant digits for aggregation.
        """
        return float(np.dot(self._flat_utils, self.joint(strategy).ravel()))

    def marginal(self, strategy: Strategy, scope: Sequence[str]) -> np.ndarray:
        """Flat probability table over ``scope`` in the given node order."""
        axes_keep = [self.pos[n] for n in scope]
        if len(set(axes_keep)) != len(axes_keep):
            raise ValueError("marginal scope repeats a node")
        drop = tuple(i for i in range(len(self.sizes)) if i not in set(axes_keep))
        table = self.joint(strategy).sum(axis=drop)
        # Axes of ``table`` follow ascending grid position; rearrange to the
        # caller's scope order.
        rank = {a: i for i, a in enumerate(sorted(axes_keep))}
        table = np.transpose(table, [rank[a] for a in axes_keep])
        return table.ravel()


def evaluate_strategy(
    diagram: InfluenceDiagram, strategy: Strategy, cap: int = JOINT_STATES_CAP
) -> UtilityDistribution:
    """Distribution of total utility under a fixed deterministic strategy."""
    return Evaluator(diagram, cap=cap).distribution(strategy)


def joint_marginal(
    diagram: InfluenceDiagram,
    strategy: Strategy,
    scope: Sequence[str],
    cap: int = JOINT_STATES_CAP,
) -> np.ndarray:
    """Marginal probability table over ``scope`` (flat, scope order given)."""
    return Evaluator(diagram, cap=cap).marginal(strategy, scope)


def strategy_count(diagram: InfluenceDiagram) -> int:
    total = 1
    for d in diagram.decision_nodes:
        total *= diagram.n_states(d) ** diagram.parent_indexer(d).total
    return total


def enumerate_strategies(
    diagram: InfluenceDiagram, cap: int = STRATEGY_CAP
) -> Iterator[Strategy]:
    """All feasible deterministic strategies, lexicographic, each exactly once.

    Order: decisions in declaration order, each rule read as a tuple of
    chosen state indices per ascending parent configuration; earlier
    decisions are more significant.
    """
    count = strategy_count(diagram)
    if count > cap:
        raise CapExceededError("strategy enumeration", count, cap)
    decisions = diagram.decision_nodes
    rule_spaces = [
        itertools.product(
            range(diagram.n_states(d)), repeat=diagram.parent_indexer(d).total
        )
        for d in decisions
    ]
    for combo in itertools.product(*rule_spaces):
        yield Strategy(rules=dict(zip(decisions, combo)))


@dataclass(frozen=True)
class OracleResult:
    feasible: bool
    best: Optional[Strategy]
    objective_value: Optional[float]
    n_strategies: int
    n_feasible: int


def _constraint_ok(evaluator: Evaluator, strategy: Strategy, spec, tol: float) -> bool:
    diagram = evaluator.diagram
    if isinstance(spec, (ChanceConstraint, LogicalConstraint, BudgetConstraint)):
        scope = spec.scope
        table = evaluator.marginal(strategy, scope)
        indexer = diagram.indexer(scope)
        prob = 0.0
        for idx in range(indexer.total):
            states = indexer.states_of(idx)
            assignment = {
                n: diagram.states(n)[s] for n, s in zip(scope, states)
            }
            if isinstance(spec, BudgetConstraint):
                hit = spec.violated(assignment)
            else:
                hit = spec.event.matches(assignment)
            if hit:
                prob += float(table[idx])
        if isinstance(spec, ChanceConstraint) and spec.sense == ">=":
            return prob >= spec.p - tol
        bound = spec.p if isinstance(spec, ChanceConstraint) else 0.0
        return prob <= bound + tol
    if isinstance(spec, CvarConstraint):
        dist = evaluator.distribution(strategy)
        return cvar_of_distribution(dist, spec.alpha).cvar >= spec.bound - tol
    raise ValueError(f"unsupported constraint type {type(spec).__name__}")


def oracle_optimize(
    diagram: InfluenceDiagram,
    objective=MeuObjective(),
    constraints: Iterable = (),
    cap: int = STRATEGY_CAP,
    joint_cap: int = JOINT_STATES_CAP,
    tol: float = 1e-9,
) -> OracleResult:
    """Best feasible strategy by exhaustive enumeration.

    Ties break toward the lexicographically smallest strategy because the
    incumbent is replaced only on strict improvement along the lexicographic
    enumeration order.
    """
    evaluator = Evaluator(diagram, cap=joint_cap)
    constraints = list(constraints)
    best: Optional[Strategy] = None
    best_val: Optional[float] = None
    n_total = 0
    n_feasible = 0
    for strategy in enumerate_strategies(diagram, cap=cap):
        n_total += 1
        if not all(_constraint_ok(evaluator, strategy, c, tol) for c in constraints):
            continue
        n_feasible += 1
        if isinstance(objective, MeuObjective):
            val = evaluator.expected(strategy)
        elif isinstance(objective, CvarObjective):
            dist = evaluator.distribution(strategy)
            val = cvar_of_distribution(dist, objective.alpha).cvar
        else:
            raise ValueError(f"unsupported objective type {type(objective).__name__}")
        if best_val is None or val > best_val:
            best, best_val = strategy, val
    return OracleResult(
        feasible=best is not None,
        best=best,
        objective_value=best_val,
        n_strategies=n_total,
        n_feasible=n_feasible,
    )
