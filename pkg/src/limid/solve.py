"""Solve compiled models: LP text export, feasibility checking, an exact
reference solver, an external-solver bridge, and solution decoding.

The reference solver enumerates deterministic strategies, propagates the
implied cluster masses down the tree, synthesizes any tail-bookkeeping
variables from the resulting utility distribution, and keeps the best
assignment that satisfies every row.  It is exact (no LP relaxation) and
meant for small diagrams and for cross-checking external solvers.
"""

from __future__ import annotations

import shlex
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from .diagram import NodeKind, Strategy
from .inference import (
    STRATEGY_CAP,
    UtilityDistribution,
    enumerate_strategies,
    tail_witness,
)
from .mip import CompileContext, MipModel, VAR_BINARY, VAR_FREE, VAR_UNIT

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNKNOWN = "unknown"

LP_LINE_WIDTH = 200
_LP_NAME_OK = frozenset(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_."
)


class ExternalSolverError(RuntimeError):
    """Raised when an external solver run cannot produce a usable solution."""

    def __init__(self, message: str, command: Optional[Sequence[str]] = None,
                 missing: Optional[List[str]] = None):
        super().__init__(message)
        self.command = list(command) if command else None
        self.missing = missing or []


@dataclass
class Solution:
    status: str
    objective_value: Optional[float]
    assignment: Dict[str, float]
    source: str
    violations: List[str] = field(default_factory=list)
    info: Dict[str, object] = field(default_factory=dict)


@dataclass
class DecodedSolution:
    strategy: Strategy
    objective_value: float
    expected_utility: Optional[float]
    distribution: Optional[UtilityDistribution]
    cluster_marginals: Dict[str, np.ndarray]


# ---------------------------------------------------------------------------
# LP text export


def _fmt(x: float) -> str:
    return repr(float(x))


def _terms_text(terms, names: List[str]) -> List[str]:
    tokens: List[str] = []
    for i, (coef, var) in enumerate(terms):
        if coef < 0:
            sign, mag = "-", -coef
        else:
            sign, mag = "+", coef
        if i == 0 and sign == "+":
            tokens.append(f"{_fmt(mag)} {names[var]}")
        else:
            tokens.append(f"{sign} {_fmt(mag)} {names[var]}")
    return tokens


def _wrap(prefix: str, tokens: List[str], tail: str = "") -> List[str]:
    lines = []
    cur = prefix
    for tok in tokens:
        if len(cur) + 1 + len(tok) > LP_LINE_WIDTH and cur.strip():
            lines.append(cur)
            cur = " " + tok
        else:
            cur = cur + " " + tok
    if tail:
        cur = cur + " " + tail
    lines.append(cur)
    return lines


def export_lp(model: MipModel) -> str:
    """Render the model as deterministic LP-format text.

    One comment line (``\\ tag``) precedes each row; rows are named c1..cN in
    emission order; coefficients use shortest round-trip decimal form; lines
    wrap near 200 characters with continuations indented by one space.
    """
    names = [v.name for v in model.variables]
    for name in names:
        if not set(name) <= _LP_NAME_OK or name[0].isdigit():
            raise ValueError(
                f"variable name {name!r} is not LP-safe; rename diagram nodes "
                f"to use letters, digits, '_' or '.'"
            )
    out: List[str] = ["\\ influence diagram mixed-integer program"]
    sense_word = "Maximize" if model.objective_sense == "max" else "Minimize"
    out.append(sense_word)
    if model.objective:
        obj_tokens = _terms_text(model.objective, names)
    else:
        obj_tokens = [f"0.0 {names[0]}"]
    out.extend(_wrap(" obj:", obj_tokens))
    out.append("Subject To")
    for i, row in enumerate(model.constraints, start=1):
        out.append(f"\\ {row.tag}")
        rel = {"==": "=", "<=": "<=", ">=": ">="}[row.sense]
        tokens = _terms_text(row.terms, names)
        out.extend(_wrap(f" c{i}:", tokens, tail=f"{rel} {_fmt(row.rhs)}"))
    out.append("Bounds")
    for v in model.variables:
        if v.kind == VAR_UNIT:
            out.append(f" 0 <= {v.name} <= 1")
        elif v.kind == VAR_FREE:
            out.append(f" {v.name} free")
    binaries = [v.name for v in model.variables if v.kind == VAR_BINARY]
    if binaries:
        out.append("Binaries")
        out.extend(f" {name}" for name in binaries)
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(model: MipModel, path: Union[str, Path]) -> None:
    Path(path).write_text(export_lp(model))


# ---------------------------------------------------------------------------
# Row checking


class RowSystem:
    """Sparse row matrix of a model for fast repeated feasibility checks."""

    def __init__(self, model: MipModel):
        self.model = model
        n = len(model.variables)
        data, rows, cols = [], [], []
        rhs = []
        senses = []
        for i, c in enumerate(model.constraints):
            for coef, var in c.terms:
                data.append(coef)
                rows.append(i)
                cols.append(var)
            rhs.append(c.rhs)
            senses.append(c.sense)
        m = len(model.constraints)
        self.matrix = sparse.csr_matrix(
            (data, (rows, cols)), shape=(m, n), dtype=float
        )
        self.rhs = np.asarray(rhs, dtype=float)
        self.senses = np.asarray(senses)
        obj = np.zeros(n)
        for coef, var in model.objective:
            obj[var] += coef
        self.objective_vector = obj

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective_vector @ x)

    def violations(self, x: np.ndarray, tol: float) -> List[str]:
        problems: List[str] = []
        res = self.matrix @ x - self.rhs
        bad_eq = (self.senses == "==") & (np.abs(res) > tol)
        bad_le = (self.senses == "<=") & (res > tol)
        bad_ge = (self.senses == ">=") & (res < -tol)
        for i in np.nonzero(bad_eq | bad_le | bad_ge)[0]:
            row = self.model.constraints[i]
            problems.append(
                f"row c{i + 1} [{row.tag}] residual {res[i]:.3e} "
                f"violates sense {row.sense}"
            )
        for v in self.model.variables:
            val = x[v.index]
            if v.kind in (VAR_UNIT, VAR_BINARY):
                if val < -tol or val > 1.0 + tol:
                    problems.append(
                        f"variable {v.name} = {val!r} outside [0, 1]"
                    )
            if v.kind == VAR_BINARY and abs(val - round(val)) > tol:
                problems.append(f"variable {v.name} = {val!r} is not integral")
        return problems


def assignment_vector(model: MipModel, assignment: Dict[str, float]) -> np.ndarray:
    missing = [v.name for v in model.variables if v.name not in assignment]
    if missing:
        shown = ", ".join(missing[:10])
        raise ExternalSolverError(
            f"solution misses {len(missing)} model variables ({shown}"
            + (", ..." if len(missing) > 10 else "") + ")",
            missing=missing,
        )
    return np.array([float(assignment[v.name]) for v in model.variables])


def check_solution(
    model: MipModel,
    assignment: Union[Dict[str, float], np.ndarray],
    tol: float = 1e-6,
) -> List[str]:
    """All row, bound, and integrality violations beyond tol (empty if none)."""
    if isinstance(assignment, dict):
        x = assignment_vector(model, assignment)
    else:
        x = np.asarray(assignment, dtype=float)
    return RowSystem(model).violations(x, tol)


# ---------------------------------------------------------------------------
# Reference solver


def propagate_cluster_marginals(
    ctx: CompileContext, strategy: Strategy
) -> Dict[str, np.ndarray]:
    """Exact cluster-configuration masses implied by a strategy.

    Walks the tree from its root: each cluster's mass over the inherited
    members is the parent's marginal, multiplied by the root node's CPT row
    (or by the strategy's indicator for decisions).
    """
    d = ctx.diagram
    mu: Dict[str, np.ndarray] = {}
    for root in ctx.tree_order:
        lay = ctx.layouts[root]
        if lay.parent_groups is None:
            if lay.n_groups != 1:
                raise ValueError(
                    f"top cluster {root!r} has extra members; the tree is "
                    f"not a valid rooted junction tree"
                )
            inherited = np.ones(1)
        else:
            parent_root = ctx.tree.parent[root]
            inherited = np.bincount(
                lay.parent_groups, weights=mu[parent_root],
                minlength=lay.n_groups,
            )
        if d.kind(root) == NodeKind.DECISION:
            rule = np.asarray(strategy.rules[root], dtype=np.int64)
            factor = (rule[lay.table_row] == lay.root_state).astype(float)
        else:
            rows = d.cpts[root].rows
            factor = rows[lay.table_row, lay.root_state]
        mu[root] = inherited[lay.group_of] * factor
    return mu


def _strategy_vector(
    model: MipModel, ctx: CompileContext, strategy: Strategy
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Full variable assignment implied by a strategy (masses, policy bits,
    and canonical tail bookkeeping when the model carries a CVaR block)."""
    x = np.zeros(len(model.variables))
    mu = propagate_cluster_marginals(ctx, strategy)
    for root, arr in mu.items():
        start = model.mu_start[root]
        x[start:start + arr.size] = arr
    for dnode, rule in strategy.rules.items():
        for pcfg, s in enumerate(rule):
            x[model.delta_var(dnode, pcfg, s)] = 1.0
    block = model.cvar
    if block is not None:
        masses = mu[block.value_root]
        probs = np.array([
            float(sum(masses[c] for c in grp)) for grp in block.config_groups
        ])
        dist = UtilityDistribution(
            utilities=block.utilities, probabilities=probs
        )
        wit = tail_witness(dist, block.alpha)
        x[block.eta] = wit["eta"]
        for k in range(block.utilities.size):
            x[block.lam[k]] = 1.0 if wit["below"][k] else 0.0
            x[block.lambar[k]] = 1.0 if wit["at_or_below"][k] else 0.0
            x[block.rho[k]] = probs[k] if wit["below"][k] else 0.0
            x[block.rhobar[k]] = wit["tail_share"][k]
    return x, mu


def solve_reference(
    model: MipModel,
    ctx: CompileContext,
    tol: float = 1e-9,
    cap: int = STRATEGY_CAP,
) -> Solution:
    """Exact optimum by strategy enumeration with full row checking.

    Every deterministic strategy is converted to a complete variable
    assignment; assignments violating any row are discarded; ties break
    toward the lexicographically smallest strategy (the incumbent changes
    only on strict improvement).
    """
    system = RowSystem(model)
    best_x: Optional[np.ndarray] = None
    best_val: Optional[float] = None
    n_total = 0
    n_feasible = 0
    for strategy in enumerate_strategies(ctx.diagram, cap=cap):
        n_total += 1
        x, _ = _strategy_vector(model, ctx, strategy)
        if system.violations(x, tol):
            continue
        n_feasible += 1
        val = system.objective_value(x)
        if best_val is None or val > best_val:
            best_val, best_x = val, x
    if best_x is None:
        return Solution(
            status=STATUS_INFEASIBLE,
            objective_value=None,
            assignment={},
            source="reference",
            info={"strategies": n_total, "feasible": 0},
        )
    assignment = {
        v.name: float(best_x[v.index]) for v in model.variables
    }
    return Solution(
        status=STATUS_OPTIMAL,
        objective_value=best_val,
        assignment=assignment,
        source="reference",
        info={"strategies": n_total, "feasible": n_feasible},
    )


# ---------------------------------------------------------------------------
# External solver bridge


def parse_name_value_listing(text: str) -> Dict[str, object]:
    """Parse ``status <word>``, ``objective <num>``, and ``<name> <num>``
    lines into a dict with keys "status", "objective", "assignment"."""
    status = None
    objective = None
    assignment: Dict[str, float] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith(("#", "\\")):
            continue
        parts = line.split()
        if len(parts) != 2:
            continue
        key, value = parts
        if key == "status":
            status = value.lower()
            continue
        try:
            num = float(value)
        except ValueError:
            continue
        if key == "objective":
            objective = num
        else:
            assignment[key] = num
    return {"status": status, "objective": objective, "assignment": assignment}


def _command_argv(command: Union[str, Sequence[str]], lp_path: str) -> List[str]:
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    if any("{lp}" in a for a in argv):
        return [a.replace("{lp}", lp_path) for a in argv]
    return argv + [lp_path]


def solve_external(
    model: MipModel,
    command: Union[str, Sequence[str]],
    tol: float = 1e-6,
    timeout: Optional[float] = None,
    parse: Callable[[str], Dict[str, object]] = parse_name_value_listing,
) -> Solution:
    """Run an external MILP solver over the exported LP text.

    The command is a template (string or argv list); ``{lp}`` is replaced by
    the LP file path, or the path is appended when no placeholder appears.
    The solver must print a ``status`` line and whitespace-separated
    name/value pairs; other layouts can supply their own ``parse`` callable.
    Reported solutions are re-checked against every row; a failing re-check
    downgrades the status to "unknown" and records the violations.
    """
    with tempfile.TemporaryDirectory(prefix="limid_lp_") as tmp:
        lp_path = str(Path(tmp) / "model.lp")
        write_lp(model, lp_path)
        argv = _command_argv(command, lp_path)
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=timeout
            )
        except FileNotFoundError as exc:
            raise ExternalSolverError(
                f"solver executable not found: {argv[0]!r}", command=argv
            ) from exc
        except subprocess.TimeoutExpired as exc:
            raise ExternalSolverError(
                f"solver timed out after {timeout}s", command=argv
            ) from exc
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout or "").strip()[-500:]
        raise ExternalSolverError(
            f"solver exited with code {proc.returncode}: {tail}", command=argv
        )
    parsed = parse(proc.stdout)
    status_word = parsed.get("status")
    if status_word in ("optimal", "solved"):
        status = STATUS_OPTIMAL
    elif status_word == "infeasible":
        status = STATUS_INFEASIBLE
    else:
        status = STATUS_UNKNOWN
    info: Dict[str, object] = {"command": argv}
    if parsed.get("objective") is not None:
        info["reported_objective"] = parsed["objective"]
    if status != STATUS_OPTIMAL:
        return Solution(
            status=status,
            objective_value=None,
            assignment=dict(parsed.get("assignment") or {}),
            source="external",
            info=info,
        )
    assignment = dict(parsed["assignment"])
    x = assignment_vector(model, assignment)  # raises with missing names
    system = RowSystem(model)
    violations = system.violations(x, tol)
    objective = system.objective_value(x)
    if violations:
        return Solution(
            status=STATUS_UNKNOWN,
            objective_value=objective,
            assignment=assignment,
            source="external",
            violations=violations,
            info=info,
        )
    return Solution(
        status=STATUS_OPTIMAL,
        objective_value=objective,
        assignment=assignment,
        source="external",
        info=info,
    )


def reference_backend_command() -> List[str]:
    """Command template running the bundled scipy/HiGHS backend."""
    return [sys.executable, "-m", "limid.milp_backend", "{lp}"]


# ---------------------------------------------------------------------------
# Decoding


def decode(
    solution: Solution,
    model: MipModel,
    ctx: CompileContext,
    tol: float = 1e-6,
) -> DecodedSolution:
    """Read the strategy, cluster masses, and (single value node only) the
    utility distribution out of a solved model.

    Policy bits must sit within tol of 0 or 1 and pick exactly one state per
    parent configuration; masses may carry solver noise up to tol, which is
    clipped and renormalized before building the distribution.
    """
    if solution.status != STATUS_OPTIMAL:
        raise ValueError(f"cannot decode a solution with status {solution.status!r}")
    x = assignment_vector(model, solution.assignment)
    d = ctx.diagram
    rules: Dict[str, Tuple[int, ...]] = {}
    for dnode in d.decision_nodes:
        n_pcfg, n_states = model.delta_shape[dnode]
        rule = []
        for pcfg in range(n_pcfg):
            vals = [x[model.delta_var(dnode, pcfg, s)] for s in range(n_states)]
            for s, val in enumerate(vals):
                if abs(val - round(val)) > tol:
                    raise ValueError(
                        f"policy variable delta_{dnode}_{pcfg}_{s} = {val!r} "
                        f"is not within {tol} of 0 or 1"
                    )
            picked = [s for s, val in enumerate(vals) if round(val) == 1]
            if len(picked) != 1:
                raise ValueError(
                    f"decision {dnode!r} parent config {pcfg} picks "
                    f"{len(picked)} states instead of one"
                )
            rule.append(picked[0])
        rules[dnode] = tuple(rule)
    strategy = Strategy(rules=rules)

    marginals: Dict[str, np.ndarray] = {}
    for root in ctx.tree.order:
        start = model.mu_start[root]
        marginals[root] = x[start:start + model.mu_total[root]].copy()

    distribution = None
    expected = None
    if len(d.value_nodes) == 1:
        v = d.value_nodes[0]
        lay = ctx.layouts[v]
        mass = marginals[v]
        if float(mass.min()) < -tol:
            raise ValueError(
                f"value cluster mass {mass.min()!r} is negative beyond {tol}"
            )
        mass = np.maximum(mass, 0.0)
        total = float(mass.sum())
        if abs(total - 1.0) > max(10 * tol, 1e-9):
            raise ValueError(
                f"value cluster mass sums to {total!r}, expected 1"
            )
        per_cfg = d.utilities[v].values[lay.root_state]
        distribution = UtilityDistribution.from_values(per_cfg, mass / total)
        expected = distribution.expected()

    objective = solution.objective_value
    if objective is None:
        objective = RowSystem(model).objective_value(x)
    return DecodedSolution(
        strategy=strategy,
        objective_value=float(objective),
        expected_utility=expected,
        distribution=distribution,
        cluster_marginals=marginals,
    )
