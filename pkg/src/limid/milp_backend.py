"""Command-line MILP backend: read an LP file, solve it with scipy's HiGHS
interface, print a name/value listing.

Understands the LP dialect written by :func:`limid.solve.export_lp` (and
plain single-objective LP files generally): ``\\`` comments, Maximize /
Minimize, Subject To, Bounds, Binaries, General, End.  Output is one
``status <word>`` line, one ``objective <number>`` line when solved, then
one ``<name> <number>`` line per variable, which is exactly the layout the
external-solver bridge parses.  Exit code 0 means a definitive answer
(optimal or infeasible); 2 means a parse or solver failure.
"""

from __future__ import annotations

import argparse
import re
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize, sparse

_NUMBER_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_SECTION_WORDS = {
    "maximize": "objective-max",
    "maximise": "objective-max",
    "max": "objective-max",
    "minimize": "objective-min",
    "minimise": "objective-min",
    "min": "objective-min",
    "subject": "rows",
    "st": "rows",
    "s.t.": "rows",
    "bounds": "bounds",
    "bound": "bounds",
    "binaries": "binaries",
    "binary": "binaries",
    "bin": "binaries",
    "general": "generals",
    "generals": "generals",
    "gen": "generals",
    "end": "end",
}

_INF = float("inf")


class LpParseError(ValueError):
    pass


@dataclass
class LpProblem:
    sense: str  # "max" or "min"
    variables: List[str]
    objective: Dict[str, float]
    constant: float
    rows: List[Tuple[Dict[str, float], str, float]]
    lower: Dict[str, float]
    upper: Dict[str, float]
    integer: Dict[str, bool] = field(default_factory=dict)


_COEF_NAME_RE = re.compile(
    r"^((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([A-Za-z_][A-Za-z0-9_.]*)$"
)


def _tokenize(text: str) -> List[str]:
    tokens: List[str] = []
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0]
        line = line.replace("<=", " <= ").replace(">=", " >= ")
        line = re.sub(r"(?<![<>=])=(?![<>=])", " = ", line)
        line = line.replace(":", " : ")
        # detach sign operators (but not exponent signs as in 1e-3)
        line = re.sub(r"(?<![eE])([+-])", r" \1 ", line)
        for tok in line.split():
            if _is_number(tok):
                tokens.append(tok)
                continue
            m = _COEF_NAME_RE.match(tok)
            if m:  # split fused coefficient-name pairs such as 2x
                tokens.extend((m.group(1), m.group(2)))
            else:
                tokens.append(tok)
    return tokens


def _is_number(token: str) -> bool:
    return bool(_NUMBER_RE.match(token))


def _section_of(token: str) -> Optional[str]:
    return _SECTION_WORDS.get(token.lower())


def parse_lp(text: str) -> LpProblem:
    tokens = _tokenize(text)
    if not tokens:
        raise LpParseError("empty LP file")
    variables: List[str] = []
    seen = set()

    def touch(name: str) -> None:
        if name not in seen:
            seen.add(name)
            variables.append(name)

    i = 0
    section = None
    sense = "min"
    objective: Dict[str, float] = {}
    constant = 0.0
    rows: List[Tuple[Dict[str, float], str, float]] = []
    lower: Dict[str, float] = {}
    upper: Dict[str, float] = {}
    integer: Dict[str, bool] = {}

    def parse_expr(stop_at_sense: bool):
        """Read a linear expression; returns (coeffs, const, sense_token)."""
        nonlocal i
        coeffs: Dict[str, float] = {}
        const = 0.0
        sign = 1.0
        coef: Optional[float] = None
        while i < len(tokens):
            tok = tokens[i]
            if tok in ("<=", ">=", "=") and stop_at_sense:
                if coef is not None:
                    const += sign * coef
                return coeffs, const, tok
            if _section_of(tok):
                # Section keywords are reserved and end the expression,
                # flushing any trailing constant term.
                if coef is not None:
                    const += sign * coef
                return coeffs, const, None
            if tok == "+":
                if coef is not None:
                    const += sign * coef
                    coef = None
                sign = 1.0
                i += 1
            elif tok == "-":
                if coef is not None:
                    const += sign * coef
                    coef = None
                    sign = -1.0
                else:
                    sign = -sign
                i += 1
            elif _is_number(tok):
                if coef is not None:
                    const += sign * coef
                    sign = 1.0
                coef = float(tok)
                i += 1
            elif i + 1 < len(tokens) and tokens[i + 1] == ":":
                i += 2  # row or objective label, not a variable
            else:
                touch(tok)
                coeffs[tok] = coeffs.get(tok, 0.0) + sign * (
                    1.0 if coef is None else coef
                )
                coef = None
                sign = 1.0
                i += 1
        if coef is not None:
            const += sign * coef
        return coeffs, const, None

    while i < len(tokens):
        tok = tokens[i]
        sec = _section_of(tok)
        if sec == "objective-max" or sec == "objective-min":
            sense = "max" if sec == "objective-max" else "min"
            i += 1
            objective, constant, _ = parse_expr(stop_at_sense=False)
            continue
        if sec == "rows":
            if tok.lower() == "subject":
                if i + 1 >= len(tokens) or tokens[i + 1].lower() != "to":
                    raise LpParseError("expected 'Subject To'")
                i += 2
            else:
                i += 1
            section = "rows"
            continue
        if sec == "bounds":
            section = "bounds"
            i += 1
            continue
        if sec == "binaries":
            section = "binaries"
            i += 1
            continue
        if sec == "generals":
            section = "generals"
            i += 1
            continue
        if sec == "end":
            break
        if section == "rows":
            coeffs, const, rel = parse_expr(stop_at_sense=True)
            if rel is None:
                raise LpParseError(
                    f"constraint without relational operator near token {i}"
                )
            i += 1  # consume sense token
            val, i = _read_signed(
                tokens, i, allow_inf=False, what="right-hand side"
            )
            rhs = val - const
            rows.append((coeffs, rel, rhs))
            continue
        if section == "bounds":
            i = _parse_bound(tokens, i, lower, upper, touch)
            continue
        if section == "binaries":
            touch(tok)
            integer[tok] = True
            lower.setdefault(tok, 0.0)
            upper.setdefault(tok, 1.0)
            i += 1
            continue
        if section == "generals":
            touch(tok)
            integer[tok] = True
            i += 1
            continue
        raise LpParseError(f"unexpected token {tok!r} outside any section")

    return LpProblem(
        sense=sense,
        variables=variables,
        objective=objective,
        constant=constant,
        rows=rows,
        lower=lower,
        upper=upper,
        integer=integer,
    )


def _read_signed(tokens, i, allow_inf: bool, what: str) -> Tuple[float, int]:
    """Read a possibly signed number (or infinity); return (value, next index)."""
    sign = 1.0
    while i < len(tokens) and tokens[i] in ("+", "-"):
        if tokens[i] == "-":
            sign = -sign
        i += 1
    if i >= len(tokens):
        raise LpParseError(f"{what} ends mid-expression")
    tok = tokens[i]
    if allow_inf and tok.lower() in ("inf", "infinity"):
        return sign * _INF, i + 1
    if not _is_number(tok):
        raise LpParseError(f"expected a number in {what}, got {tok!r}")
    return sign * float(tok), i + 1


def _read_bound_value(tokens, i) -> Tuple[float, int]:
    return _read_signed(tokens, i, allow_inf=True, what="bounds declaration")


def _parse_bound(tokens, i, lower, upper, touch) -> int:
    """Parse one bounds declaration starting at tokens[i]; return new index."""
    tok = tokens[i]
    if tok in ("+", "-") or _is_number(tok) or tok.lower() in ("inf", "infinity"):
        # form: a <= x <= b   (or a <= x)
        lo, j = _read_bound_value(tokens, i)
        if j >= len(tokens) or tokens[j] != "<=":
            raise LpParseError(f"bad bound near {tok!r}")
        name = tokens[j + 1]
        touch(name)
        lower[name] = lo
        if j + 2 < len(tokens) and tokens[j + 2] == "<=":
            up, k = _read_bound_value(tokens, j + 3)
            upper[name] = up
            return k
        return j + 2
    name = tok
    touch(name)
    nxt = tokens[i + 1] if i + 1 < len(tokens) else None
    if nxt == "free":
        lower[name] = -_INF
        upper[name] = _INF
        return i + 2
    if nxt in ("<=", ">=", "="):
        val, k = _read_bound_value(tokens, i + 2)
        if nxt == "<=":
            upper[name] = val
        elif nxt == ">=":
            lower[name] = val
        else:
            lower[name] = upper[name] = val
        return k
    raise LpParseError(f"bad bounds declaration near {name!r}")


def solve_lp_text(text: str, time_limit: Optional[float] = None):
    """Parse and solve; returns (status word, objective or None, assignment)."""
    prob = parse_lp(text)
    names = prob.variables
    index = {n: j for j, n in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    for name, coef in prob.objective.items():
        c[index[name]] += coef
    if prob.sense == "max":
        c = -c

    lo = np.array([prob.lower.get(m, 0.0) for m in names])
    hi = np.array([prob.upper.get(m, _INF) for m in names])
    integrality = np.array(
        [1 if prob.integer.get(m) else 0 for m in names]
    )

    m = len(prob.rows)
    constraints = []
    if m:
        data, ri, ci, lb, ub = [], [], [], [], []
        for r, (coeffs, rel, rhs) in enumerate(prob.rows):
            for name, coef in coeffs.items():
                data.append(coef)
                ri.append(r)
                ci.append(index[name])
            if rel == "=":
                lb.append(rhs)
                ub.append(rhs)
            elif rel == "<=":
                lb.append(-_INF)
                ub.append(rhs)
            else:
                lb.append(rhs)
                ub.append(_INF)
        matrix = sparse.csc_matrix((data, (ri, ci)), shape=(m, n))
        constraints.append(optimize.LinearConstraint(matrix, lb, ub))

    options = {"mip_rel_gap": 0.0}
    if time_limit is not None:
        options["time_limit"] = time_limit
    result = optimize.milp(
        c,
        constraints=constraints,
        integrality=integrality,
        bounds=optimize.Bounds(lo, hi),
        options=options,
    )
    if result.status == 0:
        sign = -1.0 if prob.sense == "max" else 1.0
        objective = sign * float(result.fun) + prob.constant
        assignment = {name: float(result.x[j]) for j, name in enumerate(names)}
        return "optimal", objective, assignment
    if result.status == 2:
        return "infeasible", None, {}
    if result.status == 3:
        return "unbounded", None, {}
    return "unknown", None, {}


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="limid-milp",
        description="Solve an LP-format mixed-integer program with HiGHS "
        "and print a status / objective / name-value listing.",
    )
    parser.add_argument("lp_file", help="path to the LP file")
    parser.add_argument(
        "--time-limit", type=float, default=None,
        help="solver wall-time limit in seconds",
    )
    args = parser.parse_args(argv)
    try:
        text = open(args.lp_file, "r").read()
        status, objective, assignment = solve_lp_text(text, args.time_limit)
    except (OSError, LpParseError, ValueError) as exc:
        print(f"error {exc}", file=sys.stderr)
        return 2
    print(f"status {status}")
    if objective is not None:
        print(f"objective {objective!r}")
    for name, val in assignment.items():
        print(f"{name} {val!r}")
    return 0 if status in ("optimal", "infeasible") else 2


if __name__ == "__main__":
    sys.exit(main())
