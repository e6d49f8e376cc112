"""Binary programs and the linear OPB text format.

A :class:`BinaryProgram` holds an integer objective over binary variables
``x1..xn`` and a list of integer linear constraints.  ``<=`` rows are stored
as ``>=`` rows with negated coefficients, so every stored constraint uses
either ``>=`` or ``=``.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

GE = ">="
EQ = "="
LE = "<="
RELATIONS = (GE, EQ, LE)


class Sense(str, enum.Enum):
    MAXIMIZE = "max"
    MINIMIZE = "min"


class CoefficientOverflow(OverflowError):
    """An integer left the signed 64-bit range."""


class OPBError(ValueError):
    """Malformed OPB input.  ``line`` and ``column`` are 1-based."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            where += ": "
        super().__init__(where + message)


def check_int64(value: int, what: str = "value") -> int:
    if not INT64_MIN <= value <= INT64_MAX:
        raise CoefficientOverflow(f"{what} {value} does not fit in 64 bits")
    return value


def _merge_terms(terms: Iterable[tuple[int, int]]) -> dict[int, int]:
    merged: dict[int, int] = {}
    for coef, var in terms:
        if isinstance(coef, bool) or not isinstance(coef, int):
            raise TypeError(f"coefficient must be an integer, got {coef!r}")
        merged[var] = merged.get(var, 0) + coef
    return {v: c for v, c in merged.items() if c != 0}


@dataclass(frozen=True)
class LinearConstraint:
    """``sum(coef * x[var]) relation rhs``.

    Duplicate variables are merged and zero coefficients dropped; a ``<=``
    row is rewritten as ``>=`` by negating both sides.  Terms are kept sorted
    by variable index.
    """

    terms: tuple[tuple[int, int], ...]
    relation: str
    rhs: int

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        merged = _merge_terms(self.terms)
        if not merged:
            raise ValueError("constraint has no nonzero terms")
        relation, rhs = self.relation, self.rhs
        if isinstance(rhs, bool) or not isinstance(rhs, int):
            raise TypeError(f"right-hand side must be an integer, got {rhs!r}")
        if relation == LE:
            merged = {v: -c for v, c in merged.items()}
            relation, rhs = GE, -rhs
        for v, c in merged.items():
            check_int64(c, f"coefficient of x{v}")
        check_int64(rhs, "right-hand side")
        object.__setattr__(self, "terms", tuple((merged[v], v) for v in sorted(merged)))
        object.__setattr__(self, "relation", relation)
        object.__setattr__(self, "rhs", rhs)

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(v for _, v in self.terms)

    def activity(self, x: Sequence[int]) -> int:
        return sum(c * x[v - 1] for c, v in self.terms)

    def holds(self, x: Sequence[int]) -> bool:
        lhs = self.activity(x)
        return lhs == self.rhs if self.relation == EQ else lhs >= self.rhs


@dataclass(frozen=True)
class BinaryProgram:
    """An integer linear program over binary variables indexed ``1..num_vars``."""

    name: str
    sense: Sense
    num_vars: int
    objective: Mapping[int, int] = field(default_factory=dict)
    constraints: tuple[LinearConstraint, ...] = ()

    def __post_init__(self):
        sense = Sense(self.sense)
        if self.num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        objective = {}
        for var in sorted(self.objective):
            coef = self.objective[var]
            if isinstance(coef, bool) or not isinstance(coef, int):
                raise TypeError(f"objective coefficient of x{var} must be an integer")
            self._check_index(var)
            check_int64(coef, f"objective coefficient of x{var}")
            if coef:
                objective[var] = coef
        constraints = tuple(self.constraints)
        for con in constraints:
            if not isinstance(con, LinearConstraint):
                raise TypeError("constraints must be LinearConstraint instances")
            for var in con.variables:
                self._check_index(var)
        object.__setattr__(self, "sense", sense)
        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "constraints", constraints)

    def _check_index(self, var):
        if not isinstance(var, int) or not 1 <= var <= self.num_vars:
            raise ValueError(f"variable index {var!r} outside 1..{self.num_vars}")

    def coefficient(self, var: int) -> int:
        return self.objective.get(var, 0)

    def objective_vector(self) -> list[int]:
        return [self.objective.get(i, 0) for i in range(1, self.num_vars + 1)]

    def with_objective(self, objective: Mapping[int, int], name: str | None = None) -> "BinaryProgram":
        return BinaryProgram(
            name=self.name if name is None else name,
            sense=self.sense,
            num_vars=self.num_vars,
            objective=objective,
            constraints=self.constraints,
        )


def _check_length(bp: BinaryProgram, x: Sequence[int]):
    if len(x) != bp.num_vars:
        raise ValueError(f"assignment has length {len(x)}, program has {bp.num_vars} variables")


def evaluate_objective(bp: BinaryProgram, x: Sequence[int]) -> int:
    """Exact ``c^T x``; raises :class:`CoefficientOverflow` outside 64 bits."""
    _check_length(bp, x)
    total = 0
    for var, coef in bp.objective.items():
        if x[var - 1]:
            total = check_int64(total + coef, "objective value")
    return total


def is_feasible(bp: BinaryProgram, x: Sequence[int]) -> bool:
    _check_length(bp, x)
    return all(con.holds(x) for con in bp.constraints)


def largest_abs_coefficient(bp: BinaryProgram) -> int:
    best = max((abs(c) for c in bp.objective.values()), default=0)
    for con in bp.constraints:
        best = max(best, abs(con.rhs), *(abs(c) for c, _ in con.terms))
    return best


# -- OPB ---------------------------------------------------------------------

_INT = re.compile(r"[+-]?\d+$")
_VAR = re.compile(r"x(\d+)$")
_NUM_VARS = re.compile(r"#variable=\s*(\d+)")


def _tokens(text: str, offset: int):
    return [(m.group(), offset + m.start() + 1) for m in re.finditer(r"\S+", text)]


def _parse_terms(tokens, lineno):
    terms = []
    i = 0
    while i < len(tokens):
        tok, col = tokens[i]
        if not _INT.match(tok):
            if tok.startswith("~"):
                raise OPBError(f"negated literal {tok!r} is not supported", lineno, col)
            raise OPBError(f"expected an integer coefficient, got {tok!r}", lineno, col)
        if i + 1 >= len(tokens):
            raise OPBError("constant terms are not supported", lineno, col)
        vtok, vcol = tokens[i + 1]
        m = _VAR.match(vtok)
        if not m:
            if _INT.match(vtok):
                raise OPBError("constant terms are not supported", lineno, col)
            raise OPBError(f"expected a variable like x1, got {vtok!r}", lineno, vcol)
        if i + 2 < len(tokens) and (tokens[i + 2][0].startswith(("x", "~"))):
            raise OPBError("non-linear product terms are not supported", lineno, tokens[i + 2][1])
        var = int(m.group(1))
        if var == 0:
            raise OPBError("variable index 0 is not allowed", lineno, vcol)
        terms.append((int(tok), var, vcol))
        i += 2
    return terms


def parse_opb(text: str, name: str = "") -> BinaryProgram:
    """Parse the linear OPB subset; see :func:`write_opb` for the emitted form."""
    if not isinstance(text, str):
        text = text.read()
    declared = None
    sense = Sense.MINIMIZE
    objective = None
    rows = []
    max_var = 0
    max_var_pos = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("*"):
            body = line[1:].strip()
            m = _NUM_VARS.search(body)
            if m and declared is None:
                declared = int(m.group(1))
            elif body.replace(" ", "") == "sense:max":
                sense = Sense.MAXIMIZE
            elif body.startswith("name:") and not name:
                name = body[5:].strip()
            continue
        indent = len(raw) - len(raw.lstrip())
        if not line.endswith(";"):
            raise OPBError("statement must end with ';'", lineno, indent + len(line))
        body = line[:-1]
        if body.startswith(("max:", "maximize:")):
            raise OPBError("'max:' objective is not supported; use '* sense: max'", lineno, indent + 1)
        if body.startswith("min:"):
            if objective is not None:
                raise OPBError("more than one objective line", lineno, indent + 1)
            toks = _tokens(body[4:], indent + 4)
            objective = {}
            for coef, var, col in _parse_terms(toks, lineno):
                objective[var] = objective.get(var, 0) + coef
                if var > max_var:
                    max_var, max_var_pos = var, (lineno, col)
            continue
        toks = _tokens(body, indent)
        if len(toks) < 3:
            raise OPBError("constraint needs terms, a relation and a right-hand side", lineno, indent + 1)
        (rel, rcol), (rhs_tok, hcol) = toks[-2], toks[-1]
        if rel not in RELATIONS:
            raise OPBError(f"expected one of >=, =, <=, got {rel!r}", lineno, rcol)
        if not _INT.match(rhs_tok):
            raise OPBError(f"right-hand side must be an integer, got {rhs_tok!r}", lineno, hcol)
        terms = _parse_terms(toks[:-2], lineno)
        if not terms:
            raise OPBError("constraint has no terms", lineno, indent + 1)
        for _, var, col in terms:
            if var > max_var:
                max_var, max_var_pos = var, (lineno, col)
        try:
            rows.append(LinearConstraint(tuple((c, v) for c, v, _ in terms), rel, int(rhs_tok)))
        except (ValueError, OverflowError) as exc:
            raise OPBError(str(exc), lineno, indent + 1) from exc
    if declared is not None and max_var > declared:
        raise OPBError(f"variable x{max_var} exceeds declared count {declared}", *max_var_pos)
    objective = objective or {}
    if sense is Sense.MAXIMIZE:
        objective = {v: -c for v, c in objective.items()}
    try:
        return BinaryProgram(
            name=name,
            sense=sense,
            num_vars=declared if declared is not None else max_var,
            objective=objective,
            constraints=tuple(rows),
        )
    except OverflowError as exc:
        raise OPBError(str(exc)) from exc


def _format_terms(pairs):
    return " ".join(f"{c:+d} x{v}" for c, v in pairs)


def write_opb(bp: BinaryProgram, header: Sequence[str] = ()) -> str:
    """Render ``bp`` as OPB text.

    Maximization programs are written as minimization of ``-c`` with a
    ``* sense: max`` comment; extra ``header`` lines become comments.
    """
    lines = [f"* #variable= {bp.num_vars} #constraint= {len(bp.constraints)}"]
    if bp.name:
        lines.append(f"* name: {bp.name}")
    if bp.sense is Sense.MAXIMIZE:
        lines.append("* sense: max")
    lines.extend(f"* {h}" for h in header)
    if bp.objective:
        sign = -1 if bp.sense is Sense.MAXIMIZE else 1
        lines.append(f"min: {_format_terms((sign * c, v) for v, c in sorted(bp.objective.items()))} ;")
    for con in bp.constraints:
        lines.append(f"{_format_terms(con.terms)} {con.relation} {con.rhs} ;")
    return "\n".join(lines) + "\n"


def read_opb(path) -> BinaryProgram:
    with open(path, encoding="utf-8") as fh:
        return parse_opb(fh.read())


def save_opb(bp: BinaryProgram, path, header: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_opb(bp, header))
