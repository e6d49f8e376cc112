"""Exact solvers for small binary programs.

* :func:`solve_enumeration` checks all ``2**n`` points (numpy, chunked).
* :func:`solve_knapsack` is a depth-first branch-and-bound with the Dantzig bound.
* :func:`solve_bp` is a generic depth-first branch-and-bound with propagation.

Internally everything maximizes; minimization negates the objective.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .model import EQ, GE, BinaryProgram, Sense, evaluate_objective, is_feasible
from .rounding import (
    EpsilonCertificate,
    UndefinedLoss,
    epsilon_for_level,
    loss_bound_traditional,
    objective_loss,
    round_objective,
    verify_certificate,
)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class SolveBudget:
    max_nodes: int = 10**7
    max_time: float = float("inf")

    def __post_init__(self):
        if self.max_nodes <= 0 or self.max_time <= 0:
            raise ValueError("budget limits must be positive")


@dataclass(frozen=True)
class SolveResult:
    status: Status
    best_value: int | None
    best_assignment: tuple[int, ...] | None
    nodes_explored: int
    elapsed: float = field(default=0.0, compare=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Stop(Exception):
    pass


class _Counter:
    def __init__(self, budget: SolveBudget):
        self.budget = budget
        self.nodes = 0
        self.start = time.perf_counter()

    def tick(self):
        if self.nodes >= self.budget.max_nodes:
            raise _Stop
        self.nodes += 1
        if self.budget.max_time != float("inf") and self.nodes % 1024 == 0:
            if time.perf_counter() - self.start > self.budget.max_time:
                raise _Stop

    @property
    def elapsed(self):
        return time.perf_counter() - self.start


# -- enumeration ---------------------------------------------------------------

_CHUNK = 1 << 16


def _fits_int64(bp: BinaryProgram) -> bool:
    total = sum(abs(c) for c in bp.objective.values())
    for con in bp.constraints:
        total = max(total, sum(abs(c) for c, _ in con.terms) + abs(con.rhs))
    return total < 2**62


def solve_enumeration(bp: BinaryProgram, max_vars: int = 22) -> SolveResult:
    """Exhaustive search; ties go to the lexicographically smallest vector (x1 most significant)."""
    n = bp.num_vars
    if n > max_vars:
        raise ValueError(f"{n} variables exceed the enumeration limit of {max_vars}")
    start = time.perf_counter()
    if not _fits_int64(bp):
        return _solve_enumeration_exact(bp, start)
    sign = -1 if bp.sense is Sense.MINIMIZE else 1
    c = np.array([sign * v for v in bp.objective_vector()], dtype=np.int64)
    rows = []
    for con in bp.constraints:
        a = np.zeros(n, dtype=np.int64)
        for coef, var in con.terms:
            a[var - 1] = coef
        rows.append((a, con.relation, con.rhs))
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    best_val, best_k = None, None
    total = 1 << n
    for lo in range(0, total, _CHUNK):
        ks = np.arange(lo, min(lo + _CHUNK, total), dtype=np.int64)
        bits = (ks[:, None] >> shifts[None, :]) & 1
        ok = np.ones(len(ks), dtype=bool)
        for a, rel, rhs in rows:
            act = bits @ a
            ok &= (act == rhs) if rel == EQ else (act >= rhs)
        if not ok.any():
            continue
        vals = np.where(ok, bits @ c, np.iinfo(np.int64).min)
        i = int(np.argmax(vals))
        if best_val is None or int(vals[i]) > best_val:
            best_val, best_k = int(vals[i]), int(ks[i])
    elapsed = time.perf_counter() - start
    if best_k is None:
        return SolveResult(Status.INFEASIBLE, None, None, total, elapsed)
    x = tuple((best_k >> (n - 1 - j)) & 1 for j in range(n))
    return SolveResult(Status.OPTIMAL, evaluate_objective(bp, x), x, total, elapsed)


def _solve_enumeration_exact(bp, start):
    n = bp.num_vars
    sign = -1 if bp.sense is Sense.MINIMIZE else 1
    best = None
    for k in range(1 << n):
        x = tuple((k >> (n - 1 - j)) & 1 for j in range(n))
        if is_feasible(bp, x):
            v = sign * sum(c for var, c in bp.objective.items() if x[var - 1])
            if best is None or v > best[0]:
                best = (v, x)
    elapsed = time.perf_counter() - start
    if best is None:
        return SolveResult(Status.INFEASIBLE, None, None, 1 << n, elapsed)
    return SolveResult(Status.OPTIMAL, sign * best[0], best[1], 1 << n, elapsed)


# -- knapsack ------------------------------------------------------------------

def knapsack_data(bp: BinaryProgram):
    """``(values, weights, capacity)`` if ``bp`` is a max-knapsack with ``c >= 0``, else ``None``."""
    if bp.sense is not Sense.MAXIMIZE or len(bp.constraints) != 1:
        return None
    con = bp.constraints[0]
    if con.relation != GE or any(c >= 0 for c, _ in con.terms):
        return None
    if any(v < 0 for v in bp.objective.values()):
        return None
    weights = [0] * bp.num_vars
    for c, var in con.terms:
        weights[var - 1] = -c
    if any(w == 0 for w in weights):
        return None
    return bp.objective_vector(), weights, -con.rhs


def dantzig_bound(values, weights, order, start, capacity) -> Fraction:
    """Fractional-knapsack bound for items ``order[start:]`` with the given residual capacity."""
    bound = Fraction(0)
    for i in order[start:]:
        if weights[i] <= capacity:
            capacity -= weights[i]
            bound += values[i]
        else:
            return bound + Fraction(values[i] * capacity, weights[i])
    return bound


def solve_knapsack(values: Sequence[int], weights: Sequence[int], capacity: int,
                   budget: SolveBudget = SolveBudget()) -> SolveResult:
    """Depth-first branch-and-bound, take-branch first, items by value/weight descending."""
    n = len(values)
    if len(weights) != n:
        raise ValueError("values and weights differ in length")
    if any(v < 0 for v in values) or any(w < 1 for w in weights):
        raise ValueError("knapsack needs values >= 0 and weights >= 1")
    counter = _Counter(budget)
    if capacity < 0:
        return SolveResult(Status.INFEASIBLE, None, None, 0, counter.elapsed)
    order = sorted(range(n), key=lambda i: (Fraction(-values[i], weights[i]), i))
    vals = [values[i] for i in order]
    wts = [weights[i] for i in order]

    best_value = 0
    best_take = [0] * n
    take = [0] * n

    def bound(pos, cap):
        # integer floor of the Dantzig bound
        total = 0
        for j in range(pos, n):
            if wts[j] <= cap:
                cap -= wts[j]
                total += vals[j]
            else:
                return total + vals[j] * cap // wts[j]
        return total

    def dfs(pos, cap, value):
        nonlocal best_value, best_take
        counter.tick()
        if value > best_value:
            best_value, best_take = value, take[:pos] + [0] * (n - pos)
        if pos == n or value + bound(pos, cap) <= best_value:
            return
        if wts[pos] <= cap:
            take[pos] = 1
            dfs(pos + 1, cap - wts[pos], value + vals[pos])
            take[pos] = 0
        dfs(pos + 1, cap, value)

    status = Status.OPTIMAL
    try:
        _with_recursion(n, lambda: dfs(0, capacity, 0))
    except _Stop:
        status = Status.BUDGET_EXHAUSTED
    x = [0] * n
    for j, t in enumerate(best_take):
        x[order[j]] = t
    return SolveResult(status, best_value, tuple(x), counter.nodes, counter.elapsed)


def _with_recursion(depth, fn):
    import sys

    limit = sys.getrecursionlimit()
    if depth + 100 > limit:
        sys.setrecursionlimit(depth + 1000)
    try:
        return fn()
    finally:
        sys.setrecursionlimit(limit)


# -- generic branch-and-bound ----------------------------------------------------

class _Row:
    __slots__ = ("coefs", "vars", "rhs")

    def __init__(self, coefs, vars_, rhs):
        self.coefs = coefs
        self.vars = vars_
        self.rhs = rhs


def _ge_rows(bp: BinaryProgram) -> list[_Row]:
    rows = []
    for con in bp.constraints:
        coefs = [c for c, _ in con.terms]
        vars_ = [v - 1 for _, v in con.terms]
        rows.append(_Row(coefs, vars_, con.rhs))
        if con.relation == EQ:
            rows.append(_Row([-c for c in coefs], vars_, -con.rhs))
    return rows


def _choice_rows(bp: BinaryProgram) -> list[tuple[list[int], bool]]:
    """Pairwise disjoint rows that force at least one of their variables to 1.

    These are ``sum x_j = 1`` or ``sum x_j >= 1`` rows with unit coefficients,
    returned with a flag telling whether the row is an equality.
    """
    chosen, used = [], set()
    for con in bp.constraints:
        if con.rhs != 1 or any(c != 1 for c, _ in con.terms):
            continue
        vars_ = [v - 1 for _, v in con.terms]
        if used.isdisjoint(vars_):
            used.update(vars_)
            chosen.append((vars_, con.relation == EQ))
    return chosen


def _capacity_rows(rows: list[_Row], in_eq_choice: list[bool]) -> list[tuple[int, list[int]]]:
    """Rows limiting how many equality-choice variables (coefficient -1) may be 1.

    Returned as ``(row index, limited variables)`` with disjoint variable sets.
    """
    out, used = [], set()
    for r, row in enumerate(rows):
        limited = [v for c, v in zip(row.coefs, row.vars) if c == -1 and in_eq_choice[v]]
        if len(limited) > 1 and used.isdisjoint(limited):
            used.update(limited)
            out.append((r, limited))
    return out


def _min_cost_assignment(arcs, caps):
    """Send one unit from every demand to a facility or to an uncapacitated sink.

    ``arcs[d]`` maps target -> cost, where target ``-1`` is the uncapacitated
    sink and ``t >= 0`` a facility with capacity ``caps[t]``.  Returns the
    minimum total cost, or ``None`` if some demand cannot be served.
    Successive shortest paths with Bellman-Ford on the residual graph.
    """
    nf = len(caps)
    load = [0] * nf
    # flow[d] = target currently serving demand d (None while unserved)
    flow = [None] * len(arcs)
    served_by = [set() for _ in range(nf)]
    total = 0
    for d in range(len(arcs)):
        # labels: distance to facility nodes, reached via alternating paths
        inf = float("inf")
        dist = [inf] * nf
        prev = [None] * nf
        sink_cost, sink_from = inf, None
        for t, cost in arcs[d].items():
            if t < 0:
                if cost < sink_cost:
                    sink_cost, sink_from = cost, (None, d)
            elif cost < dist[t]:
                dist[t], prev[t] = cost, (None, d)
        changed = True
        while changed:
            changed = False
            for t in range(nf):
                if dist[t] == inf:
                    continue
                for e in served_by[t]:
                    back = dist[t] - arcs[e][t]
                    for t2, cost in arcs[e].items():
                        if t2 == t:
                            continue
                        nd = back + cost
                        if t2 < 0:
                            if nd < sink_cost:
                                sink_cost, sink_from = nd, (t, e)
                        elif nd < dist[t2]:
                            dist[t2], prev[t2] = nd, (t, e)
                            changed = True
        best_t, best = None, sink_cost
        for t in range(nf):
            if load[t] < caps[t] and dist[t] < best:
                best_t, best = t, dist[t]
        if best == inf:
            return None
        total += best
        # augment: walk back reassigning demands
        if best_t is None:
            step, target = sink_from, -1
        else:
            step, target = prev[best_t], best_t
            load[best_t] += 1
        while True:
            origin, e = step
            if flow[e] is not None and flow[e] >= 0:
                served_by[flow[e]].discard(e)
            flow[e] = target
            if target >= 0:
                served_by[target].add(e)
            if origin is None:
                break
            step, target = prev[origin], origin
    return total


def solve_bp(bp: BinaryProgram, budget: SolveBudget = SolveBudget(), tie_rotation: int = 0) -> SolveResult:
    """Depth-first branch-and-bound over a fixed variable order.

    Variables are ordered by descending ``|c_i|``; ties are broken by index,
    cyclically shifted by ``tie_rotation``.  At every node constraints are
    propagated to a fixpoint, and a node is cut when the current value plus
    the best possible gain from free variables cannot beat the incumbent.
    """
    n = bp.num_vars
    sign = -1 if bp.sense is Sense.MINIMIZE else 1
    c = [sign * v for v in bp.objective_vector()]
    rows = _ge_rows(bp)
    rows_of = [[] for _ in range(n)]
    for r, row in enumerate(rows):
        for k, v in enumerate(row.vars):
            rows_of[v].append((r, k))
    choice = _choice_rows(bp)
    in_choice = [False] * n
    in_eq_choice = [False] * n
    for vars_, is_eq in choice:
        for v in vars_:
            in_choice[v] = True
            in_eq_choice[v] = is_eq
    capacity = _capacity_rows(rows, in_eq_choice)
    facility = [-1] * n
    for t, (_r, limited) in enumerate(capacity):
        for v in limited:
            facility[v] = t
    order = sorted(range(n), key=lambda i: (-abs(c[i]), (i - tie_rotation) % n if n else 0))
    counter = _Counter(budget)

    x = [-1] * n
    trail: list[int] = []
    best_value = None
    best_x = None

    def propagate(queue) -> bool:
        while queue:
            r = queue.pop()
            row = rows[r]
            fixed, slack_max = 0, 0
            for coef, v in zip(row.coefs, row.vars):
                if x[v] == -1:
                    if coef > 0:
                        slack_max += coef
                else:
                    fixed += coef * x[v]
            top = fixed + slack_max
            if top < row.rhs:
                return False
            for coef, v in zip(row.coefs, row.vars):
                if x[v] == -1 and top - abs(coef) < row.rhs:
                    x[v] = 1 if coef > 0 else 0
                    trail.append(v)
                    queue.extend(r2 for r2, _ in rows_of[v] if r2 != r)
        return True

    def assign(v, val) -> bool:
        x[v] = val
        trail.append(v)
        return propagate([r for r, _ in rows_of[v]])

    def undo(mark):
        while len(trail) > mark:
            x[trail.pop()] = -1

    def residual_capacity(r):
        row = rows[r]
        top = 0
        for coef, v in zip(row.coefs, row.vars):
            if x[v] == -1:
                if coef > 0:
                    top += coef
            else:
                top += coef * x[v]
        return top - row.rhs

    def bound():
        """Upper bound on the internal objective below this node, ``None`` if infeasible."""
        value = 0
        for v in range(n):
            if x[v] == 1:
                value += c[v]
            elif x[v] == -1 and not in_choice[v] and c[v] > 0:
                value += c[v]
        demands = []
        for vars_, is_eq in choice:
            fixed_one = False
            best_free = None
            pos = 0
            arcs = {}
            for v in vars_:
                if x[v] == 1:
                    fixed_one = True
                elif x[v] == -1:
                    if best_free is None or c[v] > best_free:
                        best_free = c[v]
                    if c[v] > 0:
                        pos += c[v]
                    t = facility[v]
                    if -c[v] < arcs.get(t, float("inf")):
                        arcs[t] = -c[v]
            if fixed_one:
                value += pos
            elif best_free is None:
                return None
            elif is_eq:
                demands.append(arcs)
            else:
                value += max(best_free, pos)
        if demands:
            caps = [residual_capacity(r) for r, _ in capacity]
            cost = _min_cost_assignment(demands, caps)
            if cost is None:
                return None
            value -= cost
        return value

    def dfs(depth):
        nonlocal best_value, best_x
        counter.tick()
        while depth < n and x[order[depth]] != -1:
            depth += 1
        b = bound()
        if b is None or (best_value is not None and b <= best_value):
            return
        if depth == n:
            value = sum(c[v] for v in range(n) if x[v] == 1)
            if best_value is None or value > best_value:
                best_value, best_x = value, tuple(x)
            return
        v = order[depth]
        for val in ((1, 0) if c[v] > 0 else (0, 1)):
            mark = len(trail)
            if assign(v, val):
                dfs(depth + 1)
            undo(mark)

    status = Status.OPTIMAL
    try:
        if propagate(list(range(len(rows)))):
            _with_recursion(n, lambda: dfs(0))
    except _Stop:
        status = Status.BUDGET_EXHAUSTED
    if best_x is None:
        if status is Status.OPTIMAL:
            status = Status.INFEASIBLE
        return SolveResult(status, None, None, counter.nodes, counter.elapsed)
    assert is_feasible(bp, best_x)
    return SolveResult(status, sign * best_value, best_x, counter.nodes, counter.elapsed)


def solve(bp: BinaryProgram, budget: SolveBudget = SolveBudget(), tie_rotation: int = 0) -> SolveResult:
    """Knapsack branch-and-bound when ``bp`` has knapsack shape, otherwise :func:`solve_bp`."""
    data = knapsack_data(bp)
    if data is not None:
        return solve_knapsack(*data, budget=budget)
    return solve_bp(bp, budget, tie_rotation)


# -- paired solve ----------------------------------------------------------------

@dataclass(frozen=True)
class PairReport:
    level: int
    epsilon: Fraction
    original: SolveResult
    rounded: SolveResult
    original_value: int | None
    rounded_solution_value: int | None
    loss: Fraction | None
    loss_available: bool
    envelope_ok: bool
    loss_bound: Fraction
    traditional_applicable: bool
    traditional_ok: bool | None

    def to_json(self) -> dict:
        def q(v):
            return None if v is None else f"{v.numerator}/{v.denominator}"

        return {
            "level": self.level,
            "epsilon": q(self.epsilon),
            "original_status": self.original.status.value,
            "rounded_status": self.rounded.status.value,
            "original_value": self.original_value,
            "rounded_solution_value": self.rounded_solution_value,
            "loss": q(self.loss),
            "loss_percent": None if self.loss is None else float(f"{float(self.loss * 100):.6g}"),
            "loss_available": self.loss_available,
            "envelope_ok": self.envelope_ok,
            "loss_bound": q(self.loss_bound),
            "traditional_applicable": self.traditional_applicable,
            "traditional_ok": self.traditional_ok,
        }


def certify_pair(bp: BinaryProgram, level: int, budget: SolveBudget = SolveBudget(),
                 solver=None) -> PairReport:
    """Solve ``bp`` and its ``level``-rounded version and compare under the original objective."""
    eps = epsilon_for_level(level)
    solver = solver or (lambda p: solve(p, budget))
    rounded_bp, _ = round_objective(bp, level)
    original = solver(bp)
    rounded = solver(rounded_bp)
    envelope_ok = verify_certificate(
        EpsilonCertificate(rounded.best_assignment or (), bp.objective, rounded_bp.objective, eps), bp.sense
    )
    applicable = bp.sense is Sense.MAXIMIZE and all(v >= 0 for v in bp.objective.values())
    bound = loss_bound_traditional(level)
    loss, orig_val, round_val = None, None, None
    if original.optimal:
        orig_val = original.best_value
    if rounded.optimal:
        round_val = evaluate_objective(bp, rounded.best_assignment)
    if original.optimal and rounded.optimal:
        try:
            loss = objective_loss(orig_val, round_val)
        except UndefinedLoss:
            loss = None
    trad_ok = None
    if applicable and loss is not None:
        trad_ok = loss <= bound
    return PairReport(
        level=level,
        epsilon=eps,
        original=original,
        rounded=rounded,
        original_value=orig_val,
        rounded_solution_value=round_val,
        loss=loss,
        loss_available=loss is not None,
        envelope_ok=envelope_ok,
        loss_bound=bound,
        traditional_applicable=applicable,
        traditional_ok=trad_ok,
    )
