"""Formulation symmetries via automorphisms of a colored variable-constraint graph.

Nodes ``0..n-1`` are the variables and ``n..n+m-1`` the constraints.  A
variable is colored by its objective coefficient, a constraint by its
relation and right-hand side, and each edge by the constraint coefficient.
Automorphisms are found by individualization-refinement with orbit pruning.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from math import factorial, prod
from typing import Iterable, Sequence

from .model import BinaryProgram


class SearchBudgetExceeded(Exception):
    pass


@dataclass(frozen=True)
class PermutationGenerator:
    """A permutation of ``1..n``; ``mapping[i-1]`` is the image of ``i``."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.mapping) != list(range(1, len(self.mapping) + 1)):
            raise ValueError("mapping is not a bijection on 1..n")

    @classmethod
    def from_cycles(cls, n: int, cycles: Iterable[Sequence[int]]) -> "PermutationGenerator":
        mapping = list(range(1, n + 1))
        for cyc in cycles:
            for a, b in zip(cyc, list(cyc[1:]) + [cyc[0]]):
                mapping[a - 1] = b
        return cls(tuple(mapping))

    def __call__(self, i: int) -> int:
        return self.mapping[i - 1]

    def is_identity(self) -> bool:
        return all(v == i for i, v in enumerate(self.mapping, start=1))

    def cycles(self) -> list[tuple[int, ...]]:
        seen, out = set(), []
        for start in range(1, len(self.mapping) + 1):
            if start in seen or self(start) == start:
                continue
            cyc, i = [], start
            while i not in seen:
                seen.add(i)
                cyc.append(i)
                i = self(i)
            out.append(tuple(cyc))
        return out

    def cycle_notation(self) -> str:
        cycles = self.cycles()
        if not cycles:
            return "()"
        return "".join("(" + " ".join(map(str, c)) + ")" for c in cycles)


@dataclass(frozen=True)
class ColoredGraph:
    num_vars: int
    num_constraints: int
    colors: tuple[int, ...]
    adjacency: tuple[tuple[tuple[int, int], ...], ...]
    program: BinaryProgram = field(compare=False, repr=False)

    @property
    def num_nodes(self) -> int:
        return self.num_vars + self.num_constraints

    @property
    def edges(self) -> list[tuple[int, int, int]]:
        """``(var_node, cons_node, edge_color)`` triples."""
        return [
            (v, u, ec)
            for v in range(self.num_vars)
            for u, ec in self.adjacency[v]
        ]


@dataclass(frozen=True)
class SymmetryReport:
    generators: tuple[PermutationGenerator, ...]
    orbit_partition: tuple[tuple[int, ...], ...]
    search_nodes: int
    timed_out: bool

    @property
    def generator_count(self) -> int:
        return len(self.generators)

    def to_json(self) -> dict:
        return {
            "generator_count": self.generator_count,
            "generators": [g.cycle_notation() for g in self.generators],
            "orbit_sizes": sorted((len(o) for o in self.orbit_partition if len(o) > 1), reverse=True),
            "search_nodes": self.search_nodes,
            "timed_out": self.timed_out,
        }


def _ranks(values):
    order = {v: r for r, v in enumerate(sorted(set(values)))}
    return [order[v] for v in values]


def build_colored_graph(bp: BinaryProgram) -> ColoredGraph:
    n, m = bp.num_vars, len(bp.constraints)
    var_colors = _ranks([bp.coefficient(i) for i in range(1, n + 1)])
    offset = max(var_colors, default=-1) + 1
    cons_colors = [offset + r for r in _ranks([(con.relation, con.rhs) for con in bp.constraints])]
    edge_colors = _ranks([c for con in bp.constraints for c, _ in con.terms])
    adjacency = [[] for _ in range(n + m)]
    k = 0
    for j, con in enumerate(bp.constraints):
        for _c, var in con.terms:
            adjacency[var - 1].append((n + j, edge_colors[k]))
            adjacency[n + j].append((var - 1, edge_colors[k]))
            k += 1
    return ColoredGraph(
        num_vars=n,
        num_constraints=m,
        colors=tuple(var_colors + cons_colors),
        adjacency=tuple(tuple(sorted(a)) for a in adjacency),
        program=bp,
    )


# -- partition refinement ----------------------------------------------------

def refine(adjacency, colors: Sequence[int]) -> list[int]:
    """Iterate color refinement to its fixpoint.

    New colors are ranks of ``(old color, sorted (edge color, neighbour color))``
    so the cell order only ever splits, never permutes.
    """
    colors = list(colors)
    ncolors = len(set(colors))
    while True:
        sigs = [
            (colors[v], tuple(sorted((ec, colors[u]) for u, ec in adjacency[v])))
            for v in range(len(colors))
        ]
        colors = _ranks(sigs)
        k = max(colors, default=-1) + 1
        if k == ncolors:
            return colors
        ncolors = k


def _individualize(colors, v):
    out = [2 * c + 1 for c in colors]
    out[v] -= 1
    return _ranks(out)


def _first_nonsingleton(colors):
    cells: dict[int, list[int]] = {}
    for v, c in enumerate(colors):
        cells.setdefault(c, []).append(v)
    for c in sorted(cells):
        if len(cells[c]) > 1:
            return cells[c]
    return None


def _shape(colors):
    return tuple(sorted(Counter(colors).items()))


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x, y):
        x, y = self.find(x), self.find(y)
        if x != y:
            if y < x:
                x, y = y, x
            self.parent[y] = x


def _is_automorphism(g: ColoredGraph, perm) -> bool:
    colors, adj = g.colors, g.adjacency
    for v in range(g.num_nodes):
        w = perm[v]
        if colors[v] != colors[w]:
            return False
        if tuple(sorted((perm[u], ec) for u, ec in adj[v])) != adj[w]:
            return False
    return True


def find_generators(g: ColoredGraph, budget: int = 10**6) -> SymmetryReport:
    """Search for generators of the automorphism group of ``g``.

    Branching individualizes the smallest vertex of the first non-singleton
    cell along the first path; every other target is tried in ascending
    order unless it is already in the orbit of the first-path choice.  Each
    generator maps the first leaf to an equivalent leaf, so it fixes the
    first-path prefix above its level and the collected set generates the
    whole group.  ``budget`` caps the number of refined search nodes.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    nodes = 0

    def visit(colors):
        nonlocal nodes
        if nodes >= budget:
            raise SearchBudgetExceeded
        nodes += 1
        return refine(g.adjacency, colors)

    full_gens: list[list[int]] = []
    uf = _UnionFind(g.num_nodes)
    timed_out = False
    try:
        path = []
        colors = visit(g.colors)
        shapes = [_shape(colors)]
        while True:
            cell = _first_nonsingleton(colors)
            if cell is None:
                break
            path.append((colors, cell))
            colors = visit(_individualize(colors, cell[0]))
            shapes.append(_shape(colors))
        first_leaf = colors

        def leaf_perm(colors):
            vertex_of = [0] * g.num_nodes
            for v, c in enumerate(colors):
                vertex_of[c] = v
            return [vertex_of[first_leaf[v]] for v in range(g.num_nodes)]

        def explore(colors, depth):
            if _shape(colors) != shapes[depth]:
                return None
            cell = _first_nonsingleton(colors)
            if cell is None:
                perm = leaf_perm(colors)
                return perm if _is_automorphism(g, perm) else None
            for u in cell:
                found = explore(visit(_individualize(colors, u)), depth + 1)
                if found is not None:
                    return found
            return None

        for depth in reversed(range(len(path))):
            colors, cell = path[depth]
            v = cell[0]
            for w in cell[1:]:
                if uf.find(w) == uf.find(v):
                    continue
                perm = explore(visit(_individualize(colors, w)), depth + 1)
                if perm is not None:
                    full_gens.append(perm)
                    for a, b in enumerate(perm):
                        uf.union(a, b)
    except SearchBudgetExceeded:
        timed_out = True

    n = g.num_vars
    generators = []
    seen = set()
    for perm in full_gens:
        mapping = tuple(perm[i] + 1 for i in range(n))
        if mapping in seen or mapping == tuple(range(1, n + 1)):
            continue
        seen.add(mapping)
        generators.append(PermutationGenerator(mapping))
    return SymmetryReport(
        generators=tuple(generators),
        orbit_partition=orbit_partition(generators, n),
        search_nodes=nodes,
        timed_out=timed_out,
    )


def detect_symmetry(bp: BinaryProgram, budget: int = 10**6) -> SymmetryReport:
    report = find_generators(build_colored_graph(bp), budget)
    for gen in report.generators:
        assert verify_symmetry(bp, gen), f"unsound generator {gen.cycle_notation()}"
    return report


# -- verification and oracles --------------------------------------------------

def _as_mapping(sigma) -> tuple[int, ...]:
    return sigma.mapping if isinstance(sigma, PermutationGenerator) else tuple(sigma)


def verify_symmetry(bp: BinaryProgram, sigma) -> bool:
    """True iff ``sigma`` fixes the objective and permutes the constraint multiset."""
    mapping = _as_mapping(sigma)
    n = bp.num_vars
    if len(mapping) != n or sorted(mapping) != list(range(1, n + 1)):
        raise ValueError("sigma must be a bijection on 1..num_vars")
    for i in range(1, n + 1):
        if bp.coefficient(mapping[i - 1]) != bp.coefficient(i):
            return False

    def key(con, perm):
        return (con.relation, con.rhs, tuple(sorted((perm[v - 1], c) for c, v in con.terms)))

    ident = tuple(range(1, n + 1))
    original = Counter(key(con, ident) for con in bp.constraints)
    permuted = Counter(key(con, mapping) for con in bp.constraints)
    return original == permuted


def orbit_partition(generators, n: int) -> tuple[tuple[int, ...], ...]:
    uf = _UnionFind(n)
    for gen in generators:
        for i, image in enumerate(_as_mapping(gen)):
            uf.union(i, image - 1)
    cells: dict[int, list[int]] = {}
    for i in range(n):
        cells.setdefault(uf.find(i), []).append(i + 1)
    return tuple(tuple(c) for c in sorted(cells.values()))


def color_class_permutation_count(g: ColoredGraph) -> int:
    return prod(factorial(k) for k in Counter(g.colors[: g.num_vars]).values())


def brute_force_automorphisms(g: ColoredGraph, max_vars: int = 12) -> list[PermutationGenerator]:
    """Every non-identity color-preserving variable permutation that is a formulation symmetry."""
    n = g.num_vars
    if n > max_vars:
        raise ValueError(f"{n} variables exceed the brute-force limit of {max_vars}")
    classes: dict[int, list[int]] = {}
    for v in range(n):
        classes.setdefault(g.colors[v], []).append(v + 1)
    groups = list(classes.values())
    out = []
    for images in itertools.product(*(itertools.permutations(c) for c in groups)):
        mapping = [0] * n
        for cls, img in zip(groups, images):
            for a, b in zip(cls, img):
                mapping[a - 1] = b
        mapping = tuple(mapping)
        if mapping == tuple(range(1, n + 1)):
            continue
        if verify_symmetry(g.program, mapping):
            out.append(PermutationGenerator(mapping))
    return out


def group_closure(generators, n: int, limit: int = 10**6) -> set[tuple[int, ...]]:
    """All elements of the group generated by ``generators`` (including the identity)."""
    identity = tuple(range(1, n + 1))
    gens = [_as_mapping(g) for g in generators]
    elements = {identity}
    frontier = [identity]
    while frontier:
        nxt = []
        for p in frontier:
            for gmap in gens:
                q = tuple(gmap[p[i] - 1] for i in range(n))
                if q not in elements:
                    elements.add(q)
                    nxt.append(q)
                    if len(elements) > limit:
                        raise ValueError("group closure exceeds limit")
        frontier = nxt
    return elements
