"""Seeded generators for clustered knapsack and capacitated facility location.

Randomness comes from the raw 64-bit output of PCG64, whose stream is fixed
for a given seed; integer and float draws are derived from it here so that
generated instances do not depend on the numpy sampling routines.

Draw order is part of the contract.  CFLP: customer coordinates (x then y per
customer), then the shared capacity, then optional fixed costs.  Knapsack:
cluster sizes, then (base value, base weight) per cluster, then item noise.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_EVEN, Decimal

import numpy as np

from .model import EQ, LE, BinaryProgram, CoefficientOverflow, LinearConstraint, Sense, check_int64


class GenerationError(ValueError):
    pass


class Rng:
    """Portable 64-bit generator (PCG64) with explicit derived draws."""

    algorithm = "pcg64"

    def __init__(self, seed: int):
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self._bits = np.random.PCG64(seed)

    def next_u64(self) -> int:
        return int(self._bits.random_raw())

    def uniform_float(self) -> float:
        """Uniform on [0, 1) with 53 bits of resolution."""
        return (self.next_u64() >> 11) * 2.0**-53


def uniform_int(rng: Rng, a: int, b: int) -> int:
    """Discrete uniform on ``[a, b)`` by rejection sampling."""
    if a >= b:
        raise ValueError(f"empty range [{a}, {b})")
    span = b - a
    if span > 2**64:
        raise ValueError("range wider than 2**64")
    limit = (2**64 // span) * span
    while True:
        r = rng.next_u64()
        if r < limit:
            return a + r % span


@dataclass(frozen=True)
class CflpRecipe:
    n: int
    m: int
    square_scale: float = 1.0
    circle_scale: float = 4.0
    decimals: int = 2
    objective_scale: int = 10**6
    seed: int = 0
    fixed_cost_range: tuple[int, int] | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise GenerationError("CFLP needs at least one facility and one customer")
        if self.square_scale <= 0 or self.circle_scale <= 0 or self.objective_scale <= 0:
            raise GenerationError("scales must be positive")
        if self.decimals < 0:
            raise GenerationError("decimals must be non-negative")


@dataclass(frozen=True)
class KnapsackRecipe:
    n: int
    k: int
    base_value_low: int = 2**10
    base_value_high: int = 2**20
    noise_sigma: int = 2**12
    weight_low: int = 50
    weight_high: int = 500
    balanced: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise GenerationError("need 1 <= k <= n")
        if self.weight_low < 1 or self.weight_low >= self.weight_high:
            raise GenerationError("weights need 1 <= weight_low < weight_high")
        if self.base_value_low >= self.base_value_high:
            raise GenerationError("base values need low < high")
        if self.noise_sigma < 0:
            raise GenerationError("noise_sigma must be non-negative")


def recipe_header(recipe) -> list[str]:
    kind = "cflp" if isinstance(recipe, CflpRecipe) else "knapsack"
    fields = " ".join(f"{k}={v}" for k, v in asdict(recipe).items())
    return [f"generator: {kind} rng={Rng.algorithm}", f"recipe: {fields}"]


def _scaled_distance(d: float, dmax: float, decimals: int, scale: int) -> int:
    q = Decimal(d / dmax).quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_HALF_EVEN)
    return int(q * scale)


def generate_cflp(recipe: CflpRecipe) -> BinaryProgram:
    """Facilities evenly spaced on a circle, customers clustered in a central square.

    Variables are ``x_ij`` (facility ``i`` serves customer ``j``) at index
    ``(i-1)*m + j``, followed by ``y_i`` at ``n*m + i``.
    """
    n, m = recipe.n, recipe.m
    rng = Rng(recipe.seed)
    side = recipe.square_scale
    customers = [
        ((rng.uniform_float() - 0.5) * side, (rng.uniform_float() - 0.5) * side) for _ in range(m)
    ]
    capacity = uniform_int(rng, math.ceil(m / n), -(-2 * m // n) + 1)
    fixed = [0] * n
    if recipe.fixed_cost_range is not None:
        lo, hi = recipe.fixed_cost_range
        fixed = [uniform_int(rng, lo, hi) for _ in range(n)]

    radius = recipe.circle_scale
    facilities = [
        (radius * math.cos(2 * math.pi * i / n), radius * math.sin(2 * math.pi * i / n))
        for i in range(1, n + 1)
    ]
    dist = [[math.hypot(fx - cx, fy - cy) for cx, cy in customers] for fx, fy in facilities]
    dmax = max(max(row) for row in dist)

    def x(i, j):
        return (i - 1) * m + j

    def y(i):
        return n * m + i

    objective = {}
    try:
        for i in range(1, n + 1):
            for j in range(1, m + 1):
                c = _scaled_distance(dist[i - 1][j - 1], dmax, recipe.decimals, recipe.objective_scale)
                objective[x(i, j)] = check_int64(c, "scaled distance")
            objective[y(i)] = check_int64(fixed[i - 1], "fixed cost")
        rows = [LinearConstraint(tuple((1, x(i, j)) for i in range(1, n + 1)), EQ, 1) for j in range(1, m + 1)]
        rows += [
            LinearConstraint(tuple((1, x(i, j)) for j in range(1, m + 1)) + ((-capacity, y(i)),), LE, 0)
            for i in range(1, n + 1)
        ]
    except CoefficientOverflow as exc:
        raise GenerationError(str(exc)) from exc
    return BinaryProgram(
        name=f"cflp_n{n}_m{m}_r{recipe.decimals}_s{recipe.seed}",
        sense=Sense.MINIMIZE,
        num_vars=n * m + n,
        objective=objective,
        constraints=tuple(rows),
    )


def balanced_sizes(n: int, k: int) -> list[int]:
    q, r = divmod(n, k)
    return [q + 1 if j < r else q for j in range(k)]


def random_sizes(rng: Rng, n: int, k: int) -> list[int]:
    """Cut ``1..n-1`` at ``k-1`` distinct random points (partial Fisher-Yates)."""
    points = list(range(1, n))
    for t in range(k - 1):
        s = uniform_int(rng, t, len(points))
        points[t], points[s] = points[s], points[t]
    cuts = [0] + sorted(points[: k - 1]) + [n]
    sizes = [b - a for a, b in zip(cuts, cuts[1:])]
    assert all(s > 0 for s in sizes) and sum(sizes) == n
    return sizes


def generate_knapsack(recipe: KnapsackRecipe) -> BinaryProgram:
    rng = Rng(recipe.seed)
    n, k = recipe.n, recipe.k
    sizes = balanced_sizes(n, k) if recipe.balanced else random_sizes(rng, n, k)
    bases = []
    for _ in range(k):
        gamma = uniform_int(rng, recipe.base_value_low, recipe.base_value_high)
        omega = uniform_int(rng, recipe.weight_low, recipe.weight_high)
        bases.append((gamma, omega))
    sigma = recipe.noise_sigma
    values, weights = [], []
    for (gamma, omega), size in zip(bases, sizes):
        for _ in range(size):
            noise = uniform_int(rng, -sigma, sigma) if sigma > 0 else 0
            values.append(max(gamma + noise, 1))
            weights.append(omega)
    capacity = sum(s * omega for s, (_, omega) in zip(sizes, bases)) // 2
    try:
        row = LinearConstraint(tuple((w, i) for i, w in enumerate(weights, start=1)), LE, capacity)
        return BinaryProgram(
            name=f"knapsack_n{n}_k{k}_{'bal' if recipe.balanced else 'rnd'}_s{recipe.seed}",
            sense=Sense.MAXIMIZE,
            num_vars=n,
            objective={i: v for i, v in enumerate(values, start=1)},
            constraints=(row,),
        )
    except CoefficientOverflow as exc:
        raise GenerationError(str(exc)) from exc


def cluster_ranges(recipe: KnapsackRecipe) -> list[range]:
    """Variable index ranges of the clusters, for balanced recipes or by replaying the size draw."""
    if recipe.balanced:
        sizes = balanced_sizes(recipe.n, recipe.k)
    else:
        sizes = random_sizes(Rng(recipe.seed), recipe.n, recipe.k)
    out, start = [], 1
    for s in sizes:
        out.append(range(start, start + s))
        start += s
    return out
