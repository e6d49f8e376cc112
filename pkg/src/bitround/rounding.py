"""l-bit rounding of objective coefficients and the guarantees it carries.

Rounding keeps the ``level`` most significant bits of ``|c|`` and zeroes the
rest, so ``c' = sgn(c) * (|c| with its low k - level bits cleared)`` where
``k`` is the bit length of ``|c|``.  All bounds are exact
:class:`~fractions.Fraction` values.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .model import BinaryProgram, Sense


class NoGuarantee(ValueError):
    """Raised for level 0, which turns the program into a feasibility problem."""


class UndefinedLoss(ZeroDivisionError):
    """The original optimum is 0, so relative loss is undefined."""


def bit_length(c: int) -> int:
    """``ceil(log2(|c| + 1))``, i.e. the number of significant bits of ``|c|``."""
    return abs(c).bit_length()


def round_coefficient(c: int, level: int) -> int:
    if level < 0:
        raise ValueError("level must be non-negative")
    magnitude = abs(c)
    drop = max(magnitude.bit_length() - level, 0)
    rounded = (magnitude >> drop) << drop
    return -rounded if c < 0 else rounded


@dataclass(frozen=True)
class CoefficientRounding:
    var: int
    original: int
    rounded: int
    bits: int


@dataclass(frozen=True)
class RoundingReport:
    level: int
    epsilon: Fraction | None
    per_coefficient: tuple[CoefficientRounding, ...]
    traditional_bound: Fraction | None
    loss_bound: Fraction | None

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "epsilon": fraction_text(self.epsilon),
            "traditional_bound": fraction_text(self.traditional_bound),
            "loss_bound": fraction_text(self.loss_bound),
            "loss_bound_decimal": None if self.loss_bound is None else float(f"{float(self.loss_bound):.6g}"),
            "coefficients": [
                {"var": e.var, "original": e.original, "rounded": e.rounded, "bits": e.bits}
                for e in self.per_coefficient
            ],
        }


def fraction_text(q: Fraction | None) -> str | None:
    if q is None:
        return None
    return f"{q.numerator}/{q.denominator}"


def epsilon_for_level(level: int) -> Fraction:
    if level < 1:
        raise NoGuarantee("level 0 rounding carries no approximation guarantee")
    return Fraction(1, 2 ** (level - 1))


def traditional_factor(level: int) -> Fraction:
    """``(1 - eps) / (1 + eps)``: the fraction of the optimum that is guaranteed."""
    eps = epsilon_for_level(level)
    return (1 - eps) / (1 + eps)


def loss_bound_traditional(level: int) -> Fraction:
    """Largest relative loss ``2 eps / (1 + eps)``, valid for maximization with ``c >= 0``."""
    eps = epsilon_for_level(level)
    return 2 * eps / (1 + eps)


def round_objective(bp: BinaryProgram, level: int) -> tuple[BinaryProgram, RoundingReport]:
    entries = []
    rounded = {}
    for var, c in sorted(bp.objective.items()):
        r = round_coefficient(c, level)
        entries.append(CoefficientRounding(var, c, r, bit_length(c)))
        if r:
            rounded[var] = r
    if level >= 1:
        eps = epsilon_for_level(level)
        report = RoundingReport(level, eps, tuple(entries), traditional_factor(level), loss_bound_traditional(level))
    else:
        report = RoundingReport(level, None, tuple(entries), None, None)
    return bp.with_objective(rounded), report


@dataclass(frozen=True)
class EpsilonCertificate:
    x_star: Sequence[int]
    c_original: Mapping[int, int]
    c_perturbed: Mapping[int, int]
    epsilon: Fraction


def within_envelope(c: int, c_prime, eps) -> bool:
    # Negative coefficients use the mirrored interval (1+eps)c <= c' <= (1-eps)c.
    if c >= 0:
        return (1 - eps) * c <= c_prime <= (1 + eps) * c
    return (1 + eps) * c <= c_prime <= (1 - eps) * c


def verify_certificate(cert: EpsilonCertificate, sense: Sense = Sense.MAXIMIZE) -> bool:
    """Check the componentwise ``(1 +- eps)`` envelope between the two objectives.

    Optimality of ``x_star`` for the perturbed objective is not checked.  The
    envelope is symmetric in the sense, which is accepted for interface
    uniformity.
    """
    eps = Fraction(cert.epsilon)
    keys = set(cert.c_original) | set(cert.c_perturbed)
    return all(
        within_envelope(cert.c_original.get(j, 0), cert.c_perturbed.get(j, 0), eps) for j in keys
    )


def objective_loss(opt_original: int, opt_rounded_sol_value: int) -> Fraction:
    """``|a - b| / |a|`` with ``a`` the original optimum, both under the original objective."""
    if opt_original == 0:
        raise UndefinedLoss("objective loss is undefined when the original optimum is 0")
    return Fraction(abs(opt_rounded_sol_value - opt_original), abs(opt_original))
