from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bitround.model import BinaryProgram, Sense
from bitround.rounding import (
    EpsilonCertificate,
    NoGuarantee,
    UndefinedLoss,
    bit_length,
    epsilon_for_level,
    loss_bound_traditional,
    objective_loss,
    round_coefficient,
    round_objective,
    verify_certificate,
)
from oracles import mask_oracle


@pytest.mark.parametrize("c, k", [(0, 0), (13, 4), (-8, 4), (1, 1), (2**40, 41)])
def test_bit_length(c, k):
    assert bit_length(c) == k


@pytest.mark.parametrize("c, level, expected", [
    (13, 2, 12),
    (-13, 2, -12),
    (5, 0, 0),
    (5, 8, 5),
    (1000000, 3, 917504),
])
def test_round_coefficient(c, level, expected):
    assert round_coefficient(c, level) == expected


def test_negative_level_rejected():
    with pytest.raises(ValueError):
        round_coefficient(3, -1)


coef = st.integers(-(2**16), 2**16)
level = st.integers(0, 17)


@given(coef, level)
def test_matches_mask_oracle(c, lv):
    assert round_coefficient(c, lv) == mask_oracle(c, lv)


@given(coef, level)
def test_idempotent(c, lv):
    r = round_coefficient(c, lv)
    assert round_coefficient(r, lv) == r


@given(coef, level, st.integers(0, 10))
def test_monotone_refinement(c, lv, extra):
    assert round_coefficient(round_coefficient(c, lv + extra), lv) == round_coefficient(c, lv)


@given(coef, level)
def test_error_bound_and_sign(c, lv):
    r = round_coefficient(c, lv)
    k = bit_length(c)
    if lv < k:
        assert abs(c - r) < 2 ** (k - lv)
    else:
        assert r == c
    assert abs(r) <= abs(c)
    assert r == 0 or (r > 0) == (c > 0)


@given(st.integers(-(2**40), 2**40), st.integers(1, 45))
def test_rounded_coefficient_in_envelope(c, lv):
    cert = EpsilonCertificate((), {1: c}, {1: round_coefficient(c, lv)}, epsilon_for_level(lv))
    assert verify_certificate(cert)


def test_round_objective():
    bp = BinaryProgram("t", Sense.MAXIMIZE, 2, {1: 13, 2: 5})
    rounded, report = round_objective(bp, 2)
    assert rounded.objective == {1: 12, 2: 4}
    assert report.epsilon == Fraction(1, 2)
    assert report.traditional_bound == Fraction(1, 3)
    assert report.loss_bound == Fraction(2, 3)
    assert [(e.original, e.rounded, e.bits) for e in report.per_coefficient] == [(13, 12, 4), (5, 4, 3)]
    assert rounded.constraints == bp.constraints


def test_round_objective_level_zero_is_feasibility():
    bp = BinaryProgram("t", Sense.MAXIMIZE, 3, {1: 13, 2: -5, 3: 1})
    rounded, report = round_objective(bp, 0)
    assert rounded.objective == {}
    assert report.epsilon is None and report.loss_bound is None


def test_round_objective_unit_coefficients_unchanged():
    bp = BinaryProgram("t", Sense.MAXIMIZE, 3, {1: 1, 2: 1, 3: 1})
    for lv in range(1, 5):
        assert round_objective(bp, lv)[0] == bp


def test_report_json():
    bp = BinaryProgram("t", Sense.MAXIMIZE, 1, {1: 13})
    data = round_objective(bp, 3)[1].to_json()
    assert data["epsilon"] == "1/4"
    assert data["loss_bound"] == "2/5"
    assert data["coefficients"] == [{"var": 1, "original": 13, "rounded": 12, "bits": 4}]


@pytest.mark.parametrize("lv, eps", [(3, Fraction(1, 4)), (1, Fraction(1)), (5, Fraction(1, 16))])
def test_epsilon(lv, eps):
    assert epsilon_for_level(lv) == eps


def test_epsilon_level_zero():
    with pytest.raises(NoGuarantee):
        epsilon_for_level(0)
    with pytest.raises(NoGuarantee):
        loss_bound_traditional(0)


@pytest.mark.parametrize("c, cp, eps, ok", [
    (13, 12, Fraction(1, 2), True),
    (13, 6, Fraction(1, 2), False),
    (0, 0, Fraction(1, 3), True),
    (-13, -12, Fraction(1, 2), True),
    (-13, 12, Fraction(1, 2), False),
])
def test_verify_certificate(c, cp, eps, ok):
    assert verify_certificate(EpsilonCertificate((), {1: c}, {1: cp}, eps)) is ok


def test_verify_certificate_missing_reads_zero():
    assert not verify_certificate(EpsilonCertificate((), {1: 4}, {}, Fraction(1, 2)))
    assert verify_certificate(EpsilonCertificate((), {}, {}, Fraction(1, 2)))


# 1 - (1/2)/(3/2) = 2/3 for level 2
@pytest.mark.parametrize("lv, bound", [(2, Fraction(2, 3)), (1, Fraction(1)), (5, Fraction(2, 17))])
def test_loss_bound_traditional(lv, bound):
    assert loss_bound_traditional(lv) == bound


@pytest.mark.parametrize("a, b, loss", [
    (100, 95, Fraction(1, 20)),
    (100, 100, Fraction(0)),
    (-50, -60, Fraction(1, 5)),
])
def test_objective_loss(a, b, loss):
    assert objective_loss(a, b) == loss


def test_objective_loss_undefined():
    with pytest.raises(UndefinedLoss):
        objective_loss(0, 3)
