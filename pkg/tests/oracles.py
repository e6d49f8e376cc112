"""Independent reference implementations used by the tests."""
import mpmath


def mask_oracle(c: int, level: int) -> int:
    """Keep the first ``level`` characters of the binary string of |c|."""
    if c == 0:
        return 0
    s = format(abs(c), "b")
    kept = int(s[:level] + "0" * max(len(s) - level, 0) or "0", 2)
    return -kept if c < 0 else kept


def mp_sgm(values, shift):
    """Shifted geometric mean at 50 significant digits."""
    with mpmath.workdps(50):
        if shift == 0:
            return mpmath.exp(mpmath.fsum(mpmath.log(mpmath.mpf(v)) for v in values) / len(values))
        s = mpmath.mpf(shift.numerator) / shift.denominator
        logs = [mpmath.log1p(mpmath.mpf(v) / s) for v in values]
        return s * mpmath.expm1(mpmath.fsum(logs) / len(values))
