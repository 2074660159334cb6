"""Scalar special functions used by the sequential inference and pricing code.

Implements the principal Lambert W branch, digamma/trigamma, and the standard
normal pdf/cdf/quantile without external dependencies.  All functions are pure
and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConvergenceError, DomainError

__all__ = [
    "SpecFunTolerance",
    "lambert_w0",
    "log_lambert_w0_exp",
    "digamma",
    "trigamma",
    "tetragamma",
    "std_normal_pdf",
    "std_normal_cdf",
    "std_normal_quantile",
]

_INV_E = math.exp(-1.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SpecFunTolerance:
    """Convergence controls for the iterative evaluations in this module."""

    max_iterations: int = 100
    abs_tol: float = 1e-12

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        if not self.abs_tol > 0.0:
            raise DomainError("abs_tol must be > 0")


_DEFAULT_TOL = SpecFunTolerance()


def lambert_w0(x: float, tol: SpecFunTolerance = _DEFAULT_TOL) -> float:
    """Principal branch W0: the w >= -1 solving w * exp(w) = x, for x >= -1/e.

    Halley iteration from log1p(x) for x >= 0 and from a branch-point series
    for x < 0; converges cubically away from the branch point.
    """
    if x < -_INV_E:
        raise DomainError(f"lambert_w0 requires x >= -1/e, got {x!r}")
    if x == 0.0:
        return 0.0
    if x + _INV_E < 1e-16:
        return -1.0
    if x < -0.25:
        # series around the branch point in p = sqrt(2(e*x + 1))
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 - p * 43.0 / 540.0)))
    elif x < 0.0:
        w = x * (1.0 - x)
    else:
        w = math.log1p(x)
    # tolerance relative to |x| so small arguments keep full relative accuracy
    target = 0.5 * tol.abs_tol * max(abs(x), 1e-300)
    for _ in range(tol.max_iterations):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= target:
            return w
        # Halley step; w = -1 is excluded by the branch-point shortcut above
        denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0)
        w_next = w - f / denom
        if w_next < -1.0:
            w_next = -1.0 + 0.5 * (w + 1.0)
        if abs(w_next - w) <= 1e-17 * (1.0 + abs(w_next)):
            return w_next
        w = w_next
    raise ConvergenceError(f"lambert_w0 did not converge for x={x!r}")


def log_lambert_w0_exp(z: float, tol: SpecFunTolerance = _DEFAULT_TOL) -> float:
    """log(W0(exp(z))) for large z, where exp(z) itself would overflow.

    Solves L + exp(L) = z by Newton iteration (L = log W0(e^z)); intended for
    z large enough that W0(e^z) > 0, i.e. z > ~1.
    """
    if z <= 1.0:
        return math.log(lambert_w0(math.exp(z), tol))
    w = math.log(z)  # W0(e^z) ~ z - log z for large z
    for _ in range(tol.max_iterations):
        ew = math.exp(w)
        f = w + ew - z
        step = f / (1.0 + ew)
        w -= step
        # step noise floor is ~eps*z/(1+e^w); stop once the step is at that level
        if abs(step) <= 4e-16 * (1.0 + abs(w)):
            return w
    if abs(w + math.exp(w) - z) <= 1e-9 * max(1.0, abs(z)):
        return w
    raise ConvergenceError(f"log_lambert_w0_exp did not converge for z={z!r}")


# Asymptotic coefficients: -B_{2n}/(2n) for digamma, B_{2n} for trigamma.
_DIGAMMA_COEF = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
)
_SHIFT_TO = 10.0


def digamma(a: float) -> float:
    """psi(a) = d/da log Gamma(a) for a > 0.

    Upward recurrence psi(a) = psi(a+1) - 1/a until the argument reaches 10,
    then the standard asymptotic expansion (absolute error < 1e-13).
    """
    if not a > 0.0:
        raise DomainError(f"digamma requires a > 0, got {a!r}")
    acc = 0.0
    while a < _SHIFT_TO:
        acc -= 1.0 / a
        a += 1.0
    inv = 1.0 / a
    inv2 = inv * inv
    s = 0.0
    for c in reversed(_DIGAMMA_COEF):
        s = (s + c) * inv2
    return acc + math.log(a) - 0.5 * inv + s


def trigamma(a: float) -> float:
    """psi'(a) > 0 for a > 0, by recurrence psi'(a) = psi'(a+1) + 1/a^2."""
    if not a > 0.0:
        raise DomainError(f"trigamma requires a > 0, got {a!r}")
    acc = 0.0
    while a < _SHIFT_TO:
        acc += 1.0 / (a * a)
        a += 1.0
    inv = 1.0 / a
    inv2 = inv * inv
    # 1/a + 1/(2a^2) + B_2/a^3 + B_4/a^5 + ... (Bernoulli numbers)
    s = -691.0 / 2730.0
    for c in (5.0 / 66.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 1.0 / 6.0):
        s = s * inv2 + c
    return acc + inv + 0.5 * inv2 + s * inv2 * inv


def tetragamma(a: float) -> float:
    """psi''(a) < 0 for a > 0; used as the Newton derivative for trigamma."""
    if not a > 0.0:
        raise DomainError(f"tetragamma requires a > 0, got {a!r}")
    acc = 0.0
    while a < _SHIFT_TO:
        acc -= 2.0 / (a * a * a)
        a += 1.0
    inv = 1.0 / a
    inv2 = inv * inv
    # -(1/a^2 + 1/a^3 + 1/(2a^4) - 1/(6a^6) + 1/(6a^8) - 3/(10a^10))
    tail = inv2 * inv2 * (0.5 + inv2 * (-1.0 / 6.0 + inv2 * (1.0 / 6.0 - 0.3 * inv2)))
    return acc - (inv2 + inv2 * inv + tail)


def std_normal_pdf(z: float) -> float:
    """Standard normal density."""
    return math.exp(-0.5 * z * z) / _SQRT_2PI


def std_normal_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


# Acklam's rational approximation for the normal quantile (|error| < 1.2e-9),
# refined below by two Newton steps to full double precision.
_ACK_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACK_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_ACK_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACK_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)


def std_normal_quantile(u: float) -> float:
    """Inverse of the standard normal CDF on (0, 1)."""
    if not 0.0 < u < 1.0:
        raise DomainError(f"std_normal_quantile requires u in (0, 1), got {u!r}")
    p_low = 0.02425
    if u < p_low:
        q = math.sqrt(-2.0 * math.log(u))
        x = ((((( _ACK_C[0]*q + _ACK_C[1])*q + _ACK_C[2])*q + _ACK_C[3])*q + _ACK_C[4])*q + _ACK_C[5]) / \
            (((( _ACK_D[0]*q + _ACK_D[1])*q + _ACK_D[2])*q + _ACK_D[3])*q + 1.0)
    elif u <= 1.0 - p_low:
        q = u - 0.5
        r = q * q
        x = ((((( _ACK_A[0]*r + _ACK_A[1])*r + _ACK_A[2])*r + _ACK_A[3])*r + _ACK_A[4])*r + _ACK_A[5]) * q / \
            ((((( _ACK_B[0]*r + _ACK_B[1])*r + _ACK_B[2])*r + _ACK_B[3])*r + _ACK_B[4])*r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-u))
        x = -((((( _ACK_C[0]*q + _ACK_C[1])*q + _ACK_C[2])*q + _ACK_C[3])*q + _ACK_C[4])*q + _ACK_C[5]) / \
            (((( _ACK_D[0]*q + _ACK_D[1])*q + _ACK_D[2])*q + _ACK_D[3])*q + 1.0)
    for _ in range(2):
        err = std_normal_cdf(x) - u
        pdf = std_normal_pdf(x)
        if pdf == 0.0:
            break
        x -= err / pdf
    return x
