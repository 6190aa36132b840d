"""Closed-form exponents and critical points of the recursion.

The per-step decay exponent ``T(q)`` is defined by the integral

    T(q) = (1/4) * int_0^{pi/2} (1 - sin^{2q}t - cos^{2q}t) / (sin^2 t cos^2 t) dt

(with ``sin^{2q}`` meaning ``(sin^2)^q``) and evaluates to the Gamma ratio
``(sqrt(pi)/2) * Gamma(q - 1/2) / Gamma(q - 1)``, continued through the
removable zero at q = 1.  The constant is pinned by T(2) = pi/4, which the
defining integral gives directly (the integrand is identically 2 there).

Everything here is a pure function of q (and the coupling b where noted);
all thresholds derive from T:

* ``H(q) = q T'(q) - T(q)`` changes sign exactly once on (1/2, inf); its
  root ``q_c`` separates the mean-dominated regime from the frozen one.
* ``p_star(q)`` is the supremum of bounded moment orders, the root of
  ``T(pq) - p T(q)`` in p > 1 (unbounded for q <= 1).
* ``q_k`` is the root in q of ``T(kq) - k T(q)`` for integer k >= 2.
* ``d_of_q(q, b) = b T(q) / (q - 1)`` is the multifractal dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import digamma, gammaln, gammasgn, rgamma

from .errors import ContractViolation

__all__ = [
    "UNBOUNDED",
    "ExponentReport",
    "CriticalPoints",
    "log_gamma",
    "T_of_q",
    "T_quadrature",
    "T_prime",
    "H_of_q",
    "find_qc",
    "p_star",
    "find_qk",
    "d_of_q",
    "exponent_report",
    "critical_points",
]

_SQRT_PI = math.sqrt(math.pi)


class _Unbounded:
    """Sentinel for an unbounded moment order (never a float inf in tables)."""

    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return "unbounded"


#: Distinguished "no finite moment boundary" value returned by :func:`p_star`.
UNBOUNDED = _Unbounded()


@dataclass(frozen=True)
class ExponentReport:
    """All closed-form exponents at a single (q, b) point."""

    q: float
    T: float
    Tprime: float
    H: float
    d: float
    b: float


@dataclass(frozen=True)
class CriticalPoints:
    """The critical index q_c and the integer-moment thresholds q_k.

    ``p_star`` itself stays a function (:func:`p_star`); this record only
    carries its domain/codomain so serialized output is self-describing.
    """

    q_c: float
    q_k: dict[int, float] = field(default_factory=dict)
    p_star_domain: tuple[float, float] = (0.5, float("nan"))
    p_star_codomain: str = "(1, unbounded]"


def _check_q(q: float) -> None:
    if not q > 0.5:
        raise ValueError(f"q must exceed 1/2, got {q}")


def log_gamma(x: float) -> tuple[float, int]:
    """Return (ln|Gamma(x)|, sign of Gamma(x)).

    Raises ValueError at the poles (non-positive integers).  Relative
    accuracy of the log is that of scipy's gammaln (<= 1e-13 on (0, 100]).
    """
    if x <= 0 and float(x) == int(x):
        raise ValueError(f"Gamma pole at non-positive integer x={x}")
    return float(gammaln(x)), int(gammasgn(x))


def T_of_q(q: float) -> float:
    """Decay exponent ``T(q) = (sqrt(pi)/2) Gamma(q-1/2) / Gamma(q-1)``.

    Continued through q = 1 by its limit 0.  Negative on (1/2, 1), zero at
    1, positive beyond.  Evaluated in log space so large q does not overflow.
    """
    _check_q(q)
    sign = float(gammasgn(q - 1.0))  # 0 at the q=1 pole of Gamma(q-1)
    if sign == 0.0:
        return 0.0
    return 0.5 * _SQRT_PI * sign * math.exp(gammaln(q - 0.5) - gammaln(q - 1.0))


def T_quadrature(q: float, *, tol: float = 1e-10) -> float:
    """Evaluate T(q) by adaptive quadrature of its defining integral.

    Independent route used to validate :func:`T_of_q`; the integrand has
    integrable endpoint behaviour ~ t^{2q-2} for q < 1, so the interval is
    split near both endpoints before handing panels to Gauss-Kronrod.
    """
    _check_q(q)

    # The integrand is symmetric about pi/4, so integrate on [0, pi/4] only,
    # where the single difficult point is t = 0.  Split off the sin^{2q} term,
    # whose t^{2q-2} endpoint behaviour Gauss-Kronrod handles through an
    # explicit algebraic weight; the remainder is regular.
    def regular(t: float) -> float:
        st2 = math.sin(t) ** 2
        ct2 = 1.0 - st2
        if st2 == 0.0:
            return q  # limit of (1 - cos^{2q} t)/(sin^2 t cos^2 t) at t=0
        return (1.0 - ct2**q) / (st2 * ct2)

    def singular_cofactor(t: float) -> float:
        # sin^{2q} t/(sin^2 t cos^2 t) = t^{2q-2} * cofactor(t), cofactor smooth
        if t == 0.0:
            return 1.0
        return (math.sin(t) / t) ** (2.0 * q - 2.0) / math.cos(t) ** 2

    a, _ = integrate.quad(
        regular, 0.0, 0.25 * math.pi, epsabs=tol, epsrel=tol, limit=200
    )
    b, _ = integrate.quad(
        singular_cofactor,
        0.0,
        0.25 * math.pi,
        weight="alg",
        wvar=(2.0 * q - 2.0, 0.0),
        epsabs=tol,
        epsrel=tol,
        limit=200,
    )
    return 0.5 * (a - b)


def T_prime(q: float) -> float:
    """Derivative T'(q), positive for all q > 1/2.

    Away from q = 1 this is ``T(q) * (psi(q-1/2) - psi(q-1))``; the q = 1
    point is the product of a simple zero of T with a simple pole of
    psi(q-1), handled through the reciprocal-Gamma derivative.
    """
    _check_q(q)
    z = q - 1.0
    if z == 0.0:
        # d/dz [1/Gamma(z)] = 1 at z = 0, and Gamma(1/2) = sqrt(pi).
        return 0.5 * math.pi
    if abs(z) <= 0.5:
        # Near the zero of T the psi(q-1) pole cancels against rgamma; the
        # product psi(z) * rgamma(z) is well conditioned for small z.
        pref = 0.5 * _SQRT_PI * math.exp(gammaln(q - 0.5))
        rg = float(rgamma(z))
        return pref * (digamma(q - 0.5) * rg - digamma(z) * rg)
    return T_of_q(q) * (digamma(q - 0.5) - digamma(z))


def H_of_q(q: float) -> float:
    """``H(q) = q T'(q) - T(q)``; positive below q_c, negative above."""
    return q * T_prime(q) - T_of_q(q)


def _bracketed_root(
    f,
    lo: float,
    hi: float,
    *,
    ftol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """Bisection refined by secant steps; stops when |f| <= ftol.

    Requires a sign change on [lo, hi]; raises ContractViolation otherwise.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise ContractViolation(
            f"no sign change on bracket [{lo}, {hi}]: f={flo:.3g},{fhi:.3g}"
        )
    x, fx = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
    for _ in range(max_iter):
        if abs(fx) <= ftol:
            return x
        # Secant through the bracket endpoints, fall back to bisection when
        # the step leaves the bracket or the denominator degenerates.
        denom = fhi - flo
        if denom != 0.0:
            x = hi - fhi * (hi - lo) / denom
        if denom == 0.0 or not (lo < x < hi):
            x = 0.5 * (lo + hi)
        fx = f(x)
        if flo * fx <= 0.0:
            hi, fhi = x, fx
        else:
            lo, flo = x, fx
        if hi - lo < 4.0 * np.finfo(float).eps * max(1.0, abs(x)):
            return x
    return x


@lru_cache(maxsize=1)
def find_qc() -> float:
    """Unique root of H(q) = q T'(q) - T(q) on (1/2, inf); about 2.4056."""
    return _bracketed_root(H_of_q, 1.1, 8.0, ftol=1e-12)


def p_star(q: float):
    """Moment boundary p*(q): root in p > 1 of ``T(pq) - p T(q)``.

    Returns :data:`UNBOUNDED` for q <= 1 where the bracket never closes
    (the defining expression is positive for every p).  Strictly decreasing
    on (1, q_c) with limit 1 at q_c.
    """
    qc = find_qc()
    if not (0.5 < q < qc):
        raise ValueError(f"p_star requires q in (1/2, q_c={qc:.6f}), got {q}")
    if q <= 1.0:
        return UNBOUNDED

    def g(p: float) -> float:
        return T_of_q(p * q) - p * T_of_q(q)

    lo = 1.0 + 1e-9
    hi = 2.0
    while g(hi) > 0.0:
        lo = hi
        hi *= 2.0
        if hi > 1e6:  # pragma: no cover - cannot happen for q in (1, q_c)
            raise ContractViolation("p_star bracket expansion failed")
    return _bracketed_root(g, lo, hi, ftol=1e-12)


def find_qk(k: int) -> float:
    """Threshold q_k: root in (1, q_c) of ``T(kq) - k T(q)``; decreasing in k."""
    if k < 2:
        raise ValueError(f"k must be an integer >= 2, got {k}")

    def g(q: float) -> float:
        return T_of_q(k * q) - k * T_of_q(q)

    return _bracketed_root(g, 1.0, find_qc(), ftol=1e-12)


def d_of_q(q: float, b: float) -> float:
    """Multifractal dimension ``d(q) = b T(q)/(q-1) = b (sqrt(pi)/2) Gamma(q-1/2)/Gamma(q)``."""
    _check_q(q)
    if b < 0:
        raise ValueError(f"coupling b must be >= 0, got {b}")
    return b * 0.5 * _SQRT_PI * math.exp(gammaln(q - 0.5)) * float(rgamma(q))


def exponent_report(q: float, b: float) -> ExponentReport:
    """Bundle T, T', H and d at one (q, b) point."""
    return ExponentReport(
        q=q, T=T_of_q(q), Tprime=T_prime(q), H=H_of_q(q), d=d_of_q(q, b), b=b
    )


def critical_points(kmax: int = 6) -> CriticalPoints:
    """q_c together with the q_k table for k = 2..kmax."""
    qc = find_qc()
    table = {k: find_qk(k) for k in range(2, kmax + 1)}
    return CriticalPoints(q_c=qc, q_k=table, p_star_domain=(0.5, qc))
