"""Exact law of the resonance mixing angle at scale parameter epsilon.

The angle of a 2x2 resonant rotation is theta = -(1/2) arccot(t/(eps*v))
with the level half-gap t and coupling v independent.  Taking t centered
normal with standard deviation 2/pi and v standard normal makes the
normalizing constant 2*rho(0)*E|v| equal exactly one, and collapses the
ratio construction to

    theta = (1/2) * arctan(s * C),      s = pi * eps / 2,

with C standard Cauchy.  The density on [-pi/4, pi/4] is then closed form,

    r(theta) = 2 s / (pi * (s^2 cos^2 2theta + sin^2 2theta)),

so sampling is exact and branch-free, and the distribution function is
F(theta) = 1/2 + arctan(tan(2 theta)/s)/pi.

As eps -> 0 the law degenerates at 0, and for f(theta) = O(|theta|^a),
a > 1, expectations obey E[f] = eps * int f/sin^2(2 theta) + O(eps^a);
:func:`singular_limit` computes that limiting integral.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from numpy.polynomial.legendre import leggauss

from .errors import QuadratureWarning

__all__ = [
    "ThetaLaw",
    "theta_from_cauchy",
    "sample_theta",
    "sample_sin2_cos2",
    "theta_density",
    "theta_cdf",
    "expect_theta",
    "singular_limit",
    "folded_rule",
]

_QUARTER_PI = 0.25 * math.pi


@dataclass(frozen=True)
class ThetaLaw:
    """Angle law at scale epsilon = b/n; s = pi*eps/2 is the Cauchy scale."""

    epsilon: float
    s: float = field(init=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        object.__setattr__(self, "s", 0.5 * math.pi * self.epsilon)


def theta_from_cauchy(law: ThetaLaw, c):
    """Deterministic odd map from a standard Cauchy draw to the angle."""
    return 0.5 * np.arctan(law.s * np.asarray(c, dtype=float))


def sample_theta(law: ThetaLaw, rng: np.random.Generator, size=None):
    """Exact sampler; returns a scalar for size=None, else an ndarray."""
    c = rng.standard_cauchy(size)
    out = theta_from_cauchy(law, c)
    return float(out) if size is None else out


def sample_sin2_cos2(law: ThetaLaw, rng: np.random.Generator, size):
    """Draw (sin^2 theta, cos^2 theta) pairs without evaluating trig.

    cos(2 theta) = 1/sqrt(1 + (sC)^2) for theta = arctan(sC)/2, so the pair
    follows from half-angle identities; this is the hot path of the pool
    recursion.
    """
    u = law.s * rng.standard_cauchy(size)
    inv = 1.0 / np.sqrt(1.0 + u * u)
    return 0.5 * (1.0 - inv), 0.5 * (1.0 + inv)


def theta_density(law: ThetaLaw, theta):
    """Density r(theta) on [-pi/4, pi/4]; raises outside the support."""
    th = np.asarray(theta, dtype=float)
    if np.any(np.abs(th) > _QUARTER_PI + 1e-15):
        raise ValueError("theta outside [-pi/4, pi/4]")
    s = law.s
    s2t = np.sin(2.0 * th)
    c2t = np.cos(2.0 * th)
    out = 2.0 * s / (math.pi * (s * s * c2t * c2t + s2t * s2t))
    return float(out) if np.isscalar(theta) else out


def theta_cdf(law: ThetaLaw, theta):
    """Exact distribution function 1/2 + arctan(tan(2 theta)/s)/pi."""
    th = np.asarray(theta, dtype=float)
    if np.any(np.abs(th) > _QUARTER_PI + 1e-15):
        raise ValueError("theta outside [-pi/4, pi/4]")
    out = np.where(
        np.abs(th) >= _QUARTER_PI,
        (np.sign(th) + 1.0) / 2.0,
        0.5 + np.arctan(np.tan(2.0 * th) / law.s) / math.pi,
    )
    return float(out) if np.isscalar(theta) else out


def _split_points(law: ThetaLaw) -> list[float]:
    # The density has a peak of height ~1/eps and width ~eps at the origin;
    # force panel edges at +-eps and +-10 eps so the adaptive rule sees it.
    pts = []
    for m in (1.0, 10.0):
        p = m * law.epsilon
        if p < _QUARTER_PI:
            pts.extend([-p, p])
    return sorted(pts)


def expect_theta(
    law: ThetaLaw,
    f: Callable[[float], float],
    *,
    tol: float = 1e-10,
) -> float:
    """Adaptive quadrature of E[f(theta)] = int f r to absolute tol."""
    val, err = integrate.quad(
        lambda t: f(t) * theta_density(law, t),
        -_QUARTER_PI,
        _QUARTER_PI,
        points=_split_points(law),
        epsabs=tol,
        epsrel=0.0,
        limit=400,
        full_output=0,
    )
    if err > 50.0 * tol:
        warnings.warn(
            f"expect_theta error estimate {err:.2e} exceeds tolerance {tol:.2e}",
            QuadratureWarning,
            stacklevel=2,
        )
    return val


def singular_limit(f: Callable[[float], float], *, tol: float = 1e-10) -> float:
    """Limiting functional int_{-pi/4}^{pi/4} f(theta)/sin^2(2 theta) dtheta.

    The caller asserts f(theta) = O(|theta|^a) with a > 1, which makes the
    integrand integrable at 0; expectations at scale eps satisfy
    |E[f] - eps * singular_limit(f)| = O(eps^a).
    """

    def integrand(t: float) -> float:
        s2 = math.sin(2.0 * t) ** 2
        if s2 == 0.0:
            return 0.0
        return f(t) / s2

    val, err = integrate.quad(
        integrand,
        -_QUARTER_PI,
        _QUARTER_PI,
        points=[0.0],
        epsabs=tol,
        epsrel=tol,
        limit=400,
    )
    if err > max(50.0 * tol, 1e-7 * abs(val)):
        warnings.warn(
            f"singular_limit error estimate {err:.2e}: integrand may not be "
            "integrable at 0 (need f = O(|theta|^a), a > 1)",
            QuadratureWarning,
            stacklevel=2,
        )
    return val


def folded_rule(law: ThetaLaw, nodes_per_panel: int = 32):
    """Fixed Gauss-Legendre rule for E[f] with f even in theta.

    Returns (theta_nodes, weights) on [0, pi/4] with the density folded in
    (weights sum to ~1).  Panels split at eps and 10 eps around the density
    peak, then geometrically up to pi/4.  Intended for vectorized iteration
    where one rule is reused across many evaluation points.
    """
    eps = law.epsilon
    edges = [0.0]
    for m in (1.0, 10.0):
        p = m * eps
        if p < _QUARTER_PI:
            edges.append(p)
    # geometric bridge from the last split to pi/4 (panel ratio <= 16 keeps
    # Gauss-Legendre accurate on the ~1/theta^2 density tail)
    last = edges[-1]
    while last > 0.0 and _QUARTER_PI / last > 16.0:
        last *= 16.0
        edges.append(last)
    edges.append(_QUARTER_PI)

    x, w = leggauss(nodes_per_panel)
    nodes, weights = [], []
    for a, b in zip(edges, edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        t = mid + half * x
        nodes.append(t)
        weights.append(2.0 * theta_density(law, t) * w * half)
    return np.concatenate(nodes), np.concatenate(weights)
