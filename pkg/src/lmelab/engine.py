"""Monte Carlo pool evolution of the normalized ratio.

The recursion for the raw quantity multiplies its mean by
T_n(q) = E[sin^{2q} th_n + cos^{2q} th_n] each scale; dividing every update
by the exact T_n (quadrature, not its small-eps asymptote) keeps the pool's
law normalized to mean one at every n and accumulates log E into logZ.

The pool is partitioned into independent replica blocks: each block
resamples parents only within itself from its own keyed stream.  The law
of every sample is identical to resampling from one big pool, but block
independence is what makes jackknife standard errors honest: a single
resampled pool's mean performs an unavoidable random walk of width
~ sqrt(n/pool) which slot-block jackknife cannot see, whereas independent
replicas expose it as cross-block spread.  Moment estimates are reported
both raw and in the wander-immune ratio form m_p / m_1^p.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytics, theta
from .streams import DOMAIN_LME, derive_stream

__all__ = [
    "LmeParams",
    "SamplePool",
    "RunRecord",
    "PaleyZygmund",
    "exact_Tn",
    "init_pool",
    "step",
    "run",
    "h_exponent",
    "paley_zygmund_bounds",
    "fit_log_slope",
]

_tn_cache: dict[tuple[float, float], float] = {}
_tn_lock = threading.Lock()


@dataclass(frozen=True)
class LmeParams:
    """Pool evolution parameters; mirrors the simulate-lme config."""

    q: float
    b: float
    n_max: int
    pool_size: int = 100_000
    seed: int = 0
    track_powers: tuple[float, ...] = (2.0, 3.0)
    blocks: int = 32
    threads: int = 1

    def __post_init__(self):
        if not self.q > 0.5:
            raise ValueError(f"q must exceed 1/2, got {self.q}")
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.pool_size < 1000:
            raise ValueError("pool_size must be >= 1000")
        if self.pool_size % self.blocks != 0:
            raise ValueError(
                f"pool_size {self.pool_size} not divisible by {self.blocks} blocks"
            )


@dataclass
class SamplePool:
    """Empirical ensemble for the law of the normalized ratio at scale n."""

    n: int
    values: np.ndarray
    logZ: float
    blocks: int

    def block_views(self) -> list[np.ndarray]:
        return np.split(self.values, self.blocks)


@dataclass(frozen=True)
class PaleyZygmund:
    """Markov upper bound for P(ratio > 2) and the p-th-moment lower bound
    for P(ratio >= 1/2), with the empirical frequencies beside them."""

    upper_p_gt_2: float
    lower_p_ge_half: float
    empirical_p_gt_2: float
    empirical_p_ge_half: float


@dataclass
class RunRecord:
    """Checkpointed trajectory of a pool run.

    ``moments``/``ses`` hold the unbiased raw block-mean estimates of
    E[ratio^p] with jackknife errors over independent blocks; the
    wander-cancelling (but finitely biased) ratio-normalized versions ride
    along as ``moments_ratio``/``ses_ratio`` for diagnostics.
    """

    params: LmeParams
    ns: list[int] = field(default_factory=list)
    logZ: list[float] = field(default_factory=list)
    moments: dict[float, list[float]] = field(default_factory=dict)
    ses: dict[float, list[float]] = field(default_factory=dict)
    moments_ratio: dict[float, list[float]] = field(default_factory=dict)
    ses_ratio: dict[float, list[float]] = field(default_factory=dict)
    means: list[float] = field(default_factory=list)
    mean_ses: list[float] = field(default_factory=list)


def exact_Tn(q: float, epsilon: float) -> float:
    """T_n(q) = E[sin^{2q} + cos^{2q}] at scale eps, by adaptive quadrature.

    Cached by (q, eps); the same eps recurs across runs whenever b/n
    collide (e.g. halving b doubles the colliding n).
    """
    if not q > 0.5:
        raise ValueError(f"q must exceed 1/2, got {q}")
    key = (float(q), float(epsilon))
    with _tn_lock:
        if key in _tn_cache:
            return _tn_cache[key]
    if q == 1.0:
        val = 1.0  # sin^2 + cos^2, exactly
    else:
        law = theta.ThetaLaw(epsilon)
        val = theta.expect_theta(
            law, lambda t: (math.sin(t) ** 2) ** q + (math.cos(t) ** 2) ** q
        )
    with _tn_lock:
        _tn_cache[key] = val
    return val


def init_pool(params: LmeParams) -> SamplePool:
    """Deterministic unit pool at scale 1 (the raw quantity starts at 1)."""
    return SamplePool(
        n=1,
        values=np.ones(params.pool_size),
        logZ=0.0,
        blocks=params.blocks,
    )


def _step_block(block: np.ndarray, q: float, t_n: float, s: float, rng) -> np.ndarray:
    p = block.size
    i = rng.integers(0, p, size=p)
    j = rng.integers(0, p, size=p)
    u = s * rng.standard_cauchy(p)
    inv = 1.0 / np.sqrt(1.0 + u * u)
    sin2q = (0.5 * (1.0 - inv)) ** q
    cos2q = (0.5 * (1.0 + inv)) ** q
    return (sin2q * block[i] + cos2q * block[j]) / t_n


def step(pool: SamplePool, params: LmeParams, rngs=None) -> SamplePool:
    """One scale step: resample parent pairs within each block, mix with a
    fresh angle at eps = b/n, divide by the exact T_n.

    ``rngs`` may be a list of per-block generators, a single generator
    (blocks drawn sequentially from it), or None to derive the canonical
    (seed, step, block) streams.
    """
    q, b = params.q, params.b
    eps = b / pool.n
    t_n = exact_Tn(q, eps)
    s = 0.5 * math.pi * eps
    blocks = pool.block_views()
    if rngs is None:
        rngs = [
            derive_stream(params.seed, (DOMAIN_LME, pool.n, k))
            for k in range(pool.blocks)
        ]
    elif isinstance(rngs, np.random.Generator):
        rngs = [rngs] * pool.blocks
    if params.threads > 1:
        with ThreadPoolExecutor(max_workers=params.threads) as ex:
            new_blocks = list(
                ex.map(lambda kb: _step_block(blocks[kb], q, t_n, s, rngs[kb]),
                       range(pool.blocks))
            )
    else:
        new_blocks = [
            _step_block(blocks[k], q, t_n, s, rngs[k]) for k in range(pool.blocks)
        ]
    return SamplePool(
        n=pool.n + 1,
        values=np.concatenate(new_blocks),
        logZ=pool.logZ + math.log(t_n),
        blocks=pool.blocks,
    )


def _loo_ratio(mp: np.ndarray, m1: np.ndarray, p: float) -> tuple[float, float]:
    """Union ratio m_p / m_1^p with a delete-one-block jackknife SE.

    Diagnostic only: the ratio form cancels the pool's multiplicative mean
    wander but acquires a finite-pool coupling bias of order one standard
    error (mean drift and shape drift are correlated); the raw moments are
    the unbiased estimates.
    """
    bcount = mp.size
    full = mp.mean() / m1.mean() ** p
    loo_p = (mp.sum() - mp) / (bcount - 1)
    loo_1 = (m1.sum() - m1) / (bcount - 1)
    loo = loo_p / loo_1**p
    se = math.sqrt((bcount - 1) / bcount * np.sum((loo - loo.mean()) ** 2))
    return float(full), float(se)


def _block_stats(pool: SamplePool, powers) -> dict:
    """Per-checkpoint statistics.

    The pool is normalized by the deterministic T_n, so raw block moments
    are exactly unbiased for the moments of the normalized ratio; block
    independence makes their spread an honest standard error.
    """
    vals = pool.block_views()
    out = {
        "mean": None,
        "mean_se": None,
        "raw": {},
        "raw_se": {},
        "ratio": {},
        "ratio_se": {},
    }
    m1 = np.array([v.mean() for v in vals])
    bcount = len(vals)
    out["mean"] = float(m1.mean())
    out["mean_se"] = float(m1.std(ddof=1) / math.sqrt(bcount))
    for p in powers:
        mp = np.array([np.mean(v**p) for v in vals])
        out["raw"][p] = float(mp.mean())
        out["raw_se"][p] = float(mp.std(ddof=1) / math.sqrt(bcount))
        est, se = _loo_ratio(mp, m1, p)
        out["ratio"][p] = est
        out["ratio_se"][p] = se
    return out


def _checkpoints(n_max: int) -> list[int]:
    pts = []
    n = 1
    while n < n_max:
        pts.append(n)
        n *= 2
    pts.append(n_max)
    return pts


def run(params: LmeParams) -> RunRecord:
    """Evolve the pool from the unit state at n = 1 up to n_max, recording
    moments with jackknife errors at geometrically spaced checkpoints."""
    rec = RunRecord(params=params)
    for p in params.track_powers:
        rec.moments[p] = []
        rec.ses[p] = []
        rec.moments_ratio[p] = []
        rec.ses_ratio[p] = []
    marks = set(_checkpoints(params.n_max))
    pool = init_pool(params)

    def record(pool):
        st = _block_stats(pool, params.track_powers)
        rec.ns.append(pool.n)
        rec.logZ.append(pool.logZ)
        rec.means.append(st["mean"])
        rec.mean_ses.append(st["mean_se"])
        for p in params.track_powers:
            rec.moments[p].append(st["raw"][p])
            rec.ses[p].append(st["raw_se"][p])
            rec.moments_ratio[p].append(st["ratio"][p])
            rec.ses_ratio[p].append(st["ratio_se"][p])

    if 1 in marks:
        record(pool)
    while pool.n < params.n_max:
        pool = step(pool, params)
        if pool.n in marks:
            record(pool)
    rec.final_pool = pool
    return rec


def fit_log_slope(
    ns, ys, *, n_min: int = 64, sqrt_correction: bool = False
) -> tuple[float, float]:
    """Least-squares slope of y against ln n over checkpoints n >= n_min.

    With ``sqrt_correction`` the model is a + s ln n + c / sqrt(n), which
    absorbs the leading finite-scale transient of log-mean trajectories
    (the per-step angle moments carry fractional-power corrections) and
    leaves s an estimate of the asymptotic slope.  Returns (slope, stderr).
    """
    sel = [(n, v) for n, v in zip(ns, ys) if n >= n_min]
    if len(sel) < (4 if sqrt_correction else 3):
        raise ValueError("not enough checkpoints beyond n_min for the fit")
    n_arr = np.array([s[0] for s in sel], dtype=float)
    y = np.array([s[1] for s in sel])
    cols = [np.ones_like(n_arr), np.log(n_arr)]
    if sqrt_correction:
        cols.append(1.0 / np.sqrt(n_arr))
    a = np.vstack(cols).T
    coef, res, *_ = np.linalg.lstsq(a, y, rcond=None)
    dof = max(len(sel) - a.shape[1], 1)
    resid = y - a @ coef
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(a.T @ a)
    return float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))


def h_exponent(q: float, *, tol: float = 1e-10) -> float:
    """The order h in (0,1) maximizing T(qh) - h T(q), golden-section search.

    Only meaningful past the critical index, where the maximum is positive
    and drives the decay of the h-th moment of the normalized ratio.
    """
    qc = analytics.find_qc()
    if not q > qc:
        raise ValueError(f"h_exponent requires q > q_c = {qc:.6f}, got {q}")
    tq = analytics.T_of_q(q)

    def g(h: float) -> float:
        return analytics.T_of_q(q * h) - h * tq

    # golden-section on (lo, hi); g is strictly concave in h
    lo, hi = 0.5 / q + 1e-9, 1.0 - 1e-12
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = g(x1), g(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = g(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = g(x1)
    h = 0.5 * (lo + hi)
    if g(h) <= 0.0:
        raise ValueError(f"maximum of T(qh) - hT(q) not positive at q={q}")
    return h


def paley_zygmund_bounds(pool: SamplePool, p: float) -> PaleyZygmund:
    """Markov/Paley-Zygmund sandwich for the normalized ratio against the
    pool's empirical frequencies."""
    if not p > 1.0:
        raise ValueError(f"p must exceed 1, got {p}")
    v = pool.values
    m_p = float(np.mean(v**p))
    lower = (0.5 / m_p ** (1.0 / p)) ** (p / (p - 1.0))
    return PaleyZygmund(
        upper_p_gt_2=0.5,
        lower_p_ge_half=lower,
        empirical_p_gt_2=float(np.mean(v > 2.0)),
        empirical_p_ge_half=float(np.mean(v >= 0.5)),
    )
