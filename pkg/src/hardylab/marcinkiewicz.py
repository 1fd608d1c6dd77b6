"""Truncation decomposition of analytic boundary functions at a level
lambda, the Schur-defect inequality with its explicit constants, and
K-functional / real-interpolation-norm estimators.

The decomposition stays inside the analytic class: f1 keeps the inner part
of f and truncates the outer modulus at lambda, which is realized as the
node-wise product f1 = f * s with the Schur ratio
s = outer_from_modulus(min(1, lambda/|f|)).  This makes f0 + f1 = f and
|f1| = min(|f|, lambda) exact at the nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circle import (
    AnalyticBoundaryFunction,
    BoundaryFunction,
    as_analytic,
    mean_value,
    norm_p,
    rearrangement,
)
from .factorization import outer_from_modulus, schur_check

DEFAULT_LAMBDA_GRID = 2.0 ** np.arange(-20, 21)


def default_time_grid(points_per_octave: int = 4) -> np.ndarray:
    return np.geomspace(2.0**-20, 2.0**20, 40 * points_per_octave + 1)


def level_set(f: BoundaryFunction, lam: float) -> np.ndarray:
    """Node indicator of {|f| >= lam}."""
    if lam <= 0:
        raise ValueError("level must be positive")
    return np.abs(f.samples) >= lam


@dataclass(frozen=True)
class DecompositionResult:
    f: AnalyticBoundaryFunction
    f1: AnalyticBoundaryFunction
    f0: AnalyticBoundaryFunction
    s: AnalyticBoundaryFunction
    lam: float
    s0: float
    s0_imag: float
    norms: dict


def decompose(
    f: AnalyticBoundaryFunction,
    lam: float,
    p: float = 2.0,
    normalize: bool = False,
    floor: float = 1e-12,
) -> DecompositionResult:
    """Split f = f0 + f1 with |f1| = min(|f|, lam) node-wise.

    The Schur ratio s = f1/f is an outer function with modulus
    min(1, lam/|f|); its mean value is recorded (real up to aliasing of
    the sampled exponential).
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if normalize:
        scale = norm_p(f, p)
        f = as_analytic(BoundaryFunction(f.samples / scale), tol=None)
    absf = f.abs()
    if np.all(absf < floor):
        raise ValueError("|f| is below the clipping floor everywhere")
    with np.errstate(divide="ignore"):
        smod = np.minimum(1.0, np.where(absf > 0, lam / absf, np.inf))
    s = outer_from_modulus(BoundaryFunction(smod), floor=floor)
    f1 = as_analytic(BoundaryFunction(f.samples * s.samples), tol=None)
    f0 = as_analytic(BoundaryFunction(f.samples - f1.samples), tol=None)
    s0 = mean_value(s)
    return DecompositionResult(
        f=f,
        f1=f1,
        f0=f0,
        s=s,
        lam=lam,
        s0=float(s0.real),
        s0_imag=float(s0.imag),
        norms={
            "f0_l1": norm_p(f0, 1),
            "f1_inf": norm_p(f1, math.inf),
            "f_p": norm_p(f, p),
        },
    )


def s_zero_two_ways(result: DecompositionResult) -> tuple[float, float, float]:
    """Mean of the Schur ratio, directly and through the level-set formula.

    Returns (s0_direct, s0_formula, |difference|) where the formula value
    is exp(-integral over {|f| >= lam} of ln(|f|/lam)), computed with the
    grid quadrature.
    """
    absf = result.f.abs()
    on = level_set(result.f, result.lam)
    integrand = np.where(on, np.log(np.maximum(absf, 1e-300) / result.lam), 0.0)
    s0_formula = float(np.exp(-np.mean(integrand)))
    s0_direct = result.s0
    return s0_direct, s0_formula, abs(s0_direct - s0_formula)


# --- Schur-defect inequality -------------------------------------------------


def schur_defect_constant(q: float) -> float:
    """C_q with int |1-s|^q <= C_q (1 - s(0)) over the Schur class.

    For 1 < q <= 2 the sharp-angle argument gives 2 / sin(pi (q-1)/2); for
    q > 2 the trivial chain |1-s| <= 2 and int |1-s|^2 <= 2 (1-s(0)) gives
    2^{q-1}.
    """
    if q <= 1:
        raise ValueError("the defect inequality requires q > 1")
    if q <= 2:
        return 2.0 / math.sin(math.pi * (q - 1) / 2.0)
    return 2.0 ** (q - 1)


@dataclass(frozen=True)
class SchurDefectReport:
    q: float
    lhs: float
    rhs: float
    ratio: float
    s0: float


def schur_defect_report(s: AnalyticBoundaryFunction, q: float) -> SchurDefectReport:
    """lhs = int |1-s|^q dm versus rhs = C_q (1 - s(0)).

    Requires a Schur-class s with real nonnegative mean (rotate with
    make_schur_positive first).  s(0) = 0 is allowed: the right side then
    degenerates to C_q.
    """
    check = schur_check(s)
    if not check.passed:
        raise ValueError(
            f"not a Schur function: max|s|={check.max_modulus:.6f}, "
            f"analyticity defect {check.analyticity:.2e}"
        )
    s0c = mean_value(s)
    if abs(s0c.imag) > 1e-8 or s0c.real < -1e-12:
        raise ValueError(f"mean value {s0c} must be real nonnegative")
    s0 = max(s0c.real, 0.0)
    lhs = float(np.mean(np.abs(1.0 - s.samples) ** q))
    rhs = schur_defect_constant(q) * (1.0 - s0)
    if rhs == 0.0:
        ratio = 0.0 if lhs < 1e-30 else math.inf
    else:
        ratio = lhs / rhs
    return SchurDefectReport(q=q, lhs=lhs, rhs=rhs, ratio=ratio, s0=s0)


# --- L^1 tail bound with the explicit constant chain -------------------------


def tail_bound_constant(p: float) -> float:
    """C_p = (C_q / p)^{1/q} with q = p/(p-1).

    Forced by the Hoelder step int|f - f1| <= ||f||_p (int|1-s|^q)^{1/q},
    the defect inequality, 1 - e^{-u} <= u, and ln a <= a^p / p applied to
    a = |f|/lambda on the level set (with ||f||_p = 1).
    """
    if p <= 1:
        raise ValueError("tail bound requires p > 1")
    q = p / (p - 1.0)
    return (schur_defect_constant(q) / p) ** (1.0 / q)


@dataclass(frozen=True)
class TailBoundEntry:
    lam: float
    norm_f0: float
    bound: float
    ratio: float


@dataclass(frozen=True)
class TailBoundReport:
    p: float
    scale: float
    entries: tuple
    slope_tail: float
    slope_limit: float

    @property
    def max_ratio(self) -> float:
        return max((e.ratio for e in self.entries), default=0.0)


def tail_bound_report(
    f: AnalyticBoundaryFunction,
    p: float,
    lam_grid,
    slope_margin: float = 0.1,
) -> TailBoundReport:
    """||f0(lam)||_1 against C_p lam^{1-p} over a lambda grid.

    f is renormalized to unit p-norm internally; the scale factor is
    reported.  The empirical log-log slope is fitted on the decaying tail
    (the upper half, in log-lambda, of the grid points with nonzero
    ||f0||_1).
    """
    scale = norm_p(f, p)
    if scale == 0:
        raise ValueError("cannot normalize the zero function")
    g = as_analytic(BoundaryFunction(f.samples / scale), tol=None)
    cp = tail_bound_constant(p)
    entries = []
    for lam in np.sort(np.asarray(lam_grid, dtype=float)):
        res = decompose(g, float(lam), p=p)
        bound = cp * lam ** (1.0 - p)
        n0 = res.norms["f0_l1"]
        entries.append(
            TailBoundEntry(float(lam), n0, bound, n0 / bound if bound > 0 else math.inf)
        )
    slope = _tail_slope(entries)
    return TailBoundReport(
        p=p,
        scale=scale,
        entries=tuple(entries),
        slope_tail=slope,
        slope_limit=1.0 - p + slope_margin,
    )


def _tail_slope(entries) -> float:
    lams = np.array([e.lam for e in entries])
    norms = np.array([e.norm_f0 for e in entries])
    alive = norms > 0
    if alive.sum() < 2:
        return -math.inf
    lo, hi = lams[alive].min(), lams[alive].max()
    tail = alive & (lams >= math.sqrt(lo * hi))
    if tail.sum() < 2:
        tail = alive
    x, y = np.log(lams[tail]), np.log(norms[tail])
    return float(np.polyfit(x, y, 1)[0])


# --- K-functional and real-interpolation norms --------------------------------


def truncation_profile(f: AnalyticBoundaryFunction, lam_grid=None):
    """(||f0(lam)||_1, ||f1(lam)||_inf) for every lambda in the grid."""
    lams = DEFAULT_LAMBDA_GRID if lam_grid is None else np.asarray(lam_grid, float)
    n0 = np.empty(lams.size)
    n1 = np.empty(lams.size)
    for i, lam in enumerate(lams):
        res = decompose(f, float(lam))
        n0[i] = res.norms["f0_l1"]
        n1[i] = res.norms["f1_inf"]
    return lams, n0, n1


def k_upper(f: AnalyticBoundaryFunction, t: float, lam_grid=None, profile=None):
    """min over the lambda grid of ||f0||_1 + t ||f1||_inf.

    An upper bound for the K-functional of the (H^1, H^inf) couple.
    Returns (value, lambda_star) with the smallest minimizing lambda.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    lams, n0, n1 = profile if profile is not None else truncation_profile(f, lam_grid)
    if lams.size == 0:
        raise ValueError("empty lambda grid")
    vals = n0 + t * n1
    best = vals.min()
    lam_star = lams[np.nonzero(vals <= best * (1 + 1e-12))[0][0]]
    return float(best), float(lam_star)


def k_lower_l_couple(f: BoundaryFunction, t: float) -> float:
    """K(f, t; L^1, L^inf) = integral of the decreasing rearrangement to t."""
    if t <= 0:
        raise ValueError("t must be positive")
    star = rearrangement(f)
    n = star.size
    if t >= 1.0:
        return float(star.sum() / n)
    j = int(t * n)
    head = star[:j].sum() / n
    return float(head + (t - j / n) * star[j])


@dataclass(frozen=True)
class KReport:
    t_grid: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    lam_star: np.ndarray
    theta: float
    q: float
    interp_norm: float


def real_interp_norm(
    f: AnalyticBoundaryFunction,
    theta: float,
    q: float,
    t_grid=None,
    lam_grid=None,
    endpoint_tol: float = 1e-3,
) -> float:
    """( integral over t of [t^{-theta} K_upper(f, t)]^q dt/t )^{1/q}.

    Log-trapezoid quadrature over a geometric t window.  The decaying
    weight t^{-theta} makes the integral finite on the window for any grid
    function; a non-negligible endpoint contribution is flagged as a
    window problem rather than silently truncated.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    if q < 1 or np.isinf(q):
        raise ValueError("q must lie in [1, inf)")
    ts = default_time_grid() if t_grid is None else np.asarray(t_grid, float)
    profile = truncation_profile(f, lam_grid)
    ks = np.array([k_upper(f, t, profile=profile)[0] for t in ts])
    integrand = (ts**-theta * ks) ** q
    x = np.log(ts)
    total = float(np.trapezoid(integrand, x))
    edge = max(integrand[0], integrand[-1]) * (x[1] - x[0])
    if total > 0 and edge > endpoint_tol * total:
        raise RuntimeError(
            "interpolation-norm quadrature does not decay at the window edges; "
            "enlarge the t grid"
        )
    return total ** (1.0 / q)


def build_k_report(
    f: AnalyticBoundaryFunction,
    theta: float,
    q: float,
    t_grid=None,
    lam_grid=None,
) -> KReport:
    ts = default_time_grid() if t_grid is None else np.asarray(t_grid, float)
    profile = truncation_profile(f, lam_grid)
    uppers, stars = zip(*(k_upper(f, t, profile=profile) for t in ts))
    lowers = [k_lower_l_couple(f, t) for t in ts]
    norm = real_interp_norm(f, theta, q, t_grid=ts, lam_grid=lam_grid)
    return KReport(
        t_grid=ts,
        upper=np.asarray(uppers),
        lower=np.asarray(lowers),
        lam_star=np.asarray(stars),
        theta=theta,
        q=q,
        interp_norm=norm,
    )
