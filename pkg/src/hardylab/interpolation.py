"""Strip interpolants over stopping/truncation data and the three line
estimates that certify the midpoint of the (H^1, H^infty) couple, plus the
abstract geometric-series iteration that upgrades a half-error one-step map
into an exact interpolant.

The interpolant over the closed strip 0 <= Re zeta <= 1 is

    G(., zeta) = EF + sum_i d_i w_i M^{(1 - 2 zeta)(1 + i)}

with the stopping differences d_i and the damping family w_i.  In bound
mode only |w_i| enters and every per-path quantity is an upper bound whose
line norms are t-independent (the unimodular factor M^{2it(1+i)} is
dropped); phase mode uses per-path complex w_i from nested regression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .wiener import StoppingDecomposition, TruncationFamily

DEFAULT_T_GRID = (0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0)


def interpolant_bound(
    dec: StoppingDecomposition, fam: TruncationFamily, re_zeta: float
) -> np.ndarray:
    """Per-path upper bound |EF| + sum_i 1_{E_i} |d_i| |w_i| M^{(1-2 Re zeta)(1+i)}."""
    m = dec.m_scale
    out = np.full(dec.d.shape[1], abs(dec.stopped[0, 0]))
    for i in range(dec.levels):
        w = fam.abs_w[i] if i < fam.levels else np.ones(dec.d.shape[1])
        out += dec.support[i] * np.abs(dec.d[i]) * w * m ** ((1.0 - 2.0 * re_zeta) * (1 + i))
    return out


def interpolant_values(
    dec: StoppingDecomposition, fam: TruncationFamily, zeta: complex
) -> np.ndarray:
    """Per-path complex G(., zeta); needs the family in phase mode unless
    every |w_i| is exactly 1 (then the phases are exactly 1 as well)."""
    if fam.phases is None and not np.all(fam.abs_w == 1.0):
        raise ValueError("complex interpolant needs phase-mode truncation family")
    m = dec.m_scale
    out = np.full(dec.d.shape[1], dec.stopped[0, 0], dtype=np.complex128)
    for i in range(dec.levels):
        w = fam.w_complex(i) if i < fam.levels else 1.0
        out += dec.d[i] * w * m ** ((1.0 - 2.0 * zeta) * (1 + i))
    return out


@dataclass(frozen=True)
class LineEstimate:
    line: str
    t: float
    lhs: float
    rhs: float
    stderr: float
    passed: bool


@dataclass(frozen=True)
class InterpolationCertificate:
    m_scale: float
    mode: str
    t_grid: tuple
    estimates: tuple
    seed: int
    constants: dict

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.estimates)


def strip_bounds_report(
    dec: StoppingDecomposition,
    fam: TruncationFamily,
    terminal: np.ndarray,
    seed: int,
    mode: str = "bound",
    t_grid=DEFAULT_T_GRID,
) -> InterpolationCertificate:
    """The three line estimates for a terminal variable F with ||F||_2 ~ 1.

    1. midline: ||G(., 1/2) - F||_2 <= 1/2 ||F||_2.  In bound mode this is
       certified through the damping-energy chain, whose end requires
       4 M^{2-offset} <= 1/4 (Doob); in phase mode it is estimated
       directly.
    2. ||G(., it)||_1 <= E|F| + 2 sum_j P(E_j) M^{2(j+1)} (finite, and the
       numerical constant C(M) is recorded rather than fixed a priori).
    3. max-path |G(., 1+it)| <= |EF| + 2 (1+eta) max_p #active levels,
       a sound per-path cap; the recorded constant is compared across
       seeds by the caller.
    """
    if mode not in ("bound", "phase"):
        raise ValueError("mode must be 'bound' or 'phase'")
    if mode == "phase" and fam.phases is None and not np.all(fam.abs_w == 1.0):
        raise ValueError("phase mode requested but the family has no phases")
    m = dec.m_scale
    off = fam.offset
    n = terminal.size
    fnorm2 = float(np.mean(np.abs(terminal) ** 2))
    mean_abs_f = float(np.mean(np.abs(terminal)))
    ef = abs(dec.stopped[0, 0])
    slack = 1.0 + dec.eta_jump
    estimates = []

    # (1) midline
    doob_chain = m ** (2.0 - off) * float(np.mean(dec.maximal**2))
    if mode == "bound":
        estimates.append(
            LineEstimate(
                line="midline",
                t=0.0,
                lhs=math.sqrt(doob_chain),
                rhs=0.5 * math.sqrt(fnorm2),
                stderr=0.0,
                passed=math.sqrt(doob_chain) <= 0.5 * math.sqrt(fnorm2),
            )
        )
    else:
        g_half = interpolant_values(dec, fam, 0.5)
        sq = np.abs(g_half - terminal) ** 2
        lhs2 = float(sq.mean())
        se2 = float(sq.std() / math.sqrt(n))
        rhs2 = 0.25 * fnorm2
        estimates.append(
            LineEstimate(
                line="midline",
                t=0.0,
                lhs=math.sqrt(lhs2),
                rhs=0.5 * math.sqrt(fnorm2),
                stderr=se2,
                passed=lhs2 <= rhs2 + 3.0 * se2,
            )
        )

    # per-path pieces shared by the two boundary lines
    levels = dec.levels
    active = np.zeros(n)
    rhs_l1_samples = np.abs(terminal).astype(float).copy()
    for j in range(levels):
        active += dec.support[j]
        rhs_l1_samples += dec.support[j] * 2.0 * slack * m ** (2 * (j + 1))

    if mode == "bound":
        l1_vals = {t: interpolant_bound(dec, fam, 0.0) for t in t_grid}
        linf_vals = {t: interpolant_bound(dec, fam, 1.0) for t in t_grid}
    else:
        l1_vals = {t: np.abs(interpolant_values(dec, fam, 1j * t)) for t in t_grid}
        linf_vals = {t: np.abs(interpolant_values(dec, fam, 1.0 + 1j * t)) for t in t_grid}

    # (2) H^1 line
    for t in t_grid:
        lhs_samples = l1_vals[t]
        gap = rhs_l1_samples - lhs_samples
        se = float(gap.std() / math.sqrt(n))
        lhs = float(lhs_samples.mean())
        rhs = float(rhs_l1_samples.mean())
        estimates.append(
            LineEstimate("imag_axis", t, lhs, rhs, se, lhs <= rhs + 3.0 * se)
        )

    # (3) H^infty line
    rhs_sup = ef + 2.0 * slack * float(active.max(initial=0.0))
    for t in t_grid:
        lhs = float(linf_vals[t].max(initial=0.0))
        estimates.append(LineEstimate("one_plus_imag_axis", t, lhs, rhs_sup, 0.0, lhs <= rhs_sup))

    constants = {
        "c_midline": estimates[0].lhs,
        "c_l1": max(e.lhs for e in estimates if e.line == "imag_axis"),
        "c_linf": max(e.lhs for e in estimates if e.line == "one_plus_imag_axis"),
        "doob_requirement": 4.0 * m ** (2.0 - off),
        "eta_jump": dec.eta_jump,
        "fnorm2": fnorm2,
        "mean_abs_f": mean_abs_f,
    }
    return InterpolationCertificate(
        m_scale=m,
        mode=mode,
        t_grid=tuple(t_grid),
        estimates=tuple(estimates),
        seed=seed,
        constants=constants,
    )


# --- the geometric-series iteration -------------------------------------------


class OneStepResult(NamedTuple):
    theta_value: np.ndarray
    strip_norm: float


@dataclass(frozen=True)
class JonesIteration:
    errors: tuple           # residual norms, errors[0] = ||f||
    strip_norms: tuple
    slope: float            # mean per-step log decay of the residual
    contract_violation: int | None
    converged_at: int | None
    approximant: np.ndarray

    @property
    def passed(self) -> bool:
        return self.contract_violation is None and (
            self.converged_at is not None or self.slope <= -0.8 * math.log(2.0)
        )


def jones_iterate(
    one_step: Callable[[np.ndarray], OneStepResult],
    f: np.ndarray,
    steps: int,
    norm: Callable[[np.ndarray], float],
    contract_slack: float = 1e-9,
) -> JonesIteration:
    """Iterate a one-step interpolation map with the half-error contract.

    Each call must return a strip element whose value at theta is within
    half the norm of its input; the residuals then decay geometrically and
    the accumulated approximant converges with strip norm <= 2C||f||.  A
    contract violation is reported with the offending step, and iteration
    stops rather than claiming convergence.
    """
    f = np.asarray(f)
    r = f.copy()
    errors = [norm(f)]
    strip_norms = []
    approx = np.zeros_like(f)
    violation = None
    converged = None
    for step_index in range(steps):
        result = one_step(r)
        strip_norms.append(result.strip_norm)
        new_r = r - np.asarray(result.theta_value)
        e = norm(new_r)
        approx = approx + np.asarray(result.theta_value)
        if e > 0.5 * errors[-1] * (1.0 + contract_slack) + 1e-300:
            violation = step_index
            errors.append(e)
            break
        errors.append(e)
        r = new_r
        if e <= 1e-14 * max(errors[0], 1e-300):
            converged = step_index + 1
            break
    slope = _decay_slope(errors)
    return JonesIteration(
        errors=tuple(errors),
        strip_norms=tuple(strip_norms),
        slope=slope,
        contract_violation=violation,
        converged_at=converged,
        approximant=approx,
    )


def _decay_slope(errors) -> float:
    es = [e for e in errors if e > 0]
    if len(es) < 2:
        return -math.inf
    if len(es) < len(errors):  # hit exact zero: decay is complete
        return -math.inf
    logs = np.log(es)
    return float(np.mean(np.diff(logs)))
