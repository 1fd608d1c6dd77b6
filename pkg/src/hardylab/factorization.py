"""Inner-outer machinery: outer functions from a boundary modulus, Blaschke
products, finite atomic singular factors, and Schur-class utilities.

The outer function with boundary modulus w is realized node-wise as
exp(log w + i * conjugate(log w)), so its modulus matches the (clipped) w
exactly at the nodes; all discretization error lands in the phase.  Only
finite atomic singular measures are supported: a boundary grid cannot
represent a non-atomic singular factor faithfully.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .circle import (
    DEFAULT_ANALYTIC_TOL,
    AnalyticBoundaryFunction,
    BoundaryFunction,
    analytic_completion,
    analyticity_defect,
    as_analytic,
    circle_nodes,
    mean_value,
)

ZERO_MARGIN = 1e-6  # Blaschke zeros and interior evaluation stay this far from T
DEFAULT_LOG_FLOOR = 1e-12
DEFAULT_SINGULAR_GAP = 1e-4


@dataclass(frozen=True)
class BlaschkeSpec:
    """Finite Blaschke product given by its zero set."""

    zeros: tuple

    def __post_init__(self):
        zs = tuple(complex(z) for z in self.zeros)
        for z in zs:
            if abs(z) > 1.0 - ZERO_MARGIN:
                raise ValueError(f"zero {z} violates the boundary margin {ZERO_MARGIN}")
        object.__setattr__(self, "zeros", zs)


@dataclass(frozen=True)
class SingularAtomSpec:
    """Finite atomic singular measure sum c_j * delta_{t_j} on the circle."""

    atoms: tuple  # of (t_j, c_j)

    def __post_init__(self):
        cleaned = []
        for t, c in self.atoms:
            t, c = complex(t), float(c)
            if abs(abs(t) - 1.0) > 1e-12:
                raise ValueError(f"atom location {t} is not unimodular")
            if c <= 0:
                raise ValueError(f"atom mass must be positive, got {c}")
            cleaned.append((t, c))
        object.__setattr__(self, "atoms", tuple(cleaned))

    @property
    def total_mass(self) -> float:
        return sum(c for _, c in self.atoms)


@dataclass(frozen=True)
class FactoredFunction:
    """Blaschke part + atomic singular part + log-modulus of the outer part."""

    blaschke: BlaschkeSpec
    singular: SingularAtomSpec
    log_modulus: BoundaryFunction
    phase: float = 0.0

    def __post_init__(self):
        if not self.log_modulus.is_real():
            raise ValueError("log_modulus must be real-valued")


def blaschke_eval(spec: BlaschkeSpec, points) -> np.ndarray:
    """Product of normalized factors (conj(a)/|a|) (a - z)/(1 - z conj(a)).

    A zero at the origin contributes the factor z (the usual convention:
    the limit of the normalized factor does not exist there).  Unimodular
    on T, strictly contractive inside.
    """
    z = np.atleast_1d(np.asarray(points, dtype=np.complex128))
    if np.any(np.abs(z) > 1.0 + 1e-12):
        raise ValueError("Blaschke evaluation requires points in the closed disk")
    out = np.ones_like(z)
    for a in spec.zeros:
        if a == 0:
            out = out * z
        else:
            out = out * (np.conj(a) / abs(a)) * (a - z) / (1.0 - z * np.conj(a))
    if np.isscalar(points) or np.asarray(points).ndim == 0:
        return complex(out[0])
    return out


def singular_eval(spec: SingularAtomSpec, points, margin: float = ZERO_MARGIN):
    """exp( sum_j c_j (z + t_j)/(z - t_j) ), strictly inside the disk.

    Node evaluation on T near an atom is numerically meaningless, so points
    within ``margin`` of the boundary are refused.
    """
    z = np.atleast_1d(np.asarray(points, dtype=np.complex128))
    if np.any(np.abs(z) > 1.0 - margin):
        raise ValueError(f"singular factor evaluation requires |z| <= 1 - {margin}")
    expo = np.zeros_like(z)
    for t, c in spec.atoms:
        expo = expo + c * (z + t) / (z - t)
    out = np.exp(expo)
    if np.isscalar(points) or np.asarray(points).ndim == 0:
        return complex(out[0])
    return out


def outer_from_modulus(
    w: BoundaryFunction,
    floor: float = DEFAULT_LOG_FLOOR,
    analytic_tol: float | None = None,
) -> AnalyticBoundaryFunction:
    """Outer function exp(log w + i H log w) from a nonnegative boundary modulus.

    Nodes below ``floor`` are clipped to it before the logarithm.  The
    boundary modulus of the output equals the clipped w exactly at the
    nodes; the mean value is exp of the grid average of log w up to
    aliasing of the sampled exponential.  With ``analytic_tol=None`` the
    result certifies its own measured negative-mode leakage (essentially
    zero for smooth log w, O(1/N) for kinked or log-singular moduli).
    """
    if not w.is_real():
        raise ValueError("modulus must be real-valued")
    vals = w.samples.real
    if np.any(vals < 0):
        raise ValueError("modulus must be nonnegative")
    u = BoundaryFunction(np.log(np.maximum(vals, floor)))
    g = analytic_completion(u)
    return as_analytic(BoundaryFunction(np.exp(g.samples)), tol=analytic_tol)


def synthesize(
    f: FactoredFunction,
    singular_gap: float = DEFAULT_SINGULAR_GAP,
    analytic_tol: float | None = None,
) -> AnalyticBoundaryFunction:
    """Boundary samples of blaschke * singular * outer * exp(i*phase).

    The singular factor has boundary modulus 1 a.e. but not at its atoms;
    it enters through evaluation at radius 1 - ``singular_gap``, which is
    the committed (and configurable) approximation.
    """
    nodes = circle_nodes(f.log_modulus.n)
    modulus = BoundaryFunction(np.exp(f.log_modulus.samples.real))
    outer = outer_from_modulus(modulus, analytic_tol=None)
    vals = outer.samples * cmath.exp(1j * f.phase)
    if f.blaschke.zeros:
        vals = vals * blaschke_eval(f.blaschke, nodes)
    if f.singular.atoms:
        vals = vals * singular_eval(f.singular, (1.0 - singular_gap) * nodes)
    return as_analytic(BoundaryFunction(vals), tol=analytic_tol)


class InnerOuterError(ValueError):
    """Raised when the inner factor fails its unimodularity tolerance."""


def inner_outer_split(
    f: AnalyticBoundaryFunction,
    floor: float = DEFAULT_LOG_FLOOR,
    unimodular_tol: float = 1e-4,
) -> tuple[AnalyticBoundaryFunction, AnalyticBoundaryFunction]:
    """Split f = inner * outer via outer_from_modulus(|f|).

    The product reconstructs f exactly node-wise.  |inner| deviates from 1
    only at nodes where |f| fell below the clipping floor; a deviation
    beyond ``unimodular_tol`` (a function vanishing on the grid) raises
    :class:`InnerOuterError` rather than passing silently.
    """
    outer = outer_from_modulus(BoundaryFunction(f.abs()), floor=floor)
    inner_vals = f.samples / outer.samples
    defect = float(np.max(np.abs(np.abs(inner_vals) - 1.0)))
    if defect > unimodular_tol:
        raise InnerOuterError(
            f"inner factor modulus deviates by {defect:.3e} (> {unimodular_tol:.1e}); "
            "f is too close to zero on the grid"
        )
    return as_analytic(BoundaryFunction(inner_vals)), outer


class SchurCheck(NamedTuple):
    passed: bool
    max_modulus: float
    analyticity: float
    margin: float


def schur_check(s: BoundaryFunction, modulus_tol: float = 1e-9) -> SchurCheck:
    """Membership test for the Schur class (unit ball of H^infty).

    Passes iff the negative-mode mass is within the analytic tolerance and
    max node |s| <= 1 + ``modulus_tol``.
    """
    defect = analyticity_defect(s)
    tol = getattr(s, "analytic_tol", DEFAULT_ANALYTIC_TOL)
    top = float(np.max(np.abs(s.samples)))
    ok = defect <= tol and top <= 1.0 + modulus_tol
    return SchurCheck(ok, top, defect, 1.0 - top)


def make_schur_positive(s: AnalyticBoundaryFunction) -> AnalyticBoundaryFunction:
    """Rotate s by exp(-i arg s(0)) so the mean value is real positive."""
    s0 = mean_value(s)
    if s0 == 0:
        raise ValueError("mean value is zero; no rotation makes it positive")
    return as_analytic(BoundaryFunction(s.samples * (abs(s0) / s0)), tol=None)


# --- serialization ---------------------------------------------------------


def factored_to_json(f: FactoredFunction) -> str:
    return json.dumps(
        {
            "zeros": [[z.real, z.imag] for z in f.blaschke.zeros],
            "atoms": [[t.real, t.imag, c] for t, c in f.singular.atoms],
            "log_modulus": {
                "n": f.log_modulus.n,
                "re": f.log_modulus.samples.real.tolist(),
                "im": f.log_modulus.samples.imag.tolist(),
            },
            "phase": f.phase,
        }
    )


def factored_from_json(text: str) -> FactoredFunction:
    obj = json.loads(text)
    zeros = tuple(complex(re, im) for re, im in obj["zeros"])
    atoms = tuple((complex(re, im), c) for re, im, c in obj["atoms"])
    lm = obj["log_modulus"]
    log_modulus = BoundaryFunction(
        np.asarray(lm["re"], float) + 1j * np.asarray(lm["im"], float)
    )
    return FactoredFunction(
        BlaschkeSpec(zeros), SingularAtomSpec(atoms), log_modulus, obj["phase"]
    )
