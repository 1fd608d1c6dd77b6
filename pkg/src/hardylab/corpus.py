"""Seeded test-function corpora.

Schur corpus: Blaschke products with interior zeros, smooth contractive
outer functions, and products of both.  Zero radii stay below 0.95 so the
grid resolves every factor with spectral accuracy.

H^p corpus: smooth outer-type functions together with pole-type functions
(1 - r t)^{-2/p} whose distribution tail scales like lambda^{-p}, which is
what makes the L^1 tail-decay slope check informative.
"""

from __future__ import annotations

import numpy as np

from .circle import (
    AnalyticBoundaryFunction,
    BoundaryFunction,
    as_analytic,
    circle_nodes,
    node_angles,
    norm_p,
)
from .factorization import BlaschkeSpec, blaschke_eval, make_schur_positive, outer_from_modulus

MAX_ZERO_RADIUS = 0.95


def random_blaschke(rng: np.random.Generator, n: int, max_zeros: int = 20) -> AnalyticBoundaryFunction:
    k = int(rng.integers(1, max_zeros + 1))
    radii = rng.uniform(0.0, MAX_ZERO_RADIUS, k)
    phases = np.exp(2j * np.pi * rng.uniform(size=k))
    vals = blaschke_eval(BlaschkeSpec(tuple(radii * phases)), circle_nodes(n))
    return as_analytic(BoundaryFunction(vals), tol=None)


def random_contractive_outer(rng: np.random.Generator, n: int, degree: int = 6) -> AnalyticBoundaryFunction:
    # w = exp(-q^2) <= 1 with a smooth random trigonometric polynomial q
    th = node_angles(n)
    q = np.zeros(n)
    for k in range(1, degree + 1):
        a, b = rng.normal(scale=1.0 / k, size=2)
        q += a * np.cos(k * th) + b * np.sin(k * th)
    w = np.exp(-(q**2))
    return outer_from_modulus(BoundaryFunction(w))


def schur_corpus(n: int, count: int, seed: int) -> list[AnalyticBoundaryFunction]:
    """Schur-class functions rotated to real nonnegative mean value."""
    rng = np.random.default_rng(seed)
    out = []
    builders = (
        lambda: random_blaschke(rng, n),
        lambda: random_contractive_outer(rng, n),
        lambda: as_analytic(
            BoundaryFunction(random_blaschke(rng, n).samples * random_contractive_outer(rng, n).samples),
            tol=None,
        ),
    )
    while len(out) < count:
        s = builders[len(out) % len(builders)]()
        from .circle import mean_value

        if abs(mean_value(s)) < 1e-10:
            continue
        out.append(make_schur_positive(s))
    return out


def pole_function(n: int, exponent: float, r: float) -> AnalyticBoundaryFunction:
    """(1 - r t)^{-exponent}; |f| ~ dist^{-exponent} near the peak.

    With exponent = 1/p the distribution satisfies m(|f| > lam) ~ lam^{-p},
    which is exactly the profile that makes the L^1 tail decay like
    lam^{1-p}.
    """
    nodes = circle_nodes(n)
    vals = np.exp(-exponent * np.log(1.0 - r * nodes))
    return as_analytic(BoundaryFunction(vals), tol=None)


def _unit(f, p: float) -> AnalyticBoundaryFunction:
    return as_analytic(BoundaryFunction(np.asarray(f.samples) / norm_p(f, p)), tol=None)


def hp_corpus(n: int, p: float, seed: int = 0) -> list[tuple[str, AnalyticBoundaryFunction]]:
    """Named, normalized H^p test functions.

    The ``pole`` members carry the genuine lambda^{-p} distribution tail on
    which the decay-slope check is informative; the smooth members decay
    faster than the envelope near their maximum.
    """
    rng = np.random.default_rng(seed)
    nodes = circle_nodes(n)
    named = [
        ("linear", BoundaryFunction(1.0 + nodes)),
        ("square", BoundaryFunction((1.0 + nodes) ** 2)),
        ("smooth", BoundaryFunction(np.exp(0.8 * np.cos(node_angles(n))) * (2.0 + nodes))),
        ("pole_sharp", pole_function(n, 1.0 / p, r=1.0 - 16.0 / n)),
        ("peak_mild", pole_function(n, 1.0 / p, r=0.9)),
    ]
    coeffs = rng.normal(size=6) + 1j * rng.normal(size=6)
    coeffs /= 2.0 ** np.arange(6)
    poly = np.zeros(n, dtype=np.complex128)
    for k, c in enumerate(coeffs):
        poly += c * nodes**k
    named.append(("poly", BoundaryFunction(poly + 3.0)))  # keep the mean away from zero
    return [(name, _unit(as_analytic(f, tol=None), p)) for name, f in named]


def embedded_corpus(n: int, seed: int = 0) -> list[AnalyticBoundaryFunction]:
    """Unit-H^2 functions with nonzero mean for Wiener-space experiments.

    Includes peaked pole-type members (exponents below 1/2 keep them inside
    H^2) whose Doob maximal functions climb a few stopping levels, so the
    decomposition machinery is exercised beyond the trivial
    single-difference case.
    """
    nodes = circle_nodes(n)
    raw = [
        BoundaryFunction((1.0 + nodes) ** 2),
        BoundaryFunction(1.0 + 0.7 * nodes + 0.4 * nodes**2 + 0.2 * nodes**3),
        pole_function(n, 0.45, r=0.97),
        pole_function(n, 0.49, r=0.99),
    ]
    return [_unit(as_analytic(f, tol=None), 2.0) for f in raw]


def harmonic_corpus(n: int) -> list[BoundaryFunction]:
    """Bounded real boundary functions for transform and exp-form checks."""
    th = node_angles(n)
    return [
        BoundaryFunction(np.cos(th)),
        BoundaryFunction(np.cos(th) + 0.5 * np.cos(2 * th) - 0.3 * np.sin(3 * th)),
        BoundaryFunction(0.8 * np.sin(th) + 0.2 * np.cos(4 * th)),
    ]
