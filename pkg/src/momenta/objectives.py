"""Test objective functions with known analytic structure.

Each built-in is normalized so its global minimum value is exactly 0, carries
an honest Lipschitz constant for its gradient, and, where applicable, a
gradient-domination constant certified on a stated box.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from ._rng import STREAM_PROBE, Substreams

Vector = np.ndarray

# Gradient-domination constant for the 1-d nonconvex objective
# J(x) = x^2 + 3 sin^2 x, certified by dense-grid minimization of
# |J'(x)|^2 / J(x) over [-10, 10] \ {0} (4e6 points plus local refinement;
# the grid minimum is 0.35106 at x = -2.2017).
PL_1D_BOX = (-10.0, 10.0)
PL_1D_CERTIFIED_K = 0.35


@dataclass(frozen=True)
class Objective:
    """A differentiable test function bundle.

    ``value`` and ``gradient`` are pure callables on R^d.  ``lipschitz_l``
    bounds the gradient's Lipschitz constant; ``pl_constant`` (when set)
    satisfies |grad J|^2 >= K * (J - j_star) on the documented domain;
    ``distance_to_optima`` maps a point to its distance from the set of
    global minimizers; ``nsc_envelope`` bounds that distance by a function
    of the objective value near the optimum.
    """

    name: str
    dimension: int
    value: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    lipschitz_l: float
    j_star: float = 0.0
    pl_constant: Optional[float] = None
    distance_to_optima: Optional[Callable[[Vector], float]] = None
    nsc_envelope: Optional[Callable[[float], float]] = None


def make_quadratic(diag) -> Objective:
    """J(x) = 0.5 * sum_i d_i x_i^2 with all d_i > 0.

    L = max(diag); the gradient-domination constant is 2*min(diag) because
    |grad J|^2 = x' D^2 x >= 2 min(diag) * J; minimum 0 at the origin.
    """
    d = np.asarray(diag, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("diag must be a non-empty 1-d sequence")
    if np.any(d <= 0):
        raise ValueError(f"diagonal entries must be positive, got {d.tolist()}")
    dmin = float(d.min())

    def value(x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * np.dot(d * x, x))

    def gradient(x):
        return d * np.asarray(x, dtype=float)

    return Objective(
        name="quadratic",
        dimension=d.size,
        value=value,
        gradient=gradient,
        lipschitz_l=float(d.max()),
        j_star=0.0,
        pl_constant=2.0 * dmin,
        distance_to_optima=lambda x: float(np.linalg.norm(x)),
        nsc_envelope=lambda r: float(np.sqrt(2.0 * max(r, 0.0) / dmin)),
    )


def make_pl_nonconvex_1d() -> Objective:
    """J(x) = x^2 + 3 sin^2 x: nonconvex, sole minimizer 0, J* = 0.

    J'' = 2 + 6 cos 2x, so L = 8.  Gradient domination holds on
    [-10, 10] with the certified constant PL_1D_CERTIFIED_K.
    """

    def value(x):
        x0 = float(np.asarray(x).reshape(()))
        return x0 * x0 + 3.0 * np.sin(x0) ** 2

    def gradient(x):
        x0 = float(np.asarray(x).reshape(()))
        return np.array([2.0 * x0 + 3.0 * np.sin(2.0 * x0)])

    return Objective(
        name="pl_nonconvex_1d",
        dimension=1,
        value=value,
        gradient=gradient,
        lipschitz_l=8.0,
        j_star=0.0,
        pl_constant=PL_1D_CERTIFIED_K,
        distance_to_optima=lambda x: abs(float(np.asarray(x).reshape(()))),
        nsc_envelope=lambda r: float(np.sqrt(max(r, 0.0))),
    )


def make_double_well(tilt: float = 0.25, clamp_radius: float = 2.0) -> Objective:
    """Asymmetric 1-d double well with linear tails; not gradient-dominated.

    Inside [-R, R] the function is g(x) = x^4/4 - x^2/2 + tilt*x (shifted so
    the global minimum is 0); outside it continues linearly with slope
    g'(+-R), keeping the gradient globally Lipschitz with L = 3R^2 - 1.
    The tilt separates the wells: the deeper well is the global minimum, the
    shallower one is a non-global local minimum where the gradient vanishes
    but J stays positive, so no gradient-domination constant exists.
    """
    s = float(tilt)
    r = float(clamp_radius)
    if not 0.0 < s < 2.0 / (3.0 * np.sqrt(3.0)):
        raise ValueError(f"tilt must lie in (0, 2/(3*sqrt(3))) for two wells, got {s}")
    if r < 1.5:
        raise ValueError(f"clamp_radius must be >= 1.5 to contain the wells, got {r}")

    # Critical points: roots of x^3 - x + s.
    roots = np.roots([1.0, 0.0, -1.0, s])
    crit = np.sort(roots[np.abs(roots.imag) < 1e-12].real)
    g = lambda x: x**4 / 4.0 - x**2 / 2.0 + s * x
    dg = lambda x: x**3 - x + s
    lo_min, hi_min = crit[0], crit[2]
    g_min = float(min(g(lo_min), g(hi_min)))
    global_min = float(lo_min if g(lo_min) <= g(hi_min) else hi_min)

    def value(x):
        x0 = float(np.asarray(x).reshape(()))
        xc = min(max(x0, -r), r)
        return float(g(xc) + dg(xc) * (x0 - xc) - g_min)

    def gradient(x):
        x0 = float(np.asarray(x).reshape(()))
        xc = min(max(x0, -r), r)
        return np.array([dg(xc)])

    return Objective(
        name="double_well",
        dimension=1,
        value=value,
        gradient=gradient,
        lipschitz_l=3.0 * r * r - 1.0,
        j_star=0.0,
        pl_constant=None,
        distance_to_optima=lambda x: abs(float(np.asarray(x).reshape(())) - global_min),
        nsc_envelope=None,
    )


OBJECTIVE_FACTORIES = {
    "quadratic": make_quadratic,
    "pl_nonconvex_1d": make_pl_nonconvex_1d,
    "double_well": make_double_well,
}


def objective_from_spec(spec: dict) -> Objective:
    if not isinstance(spec, dict) or "name" not in spec:
        raise ValueError("objective spec must be an object with a 'name' field")
    name = spec["name"]
    if name == "quadratic":
        if "diag" not in spec:
            raise ValueError("quadratic objective spec requires 'diag'")
        return make_quadratic(spec["diag"])
    if name == "pl_nonconvex_1d":
        return make_pl_nonconvex_1d()
    if name == "double_well":
        return make_double_well(spec.get("tilt", 0.25), spec.get("clamp_radius", 2.0))
    raise ValueError(f"unknown objective {name!r}; expected one of "
                     f"{sorted(OBJECTIVE_FACTORIES)}")


class CallCounter:
    """Mutable counters for value/gradient evaluations."""

    __slots__ = ("value_calls", "gradient_calls")

    def __init__(self):
        self.value_calls = 0
        self.gradient_calls = 0


def with_call_counter(obj: Objective):
    """Wrap an objective so every value/gradient call is counted.

    Returns (wrapped objective, CallCounter).  Used to verify per-call
    evaluation budgets of function-evaluation-only oracles.
    """
    counter = CallCounter()
    inner_value, inner_gradient = obj.value, obj.gradient

    def value(x):
        counter.value_calls += 1
        return inner_value(x)

    def gradient(x):
        counter.gradient_calls += 1
        return inner_gradient(x)

    return replace(obj, value=value, gradient=gradient), counter


def verify_descent_lemma(obj: Objective, samples: int, seed: int = 0,
                         radius: float = 3.0) -> bool:
    """Check the quadratic upper bound J(x+p) <= J(x) + <grad J(x), p> + L/2 |p|^2
    on random (x, p) pairs.

    Tolerance is 1e-10 * (1 + |J(x)|) per pair.  Raises AssertionError naming
    the first violating pair; returns True when all pass.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = Substreams(seed).at(STREAM_PROBE)
    d = obj.dimension
    pts = rng.uniform(-radius, radius, size=(samples, d))
    steps = rng.uniform(-radius, radius, size=(samples, d))
    for x, p in zip(pts, steps):
        jx = obj.value(x)
        lhs = obj.value(x + p)
        rhs = jx + float(np.dot(obj.gradient(x), p)) + 0.5 * obj.lipschitz_l * float(np.dot(p, p))
        if lhs > rhs + 1e-10 * (1.0 + abs(jx)):
            raise AssertionError(
                f"descent bound violated for {obj.name} at x={x.tolist()}, p={p.tolist()}: "
                f"J(x+p)={lhs!r} > bound={rhs!r}")
    return True
