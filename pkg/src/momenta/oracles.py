"""Stochastic gradient constructors and their bias/variance envelope audits.

Five oracle kinds are provided.  ``exact`` returns the true gradient;
``additive_noise`` perturbs it with zero-mean Gaussian noise whose second
moment exactly meets the declared envelope; ``biased_additive`` adds a
fixed-direction drift that exercises the bias envelope boundary; ``spsa``
and ``blum_fd`` estimate the gradient from function evaluations only (two
per call for spsa, d+1 for blum_fd).

Randomness is addressed by (seed, t, replication), so identical query
coordinates always reproduce identical draws regardless of call order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ._rng import STREAM_ORACLE, Substreams
from .objectives import Objective
from .schedules import Schedule, constant, eval_schedule, schedule_from_spec

KINDS = ("exact", "additive_noise", "biased_additive", "spsa", "blum_fd")


@dataclass(frozen=True)
class GradientOracle:
    kind: str
    objective: Objective
    noise_scale: Schedule = field(default_factory=lambda: constant(0.0))
    bias_scale: Schedule = field(default_factory=lambda: constant(0.0))
    increment: Schedule = field(default_factory=lambda: constant(0.1))
    measurement_noise: float = 0.0
    bias_ratio: float = 1.0
    bias_direction: Optional[tuple] = None
    seed: int = 0
    _streams: Substreams = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown oracle kind {self.kind!r}; expected one of {KINDS}")
        if self.measurement_noise < 0:
            raise ValueError("measurement_noise must be >= 0")
        if not 0.0 <= self.bias_ratio <= 1.0:
            raise ValueError("bias_ratio must lie in [0, 1]")
        object.__setattr__(self, "_streams", Substreams(self.seed))

    def sample(self, w, t: int, rep: int = 0, support=None) -> np.ndarray:
        return sample_gradient(self, w, t, rep=rep, support=support)


def exact_oracle(obj: Objective) -> GradientOracle:
    return GradientOracle("exact", obj)


def additive_noise_oracle(obj: Objective, noise_scale: Schedule, seed: int = 0) -> GradientOracle:
    return GradientOracle("additive_noise", obj, noise_scale=noise_scale, seed=seed)


def biased_oracle(obj: Objective, bias_scale: Schedule, noise_scale: Schedule = None,
                  seed: int = 0, bias_ratio: float = 1.0,
                  bias_direction=None) -> GradientOracle:
    direction = None if bias_direction is None else tuple(float(x) for x in bias_direction)
    return GradientOracle("biased_additive", obj, bias_scale=bias_scale,
                          noise_scale=noise_scale or constant(0.0), seed=seed,
                          bias_ratio=bias_ratio, bias_direction=direction)


def spsa_oracle(obj: Objective, increment: Schedule, measurement_noise: float = 0.0,
                seed: int = 0) -> GradientOracle:
    return GradientOracle("spsa", obj, increment=increment,
                          measurement_noise=measurement_noise, seed=seed)


def blum_oracle(obj: Objective, increment: Schedule, measurement_noise: float = 0.0,
                seed: int = 0) -> GradientOracle:
    return GradientOracle("blum_fd", obj, increment=increment,
                          measurement_noise=measurement_noise, seed=seed)


def with_seed(o: GradientOracle, seed: int) -> GradientOracle:
    return replace(o, seed=int(seed))


def oracle_from_spec(spec: dict, objective: Objective) -> GradientOracle:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("oracle spec must be an object with a 'kind' field")
    kind = spec["kind"]
    if kind not in KINDS:
        raise ValueError(f"unknown oracle kind {kind!r}; expected one of {KINDS}")

    def sched(key, default):
        return schedule_from_spec(spec[key]) if key in spec else default

    return GradientOracle(
        kind, objective,
        noise_scale=sched("noise_scale", constant(0.0)),
        bias_scale=sched("bias_scale", constant(0.0)),
        increment=sched("increment", constant(0.1)),
        measurement_noise=float(spec.get("measurement_noise", 0.0)),
        bias_ratio=float(spec.get("bias_ratio", 1.0)),
        bias_direction=tuple(spec["bias_direction"]) if spec.get("bias_direction") else None,
    )


def declared_envelope(o: GradientOracle, t: int) -> tuple:
    """(B_t, M_t) such that the bias norm is bounded by B_t*(1+|grad J(w)|)
    and the conditional second moment of the noise by M_t^2*(1+J(w)).

    For the function-evaluation oracles these are safe analytic bounds
    derived from the gradient's Lipschitz constant: the finite-difference
    remainder contributes O(c_t) bias, the measurement noise O(1/c_t^2)
    variance (the objective value is assumed nonnegative, as for all
    built-ins).
    """
    d = o.objective.dimension
    lip = o.objective.lipschitz_l
    if o.kind == "exact":
        return 0.0, 0.0
    if o.kind == "additive_noise":
        return 0.0, eval_schedule(o.noise_scale, t)
    if o.kind == "biased_additive":
        return eval_schedule(o.bias_scale, t), eval_schedule(o.noise_scale, t)
    c = eval_schedule(o.increment, t)
    if c <= 0:
        raise ValueError(f"increment must be positive, got c_t={c} at t={t}")
    sigma = o.measurement_noise
    if o.kind == "spsa":
        bias = 0.5 * lip * d ** 1.5 * c
        var = 6.0 * lip * max(d - 1, 0) + 0.75 * d**3 * lip**2 * c**2 \
            + 1.5 * d * sigma**2 / c**2
        return bias, math.sqrt(var)
    # blum_fd: per-component bias is at most L*c/2; the d components share
    # the base-point noise, giving 2*sigma^2/c^2 variance per component.
    return 0.5 * lip * math.sqrt(d) * c, math.sqrt(2.0 * d) * sigma / c


def _check_finite(val: float, point) -> float:
    if not math.isfinite(val):
        raise FloatingPointError(
            f"non-finite objective value {val!r} at query point {np.asarray(point).tolist()}")
    return val


def sample_gradient(o: GradientOracle, w, t: int, rep: int = 0, support=None) -> np.ndarray:
    """Draw the stochastic gradient at query point w for step t.

    ``support`` (boolean mask) restricts the function-evaluation oracles to a
    coordinate subset: spsa zeroes the perturbation outside it (still two
    evaluations), blum_fd probes only the supported coordinates.  Gradient
    kinds ignore it; masking is the block layer's job.
    """
    if t < 0:
        raise ValueError(f"step index must be >= 0, got {t}")
    w = np.asarray(w, dtype=float)
    # any nan/inf coordinate makes the sum non-finite
    if not math.isfinite(float(w.sum())):
        raise ValueError(f"query point must be finite, got {w.tolist()}")
    obj = o.objective
    d = obj.dimension

    if o.kind == "exact":
        return np.asarray(obj.gradient(w), dtype=float)

    if o.kind in ("additive_noise", "biased_additive"):
        g = np.asarray(obj.gradient(w), dtype=float)
        h = g.copy()
        if o.kind == "biased_additive":
            b = eval_schedule(o.bias_scale, t)
            direction = (np.ones(d) / math.sqrt(d) if o.bias_direction is None
                         else np.asarray(o.bias_direction, dtype=float))
            h += o.bias_ratio * b * (1.0 + float(np.linalg.norm(g))) * direction
        m = eval_schedule(o.noise_scale, t)
        if m > 0:
            z = o._streams.at(STREAM_ORACLE, t, rep).standard_normal(d)
            scale = m * math.sqrt(max(0.0, 1.0 + _check_finite(obj.value(w), w)) / d)
            h += scale * z
        return h

    c = eval_schedule(o.increment, t)
    if c <= 0:
        raise ValueError(f"increment must be positive, got c_t={c} at t={t}")
    sigma = o.measurement_noise
    rng = o._streams.at(STREAM_ORACLE, t, rep)
    mask = np.ones(d, dtype=bool) if support is None else np.asarray(support, dtype=bool)

    if o.kind == "spsa":
        delta = rng.integers(0, 2, d).astype(float) * 2.0 - 1.0
        delta[~mask] = 0.0
        y_plus = _check_finite(obj.value(w + c * delta), w + c * delta)
        y_minus = _check_finite(obj.value(w - c * delta), w - c * delta)
        if sigma > 0:
            xi_plus = sigma * rng.standard_normal(d)
            xi_minus = sigma * rng.standard_normal(d)
        else:
            xi_plus = xi_minus = np.zeros(d)
        h = np.zeros(d)
        idx = np.nonzero(mask)[0]
        h[idx] = ((y_plus + xi_plus[idx]) - (y_minus - xi_minus[idx])) / (2.0 * c * delta[idx])
        return h

    # blum_fd: forward differences from a shared base evaluation.
    xi = sigma * rng.standard_normal(d + 1) if sigma > 0 else np.zeros(d + 1)
    y0 = _check_finite(obj.value(w), w) + xi[0]
    h = np.zeros(d)
    for i in range(d):
        if not mask[i]:
            continue
        wi = w.copy()
        wi[i] += c
        h[i] = (_check_finite(obj.value(wi), wi) + xi[i + 1] - y0) / c
    return h


@dataclass(frozen=True)
class OracleAudit:
    """Monte-Carlo comparison of an oracle against its declared envelope."""

    estimated_bias_norm: float
    bias_bound: float
    estimated_cond_variance: float
    variance_bound: float
    replications: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "estimated_bias_norm": self.estimated_bias_norm,
            "bias_bound": self.bias_bound,
            "estimated_cond_variance": self.estimated_cond_variance,
            "variance_bound": self.variance_bound,
            "replications": self.replications,
            "passed": self.passed,
        }


def audit_oracle(o: GradientOracle, w, t: int, replications: int) -> OracleAudit:
    """Estimate the oracle's bias and conditional variance at (w, t).

    Compares the estimates against the declared envelope with a three
    standard-error slack on each side.
    """
    if replications < 1000:
        raise ValueError(f"replications must be >= 1000, got {replications}")
    w = np.asarray(w, dtype=float)
    obj = o.objective
    hs = np.empty((replications, obj.dimension))
    for r in range(replications):
        hs[r] = sample_gradient(o, w, t, rep=r)

    mean_h = hs.mean(axis=0)
    grad = np.asarray(obj.gradient(w), dtype=float)
    est_bias = float(np.linalg.norm(mean_h - grad))
    sq_dev = np.sum((hs - mean_h) ** 2, axis=1)
    est_var = float(sq_dev.sum() / max(replications - 1, 1))

    b, m = declared_envelope(o, t)
    bias_bound = b * (1.0 + float(np.linalg.norm(grad)))
    var_bound = m * m * max(0.0, 1.0 + obj.value(w))

    se_mean = math.sqrt(est_var / replications)
    se_var = float(np.std(sq_dev, ddof=1)) / math.sqrt(replications) if replications > 1 else 0.0
    # three standard errors of slack, plus rounding headroom for oracles that
    # sit exactly on the declared boundary
    passed = (est_bias <= bias_bound * (1.0 + 1e-9) + 3.0 * se_mean + 1e-12
              and est_var <= var_bound * (1.0 + 1e-9) + 3.0 * se_var + 1e-12)
    return OracleAudit(est_bias, bias_bound, est_var, var_bound, replications, passed)
