"""Scalar parameter sequences and their summability condition checks.

A :class:`Schedule` generates one of the driving sequences of the iteration
(step size, momentum, oracle envelopes, increments).  Power-law condition
checking is done analytically through exponent arithmetic; the numeric
partial-sum checker exists for tabulated sequences and as a cross-check,
because no finite sum can decide summability on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._rng import STREAM_SCHEDULE, hash_uniform, splitmix64

KINDS = ("constant", "power_law", "table", "seeded_random")

# Multiplicative jitter range for seeded_random schedules: the value at t is
# coefficient * (t+1)**exponent * u with u uniform on [JITTER_LO, JITTER_HI),
# drawn purely from (seed, t) so evaluation order never matters.
JITTER_LO = 0.5
JITTER_HI = 1.5


@dataclass(frozen=True)
class Schedule:
    """A deterministic or seeded scalar sequence, evaluated at integer t >= 0.

    power_law evaluates to coefficient * (t+1)**exponent (finite at t=0).
    A table queried past its end repeats its last entry.  seeded_random
    multiplies the power-law envelope by a reproducible per-t jitter.
    """

    kind: str
    coefficient: float = 1.0
    exponent: float = 0.0
    table: Optional[tuple] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "table":
            if not self.table:
                raise ValueError("table schedule requires a non-empty table")
            object.__setattr__(self, "table", tuple(float(x) for x in self.table))
        if self.kind == "seeded_random" and self.seed is None:
            raise ValueError("seeded_random schedule requires a seed")

    def value(self, t: int) -> float:
        return eval_schedule(self, t)

    def values(self, n: int) -> np.ndarray:
        """Vectorized evaluation at t = 0..n-1."""
        if n <= 0:
            return np.empty(0)
        t = np.arange(n, dtype=float)
        if self.kind == "constant":
            return np.full(n, float(self.coefficient))
        if self.kind == "power_law":
            return self.coefficient * (t + 1.0) ** self.exponent
        if self.kind == "table":
            tab = np.asarray(self.table)
            idx = np.minimum(np.arange(n), len(tab) - 1)
            return tab[idx]
        base = self.coefficient * (t + 1.0) ** self.exponent
        return base * _jitter_vec(self.seed, n)

    def to_spec(self) -> dict:
        spec = {"kind": self.kind}
        if self.kind == "table":
            spec["table"] = list(self.table)
        else:
            spec["coefficient"] = float(self.coefficient)
            spec["exponent"] = float(self.exponent)
        if self.kind == "seeded_random":
            spec["seed"] = int(self.seed)
        return spec


def constant(x: float) -> Schedule:
    return Schedule("constant", coefficient=float(x))


def power_law(coefficient: float, exponent: float) -> Schedule:
    return Schedule("power_law", coefficient=float(coefficient), exponent=float(exponent))


def table(values: Sequence[float]) -> Schedule:
    return Schedule("table", table=tuple(values))


def seeded_random(coefficient: float, exponent: float, seed: int) -> Schedule:
    return Schedule("seeded_random", coefficient=float(coefficient),
                    exponent=float(exponent), seed=int(seed))


def schedule_from_spec(spec: dict) -> Schedule:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("schedule spec must be an object with a 'kind' field")
    kind = spec["kind"]
    if kind == "table":
        return table(spec.get("table") or ())
    if kind == "seeded_random":
        return seeded_random(spec.get("coefficient", 1.0), spec.get("exponent", 0.0),
                             spec.get("seed"))
    if kind == "constant":
        return constant(spec.get("coefficient", 1.0))
    if kind == "power_law":
        return power_law(spec.get("coefficient", 1.0), spec.get("exponent", 0.0))
    raise ValueError(f"unknown schedule kind {kind!r}; expected one of {KINDS}")


def eval_schedule(s: Schedule, t: int) -> float:
    """Value of the sequence at step t >= 0; deterministic, including seeded kinds."""
    if t < 0:
        raise ValueError(f"schedule index must be >= 0, got {t}")
    if s.kind == "constant":
        return float(s.coefficient)
    # The np.power ufunc keeps scalar evaluation bit-identical to values().
    if s.kind == "power_law":
        return float(s.coefficient * np.power(np.float64(t + 1.0), np.float64(s.exponent)))
    if s.kind == "table":
        return s.table[min(t, len(s.table) - 1)]
    base = s.coefficient * np.power(np.float64(t + 1.0), np.float64(s.exponent))
    u = hash_uniform(s.seed, STREAM_SCHEDULE, t)
    return float(base * (JITTER_LO + (JITTER_HI - JITTER_LO) * u))


def _jitter_vec(seed: int, n: int) -> np.ndarray:
    # Must agree bit-for-bit with hash_uniform(seed, STREAM_SCHEDULE, t).
    z0 = np.uint64(splitmix64((int(seed) & (2**64 - 1)) ^ splitmix64(STREAM_SCHEDULE)))
    t = np.arange(n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        u = _splitmix_vec(z0 ^ t).astype(np.float64) / 2.0**64
    return JITTER_LO + (JITTER_HI - JITTER_LO) * u


def _splitmix_vec(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


# ---------------------------------------------------------------------------
# Condition reports


@dataclass(frozen=True)
class ConditionEntry:
    name: str
    satisfied: bool
    margin: float
    detail: str = ""


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of a named set of schedule conditions, one entry per condition."""

    condition_set: str
    entries: tuple

    @property
    def satisfied(self) -> bool:
        return all(e.satisfied for e in self.entries)

    def entry(self, name: str) -> ConditionEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "condition_set": self.condition_set,
            "satisfied": self.satisfied,
            "entries": [
                {
                    "name": e.name,
                    "satisfied": e.satisfied,
                    "margin": e.margin if math.isfinite(e.margin) else None,
                    "detail": e.detail,
                }
                for e in self.entries
            ],
        }


CONDITION_SETS = ("RM", "KWB", "Theorem21")

# Convention for a vanishing bias envelope: when B_t is identically zero the
# decay exponent is reported as 1.0, which is the value the rate analysis
# assigns to the unbiased case.
GAMMA_IF_UNBIASED = 1.0


def check_power_law_conditions(p_alpha: float, gamma: float, delta: float,
                               condition_set: str = "Theorem21") -> ConditionReport:
    """Classify summability of the power-law family by exponent arithmetic.

    With alpha_t ~ (t+1)**(-p_alpha), B_t = O((t+1)**(-gamma)) and
    M_t = O((t+1)**delta), the p-series test gives:

    * sum alpha_t^2 < inf        iff 2*p_alpha > 1
    * sum alpha_t B_t < inf      iff p_alpha + gamma > 1
    * sum alpha_t^2 M_t^2 < inf  iff 2*p_alpha - 2*delta > 1
    * sum alpha_t = inf          iff p_alpha <= 1

    For the KWB set, gamma plays the role of the increment decay exponent
    (B_t = O(c_t), M_t = O(1/c_t)), so pass gamma = delta = that exponent.
    Margins are the exponent slack; convergence conditions require strict
    positivity, the divergence condition allows the boundary.
    """
    if condition_set not in CONDITION_SETS:
        raise ValueError(f"unknown condition set {condition_set!r}; expected one of {CONDITION_SETS}")
    if p_alpha < 0:
        raise ValueError(f"p_alpha must be >= 0 (growing step sizes are unsupported), got {p_alpha}")
    for name, v in (("gamma", gamma), ("delta", delta)):
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v}")

    sq = ConditionEntry("sum_alpha_sq", 2 * p_alpha - 1 > 0, 2 * p_alpha - 1)
    div = ConditionEntry("sum_alpha_diverges", 1 - p_alpha >= 0, 1 - p_alpha)
    entries = [sq]
    if condition_set == "KWB":
        entries.append(ConditionEntry("sum_alpha_c", p_alpha + gamma - 1 > 0,
                                      p_alpha + gamma - 1))
        entries.append(ConditionEntry("sum_alpha_sq_over_c_sq",
                                      2 * p_alpha - 2 * delta - 1 > 0,
                                      2 * p_alpha - 2 * delta - 1))
    elif condition_set == "Theorem21":
        entries.append(ConditionEntry("sum_alpha_bias", p_alpha + gamma - 1 > 0,
                                      p_alpha + gamma - 1))
        entries.append(ConditionEntry("sum_alpha_sq_var",
                                      2 * p_alpha - 2 * delta - 1 > 0,
                                      2 * p_alpha - 2 * delta - 1))
    entries.append(div)
    return ConditionReport(condition_set, tuple(entries))


# Partial-sum trend test: a series is called divergent at horizon T when the
# partial sum at T exceeds the one at sqrt(T) by this factor.  Convergent
# p-series plateau (ratio -> 1); divergent ones grow at least like log t
# (ratio -> 2 at the boundary exponent).
TREND_RATIO = 1.5


def partial_sum_ratio(terms: np.ndarray) -> float:
    """S(T) / S(sqrt(T)) for the partial sums of a nonnegative sequence."""
    cums = np.cumsum(terms)
    t_hi = len(terms) - 1
    t_lo = max(1, math.isqrt(t_hi))
    if cums[t_lo] <= 0:
        return math.inf
    return float(cums[t_hi] / cums[t_lo])


def check_sebbouh_conditions(eta: Schedule, horizon: int) -> ConditionReport:
    """Numerically probe a synthetic step-size sequence over [0, horizon].

    Checks that eta is positive and (non-strictly) decreasing, and applies the
    partial-sum trend test to sum eta_t (divergence wanted), sum eta_t^2
    (convergence wanted) and sum_{t>=1} eta_t / sum_{tau<t} eta_tau
    (divergence wanted).  Any eta_t <= 0 is a hard error: a step-size
    sequence with negative entries is unusable.
    """
    if horizon < 2:
        raise ValueError(f"horizon must be >= 2, got {horizon}")
    v = eta.values(horizon + 1)
    bad = np.nonzero(v <= 0)[0]
    if bad.size:
        raise ValueError(f"negative synthetic step size: eta_t <= 0 at t={int(bad[0])} "
                         f"(eta={v[bad[0]]!r})")

    diffs = np.diff(v)
    max_inc = float(diffs.max(initial=0.0))
    scale = float(np.max(np.abs(v)))
    decreasing = max_inc <= 1e-12 * (1.0 + scale)

    sums = np.cumsum(v)
    ratio_eta = partial_sum_ratio(v)
    ratio_eta_sq = partial_sum_ratio(v * v)
    frac = v[1:] / sums[:-1]
    ratio_frac = partial_sum_ratio(frac)

    entries = (
        ConditionEntry("eta_positive", True, float(v.min())),
        ConditionEntry("eta_decreasing", decreasing, -max_inc,
                       f"max one-step increase {max_inc:.3e}"),
        ConditionEntry("sum_eta_diverges", ratio_eta >= TREND_RATIO,
                       ratio_eta - TREND_RATIO,
                       f"partial sum {sums[-1]:.6g}, growth ratio {ratio_eta:.3f}"),
        ConditionEntry("sum_eta_sq_converges", ratio_eta_sq < TREND_RATIO,
                       TREND_RATIO - ratio_eta_sq,
                       f"partial sum {float(np.sum(v * v)):.6g}, growth ratio {ratio_eta_sq:.3f}"),
        ConditionEntry("sum_eta_ratio_diverges", ratio_frac >= TREND_RATIO,
                       ratio_frac - TREND_RATIO,
                       f"partial sum {float(np.sum(frac)):.6g}, growth ratio {ratio_frac:.3f}"),
    )
    return ConditionReport("Sebbouh", entries)
