"""Coordinate-subset updating as mask-and-rescale wrappers.

Each policy draws a nonnegative weight vector with unit mean per coordinate;
multiplying the stochastic gradient by it preserves the conditional mean
while updating only the drawn subset.  Weight draws are addressed by
(seed, t, replication), independent of the oracle's stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ._rng import STREAM_BLOCK, Substreams
from .schedules import Schedule, constant, eval_schedule, schedule_from_spec

KINDS = ("full", "single_coordinate", "multi_coordinate", "bernoulli")


@dataclass(frozen=True)
class BlockPolicy:
    """full: identity.  single_coordinate: one uniform index, weight d.
    multi_coordinate: n_draws uniform indices with replacement, each
    contributing weight d/n_draws (a coordinate drawn twice gets double
    weight).  bernoulli: independent per-coordinate coin with success rate
    rho_t, surviving coordinates rescaled by 1/rho_t.
    """

    kind: str
    n_draws: int = 1
    success_rate: Schedule = field(default_factory=lambda: constant(0.5))
    seed: int = 0
    _streams: Substreams = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "multi_coordinate" and self.n_draws < 1:
            raise ValueError(f"n_draws must be >= 1, got {self.n_draws}")
        object.__setattr__(self, "_streams", Substreams(self.seed))


def full_update() -> BlockPolicy:
    return BlockPolicy("full")


def single_coordinate(seed: int = 0) -> BlockPolicy:
    return BlockPolicy("single_coordinate", seed=seed)


def multi_coordinate(n_draws: int, seed: int = 0) -> BlockPolicy:
    return BlockPolicy("multi_coordinate", n_draws=n_draws, seed=seed)


def bernoulli(success_rate: Schedule, seed: int = 0) -> BlockPolicy:
    return BlockPolicy("bernoulli", success_rate=success_rate, seed=seed)


def policy_with_seed(p: BlockPolicy, seed: int) -> BlockPolicy:
    return replace(p, seed=int(seed))


def policy_from_spec(spec: Optional[dict]) -> BlockPolicy:
    if spec is None:
        return full_update()
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("block spec must be an object with a 'kind' field")
    kind = spec["kind"]
    if kind == "full":
        return full_update()
    if kind == "single_coordinate":
        return single_coordinate()
    if kind == "multi_coordinate":
        return multi_coordinate(int(spec.get("n_draws", 1)))
    if kind == "bernoulli":
        if "success_rate" not in spec:
            raise ValueError("bernoulli block spec requires 'success_rate'")
        return bernoulli(schedule_from_spec(spec["success_rate"]))
    raise ValueError(f"unknown block kind {kind!r}; expected one of {KINDS}")


def draw_weights(p: BlockPolicy, dimension: int, t: int, rep: int = 0) -> np.ndarray:
    """Weight vector for step t; zero outside the drawn subset, unit mean."""
    d = int(dimension)
    if p.kind == "full":
        return np.ones(d)
    rng = p._streams.at(STREAM_BLOCK, t, rep)
    if p.kind == "single_coordinate":
        w = np.zeros(d)
        w[int(rng.integers(0, d))] = float(d)
        return w
    if p.kind == "multi_coordinate":
        idx = rng.integers(0, d, p.n_draws)
        w = np.zeros(d)
        np.add.at(w, idx, d / p.n_draws)
        return w
    rho = eval_schedule(p.success_rate, t)
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"bernoulli success rate must lie in (0, 1], got rho_t={rho} at t={t}")
    coins = rng.random(d) < rho
    return coins.astype(float) / rho


def apply_block(p: BlockPolicy, h, t: int, rep: int = 0) -> np.ndarray:
    """Mask and rescale a gradient estimate for the step-t coordinate subset."""
    h = np.asarray(h, dtype=float)
    return draw_weights(p, h.shape[0], t, rep=rep) * h


def mask_variance(p: BlockPolicy, h, t: int = 0) -> np.ndarray:
    """Closed-form per-coordinate variance of apply_block(h) over the mask draw.

    single_coordinate: h_i^2 (d-1).  multi_coordinate: h_i^2 (d-1)/N.
    bernoulli: h_i^2 (1-rho)/rho.  full: 0.  Used to build independent
    standard-error thresholds for the unbiasedness check.
    """
    h = np.asarray(h, dtype=float)
    d = h.shape[0]
    if p.kind == "full":
        return np.zeros(d)
    if p.kind == "single_coordinate":
        return h * h * (d - 1.0)
    if p.kind == "multi_coordinate":
        return h * h * (d - 1.0) / p.n_draws
    rho = eval_schedule(p.success_rate, t)
    return h * h * (1.0 - rho) / rho


def verify_block_unbiasedness(p: BlockPolicy, h, replications: int, t: int = 0) -> float:
    """Norm of (Monte-Carlo mean of apply_block(h)) - h over many mask draws.

    The expectation is h exactly, so the return value should not exceed a
    few standard errors (compare against 4*sqrt(sum(mask_variance)/replications)).
    """
    if replications < 10_000:
        raise ValueError(f"replications must be >= 10000, got {replications}")
    h = np.asarray(h, dtype=float)
    acc = np.zeros_like(h)
    for r in range(replications):
        acc += draw_weights(p, h.shape[0], t, rep=r)
    return float(np.linalg.norm(acc / replications * h - h))
