"""The momentum-reparameterization recursion and its infeasibility analysis.

The recursion lambda_{t+1} = lambda_t / mu_t - 1 converts a momentum
schedule into a synthetic step size eta_t = (1 + lambda_{t+1}) * alpha_t.
For constant mu the natural choice lambda_0 = mu/(1-mu) is a fixed point and
eta is a constant multiple of alpha; for monotone mu the recursion
degenerates: strictly decreasing mu drives lambda to infinity (so square
summability of alpha no longer transfers to eta), while strictly increasing
mu bounded below 1 forces 1 + lambda_t negative after finitely many steps,
i.e. a negative synthetic step size.

Numerical note: the fixed point is repelling (errors amplify by 1/mu per
step), so a constant-mu trace drifts for very long horizons; constancy
should be decided from the schedule, not from the floating-point trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .schedules import Schedule, eval_schedule


def default_lambda0(mu: Schedule) -> float:
    """The fixed-point seed mu_0 / (1 - mu_0), which makes lambda_1 = lambda_0."""
    m0 = eval_schedule(mu, 0)
    return m0 / (1.0 - m0)


def _mu_values(mu: Schedule, n: int) -> np.ndarray:
    vals = mu.values(n)
    bad = np.nonzero((vals <= 0.0) | (vals >= 1.0))[0]
    if bad.size:
        t = int(bad[0])
        raise ValueError(f"mu_t must lie in (0, 1); mu_{t} = {vals[t]!r}")
    return vals


@dataclass(frozen=True)
class LambdaTrace:
    """lambda_0..lambda_H, eta_0..eta_{H-1}, and summary classifications."""

    lam: np.ndarray
    eta: np.ndarray
    mu: Schedule
    alpha: Schedule
    first_negative_eta_index: Optional[int]
    monotonicity: str  # increasing | decreasing | constant | mixed

    @property
    def one_plus_lambda(self) -> np.ndarray:
        return 1.0 + self.lam


def _classify_monotonicity(lam: np.ndarray) -> str:
    diffs = np.diff(lam)
    tol = 1e-9 * (1.0 + np.abs(lam[:-1]))
    if np.all(np.abs(diffs) <= tol):
        return "constant"
    if np.all(diffs > -tol) and np.any(diffs > tol):
        return "increasing"
    if np.all(diffs < tol) and np.any(diffs < -tol):
        return "decreasing"
    return "mixed"


def iterate_lambda(mu: Schedule, alpha: Schedule, lambda0: float,
                   horizon: int) -> LambdaTrace:
    """Run the recursion for ``horizon`` steps from a caller-chosen lambda_0."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    mus = _mu_values(mu, horizon)
    alphas = alpha.values(horizon)
    lam = np.empty(horizon + 1)
    lam[0] = float(lambda0)
    for t in range(horizon):
        lam[t + 1] = lam[t] / mus[t] - 1.0
    eta = (1.0 + lam[1:]) * alphas
    neg = np.nonzero(1.0 + lam[1:] < 0.0)[0]
    first_neg = int(neg[0]) if neg.size else None
    return LambdaTrace(lam=lam, eta=eta, mu=mu, alpha=alpha,
                       first_negative_eta_index=first_neg,
                       monotonicity=_classify_monotonicity(lam))


def closed_form_lambda(mu: Schedule, lambda0: float, lambda1: float, t: int) -> float:
    """Evaluate lambda_t from the unrolled difference form of the recursion.

    Builds each increment as a reciprocal-product-weighted combination of the
    seed difference (lambda_1 - lambda_0) and the schedule's reciprocal
    increments, with empty products equal to 1 and empty sums equal to 0.
    Independent of the one-step division recursion; the two must agree to
    about 1e-9 relative over a hundred steps.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t == 0:
        return float(lambda0)
    if t == 1:
        return float(lambda1)
    mus = _mu_values(mu, t)
    inv = 1.0 / mus
    # prefix[s] = product of 1/mu_k for k = 1..s (prefix[0] = 1, empty product),
    # so the weight prod_{k=tau+1..s} 1/mu_k equals prefix[s] / prefix[tau].
    prefix = np.ones(t)
    prefix[1:] = np.cumprod(inv[1:t])
    lam = [float(lambda0), float(lambda1)]
    # running_sum accumulates sum_{tau=1..s} (1/mu_tau - 1/mu_{tau-1}) *
    # lambda_{tau-1} / prefix[tau]; multiplying by prefix[s] restores the
    # displayed weights without re-walking the sum for every s.
    running_sum = 0.0
    for s in range(1, t):
        running_sum += (inv[s] - inv[s - 1]) * lam[s - 1] / prefix[s]
        increment = prefix[s] * ((lam[1] - lam[0]) + running_sum)
        lam.append(lam[s] + increment)
    return lam[t]


def verify_lemma_A1(mu: Schedule, horizon: int, threshold: float = 1e6) -> Optional[int]:
    """Scan for the first t with lambda_t > threshold under decreasing momentum.

    Seeds the recursion at the fixed-point value.  When the momentum schedule
    is strictly decreasing the sequence must be strictly increasing from t=1
    (checked, and a violation raises); blow-up past any threshold then occurs
    at a finite index.  Returns that index, or None when the horizon ends
    first (e.g. for constant momentum, where lambda never moves).
    """
    if horizon < 2:
        raise ValueError(f"horizon must be >= 2, got {horizon}")
    mus = _mu_values(mu, horizon)
    strictly_decreasing = bool(np.all(np.diff(mus) < 0.0))

    lam_prev = default_lambda0(mu)
    if lam_prev > threshold:
        return 0
    lam = lam_prev / mus[0] - 1.0
    if lam > threshold:
        return 1
    for t in range(1, horizon):
        nxt = lam / mus[t] - 1.0
        if strictly_decreasing and not nxt > lam:
            raise AssertionError(
                f"lambda failed to increase strictly at t={t + 1} "
                f"({lam!r} -> {nxt!r}) despite decreasing momentum")
        lam = nxt
        if lam > threshold:
            return t + 1
        if not math.isfinite(lam):
            break
    return None


def verify_lemma_A2(mu: Schedule, horizon: int, mu_bar: Optional[float] = None,
                    lambda0: Optional[float] = None) -> tuple:
    """Locate the onset of negative synthetic step sizes under increasing momentum.

    Requires mu strictly increasing with sup bounded below 1 and a seed with
    lambda_1 > lambda_2.  Returns (t_first, t0_bound): the first index with
    1 + lambda_t < 0 and the analytic bound
    t0 = 3 + log_{1/mu_bar}(lambda_1 / (lambda_1 - lambda_2)).
    Checks t_first <= ceil(t0) and that negativity is absorbing through the
    horizon; violations raise AssertionError.
    """
    if horizon < 3:
        raise ValueError(f"horizon must be >= 3, got {horizon}")
    mus = _mu_values(mu, horizon)
    if not np.all(np.diff(mus) > 0.0):
        raise ValueError("hypothesis violation: mu must be strictly increasing")
    bar = float(mu_bar) if mu_bar is not None else float(mus.max())
    if not 0.0 < bar < 1.0:
        raise ValueError(f"hypothesis violation: mu_bar must lie in (0, 1), got {bar}")
    if float(mus.max()) > bar + 1e-12:
        raise ValueError(f"mu exceeds the stated bound {bar} within the horizon")

    lam0 = default_lambda0(mu) if lambda0 is None else float(lambda0)
    lam = np.empty(horizon + 1)
    lam[0] = lam0
    for t in range(horizon):
        lam[t + 1] = lam[t] / mus[t] - 1.0
    if not lam[1] > lam[2]:
        raise ValueError(f"setup requires lambda_1 > lambda_2, got {lam[1]!r} <= {lam[2]!r}")

    t0 = 3.0 + math.log(lam[1] / (lam[1] - lam[2])) / math.log(1.0 / bar)
    neg = np.nonzero(1.0 + lam < 0.0)[0]
    if not neg.size:
        raise AssertionError(f"1 + lambda_t never went negative within horizon {horizon}; "
                             f"bound predicted t0 = {t0:.3f}")
    t_first = int(neg[0])
    if t_first > math.ceil(t0):
        raise AssertionError(f"first negative index {t_first} exceeds ceil(t0) = {math.ceil(t0)}")
    if not np.all(1.0 + lam[t_first:] < 0.0):
        raise AssertionError("negativity of 1 + lambda_t failed to be absorbing")
    return t_first, t0
