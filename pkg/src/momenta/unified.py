"""The unified two-sequence momentum iteration and its diagnostics.

The iteration updates an auxiliary pair (w, v):

    w_{t+1} = w_t + a_t v_t - b_t alpha_t h_{t+1}
    v_{t+1} = mu_t v_t - alpha_t h_{t+1}

with the argument recovered as theta_t = w_t - eps_t v_t.  Presets:

* shb:  eps=0, a_t=mu_t, b_t=1 (heavy ball; w coincides with theta)
* snag: a_t=mu_{t+1} mu_t, b_t=1+mu_{t+1}, eps_t=mu_t (lookahead form;
  the momentum schedule is read one step ahead, so it must be predictable)
* sgd:  shb with mu identically 0

The change of variables u_t = w_t + k_t v_t with k_t = a_t/(1-mu_t)
diagonalizes the linear part; the residual checkers verify the resulting
one-step identities to floating-point accuracy, and the monitored scalar
V_t = J(u_t) + |v_t|^2 is recorded along every trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analysis import RunRecord
from .block import BlockPolicy, draw_weights, full_update, policy_with_seed
from .objectives import Objective
from .oracles import GradientOracle, sample_gradient, with_seed
from .schedules import ConditionEntry, ConditionReport, Schedule, constant, eval_schedule

PRESETS = ("shb", "snag", "sgd", "custom")

# "Bounded away from 1" operationalized: the smallest allowed gap 1 - mu_t
# over the validated horizon.  The classical schedule mu_t = 1 - 1/(t+2)
# crosses this within a few thousand steps and is rejected.
MU_GAP_MIN = 1e-3


class ParameterValidationError(ValueError):
    """A hard violation of the parameter box constraints."""


@dataclass(frozen=True)
class UnifiedParams:
    """Parameter schedules driving the iteration.

    For the presets only ``mu`` and ``alpha`` are read; a, b and eps are
    derived per step.  ``custom`` evaluates all five stored schedules.
    """

    mu: Schedule
    alpha: Schedule
    preset: str = "custom"
    a: Optional[Schedule] = None
    b: Optional[Schedule] = None
    eps: Optional[Schedule] = None

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; expected one of {PRESETS}")
        if self.preset == "custom" and None in (self.a, self.b, self.eps):
            raise ValueError("custom params require explicit a, b and eps schedules")


def shb_params(mu: Schedule, alpha: Schedule) -> UnifiedParams:
    return UnifiedParams(mu=mu, alpha=alpha, preset="shb")


def snag_params(mu: Schedule, alpha: Schedule) -> UnifiedParams:
    return UnifiedParams(mu=mu, alpha=alpha, preset="snag")


def sgd_params(alpha: Schedule) -> UnifiedParams:
    return UnifiedParams(mu=constant(0.0), alpha=alpha, preset="sgd")


def custom_params(a: Schedule, b: Schedule, eps: Schedule, mu: Schedule,
                  alpha: Schedule) -> UnifiedParams:
    return UnifiedParams(mu=mu, alpha=alpha, preset="custom", a=a, b=b, eps=eps)


def params_at(p: UnifiedParams, t: int) -> tuple:
    """(a_t, b_t, eps_t, mu_t, alpha_t) for the given step."""
    alpha = eval_schedule(p.alpha, t)
    if p.preset == "shb":
        mu = eval_schedule(p.mu, t)
        return mu, 1.0, 0.0, mu, alpha
    if p.preset == "sgd":
        return 0.0, 1.0, 0.0, 0.0, alpha
    if p.preset == "snag":
        mu = eval_schedule(p.mu, t)
        mu_next = eval_schedule(p.mu, t + 1)
        return mu_next * mu, 1.0 + mu_next, mu, mu, alpha
    return (eval_schedule(p.a, t), eval_schedule(p.b, t), eval_schedule(p.eps, t),
            eval_schedule(p.mu, t), alpha)


def params_table(p: UnifiedParams, n: int) -> dict:
    """Vectorized parameter arrays for t = 0..n-1, plus k and delta."""
    alpha = p.alpha.values(n)
    if p.preset in ("shb", "sgd"):
        mu = np.zeros(n) if p.preset == "sgd" else p.mu.values(n)
        a, b, eps = mu.copy(), np.ones(n), np.zeros(n)
        mu_ext = np.zeros(n + 1) if p.preset == "sgd" else p.mu.values(n + 1)
        a_ext = mu_ext.copy()
    elif p.preset == "snag":
        mu_ext = p.mu.values(n + 1)
        mu = mu_ext[:n]
        a = mu_ext[1:] * mu
        b = 1.0 + mu_ext[1:n + 1]
        eps = mu.copy()
        a_ext = np.append(a, eval_schedule(p.mu, n + 1) * mu_ext[n])
    else:
        mu_ext = p.mu.values(n + 1)
        mu = mu_ext[:n]
        a_ext = p.a.values(n + 1)
        a = a_ext[:n]
        b = p.b.values(n)
        eps = p.eps.values(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        k_ext = a_ext / (1.0 - mu_ext)
        delta = k_ext[1:n + 1] - k_ext[:n]
    return {"a": a, "b": b, "eps": eps, "mu": mu, "alpha": alpha,
            "k": k_ext[:n], "delta": delta}


def decoupling_coefficient(a: float, mu: float) -> float:
    """k = a / (1 - mu); the amount of v folded into w by the u-transform."""
    if mu >= 1.0:
        raise ParameterValidationError(f"mu must be < 1 for the transform, got {mu}")
    return a / (1.0 - mu)


def validate_params(p: UnifiedParams, horizon: int, mu_gap: float = MU_GAP_MIN) -> ConditionReport:
    """Check the parameter box constraints over t in [0, horizon].

    Hard failures (raised as ParameterValidationError): negative a_t,
    non-positive b_t, mu_t outside [0, 1), or momentum not bounded away
    from 1 (min over the horizon of 1 - mu_t below ``mu_gap``).  The
    report additionally flags a non-vanishing trend of |delta_t|.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    tab = params_table(p, horizon + 1)
    a, b, eps, mu = tab["a"], tab["b"], tab["eps"], tab["mu"]

    if np.any(a < 0):
        t_bad = int(np.argmax(a < 0))
        raise ParameterValidationError(f"a_t must be nonnegative; a_{t_bad} = {float(a[t_bad])!r}")
    if np.any(b <= 0):
        t_bad = int(np.argmax(b <= 0))
        raise ParameterValidationError(f"b_t must be positive; b_{t_bad} = {float(b[t_bad])!r}")
    if np.any(mu < 0):
        t_bad = int(np.argmax(mu < 0))
        raise ParameterValidationError(f"mu_t must be nonnegative; mu_{t_bad} = {float(mu[t_bad])!r}")
    gap = float(np.min(1.0 - mu))
    if gap < mu_gap:
        t_bad = int(np.argmin(1.0 - mu))
        raise ParameterValidationError(
            f"mu not bounded away from 1: mu_{t_bad} = {float(mu[t_bad])!r} leaves gap "
            f"{gap:.3e} < {mu_gap:.0e} (momentum must satisfy sup mu < 1)")
    if not np.all(np.isfinite(eps)):
        raise ParameterValidationError("eps_t must be bounded; found non-finite values")

    delta = np.abs(tab["delta"])
    n = delta.size
    head = float(delta[: max(1, n // 10)].mean())
    tail = float(delta[-max(1, n // 10):].mean())
    vanishing = tail <= max(1e-12, 0.1 * head)

    k_bar = float(np.max(tab["k"]))
    entries = (
        ConditionEntry("a_bounds", True, float(a.min()), f"max a_t = {float(a.max()):.6g}"),
        ConditionEntry("b_bounds", True, float(b.min()), f"b_t in [{float(b.min()):.6g}, {float(b.max()):.6g}]"),
        ConditionEntry("mu_bounded_away_from_1", True, gap - mu_gap,
                       f"max mu_t = {float(mu.max()):.6g}"),
        ConditionEntry("eps_bounded", True, float(np.max(np.abs(eps))),
                       f"max |eps_t| = {float(np.max(np.abs(eps))):.6g}"),
        ConditionEntry("delta_vanishing", vanishing, -tail,
                       f"mean |delta| head {head:.3e} -> tail {tail:.3e}; k_bar = {k_bar:.6g}"),
    )
    return ConditionReport("UnifiedParams", entries)


@dataclass(frozen=True)
class UnifiedState:
    """Per-iteration state with the derived diagnostic quantities."""

    t: int
    w: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    u: np.ndarray
    k: float
    delta: float
    lyapunov: float


def derive_state(t: int, w, v, p: UnifiedParams, objective: Objective) -> UnifiedState:
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    a, _, eps, mu, _ = params_at(p, t)
    a1, _, _, mu1, _ = params_at(p, t + 1)
    k = decoupling_coefficient(a, mu)
    delta = decoupling_coefficient(a1, mu1) - k
    u = w + k * v
    lyap = objective.value(u) + float(np.dot(v, v))
    return UnifiedState(t=t, w=w, v=v, theta=w - eps * v, u=u, k=k, delta=delta,
                        lyapunov=lyap)


def initial_state(w0, p: UnifiedParams, objective: Objective, v0=None) -> UnifiedState:
    w0 = np.asarray(w0, dtype=float)
    v0 = np.zeros_like(w0) if v0 is None else np.asarray(v0, dtype=float)
    return derive_state(0, w0, v0, p, objective)


def unified_step(state: UnifiedState, p: UnifiedParams, h, objective: Objective) -> UnifiedState:
    """One update of (w, v) with stochastic gradient h, rederiving diagnostics."""
    h = np.asarray(h, dtype=float)
    a, b, eps, mu, alpha = params_at(p, state.t)
    w_next = state.w + a * state.v - b * alpha * h
    v_next = mu * state.v - alpha * h
    return derive_state(state.t + 1, w_next, v_next, p, objective)


def u_recursion_residual(state: UnifiedState, nxt: UnifiedState, p: UnifiedParams, h) -> float:
    """Gap between the directly-derived u_{t+1} and its one-step recursion.

    u_{t+1} = u_t + delta_t mu_t v_t - (b_t + k_{t+1}) alpha_t h is an
    algebraic identity of the update, so the residual is pure floating-point
    error (expected <= 1e-12 * (1 + |u_t|)).
    """
    h = np.asarray(h, dtype=float)
    _, b, _, mu, alpha = params_at(p, state.t)
    u_pred = state.u + state.delta * mu * state.v - (b + nxt.k) * alpha * h
    return float(np.linalg.norm(nxt.u - u_pred))


def decoupling_matrices(p: UnifiedParams, t: int) -> tuple:
    """Scalar-block representatives (A, Z, Z_inv, Lam) of the update's linear part.

    A = [[1, a], [0, mu]] has eigenvalues 1 and mu with eigenvector matrix
    Z = [[1, -k], [0, 1]]; then Z^-1 A Z = diag(1, mu) exactly.
    """
    a, _, _, mu, _ = params_at(p, t)
    k = decoupling_coefficient(a, mu)
    A = np.array([[1.0, a], [0.0, mu]])
    Z = np.array([[1.0, -k], [0.0, 1.0]])
    Z_inv = np.array([[1.0, k], [0.0, 1.0]])
    Lam = np.array([[1.0, 0.0], [0.0, mu]])
    return A, Z, Z_inv, Lam


def eigen_decoupling_check(p: UnifiedParams, t: int) -> float:
    """Max-abs entry of Z^-1 A Z - Lam; an exact identity up to rounding."""
    A, Z, Z_inv, Lam = decoupling_matrices(p, t)
    return float(np.max(np.abs(Z_inv @ A @ Z - Lam)))


def run(objective: Objective, oracle: GradientOracle, params: UnifiedParams,
        init, horizon: int, seed: int = 0,
        block_policy: Optional[BlockPolicy] = None,
        config_hash: str = "") -> RunRecord:
    """Iterate the update for ``horizon`` steps and record per-step metrics.

    The oracle is queried at w_t (not theta_t); the block policy draws its
    coordinate subset before the oracle is consulted, so evaluation-only
    oracles skip masked coordinates.  Both are re-seeded with ``seed`` so a
    record is fully determined by (config, seed).  Non-finite state ends the
    trajectory early with the divergence flag set.

    ``init`` is w0 or a (w0, v0) pair; v0 defaults to zero.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if isinstance(init, tuple):
        w0, v0 = init
    else:
        w0, v0 = init, None
    w = np.array(w0, dtype=float).reshape(-1)
    v = np.zeros_like(w) if v0 is None else np.array(v0, dtype=float).reshape(-1)
    if w.shape != v.shape or w.shape[0] != objective.dimension:
        raise ValueError(f"init shapes {w.shape}/{v.shape} do not match dimension "
                         f"{objective.dimension}")

    orc = with_seed(oracle, seed)
    policy = policy_with_seed(block_policy or full_update(), seed)
    masked = policy.kind != "full"
    zeroth_order = orc.kind in ("spsa", "blum_fd")
    d = w.shape[0]

    tab = params_table(params, horizon + 1)
    # plain-float lists: scalar indexing in the hot loop is markedly cheaper
    # than numpy scalars
    a_arr, b_arr, eps_arr = tab["a"].tolist(), tab["b"].tolist(), tab["eps"].tolist()
    mu_arr, alpha_arr, k_arr = tab["mu"].tolist(), tab["alpha"].tolist(), tab["k"].tolist()

    n = horizon + 1
    j_theta = np.empty(n)
    grad_norm = np.empty(n)
    v_norm_sq = np.empty(n)
    lyapunov = np.empty(n)
    running_min = np.empty(n)
    alpha_rec = np.empty(n)

    diverged = False
    rows = n
    best = math.inf
    value, gradient = objective.value, objective.gradient

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n):
            theta = w - eps_arr[t] * v if eps_arr[t] != 0.0 else w
            u = w + k_arr[t] * v if k_arr[t] != 0.0 else w
            try:
                jt = value(theta)
                g = gradient(theta)
                gn = math.sqrt(float(np.dot(g, g)))
                vsq = float(np.dot(v, v))
                lyap = value(u) + vsq
            except (FloatingPointError, OverflowError, ValueError):
                jt = gn = vsq = lyap = math.nan
            if not (math.isfinite(jt) and math.isfinite(gn) and math.isfinite(lyap)):
                diverged = True
                rows = t
                break
            best = min(best, gn)
            j_theta[t] = jt
            grad_norm[t] = gn
            v_norm_sq[t] = vsq
            lyapunov[t] = lyap
            running_min[t] = best
            alpha_rec[t] = alpha_arr[t]
            if t == horizon:
                break

            try:
                if masked:
                    weights = draw_weights(policy, d, t)
                    if zeroth_order:
                        h = sample_gradient(orc, w, t, support=weights != 0.0)
                    else:
                        h = sample_gradient(orc, w, t)
                    h = weights * h
                else:
                    h = sample_gradient(orc, w, t)
            except (FloatingPointError, OverflowError, ValueError):
                diverged = True
                rows = t + 1
                break
            alpha_t = alpha_arr[t]
            w = w + a_arr[t] * v - (b_arr[t] * alpha_t) * h
            v = mu_arr[t] * v - alpha_t * h

    ts = np.arange(rows)
    return RunRecord(
        config_hash=config_hash,
        seed=int(seed),
        t=ts,
        j_theta=j_theta[:rows].copy(),
        grad_norm=grad_norm[:rows].copy(),
        v_norm_sq=v_norm_sq[:rows].copy(),
        lyapunov=lyapunov[:rows].copy(),
        running_min_grad=running_min[:rows].copy(),
        alpha=alpha_rec[:rows].copy(),
        diverged=diverged,
    )
