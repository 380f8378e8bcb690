import numpy as np
import pytest

from momenta.analysis import lyapunov_increase_count
from momenta.objectives import make_quadratic
from momenta.oracles import additive_noise_oracle, exact_oracle
from momenta.schedules import constant, power_law, table
from momenta.unified import (ParameterValidationError, custom_params,
                             decoupling_matrices, derive_state,
                             eigen_decoupling_check, initial_state, params_at,
                             params_table, run, sgd_params, shb_params,
                             snag_params, u_recursion_residual, unified_step,
                             validate_params)


def random_schedules(rng, kind="shb"):
    mu0 = rng.uniform(0.1, 0.9)
    mu = [constant(mu0),
          power_law(mu0, -rng.uniform(0.0, 0.3)),
          table(rng.uniform(0.05, 0.9, size=20))][rng.integers(0, 3)]
    alpha = power_law(rng.uniform(0.02, 0.3), -rng.uniform(0.5, 1.0))
    return mu, alpha


# ---------------------------------------------------------------------------
# presets and parameter tables


def test_shb_preset_forces_coefficients():
    p = shb_params(constant(0.7), constant(0.1))
    a, b, eps, mu, alpha = params_at(p, 5)
    assert (a, b, eps, mu, alpha) == (0.7, 1.0, 0.0, 0.7, 0.1)


def test_snag_preset_reads_momentum_one_step_ahead():
    mu = table([0.5, 0.6, 0.7, 0.8])
    p = snag_params(mu, constant(0.1))
    a, b, eps, mu0, _ = params_at(p, 0)
    assert a == pytest.approx(0.6 * 0.5)
    assert b == pytest.approx(1.6)
    assert eps == 0.5 and mu0 == 0.5


def test_sgd_preset_is_momentum_free():
    p = sgd_params(constant(0.1))
    assert params_at(p, 3) == (0.0, 1.0, 0.0, 0.0, 0.1)


def test_params_table_matches_pointwise_eval():
    rng = np.random.default_rng(0)
    for maker in (shb_params, snag_params):
        mu, alpha = random_schedules(rng)
        p = maker(mu, alpha)
        tab = params_table(p, 50)
        for t in range(50):
            a, b, eps, muv, al = params_at(p, t)
            assert tab["a"][t] == pytest.approx(a, rel=1e-15)
            assert tab["b"][t] == pytest.approx(b, rel=1e-15)
            assert tab["eps"][t] == pytest.approx(eps, rel=1e-15)
            assert tab["mu"][t] == pytest.approx(muv, rel=1e-15)
            assert tab["alpha"][t] == pytest.approx(al, rel=1e-15)
            k_t = a / (1 - muv)
            a1, _, _, mu1, _ = params_at(p, t + 1)
            assert tab["k"][t] == pytest.approx(k_t, rel=1e-12)
            assert tab["delta"][t] == pytest.approx(a1 / (1 - mu1) - k_t, rel=1e-9, abs=1e-12)


def test_custom_params_require_all_schedules():
    with pytest.raises(ValueError):
        custom_params(None, constant(1.0), constant(0.0), constant(0.5), constant(0.1))


# ---------------------------------------------------------------------------
# validation


def test_validate_constant_shb_passes_with_zero_delta():
    p = shb_params(constant(0.9), constant(0.05))
    report = validate_params(p, 1000)
    assert report.satisfied
    assert report.entry("delta_vanishing").satisfied
    assert report.entry("delta_vanishing").margin == 0.0


def test_validate_snag_with_converging_momentum():
    # mu_t = 0.5 + 0.4 * (1 - 1/(t+1)) climbs to 0.9 but stays away from 1
    mu = table([0.5 + 0.4 * (1 - 1 / (t + 1)) for t in range(2000)])
    p = snag_params(mu, power_law(0.1, -0.7))
    report = validate_params(p, 1500)
    assert report.satisfied
    assert report.entry("delta_vanishing").satisfied


def test_classic_nag_schedule_rejected():
    mu = table([1 - 1 / (t + 2) for t in range(5000)])
    p = shb_params(mu, constant(0.1))
    with pytest.raises(ParameterValidationError, match="bounded away from 1"):
        validate_params(p, 4000)


def test_hard_bound_violations():
    with pytest.raises(ParameterValidationError, match="mu"):
        validate_params(shb_params(constant(1.0), constant(0.1)), 10)
    bad_b = custom_params(constant(0.5), constant(0.0), constant(0.0),
                          constant(0.5), constant(0.1))
    with pytest.raises(ParameterValidationError, match="b_t"):
        validate_params(bad_b, 10)
    bad_a = custom_params(constant(-0.1), constant(1.0), constant(0.0),
                          constant(0.5), constant(0.1))
    with pytest.raises(ParameterValidationError, match="a_t"):
        validate_params(bad_a, 10)


# ---------------------------------------------------------------------------
# single steps and algebraic identities


def test_unified_step_worked_example():
    q = make_quadratic([1.0])
    p = custom_params(constant(0.5), constant(1.0), constant(0.0),
                      constant(0.9), constant(0.1))
    state = derive_state(0, np.array([1.0]), np.array([2.0]), p, q)
    nxt = unified_step(state, p, np.array([3.0]), q)
    assert nxt.w[0] == pytest.approx(1.7)
    assert nxt.v[0] == pytest.approx(1.5)
    assert nxt.t == 1


def test_unified_step_null_update():
    q = make_quadratic([1.0])
    p = custom_params(constant(0.0), constant(1.0), constant(0.0),
                      constant(0.0), constant(0.1))
    state = derive_state(0, np.array([2.0]), np.array([5.0]), p, q)
    nxt = unified_step(state, p, np.zeros(1), q)
    assert nxt.w[0] == 2.0 and nxt.v[0] == 0.0


def test_shb_one_step_matches_direct_recursion():
    # theta+ = 2 + 0.5*(2-1) - 0.1*4 = 2.1 via the two-sequence form
    q = make_quadratic([1.0])
    p = shb_params(constant(0.5), constant(0.1))
    state = derive_state(0, np.array([2.0]), np.array([1.0]), p, q)  # v = theta - theta_prev
    nxt = unified_step(state, p, np.array([4.0]), q)
    assert nxt.theta[0] == pytest.approx(2.1)


def test_state_identities():
    q = make_quadratic([1.0, 4.0])
    p = snag_params(constant(0.6), constant(0.1))
    st = derive_state(3, np.array([1.0, -2.0]), np.array([0.5, 0.25]), p, q)
    a, b, eps, mu, _ = params_at(p, 3)
    assert np.allclose(st.theta + eps * st.v, st.w, atol=1e-15)
    assert np.allclose(st.u - st.k * st.v, st.w, atol=1e-15)
    assert st.k == pytest.approx(a / (1 - mu))
    assert st.lyapunov == pytest.approx(q.value(st.u) + float(st.v @ st.v))


def test_k_identity_arithmetic():
    # k*mu + a = k at a = 0.9, mu = 0.9 (k = 9)
    a, mu = 0.9, 0.9
    k = a / (1 - mu)
    assert k == pytest.approx(9.0)
    assert k * mu + a == pytest.approx(k)


def test_u_recursion_residual_random_draws():
    rng = np.random.default_rng(1)
    q = make_quadratic([1.0, 4.0])
    for _ in range(200):
        p = custom_params(constant(rng.uniform(0, 2)), constant(rng.uniform(0.2, 2)),
                          constant(rng.uniform(-1, 1)), constant(rng.uniform(0, 0.95)),
                          constant(rng.uniform(0.01, 0.5)))
        state = derive_state(int(rng.integers(0, 50)), rng.normal(size=2),
                             rng.normal(size=2), p, q)
        h = rng.normal(size=2)
        nxt = unified_step(state, p, h, q)
        res = u_recursion_residual(state, nxt, p, h)
        assert res <= 1e-12 * (1.0 + float(np.linalg.norm(state.u)))


def test_u_recursion_decouples_for_constant_parameters():
    q = make_quadratic([2.0])
    p = custom_params(constant(0.45), constant(1.0), constant(0.0),
                      constant(0.5), constant(0.1))
    state = derive_state(0, np.array([1.0]), np.array([0.7]), p, q)
    assert state.delta == 0.0
    h = np.array([1.3])
    nxt = unified_step(state, p, h, q)
    b_plus_k = 1.0 + state.k
    assert nxt.u[0] == pytest.approx(state.u[0] - b_plus_k * 0.1 * h[0], rel=1e-14)


def test_eigen_decoupling_randomized():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p = custom_params(constant(rng.uniform(0, 2)), constant(1.0), constant(0.0),
                          constant(rng.uniform(0, 0.99)), constant(0.1))
        assert eigen_decoupling_check(p, 0) <= 1e-12
        _, Z, Z_inv, _ = decoupling_matrices(p, 0)
        assert np.max(np.abs(Z_inv @ Z - np.eye(2))) <= 1e-12


def test_eigen_decoupling_zero_case_exact():
    p = custom_params(constant(0.0), constant(1.0), constant(0.0),
                      constant(0.0), constant(0.1))
    assert eigen_decoupling_check(p, 0) == 0.0
    A, _, _, Lam = decoupling_matrices(p, 0)
    assert np.array_equal(A, Lam)


def test_eigen_decoupling_rejects_momentum_one():
    p = custom_params(constant(0.5), constant(1.0), constant(0.0),
                      constant(1.0), constant(0.1))
    with pytest.raises(ParameterValidationError):
        eigen_decoupling_check(p, 0)


# ---------------------------------------------------------------------------
# preset trajectory equivalence


def test_shb_matches_direct_recursion_over_long_runs():
    rng = np.random.default_rng(3)
    q = make_quadratic([1.0, 4.0])
    for _ in range(10):
        mu, alpha = random_schedules(rng)
        p = shb_params(mu, alpha)
        hs = rng.normal(size=(1000, 2))
        th_prev = th = np.array([1.0, 1.0])
        state = initial_state(np.array([1.0, 1.0]), p, q)
        for t in range(1000):
            _, _, _, muv, al = params_at(p, t)
            th_next = th + muv * (th - th_prev) - al * hs[t]
            nxt = unified_step(state, p, hs[t], q)
            res = u_recursion_residual(state, nxt, p, hs[t])
            assert res <= 1e-12 * (1.0 + float(np.linalg.norm(state.u)))
            state, th_prev, th = nxt, th, th_next
            scale = 1.0 + float(np.max(np.abs(th)))
            assert np.max(np.abs(state.theta - th)) <= 1e-10 * scale


def test_snag_matches_lookahead_and_direct_recursions():
    """The unified iterate must reproduce the (w, v) lookahead recursion and
    recover the direct-argument sequence through theta = w - mu*v."""
    rng = np.random.default_rng(4)
    q = make_quadratic([1.0, 4.0])
    for _ in range(10):
        mu, alpha = random_schedules(rng)
        p = snag_params(mu, alpha)
        hs = rng.normal(size=(1000, 2))
        th_prev = th = np.array([1.0, 1.0])
        v = np.zeros(2)
        w = th + params_at(p, 0)[3] * v
        state = initial_state(np.array([1.0, 1.0]), p, q)
        for t in range(1000):
            _, _, _, muv, al = params_at(p, t)
            mu_next = params_at(p, t + 1)[3]
            th_next = th + muv * (th - th_prev) - al * hs[t]
            v_next = muv * v - al * hs[t]
            w_next = w + mu_next * muv * v - (1 + mu_next) * al * hs[t]
            state = unified_step(state, p, hs[t], q)
            th_prev, th, v, w = th, th_next, v_next, w_next
            scale = 1.0 + float(np.max(np.abs(w)))
            assert np.max(np.abs(state.w - w)) <= 1e-10 * scale
            assert np.max(np.abs(state.v - v)) <= 1e-10 * scale
            assert np.max(np.abs(state.theta - th)) <= 1e-10 * scale
            assert np.max(np.abs(w - (th + mu_next * v))) <= 1e-10 * scale


# ---------------------------------------------------------------------------
# trajectories


def test_sgd_geometric_decay():
    q = make_quadratic([1.0])
    rec = run(q, exact_oracle(q), sgd_params(constant(0.1)), np.array([1.0]), 60)
    expected = 0.5 * 0.9 ** (2 * np.arange(61))
    assert np.allclose(rec.j_theta, expected, rtol=1e-12)
    assert not rec.diverged


def test_shb_with_zero_momentum_equals_sgd():
    q = make_quadratic([1.0, 4.0])
    oracle = additive_noise_oracle(q, constant(0.5), seed=0)
    a = run(q, oracle, shb_params(constant(0.0), power_law(0.1, -0.6)),
            np.array([1.0, 1.0]), 500, seed=7)
    b = run(q, oracle, sgd_params(power_law(0.1, -0.6)),
            np.array([1.0, 1.0]), 500, seed=7)
    assert np.array_equal(a.j_theta, b.j_theta)
    assert np.array_equal(a.grad_norm, b.grad_norm)


def test_run_emits_horizon_plus_one_rows():
    q = make_quadratic([1.0])
    rec = run(q, exact_oracle(q), sgd_params(constant(0.1)), np.array([1.0]), 123)
    assert rec.rows == 124
    assert rec.t[0] == 0 and rec.t[-1] == 123


def test_run_is_deterministic_given_seed():
    q = make_quadratic([1.0, 4.0])
    oracle = additive_noise_oracle(q, constant(1.0))
    p = shb_params(constant(0.9), power_law(0.5, -0.8))
    a = run(q, oracle, p, np.array([1.0, 1.0]), 300, seed=5)
    b = run(q, oracle, p, np.array([1.0, 1.0]), 300, seed=5)
    assert np.array_equal(a.j_theta, b.j_theta)
    c = run(q, oracle, p, np.array([1.0, 1.0]), 300, seed=6)
    assert not np.array_equal(a.j_theta, c.j_theta)


def test_run_flags_divergence_without_crashing():
    q = make_quadratic([1.0, 4.0])
    p = sgd_params(constant(10.0))  # far above the stability threshold
    rec = run(q, exact_oracle(q), p, np.array([1.0, 1.0]), 200)
    assert rec.diverged
    assert rec.rows < 201
    assert np.all(np.isfinite(rec.j_theta))


def test_running_min_gradient_is_monotone():
    q = make_quadratic([1.0, 4.0])
    oracle = additive_noise_oracle(q, constant(1.0), seed=1)
    rec = run(q, oracle, shb_params(constant(0.8), power_law(0.2, -0.7)),
              np.array([1.0, 1.0]), 2000, seed=3)
    assert np.all(np.diff(rec.running_min_grad) <= 0.0)
    assert np.allclose(rec.running_min_grad, np.minimum.accumulate(rec.grad_norm))


def test_lyapunov_monotone_for_small_constant_step():
    # exact oracle, constant parameters, alpha * L * (b + k) < 1
    q = make_quadratic([1.0, 4.0])
    p = shb_params(constant(0.5), constant(0.04))  # k = 1, b + k = 2, L = 4
    rec = run(q, exact_oracle(q), p, np.array([1.0, -1.0]), 3000)
    assert not rec.diverged
    assert lyapunov_increase_count(rec, burn_in=10) == 0


def test_run_rejects_mismatched_init():
    q = make_quadratic([1.0, 4.0])
    with pytest.raises(ValueError):
        run(q, exact_oracle(q), sgd_params(constant(0.1)), np.array([1.0]), 10)
