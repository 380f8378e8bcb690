import math

import numpy as np
import pytest

from momenta.objectives import make_quadratic, with_call_counter
from momenta.oracles import (additive_noise_oracle, audit_oracle, biased_oracle,
                             blum_oracle, declared_envelope, exact_oracle,
                             sample_gradient, spsa_oracle, with_seed)
from momenta.schedules import constant, eval_schedule, power_law


def test_exact_oracle_returns_gradient():
    q = make_quadratic([1.0, 4.0])
    h = sample_gradient(exact_oracle(q), np.array([1.0, 1.0]), 0)
    assert np.array_equal(h, [1.0, 4.0])


def test_spsa_exact_on_1d_quadratic():
    # symmetric differences are exact for quadratics: h = 2 regardless of the
    # perturbation sign
    q = make_quadratic([1.0])
    o = spsa_oracle(q, constant(0.1), 0.0, seed=1)
    for rep in range(8):
        h = sample_gradient(o, np.array([2.0]), 0, rep=rep)
        assert h[0] == pytest.approx(2.0, abs=1e-12)


def test_spsa_2d_values_and_sign_average():
    # J = |x|^2/2 at (1,2), c=0.1: the estimate is (3,3) or (-1,1) depending
    # on the signs, and the average over all four sign vectors is the true
    # gradient (1,2)
    q = make_quadratic([1.0, 1.0])
    w = np.array([1.0, 2.0])

    def by_formula(d1, d2):
        delta = np.array([d1, d2], dtype=float)
        c = 0.1
        return (q.value(w + c * delta) - q.value(w - c * delta)) / (2 * c * delta)

    outcomes = {tuple(np.round(by_formula(s1, s2), 12))
                for s1 in (1, -1) for s2 in (1, -1)}
    assert outcomes == {(3.0, 3.0), (-1.0, 1.0)}
    mean = np.mean([by_formula(s1, s2) for s1 in (1, -1) for s2 in (1, -1)], axis=0)
    assert np.allclose(mean, [1.0, 2.0], atol=1e-12)

    o = spsa_oracle(q, constant(0.1), 0.0, seed=5)
    seen = {tuple(np.round(sample_gradient(o, w, 0, rep=r), 12)) for r in range(64)}
    assert seen == outcomes


def test_spsa_uses_exactly_two_evaluations_and_no_gradient():
    q, counter = with_call_counter(make_quadratic([1.0, 4.0]))
    o = spsa_oracle(q, constant(0.1), 0.5, seed=0)
    sample_gradient(o, np.array([1.0, 1.0]), 3)
    assert counter.value_calls == 2
    assert counter.gradient_calls == 0


def test_blum_uses_d_plus_one_evaluations_and_no_gradient():
    q, counter = with_call_counter(make_quadratic([1.0, 2.0, 4.0]))
    o = blum_oracle(q, constant(0.1), 0.5, seed=0)
    sample_gradient(o, np.array([1.0, 1.0, 1.0]), 3)
    assert counter.value_calls == 4
    assert counter.gradient_calls == 0


def test_blum_bias_is_exactly_half_c_diag():
    # forward differences on x'Dx/2 overshoot by c/2 * D_ii per coordinate
    q = make_quadratic([1.0, 4.0])
    c = 0.05
    o = blum_oracle(q, constant(c), 0.0, seed=0)
    w = np.array([1.0, -0.5])
    h = sample_gradient(o, w, 0)
    assert np.allclose(h - q.gradient(w), [c / 2 * 1.0, c / 2 * 4.0], atol=1e-10)


def test_determinism_and_replication_independence():
    q = make_quadratic([1.0, 4.0])
    for o in (additive_noise_oracle(q, constant(1.0), seed=9),
              spsa_oracle(q, constant(0.1), 1.0, seed=9),
              blum_oracle(q, constant(0.1), 1.0, seed=9)):
        w = np.array([0.3, -0.7])
        a = sample_gradient(o, w, 5, rep=2)
        b = sample_gradient(o, w, 5, rep=2)
        assert np.array_equal(a, b)
        c = sample_gradient(o, w, 5, rep=3)
        assert not np.array_equal(a, c)
        rebuilt = with_seed(o, 9)
        assert np.array_equal(a, sample_gradient(rebuilt, w, 5, rep=2))


def test_nonfinite_query_point_rejected():
    q = make_quadratic([1.0, 4.0])
    o = spsa_oracle(q, constant(0.1), 0.0)
    with pytest.raises(ValueError):
        sample_gradient(o, np.array([np.nan, 0.0]), 0)


def test_overflowing_function_value_reported():
    q = make_quadratic([1.0, 4.0])
    o = additive_noise_oracle(q, constant(1.0))
    with pytest.raises(FloatingPointError, match="non-finite objective value"):
        sample_gradient(o, np.array([1e200, 1e200]), 0)


# ---------------------------------------------------------------------------
# audits


def test_audit_exact_oracle_is_noise_free():
    q = make_quadratic([1.0, 4.0])
    audit = audit_oracle(exact_oracle(q), np.array([1.0, 1.0]), 0, 1000)
    assert audit.estimated_bias_norm == 0.0
    assert audit.estimated_cond_variance == 0.0
    assert audit.passed


def test_audit_requires_enough_replications():
    q = make_quadratic([1.0])
    with pytest.raises(ValueError):
        audit_oracle(exact_oracle(q), np.zeros(1), 0, 10)


def test_additive_noise_unbiased_and_variance_tight():
    q = make_quadratic([1.0, 4.0])
    o = additive_noise_oracle(q, constant(1.0), seed=3)
    w = np.array([1.0, 1.0])
    audit = audit_oracle(o, w, 0, 100_000)
    se = math.sqrt(audit.estimated_cond_variance / audit.replications)
    assert audit.estimated_bias_norm <= 4 * se
    # the noise is scaled so the conditional second moment meets the envelope
    # exactly: M^2 (1 + J(w)) with M = 1, J = 2.5
    assert audit.estimated_cond_variance == pytest.approx(3.5, rel=0.05)
    assert audit.passed


def test_biased_oracle_exercises_envelope_boundary():
    q = make_quadratic([1.0, 4.0])
    o = biased_oracle(q, bias_scale=constant(0.2), seed=4, bias_ratio=1.0)
    w = np.array([1.0, 1.0])
    h = sample_gradient(o, w, 0)
    g = q.gradient(w)
    expected = 0.2 * (1.0 + float(np.linalg.norm(g)))
    assert np.linalg.norm(h - g) == pytest.approx(expected, rel=1e-12)
    audit = audit_oracle(o, w, 7, 2000)
    assert audit.passed
    assert audit.estimated_bias_norm == pytest.approx(audit.bias_bound, rel=1e-9)


def test_spsa_audit_passes_on_quadratic():
    q = make_quadratic([1.0, 4.0])
    o = spsa_oracle(q, constant(0.1), 0.0, seed=5)
    audit = audit_oracle(o, np.array([1.0, 1.0]), 0, 20_000)
    assert audit.passed
    # symmetric differences are conditionally unbiased on quadratics
    se = math.sqrt(audit.estimated_cond_variance / audit.replications)
    assert audit.estimated_bias_norm <= 4 * se


def test_spsa_measurement_noise_variance_scale():
    # at the origin the cross terms vanish and the conditional variance is
    # d * sigma^2 / (2 c^2) exactly
    q = make_quadratic([1.0, 1.0])
    sigma, c = 1.0, 0.01
    o = spsa_oracle(q, constant(c), sigma, seed=6)
    audit = audit_oracle(o, np.zeros(2), 0, 20_000)
    assert audit.estimated_cond_variance == pytest.approx(2 * sigma**2 / (2 * c**2), rel=0.05)
    assert audit.passed


def test_blum_audit_passes_with_noise():
    q = make_quadratic([1.0, 4.0])
    o = blum_oracle(q, constant(0.05), 0.3, seed=7)
    audit = audit_oracle(o, np.array([0.5, 0.5]), 2, 5000)
    assert audit.passed


def test_declared_envelope_shapes():
    q = make_quadratic([1.0, 4.0])
    assert declared_envelope(exact_oracle(q), 0) == (0.0, 0.0)
    b, m = declared_envelope(additive_noise_oracle(q, power_law(2.0, 0.25)), 3)
    assert b == 0.0 and m == pytest.approx(eval_schedule(power_law(2.0, 0.25), 3))
    with pytest.raises(ValueError):
        declared_envelope(spsa_oracle(q, constant(0.0)), 0)  # increment must be > 0


# ---------------------------------------------------------------------------
# envelope scaling in the increment


def test_blum_bias_slope_is_one():
    # log-log regression of the bias norm against c over [1e-3, 1e-1]
    q = make_quadratic([1.0, 4.0])
    w = np.array([1.0, -0.5])
    cs = np.geomspace(1e-3, 1e-1, 9)
    biases = []
    for c in cs:
        o = blum_oracle(q, constant(float(c)), 0.0, seed=8)
        h = sample_gradient(o, w, 0)
        biases.append(float(np.linalg.norm(h - q.gradient(w))))
    slope = np.polyfit(np.log(cs), np.log(biases), 1)[0]
    assert abs(slope - 1.0) <= 0.15


def test_spsa_variance_slope_is_minus_two():
    q = make_quadratic([1.0, 1.0])
    w = np.array([0.1, 0.1])
    cs = np.geomspace(1e-3, 1e-1, 7)
    variances = []
    for c in cs:
        o = spsa_oracle(q, constant(float(c)), 1.0, seed=9)
        audit = audit_oracle(o, w, 0, 4000)
        variances.append(audit.estimated_cond_variance)
    slope = np.polyfit(np.log(cs), np.log(variances), 1)[0]
    assert abs(slope - (-2.0)) <= 0.15
