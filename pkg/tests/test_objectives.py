import numpy as np
import pytest

from momenta.objectives import (PL_1D_BOX, PL_1D_CERTIFIED_K, make_double_well,
                                make_pl_nonconvex_1d, make_quadratic,
                                verify_descent_lemma, with_call_counter)


def builtin_objectives():
    return [make_quadratic([1.0, 4.0]), make_pl_nonconvex_1d(), make_double_well()]


def sample_points(obj, n, seed=0):
    rng = np.random.default_rng(seed)
    if obj.name == "pl_nonconvex_1d":
        return rng.uniform(PL_1D_BOX[0], PL_1D_BOX[1], size=(n, 1))
    if obj.name == "double_well":
        # keep a margin around the clamp radius, where the second derivative
        # jumps and finite differences lose an order
        pts = rng.uniform(-4.0, 4.0, size=(n, 1))
        return pts[np.abs(np.abs(pts[:, 0]) - 2.0) > 1e-3]
    return rng.uniform(-3.0, 3.0, size=(n, obj.dimension))


# ---------------------------------------------------------------------------
# quadratic


def test_quadratic_constants_and_values():
    q = make_quadratic([1.0, 4.0])
    assert q.lipschitz_l == 4.0
    assert q.pl_constant == 2.0
    assert q.value(np.array([1.0, 0.0])) == 0.5
    assert np.allclose(q.gradient(np.array([1.0, 0.0])), [1.0, 0.0])


def test_quadratic_minimizer():
    q = make_quadratic([1.0])
    assert q.value(np.zeros(1)) == 0.0
    assert np.allclose(q.gradient(np.zeros(1)), [0.0])


def test_quadratic_sandwich_at_ones():
    # |grad J|^2 = 17 sits between K*J = 5 and 2*L*J = 20 at (1, 1)
    q = make_quadratic([1.0, 4.0])
    x = np.array([1.0, 1.0])
    gsq = float(np.dot(q.gradient(x), q.gradient(x)))
    assert gsq == pytest.approx(17.0)
    assert gsq <= 2 * q.lipschitz_l * q.value(x) + 1e-12
    assert gsq >= q.pl_constant * q.value(x) - 1e-12


def test_quadratic_rejects_bad_diagonal():
    with pytest.raises(ValueError):
        make_quadratic([1.0, 0.0])
    with pytest.raises(ValueError):
        make_quadratic([])


# ---------------------------------------------------------------------------
# 1-d nonconvex gradient-dominated function


def test_pl1d_minimizer_and_handworked_point():
    f = make_pl_nonconvex_1d()
    assert f.value(np.zeros(1)) == 0.0
    assert np.allclose(f.gradient(np.zeros(1)), [0.0])
    assert f.value(np.array([np.pi])) == pytest.approx(np.pi**2, rel=1e-12)
    assert f.gradient(np.array([np.pi]))[0] == pytest.approx(2 * np.pi, rel=1e-12)


def test_pl1d_certified_constant_on_box():
    # independent dense-grid recertification of the stored lower bound
    f = make_pl_nonconvex_1d()
    x = np.linspace(PL_1D_BOX[0], PL_1D_BOX[1], 400_001)
    x = x[np.abs(x) > 1e-9]
    ratio = (2 * x + 3 * np.sin(2 * x)) ** 2 / (x**2 + 3 * np.sin(x) ** 2)
    assert ratio.min() > PL_1D_CERTIFIED_K
    assert f.pl_constant == PL_1D_CERTIFIED_K


# ---------------------------------------------------------------------------
# double well


def test_double_well_shape():
    f = make_double_well()
    roots = np.sort(np.roots([1.0, 0.0, -1.0, 0.25]).real)
    lo, mid, hi = roots
    assert f.value(np.array([lo])) == pytest.approx(0.0, abs=1e-12)
    assert abs(f.gradient(np.array([lo]))[0]) < 1e-9
    assert abs(f.gradient(np.array([hi]))[0]) < 1e-9
    # the shallow well is a positive-value critical point: no gradient
    # domination constant can exist
    assert f.value(np.array([hi])) > 0.1
    assert f.pl_constant is None


def test_double_well_linear_tails():
    f = make_double_well()
    g3 = f.gradient(np.array([3.0]))[0]
    g9 = f.gradient(np.array([9.0]))[0]
    assert g3 == g9  # constant slope beyond the clamp radius
    assert f.value(np.array([9.0])) > f.value(np.array([3.0]))
    assert f.gradient(np.array([-5.0]))[0] < 0


def test_double_well_nonnegative_everywhere():
    f = make_double_well()
    xs = np.linspace(-8, 8, 4001)
    assert all(f.value(np.array([x])) >= 0.0 for x in xs)


def test_double_well_parameter_validation():
    with pytest.raises(ValueError):
        make_double_well(tilt=0.0)
    with pytest.raises(ValueError):
        make_double_well(tilt=0.5)  # single well
    with pytest.raises(ValueError):
        make_double_well(clamp_radius=1.0)


# ---------------------------------------------------------------------------
# shared analytic invariants


@pytest.mark.parametrize("obj", builtin_objectives(), ids=lambda o: o.name)
def test_gradient_norm_bounded_by_value(obj):
    # with the minimum normalized to zero, |grad J|^2 <= 2 L J holds globally
    for x in sample_points(obj, 400):
        g = obj.gradient(x)
        assert float(np.dot(g, g)) <= 2 * obj.lipschitz_l * obj.value(x) + 1e-10


@pytest.mark.parametrize("obj", builtin_objectives(), ids=lambda o: o.name)
def test_gradient_matches_central_differences(obj):
    step = 1e-5
    for x in sample_points(obj, 1000, seed=1):
        g = obj.gradient(x)
        for i in range(obj.dimension):
            e = np.zeros(obj.dimension)
            e[i] = step
            fd = (obj.value(x + e) - obj.value(x - e)) / (2 * step)
            assert fd == pytest.approx(g[i], rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("obj", [make_quadratic([1.0, 4.0]), make_pl_nonconvex_1d()],
                         ids=lambda o: o.name)
def test_gradient_domination_on_samples(obj):
    for x in sample_points(obj, 500, seed=2):
        g = obj.gradient(x)
        assert float(np.dot(g, g)) >= obj.pl_constant * (obj.value(x) - obj.j_star) - 1e-10


@pytest.mark.parametrize("obj", builtin_objectives(), ids=lambda o: o.name)
def test_descent_lemma_on_builtin(obj):
    assert verify_descent_lemma(obj, samples=1000, seed=3)


def test_descent_lemma_zero_displacement_is_equality():
    q = make_quadratic([1.0, 4.0])
    x = np.array([0.7, -1.3])
    assert q.value(x + 0) == q.value(x) + float(np.dot(q.gradient(x), np.zeros(2)))


def test_descent_lemma_flags_understated_constant():
    import dataclasses
    q = dataclasses.replace(make_quadratic([1.0, 4.0]), lipschitz_l=0.5)
    with pytest.raises(AssertionError, match="descent bound violated"):
        verify_descent_lemma(q, samples=200, seed=4)


def test_call_counter_wrapper():
    q, counter = with_call_counter(make_quadratic([1.0, 4.0]))
    q.value(np.ones(2))
    q.value(np.ones(2))
    q.gradient(np.ones(2))
    assert counter.value_calls == 2
    assert counter.gradient_calls == 1
