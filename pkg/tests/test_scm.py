import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csmatch.data import CaliperSpec, Norm, Policy, ScalingMatrix
from csmatch.distance import distance_matrix
from csmatch.errors import SolverFailure
from csmatch.matching import one_nn_match, radius_match
from csmatch.scm import Scheme, assign_weights, imbalance, scm_weights, scm_weights_l2, scm_weights_linf

from conftest import make_ds
from oracles import simplex_grid_min

UNIT2 = ScalingMatrix.from_pi([1.0, 1.0])


def test_single_control():
    V = ScalingMatrix.from_pi([0.5, 2.0])
    w, v = scm_weights_linf(np.array([0.0, 0.0]), np.array([[1.0, 1.0]]), V)
    assert w.tolist() == [1.0] and v == 2.0


def test_linf_midpoint():
    w, v = scm_weights_linf(np.array([0.5]), np.array([[0.0], [1.0]]), ScalingMatrix.from_pi([1.0]))
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)
    assert v == pytest.approx(0.0, abs=1e-12)


def test_linf_triangle():
    w, v = scm_weights_linf(np.array([0.5, 0.5]), np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), UNIT2)
    np.testing.assert_allclose(w, [0.0, 0.5, 0.5], atol=1e-12)
    assert v == pytest.approx(0.0, abs=1e-12)


def test_l2_outside_hull_1d():
    w, v = scm_weights_l2(np.array([2.0]), np.array([[0.0], [1.0]]), ScalingMatrix.from_pi([1.0]))
    np.testing.assert_allclose(w, [0.0, 1.0], atol=1e-12)
    assert v == pytest.approx(1.0)


def test_l2_segment_projection():
    # min (1 - 2 w)^2 + 1 over w in [0, 1] -> w = 1/2, value 1
    w, v = scm_weights_l2(np.array([1.0, 1.0]), np.array([[0.0, 0.0], [2.0, 0.0]]), UNIT2)
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-9)
    assert v == pytest.approx(1.0, abs=1e-9)


def test_l2_inside_hull(rng):
    for _ in range(20):
        p = int(rng.integers(1, 5))
        Xc = rng.normal(size=(p + 3, p))
        lam = rng.dirichlet(np.ones(p + 3))
        x_t = lam @ Xc
        _, v = scm_weights_l2(x_t, Xc, ScalingMatrix.from_pi(np.ones(p)), tol=1e-8)
        assert v <= 1e-8


def test_l2_iteration_budget():
    r = np.random.default_rng(1)
    with pytest.raises(SolverFailure):
        scm_weights_l2(r.normal(size=5) + 10, r.normal(size=(30, 5)), ScalingMatrix.from_pi(np.ones(5)),
                       tol=1e-14, max_iter=1)


def test_assign_uniform_and_one_nn():
    ds = make_ds([0.0], [0.5, -0.5, 0.25])
    spec = CaliperSpec(pi=(1.0,), c=1.0)
    D = distance_matrix(ds, spec)
    ws = assign_weights(radius_match(ds, D, spec), ds, spec, Scheme.UNIFORM)
    assert ws.units[0].weights.tolist() == [1 / 3] * 3
    ds = make_ds([0.0], [0.5, -0.5, 2.0])
    D = distance_matrix(ds, spec)
    ws = assign_weights(one_nn_match(ds, D), ds, spec, Scheme.ONE_NN)
    assert ws.units[0].weights.tolist() == [0.5, 0.5]


def test_assign_scm_exact_match():
    ds = make_ds([[0.3, 0.7]], [[0.3, 0.7], [0.9, 0.1]])
    spec = CaliperSpec(pi=(1.0, 1.0), c=2.0)
    u = assign_weights(radius_match(ds, distance_matrix(ds, spec), spec), ds, spec).units[0]
    np.testing.assert_allclose(u.weights, [1.0, 0.0], atol=1e-12)
    assert u.imbalance == pytest.approx(0.0, abs=1e-12)


def test_assign_skips_unmatched():
    ds = make_ds([0.0, 9.0], [0.5])
    spec = CaliperSpec(pi=(1.0,), c=1.0)
    ws = assign_weights(radius_match(ds, distance_matrix(ds, spec), spec), ds, spec)
    assert ws.skipped == ("t001",) and len(ws.units) == 1


@pytest.mark.parametrize("seed", range(30))
def test_agrees_with_grid_oracle(seed):
    r = np.random.default_rng(seed)
    m, p = int(r.integers(1, 5)), int(r.integers(1, 5))
    x_t, Xc = r.uniform(size=p), r.uniform(size=(m, p))
    pi = r.uniform(0.5, 2.0, size=p)
    for norm in ("linf", "l2"):
        grid = simplex_grid_min(x_t, Xc, pi, norm)
        _, value = scm_weights(x_t, Xc, ScalingMatrix.from_pi(pi), norm)
        assert value <= grid + 1e-9
        assert grid - value <= 2e-3


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(Norm)))
def test_weights_on_simplex_and_beat_baselines(seed, norm):
    r = np.random.default_rng(seed)
    m, p = int(r.integers(1, 25)), int(r.integers(1, 7))
    x_t, Xc = r.normal(size=p), r.normal(size=(m, p))
    V = ScalingMatrix.from_pi(r.uniform(0.1, 3.0, size=p))
    w, v = scm_weights(x_t, Xc, V, norm)
    assert np.all(w >= 0) and abs(w.sum() - 1.0) <= 1e-12
    assert v == imbalance(x_t, Xc, w, V, norm)
    uniform = imbalance(x_t, Xc, np.full(m, 1.0 / m), V, norm)
    nearest = min(imbalance(x_t, Xc, np.eye(m)[j], V, norm) for j in range(m))
    slack = 1e-9 * (1.0 + uniform)
    assert v <= uniform + slack
    assert v <= nearest + slack


def test_solvers_handle_duplicate_and_collinear_controls():
    Xc = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [2.0, 2.0]])
    x_t = np.array([1.5, 0.5])
    for norm in Norm:
        w, v = scm_weights(x_t, Xc, UNIT2, norm)
        expected = 0.5 if norm is Norm.LINF else np.sqrt(0.5)
        assert v == pytest.approx(expected, abs=1e-9)


def test_kbounded_pipeline_weights_simplex(rng):
    ds = make_ds(rng.uniform(size=(20, 3)), rng.uniform(size=(60, 3)))
    spec = CaliperSpec(pi=(0.2, 0.2, 0.2), policy=Policy.K_BOUNDED, k_max=5)
    ws = assign_weights(radius_match(ds, distance_matrix(ds, spec), spec), ds, spec)
    for u in ws.units:
        assert abs(u.weights.sum() - 1) <= 1e-12 and u.weights.min() >= 0
