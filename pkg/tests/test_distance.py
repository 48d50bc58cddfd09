import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from csmatch.data import CaliperSpec, Norm, ScalingMatrix
from csmatch.distance import distance_matrix, pairwise, scaled_distance
from csmatch.errors import DimensionMismatch

from conftest import make_ds


def test_linf_scaled_example():
    V = ScalingMatrix.from_pi([2.0, 5.0])
    assert scaled_distance([2.0, 5.0], [0.0, 0.0], V, Norm.LINF) == 1.0


def test_l2_three_four_five():
    V = ScalingMatrix.from_pi([1.0, 1.0])
    assert scaled_distance([3.0, 4.0], [0.0, 0.0], V, "l2") == 5.0


@pytest.mark.parametrize("norm", list(Norm))
def test_identical_points(norm):
    V = ScalingMatrix.from_pi([0.3, 7.0, 2.0])
    assert scaled_distance([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], V, norm) == 0.0


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        scaled_distance([1.0, 2.0], [1.0], ScalingMatrix.from_pi([1.0, 1.0]), Norm.L2)


def test_matrix_hand_example():
    # |x - y| for T = {0, 10}, C = {1, 2, 11}
    ds = make_ds([0.0, 10.0], [1.0, 2.0, 11.0])
    D = distance_matrix(ds, CaliperSpec(pi=(1.0,)))
    assert D.d.tolist() == [[1.0, 2.0, 11.0], [9.0, 8.0, 1.0]]
    assert D.treated_ids == ("t000", "t001") and D.control_ids == ("c000", "c001", "c002")


def test_matrix_single_pair_and_duplicate_columns():
    ds = make_ds([[0.5, 1.5]], [[0.5, 1.5], [2.0, 0.0], [2.0, 0.0]])
    D = distance_matrix(ds, CaliperSpec(pi=(1.0, 1.0), norm=Norm.L2))
    assert D.d[0, 0] == 0.0
    assert D.d[0, 1] == D.d[0, 2]


finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5).flatmap(lambda p: st.tuples(
    arrays(float, (3, p), elements=finite),
    arrays(float, (p,), elements=st.floats(0.01, 10)))),
    st.sampled_from(list(Norm)))
def test_metric_axioms(data, norm):
    pts, pi = data
    V = ScalingMatrix.from_pi(pi)
    a, b, c = pts
    dab = scaled_distance(a, b, V, norm)
    assert dab >= 0
    assert dab == scaled_distance(b, a, V, norm)
    assert dab <= scaled_distance(a, c, V, norm) + scaled_distance(c, b, V, norm) + 1e-9 * (1 + dab)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4).flatmap(lambda p: st.tuples(
    arrays(float, (4, p), elements=finite), arrays(float, (5, p), elements=finite),
    arrays(float, (p,), elements=st.floats(0.01, 10)))))
def test_pairwise_matches_scalar_bitwise(data):
    A, B, pi = data
    V = ScalingMatrix.from_pi(pi)
    for norm in Norm:
        M = pairwise(A, B, pi, norm)
        for i in range(A.shape[0]):
            for j in range(B.shape[0]):
                assert M[i, j] == scaled_distance(A[i], B[j], V, norm)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (6,), elements=finite), arrays(float, (6,), elements=st.floats(0.01, 10)))
def test_linf_below_l2(diff, pi):
    V = ScalingMatrix.from_pi(pi)
    z = np.zeros(6)
    assert scaled_distance(diff, z, V, Norm.LINF) <= scaled_distance(diff, z, V, Norm.L2) * (1 + 1e-12)


def test_blocked_matrix_equals_unblocked(rng):
    A = rng.normal(size=(600, 3))
    B = rng.normal(size=(40, 3))
    pi = np.array([0.5, 1.0, 2.0])
    M = pairwise(A, B, pi, Norm.L2)
    ref = np.sqrt((((A[:, None, :] - B[None]) / pi) ** 2).sum(-1))
    np.testing.assert_allclose(M, ref, rtol=1e-14)
