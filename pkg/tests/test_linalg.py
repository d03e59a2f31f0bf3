import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from brittle_membrane.linalg import (
    ContractError,
    ExtReal,
    Mat32,
    Mat33,
    append_column,
    det3,
    gram_det,
    op_norm2,
    wedge_columns,
)

E1, E2, E3 = np.eye(3)


def test_wedge_examples():
    assert np.allclose(wedge_columns(np.column_stack([E1, E2])), E3)
    assert np.allclose(wedge_columns(np.column_stack([E1, 2 * E1])), 0)
    # hand cross product
    A = Mat32([1, 0, 1], [0, 1, 0])
    assert np.allclose(wedge_columns(A), [-1, 0, 1])


def test_gram_det_examples():
    assert gram_det(np.column_stack([E1, E2])) == 1.0
    assert gram_det(np.column_stack([E1, 2 * E1])) == 0.0


def test_lagrange_identity_1000_random():
    rng = np.random.default_rng(11)
    A = rng.uniform(-10, 10, size=(1000, 3, 2))
    w = wedge_columns(A)
    assert np.max(np.abs(gram_det(A) - np.sum(w * w, axis=1)) / (1 + gram_det(A))) < 1e-12


def test_det3_examples():
    assert det3(np.eye(3)) == 1.0
    assert det3(np.eye(3)[:, [1, 0, 2]]) == -1.0
    for t in (0.5, -2.0, 3.25):
        assert det3(append_column(np.column_stack([E1, E2]), [0, 0, t])) == pytest.approx(t)


@settings(max_examples=200, deadline=None)
@given(arrays(float, (3, 3), elements=st.floats(-10, 10)), st.floats(-5, 5))
def test_det3_alternating_multilinear(F, c):
    d = det3(F)
    assert det3(F[:, [1, 0, 2]]) == pytest.approx(-d, abs=1e-9)
    assert det3(F[:, [0, 2, 1]]) == pytest.approx(-d, abs=1e-9)
    G = F.copy()
    G[:, 1] *= c
    assert det3(G) == pytest.approx(c * d, abs=1e-8)
    with np.errstate(divide="ignore", invalid="ignore"):  # LU on exactly singular draws
        ref = np.linalg.det(F)
    assert det3(F) == pytest.approx(ref, abs=1e-9)


def test_extreal_arithmetic():
    inf = ExtReal(math.inf)
    assert inf + 5 == math.inf
    assert inf > 1e300
    assert ExtReal(2.0) * 3 == 6.0
    with pytest.raises(ContractError):
        inf * 0
    with pytest.raises(ContractError):
        0.0 * inf
    with pytest.raises(ContractError):
        ExtReal(float("nan"))
    with pytest.raises(ContractError):
        ExtReal(-math.inf)


def test_mat_wrappers():
    A = Mat32.from_flat([1, 2, 3, 4, 5, 6])
    assert np.array_equal(A.array, [[1, 4], [2, 5], [3, 6]])
    assert A.flat() == (1, 2, 3, 4, 5, 6)
    with pytest.raises(ContractError):
        Mat32([1, 0, np.inf], [0, 1, 0])
    F = Mat33.from_array(np.eye(3))
    assert det3(F) == 1.0


def test_op_norm2_matches_svd():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(100, 2, 2))
    assert np.allclose(op_norm2(M), np.linalg.norm(M, ord=2, axis=(1, 2)))
