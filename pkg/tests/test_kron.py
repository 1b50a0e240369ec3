import numpy as np
import pytest

from envcalvi.errors import NotPositiveDefiniteError, ValidationError
from envcalvi.kron import (
    add_kron,
    check_spd,
    commutation,
    inv_spd,
    invsqrt_spd,
    kron,
    ktr,
    logdet_spd,
    solve_spd,
    sqrt_spd,
    unvec,
    vec,
)


def test_vec_is_column_major():
    np.testing.assert_array_equal(vec(np.array([[1, 2], [3, 4]])), [1, 3, 2, 4])


def test_unvec_inverts_vec(rng):
    M = rng.standard_normal((3, 5))
    np.testing.assert_array_equal(unvec(vec(M), 3, 5), M)


def test_commutation_trivial_case_is_identity():
    np.testing.assert_array_equal(commutation(2, 1).dense(), np.eye(2))


@pytest.mark.parametrize("m", range(1, 9))
def test_commutation_transpose_and_involution(m):
    for n in range(1, 9):
        K = commutation(m, n).dense()
        np.testing.assert_array_equal(K.T, commutation(n, m).dense())
        np.testing.assert_array_equal(commutation(n, m).dense() @ K, np.eye(m * n))


def test_commutation_maps_vec_to_vec_of_transpose(rng):
    A = rng.standard_normal((3, 4))
    K = commutation(3, 4)
    np.testing.assert_array_equal(K @ vec(A), vec(A.T))
    np.testing.assert_array_equal(K.dense() @ vec(A), vec(A.T))


def test_commutation_matmul_and_conjugate_match_dense(rng):
    K = commutation(2, 3)
    B = rng.standard_normal((6, 6))
    Kd = K.dense()
    np.testing.assert_allclose(K @ B, Kd @ B)
    np.testing.assert_allclose(B @ K, B @ Kd)
    np.testing.assert_allclose(K.conjugate(B), Kd @ B @ Kd.T)


def test_commutation_rejects_empty():
    with pytest.raises(ValidationError):
        commutation(0, 3)


def test_kron_matches_numpy(rng):
    A, B = rng.standard_normal((2, 3)), rng.standard_normal((4, 1))
    np.testing.assert_allclose(kron(A, B), np.kron(A, B))


def test_kron_mixed_product(rng):
    A, B = rng.standard_normal((2, 3)), rng.standard_normal((3, 2))
    C, D = rng.standard_normal((3, 2)), rng.standard_normal((2, 4))
    np.testing.assert_allclose(kron(A, B) @ kron(C, D), kron(A @ C, B @ D), atol=1e-12)


def test_add_kron_in_place(rng):
    A, B = rng.standard_normal((2, 2)), rng.standard_normal((3, 3))
    out = np.ones((6, 6))
    add_kron(out, A, B, -2.0)
    np.testing.assert_allclose(out, 1.0 - 2.0 * np.kron(A, B))


def test_ktr_identity_times_identity():
    np.testing.assert_allclose(ktr(np.eye(3), np.eye(12)), 3 * np.eye(4))


def test_ktr_scalar_blocks_is_identity_map(rng):
    H = rng.standard_normal((4, 4))
    np.testing.assert_allclose(ktr(np.eye(1), H), H)


def test_ktr_trace_identity(rng):
    S, R = rng.standard_normal((3, 3)), rng.standard_normal((2, 2))
    H = rng.standard_normal((6, 6))
    assert np.trace(np.kron(S, R) @ H) == pytest.approx(np.trace(S @ ktr(R, H)), rel=1e-12)


def test_ktr_rejects_nondividing_block(rng):
    with pytest.raises(ValidationError):
        ktr(np.eye(2), np.eye(5))


def test_invsqrt_of_scaled_identity():
    np.testing.assert_allclose(invsqrt_spd(4 * np.eye(3)), 0.5 * np.eye(3))


def test_sqrt_squares_back(rng):
    S = rng.standard_normal((4, 4))
    S = S @ S.T + np.eye(4)
    R = sqrt_spd(S)
    np.testing.assert_allclose(R @ R, S, atol=1e-12)


def test_logdet_of_diagonal():
    assert logdet_spd(np.diag([2.0, 3.0])) == pytest.approx(np.log(6.0), abs=1e-15)


def test_solve_spd_self_is_identity(rng):
    S = rng.standard_normal((4, 4))
    S = S @ S.T + np.eye(4)
    np.testing.assert_allclose(solve_spd(S, S), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(inv_spd(S) @ S, np.eye(4), atol=1e-12)


def test_check_spd_rejects_indefinite_and_asymmetric():
    with pytest.raises(NotPositiveDefiniteError):
        check_spd(np.diag([1.0, -1.0]))
    with pytest.raises(NotPositiveDefiniteError):
        check_spd(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        check_spd(np.ones((2, 3)))


def test_empty_matrix_helpers():
    assert logdet_spd(np.zeros((0, 0))) == 0.0
    assert ktr(np.zeros((0, 0)), np.zeros((0, 0))).shape == (0, 0)
