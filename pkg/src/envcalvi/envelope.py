"""Envelope-basis geometry shared by the response and predictor models.

For an unconstrained (d - k)-by-k matrix ``A`` the basis blocks are
``C = [I_k; A]`` and ``D = [-A^T; I_{d-k}]``; their orthonormalized versions
span the envelope and its complement.
"""

from __future__ import annotations

import numpy as np

from .kron import Commutation, invsqrt_spd, kron, ktr, symmetrize


def dims_of(A) -> tuple[int, int]:
    """Return (total dimension, envelope dimension) implied by ``A``."""
    A = np.asarray(A)
    return A.shape[0] + A.shape[1], A.shape[1]


def selectors(d: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """K = [I_k; 0] and L = [0; I_{d-k}]."""
    eye = np.eye(d)
    return eye[:, :k], eye[:, k:]


def c_block(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.vstack([np.eye(A.shape[1]), A])


def d_block(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.vstack([-A.T, np.eye(A.shape[0])])


def j_inner(A) -> np.ndarray:
    """C^T C = I + A^T A."""
    A = np.asarray(A, dtype=float)
    return np.eye(A.shape[1]) + A.T @ A


def j0_inner(A) -> np.ndarray:
    """D^T D = I + A A^T."""
    A = np.asarray(A, dtype=float)
    return np.eye(A.shape[0]) + A @ A.T


def gamma_from_A(A) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases (Gamma, Gamma0) of the envelope and its complement."""
    A = np.asarray(A, dtype=float)
    C, D = c_block(A), d_block(A)
    G = C @ invsqrt_spd(j_inner(A)) if A.shape[1] else C
    G0 = D @ invsqrt_spd(j0_inner(A)) if A.shape[0] else D
    return G, G0


def row_cov(cov, rows: int, cols: int) -> np.ndarray:
    """Covariance of vec(X^T) given the covariance of vec(X) for a rows-by-cols X."""
    if rows * cols == 0:
        return np.zeros((0, 0))
    return Commutation(rows, cols).conjugate(cov)


def ktr_blocks(R, cov, blocks: int) -> np.ndarray:
    """ktr with an explicit output size, so empty covariances (boundary dimensions) give zeros."""
    if np.size(cov) == 0:
        return np.zeros((blocks, blocks))
    return ktr(R, cov)


def expected_c_quadratic(C1, C2, A_hat, cov) -> float:
    """E tr(C_A^T C1 C_A C2) for vec(A) ~ N(vec(A_hat), cov)."""
    A_hat = np.asarray(A_hat, dtype=float)
    d, k = dims_of(A_hat)
    _, L = selectors(d, k)
    C = c_block(A_hat)
    return float(np.trace((C.T @ C1 @ C + ktr_blocks(L.T @ C1 @ L, cov, k)) @ C2))


def expected_d_quadratic(C1, C2, A_hat, cov) -> float:
    """E tr(D_A^T C1 D_A C2) for vec(A) ~ N(vec(A_hat), cov)."""
    A_hat = np.asarray(A_hat, dtype=float)
    d, k = dims_of(A_hat)
    K, _ = selectors(d, k)
    D = d_block(A_hat)
    cov_t = row_cov(cov, d - k, k)
    return float(np.trace((D.T @ C1 @ D + ktr_blocks(K.T @ C1 @ K, cov_t, d - k)) @ C2))


def expected_ctc(R, A_hat, cov) -> np.ndarray:
    """E[C_A^T R C_A] (k-by-k)."""
    A_hat = np.asarray(A_hat, dtype=float)
    d, k = dims_of(A_hat)
    _, L = selectors(d, k)
    C = c_block(A_hat)
    return symmetrize(C.T @ R @ C + ktr_blocks(L.T @ R @ L, cov, k))


def expected_dtd(R, A_hat, cov) -> np.ndarray:
    """E[D_A^T R D_A] ((d-k)-by-(d-k))."""
    A_hat = np.asarray(A_hat, dtype=float)
    d, k = dims_of(A_hat)
    K, _ = selectors(d, k)
    D = d_block(A_hat)
    return symmetrize(D.T @ R @ D + ktr_blocks(K.T @ R @ K, row_cov(cov, d - k, k), d - k))


def expected_cwct(W, A_hat, cov) -> np.ndarray:
    """E[C_A W C_A^T] (d-by-d) for a k-by-k W."""
    A_hat = np.asarray(A_hat, dtype=float)
    d, k = dims_of(A_hat)
    _, L = selectors(d, k)
    C = c_block(A_hat)
    return symmetrize(C @ W @ C.T + L @ ktr_blocks(W, row_cov(cov, d - k, k), d - k) @ L.T)


def expected_dwdt(W, A_hat, cov) -> np.ndarray:
    """E[D_A W D_A^T] (d-by-d) for a (d-k)-by-(d-k) W."""
    A_hat = np.asarray(A_hat, dtype=float)
    d, k = dims_of(A_hat)
    K, _ = selectors(d, k)
    D = d_block(A_hat)
    return symmetrize(D @ W @ D.T + K @ ktr_blocks(W, cov, k) @ K.T)


def logdet_hessian(A, kappa: float) -> np.ndarray:
    """Hessian over vec(A) of (kappa/2) log|I + A A^T|."""
    A = np.asarray(A, dtype=float)
    q, k = A.shape
    J0inv = np.linalg.inv(j0_inner(A))
    JA = J0inv @ A
    H = kron(np.eye(k) - A.T @ JA, J0inv)
    # (JA^T kron JA) K_{q,k}, written entrywise on the (k, q, k, q) view
    H.reshape(k, q, k, q)[...] -= JA.T[:, None, None, :] * JA[None, :, :, None]
    H *= kappa
    return H
