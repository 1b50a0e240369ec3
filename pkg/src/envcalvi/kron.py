"""Dense matrix utilities: vectorization, commutation, Kronecker-trace, SPD helpers.

``vec`` is column-major throughout; every Kronecker identity used by the
fitting code assumes that ordering.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import NotPositiveDefiniteError, ValidationError

SYMMETRY_TOL = 1e-10


def vec(M) -> np.ndarray:
    """Stack the columns of ``M`` left to right."""
    return np.asarray(M).reshape(-1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v).reshape(rows, cols, order="F")


class Commutation:
    """Commutation matrix K_{m,n} stored as an index permutation.

    ``K @ vec(A) == vec(A.T)`` for every m-by-n ``A``.  Left and right
    multiplication by dense arrays permute rows or columns without ever
    materializing the (mn)-by-(mn) matrix; :meth:`dense` builds it for tests.
    """

    __slots__ = ("m", "n", "perm", "_inv")
    __array_ufunc__ = None  # make ndarray @ Commutation defer to __rmatmul__

    def __init__(self, m: int, n: int):
        if m < 1 or n < 1:
            raise ValidationError("commutation dimensions must be >= 1", m=m, n=n)
        self.m, self.n = int(m), int(n)
        # (K v)[j + i*n] = v[i + j*m]
        i, j = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
        perm = np.empty(m * n, dtype=np.intp)
        perm[(j + i * n).ravel()] = (i + j * m).ravel()
        self.perm = perm
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        self._inv = inv

    @property
    def shape(self):
        return (self.m * self.n, self.m * self.n)

    @property
    def T(self) -> "Commutation":
        return Commutation(self.n, self.m)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[np.arange(self.perm.size), self.perm] = 1.0
        return out

    def __matmul__(self, other):
        other = np.asarray(other)
        return other[self.perm]

    def __rmatmul__(self, other):
        other = np.asarray(other)
        return other[..., self._inv]

    def conjugate(self, B) -> np.ndarray:
        """Return K B K^T for a square array ``B``."""
        B = np.asarray(B)
        return B[np.ix_(self.perm, self.perm)]


def commutation(m: int, n: int) -> Commutation:
    return Commutation(m, n)


def kron(A, B) -> np.ndarray:
    """Dense Kronecker product of two matrices (a broadcast product, faster than np.kron)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    (a1, a2), (b1, b2) = A.shape, B.shape
    return (A[:, None, :, None] * B[None, :, None, :]).reshape(a1 * b1, a2 * b2)


def add_kron(out, A, B, alpha: float = 1.0) -> np.ndarray:
    """In-place ``out += alpha * kron(A, B)`` on a 4-D view of ``out``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    (a1, a2), (b1, b2) = A.shape, B.shape
    view = out.reshape(a1, b1, a2, b2)
    view += alpha * (A[:, None, :, None] * B[None, :, None, :])
    return out


def ktr(R, B) -> np.ndarray:
    """Kronecker-trace table: entry (i, j) is tr(R @ B_ij) over d-by-d blocks of B."""
    R = np.asarray(R, dtype=float)
    B = np.asarray(B, dtype=float)
    d = R.shape[0]
    if R.shape != (d, d) or B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValidationError("ktr needs square R and square B", R=R.shape, B=B.shape)
    if d == 0:
        return np.zeros((0, 0))
    if B.shape[0] % d:
        raise ValidationError("block size does not divide B", d=d, size=B.shape[0])
    n = B.shape[0] // d
    B4 = B.reshape(n, d, n, d)
    return np.einsum("ab,ibja->ij", R, B4)


def symmetrize(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + S.T)


def check_spd(S, name: str = "matrix") -> np.ndarray:
    """Validate and return a symmetrized SPD copy of ``S``.

    Relative asymmetry above 1e-10 is rejected; positivity is tested by
    Cholesky with an eigenvalue test as fallback.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"{name} must be square", shape=S.shape)
    if not np.all(np.isfinite(S)):
        raise NotPositiveDefiniteError(f"{name} has non-finite entries")
    if S.size == 0:
        return S.copy()
    scale = max(np.abs(S).max(), np.finfo(float).tiny)
    if np.abs(S - S.T).max() > SYMMETRY_TOL * scale:
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    S = symmetrize(S)
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(S)
        if w.min() <= 0:
            raise NotPositiveDefiniteError(
                f"{name} is not positive definite", min_eigenvalue=float(w.min())
            ) from None
    return S


def _eig_spd(S):
    S = check_spd(S)
    w, V = np.linalg.eigh(S)
    if S.size and w.min() <= 0:
        raise NotPositiveDefiniteError("matrix is not positive definite", min_eigenvalue=float(w.min()))
    return w, V


def sqrt_spd(S) -> np.ndarray:
    w, V = _eig_spd(S)
    return symmetrize((V * np.sqrt(w)) @ V.T)


def invsqrt_spd(S) -> np.ndarray:
    w, V = _eig_spd(S)
    return symmetrize((V / np.sqrt(w)) @ V.T)


def _cholesky(S, name="matrix"):
    S = np.asarray(S, dtype=float)
    try:
        return sla.cho_factor(S, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError):
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from None


def logdet_spd(S) -> float:
    S = np.asarray(S, dtype=float)
    if S.size == 0:
        return 0.0
    c, _ = _cholesky(S)
    return 2.0 * float(np.log(np.diag(c)).sum())


def solve_spd(S, B) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    B = np.asarray(B, dtype=float)
    if S.size == 0:
        return np.zeros_like(B)
    return sla.cho_solve(_cholesky(S), B)


def inv_spd(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return symmetrize(solve_spd(S, np.eye(S.shape[0])))
