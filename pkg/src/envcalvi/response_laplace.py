"""Nonconjugate A-block of the response model: objective, derivatives, Newton, Laplace factor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import envelope as env
from .errors import ConvergenceError, CurvatureError, ValidationError
from .kron import add_kron, logdet_spd, symmetrize, unvec, vec

ARMIJO_C = 1e-4
MAX_HALVINGS = 60
TAU_START = 1e-8
TAU_MAX = 1e12
GAIN_FLOOR = 1e-12


@dataclass(frozen=True)
class MomentBundle:
    """Expectations under the other variational factors that enter the A objective.

    ``E_Om_inv`` and ``E_Om0_inv`` are the inverse-Wishart means of the
    precision factors; ``Gr1``, ``Gr2`` and ``Hmat`` are the sufficient
    statistics from :func:`envcalvi.response.suff_stats`.
    """

    E_Om_inv: np.ndarray
    E_Om0_inv: np.ndarray
    eta_q: np.ndarray
    Gr1: np.ndarray
    Gr2: np.ndarray
    Hmat: np.ndarray
    kappa: float
    A0: np.ndarray
    U0A_inv: np.ndarray
    V0A_inv: np.ndarray
    blocks: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        u = self.E_Om_inv.shape[0]
        q = self.E_Om0_inv.shape[0]
        if self.A0.shape != (q, u):
            raise ValidationError("A0 shape inconsistent with moment dimensions", A0=self.A0.shape)
        K, L = env.selectors(q + u, u)
        G1, G2 = self.Gr1, self.Gr2
        blocks = {
            "G1_LL": L.T @ G1 @ L,
            "G1_LK": L.T @ G1 @ K,
            "G2_KK": K.T @ G2 @ K,
            "G2_LK": L.T @ G2 @ K,
            "lin_eta": (self.E_Om_inv @ self.eta_q @ self.Hmat @ L).T,
            "const": (
                -0.5 * np.trace(self.E_Om_inv @ K.T @ G1 @ K)
                + np.trace(self.E_Om_inv @ self.eta_q @ self.Hmat @ K)
                - 0.5 * np.trace(self.E_Om0_inv @ L.T @ G2 @ L)
                - 0.5 * np.trace(self.V0A_inv @ self.A0.T @ self.U0A_inv @ self.A0)
            ),
        }
        object.__setattr__(self, "blocks", blocks)

    @property
    def dims(self) -> tuple[int, int]:
        """(r - u, u)."""
        return self.E_Om0_inv.shape[0], self.E_Om_inv.shape[0]


def ftilde(A, mb: MomentBundle, complete: bool = False) -> float:
    """A-dependent part of the expected tilde log joint.

    With ``complete=True`` the A-independent trace terms are added so the
    value equals the compact form ``-1/2 tr(W1 C'G1C) + tr(W1 eta H C)
    - 1/2 tr(W0 D'G2D) + prior + log-det`` without truncation.
    """
    A = np.asarray(A, dtype=float)
    b = mb.blocks
    W1, W0 = mb.E_Om_inv, mb.E_Om0_inv
    logdet = 0.5 * mb.kappa * logdet_spd(env.j0_inner(A))
    quad1 = -0.5 * np.trace(W1 @ A.T @ b["G1_LL"] @ A) - np.sum(b["G1_LK"] @ W1 * A)
    lin1 = np.sum(b["lin_eta"] * A)
    quad0 = -0.5 * np.trace(W0 @ A @ b["G2_KK"] @ A.T) + np.sum(W0 @ b["G2_LK"] * A)
    prior = -0.5 * np.trace(mb.V0A_inv @ A.T @ mb.U0A_inv @ A) + np.sum(mb.U0A_inv @ mb.A0 @ mb.V0A_inv * A)
    out = logdet + quad1 + lin1 + quad0 + prior
    if complete:
        out += b["const"]
    return float(out)


def grad_ftilde(A, mb: MomentBundle) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    b = mb.blocks
    W1, W0 = mb.E_Om_inv, mb.E_Om0_inv
    g = mb.kappa * np.linalg.solve(env.j0_inner(A), A)
    g -= b["G1_LL"] @ A @ W1 + b["G1_LK"] @ W1
    g += b["lin_eta"]
    g += W0 @ b["G2_LK"] - W0 @ A @ b["G2_KK"]
    g -= mb.U0A_inv @ (A - mb.A0) @ mb.V0A_inv
    return g


def hess_ftilde(A, mb: MomentBundle) -> np.ndarray:
    """Hessian of :func:`ftilde` over column-major vec(A)."""
    A = np.asarray(A, dtype=float)
    b = mb.blocks
    H = env.logdet_hessian(A, mb.kappa)
    add_kron(H, mb.E_Om_inv, b["G1_LL"], -1.0)
    add_kron(H, b["G2_KK"], mb.E_Om0_inv, -1.0)
    add_kron(H, mb.V0A_inv, mb.U0A_inv, -1.0)
    return symmetrize(H)


@dataclass(frozen=True)
class OptimResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    steps: tuple = ()


def _newton_direction(g, H):
    """Solve (-H + tau I) d = g with tau doubling from 1e-8 until Cholesky succeeds."""
    negH = -H
    tau = 0.0
    eye = np.eye(H.shape[0])
    while True:
        try:
            c = np.linalg.cholesky(negH + tau * eye)
            y = np.linalg.solve(c, g)
            return np.linalg.solve(c.T, y), ("newton" if tau == 0.0 else "levenberg")
        except np.linalg.LinAlgError:
            tau = TAU_START if tau == 0.0 else 2.0 * tau
            if tau > TAU_MAX:
                return g.copy(), "gradient"


def maximize(f, grad, hess, x0, grad_tol=None, max_newton: int = 200) -> OptimResult:
    """Damped Newton ascent for a smooth function of a flat vector.

    ``grad_tol`` defaults to ``1e-8 (1 + |f|)`` on the sup norm of the
    gradient.  A step whose predicted gain ``g'd`` is below the double
    precision floor ``1e-12 (1 + |f|)`` also ends the iteration: the objective
    is a sum of large cancelling traces, so near the mode the gradient is
    dominated by roundoff long before it meets the sup-norm tolerance.
    """
    x = np.asarray(x0, dtype=float).ravel().copy()
    if not np.all(np.isfinite(x)):
        raise ValidationError("initial point must be finite")
    fx = f(x)
    kinds = []
    for it in range(max_newton + 1):
        g = grad(x)
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        tol = grad_tol if grad_tol is not None else 1e-8 * (1.0 + abs(fx))
        if gnorm <= tol:
            return OptimResult(x, fx, gnorm, it, tuple(kinds))
        if it == max_newton:
            break
        d, kind = _newton_direction(g, hess(x))
        slope = float(g @ d)
        if slope <= 0:
            d, kind, slope = g.copy(), "gradient", float(g @ g)
        if slope <= GAIN_FLOOR * (1.0 + abs(fx)):
            return OptimResult(x, fx, gnorm, it, tuple(kinds))
        accepted = False
        for direction in (d, g):
            slope = float(g @ direction)
            t = 1.0
            for _ in range(MAX_HALVINGS):
                cand = x + t * direction
                fc = f(cand)
                if np.isfinite(fc) and fc >= fx + ARMIJO_C * t * slope:
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                break
            kind = "gradient"
        if not accepted:
            raise ConvergenceError(
                "line search failed", iterate=x.tolist(), grad_norm=gnorm, iteration=it
            )
        kinds.append(kind)
        x, fx = cand, fc
    raise ConvergenceError(
        "Newton iteration did not converge",
        iterate=x.tolist(),
        grad_norm=gnorm,
        iterations=max_newton,
    )


def maximize_ftilde(init, mb: MomentBundle, grad_tol=None, max_newton: int = 200) -> np.ndarray:
    """Return the maximizer of :func:`ftilde` started from ``init``."""
    return maximize_matrix(ftilde, grad_ftilde, hess_ftilde, init, mb, grad_tol, max_newton).x_matrix


@dataclass(frozen=True)
class MatrixResult:
    x_matrix: np.ndarray
    result: OptimResult


def maximize_matrix(fn, gr, hs, init, moments, grad_tol, max_newton) -> MatrixResult:
    init = np.asarray(init, dtype=float)
    rows, cols = init.shape
    res = maximize(
        lambda v: fn(unvec(v, rows, cols), moments),
        lambda v: vec(gr(unvec(v, rows, cols), moments)),
        lambda v: hs(unvec(v, rows, cols), moments),
        vec(init),
        grad_tol=grad_tol,
        max_newton=max_newton,
    )
    return MatrixResult(unvec(res.x, rows, cols), res)


@dataclass(frozen=True)
class LaplaceFactor:
    """Gaussian factor over vec(A): mean at the mode, covariance -H^{-1}."""

    mean_vecA: np.ndarray
    cov: np.ndarray
    A_hat: np.ndarray
    hessian_at_mode: np.ndarray

    @property
    def logdet_cov(self) -> float:
        return logdet_spd(self.cov) if self.cov.size else 0.0

    def entropy(self) -> float:
        d = self.mean_vecA.size
        return 0.5 * d * (1.0 + np.log(2.0 * np.pi)) + 0.5 * self.logdet_cov


def factor_from_hessian(A_hat, H) -> LaplaceFactor:
    """Build the Laplace factor; fails when -H is not positive definite."""
    A_hat = np.asarray(A_hat, dtype=float)
    H = symmetrize(H)
    try:
        c = np.linalg.cholesky(-H)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(H)
        raise CurvatureError(
            "Hessian at the mode is not negative definite", max_eigenvalue=float(w.max())
        ) from None
    ci = np.linalg.inv(c)
    cov = symmetrize(ci.T @ ci)
    return LaplaceFactor(mean_vecA=vec(A_hat).copy(), cov=cov, A_hat=A_hat, hessian_at_mode=H)


def laplace_factor(A_hat, mb: MomentBundle) -> LaplaceFactor:
    return factor_from_hessian(A_hat, hess_ftilde(A_hat, mb))


def degenerate_factor(A_hat) -> LaplaceFactor:
    """Point-mass factor (zero covariance) used before the first Laplace step."""
    A_hat = np.asarray(A_hat, dtype=float)
    k = A_hat.size
    return LaplaceFactor(vec(A_hat).copy(), np.zeros((k, k)), A_hat, np.zeros((k, k)))
