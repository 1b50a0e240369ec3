"""Predictor envelope model: dimensions, priors, parameter records and exact densities.

The model is ``Y_i = mu_Y + beta (X_i - mu_X) + e_i`` with ``beta = eta^T Gamma^T``
(eta is m-by-r) and ``X_i ~ N(mu_X, Gamma Omega1 Gamma^T + Gamma0 Omega0 Gamma0^T)``.
The basis is built from an unconstrained (p-m)-by-m matrix ``A``.

Tilde coordinates: ``eta_t = J^{-1/2} eta``, ``Omega1_t = J^{1/2} Omega1 J^{1/2}``,
``Omega0_t = J0^{1/2} Omega0 J0^{1/2}``; means and the conditional covariance
are unchanged.  With them ``beta = eta_t^T C_A^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import envelope as env
from .errors import ValidationError
from .kron import check_spd, invsqrt_spd, logdet_spd, sqrt_spd, symmetrize
from .response import Dataset, gaussian_loglik, log_iw, log_matrix_normal


@dataclass(frozen=True)
class PredictorEnvSpec:
    r: int
    p: int
    m: int

    def validate(self, fitting: bool = True) -> "PredictorEnvSpec":
        if self.r < 1 or self.p < 2:
            raise ValidationError("need r >= 1 and p >= 2", r=self.r, p=self.p)
        lo, hi = (1, self.p - 1) if fitting else (0, self.p)
        if not lo <= self.m <= hi:
            raise ValidationError(f"envelope dimension m must lie in [{lo}, {hi}]", m=self.m)
        return self


@dataclass(frozen=True)
class PredictorPriors:
    PsiY: np.ndarray
    nuY: float
    psiX1: float
    nuX1: float
    psiX0: float
    nuX0: float
    psi_eta0: float
    B0: np.ndarray
    A0: np.ndarray
    U0A: np.ndarray
    V0A: np.ndarray

    @classmethod
    def vague(cls, spec: PredictorEnvSpec, variance: float = 1e6, psi: float = 1e-6) -> "PredictorPriors":
        r, p, m = spec.r, spec.p, spec.m
        return cls(
            PsiY=psi * np.eye(r),
            nuY=float(r),
            psiX1=psi,
            nuX1=float(m),
            psiX0=psi,
            nuX0=float(p - m),
            psi_eta0=variance,
            B0=np.zeros((p, r)),
            A0=np.zeros((p - m, m)),
            U0A=variance * np.eye(p - m),
            V0A=variance * np.eye(m),
        )

    def validate(self, spec: PredictorEnvSpec) -> "PredictorPriors":
        r, p, m = spec.r, spec.p, spec.m
        if min(self.psiX1, self.psiX0, self.psi_eta0) <= 0:
            raise ValidationError("prior scales must be positive")
        if self.nuY <= r - 1:
            raise ValidationError("nuY must exceed r - 1", nuY=self.nuY)
        if m > 0 and self.nuX1 <= m - 1:
            raise ValidationError("nuX1 must exceed m - 1", nuX1=self.nuX1)
        if m < p and self.nuX0 <= p - m - 1:
            raise ValidationError("nuX0 must exceed p - m - 1", nuX0=self.nuX0)
        shapes = {"PsiY": (r, r), "B0": (p, r), "A0": (p - m, m), "U0A": (p - m, p - m), "V0A": (m, m)}
        for name, shape in shapes.items():
            if np.shape(getattr(self, name)) != shape:
                raise ValidationError(f"{name} has wrong shape", expected=shape, got=np.shape(getattr(self, name)))
        check_spd(self.PsiY, "PsiY")
        if m * (p - m):
            check_spd(self.U0A, "U0A")
            check_spd(self.V0A, "V0A")
        return self


@dataclass(frozen=True)
class PredictorNaturalParams:
    muX: np.ndarray
    muY: np.ndarray
    eta: np.ndarray
    Omega1: np.ndarray
    Omega0: np.ndarray
    SigmaYX: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class PredictorTildeParams:
    muX: np.ndarray
    muY: np.ndarray
    eta_t: np.ndarray
    Omega1_t: np.ndarray
    Omega0_t: np.ndarray
    SigmaYX: np.ndarray
    A: np.ndarray


def _roots(A):
    J, J0 = env.j_inner(A), env.j0_inner(A)
    Jh = sqrt_spd(J) if J.size else J
    J0h = sqrt_spd(J0) if J0.size else J0
    Jih = invsqrt_spd(J) if J.size else J
    J0ih = invsqrt_spd(J0) if J0.size else J0
    return Jh, J0h, Jih, J0ih


def reparameterize(nat: PredictorNaturalParams) -> PredictorTildeParams:
    A = np.asarray(nat.A, dtype=float)
    Jh, J0h, Jih, _ = _roots(A)
    return PredictorTildeParams(
        muX=nat.muX,
        muY=nat.muY,
        eta_t=Jih @ nat.eta,
        Omega1_t=symmetrize(Jh @ nat.Omega1 @ Jh),
        Omega0_t=symmetrize(J0h @ nat.Omega0 @ J0h),
        SigmaYX=nat.SigmaYX,
        A=A,
    )


def inverse_reparameterize(tp: PredictorTildeParams) -> PredictorNaturalParams:
    A = np.asarray(tp.A, dtype=float)
    Jh, _, Jih, J0ih = _roots(A)
    return PredictorNaturalParams(
        muX=tp.muX,
        muY=tp.muY,
        eta=Jh @ tp.eta_t,
        Omega1=symmetrize(Jih @ tp.Omega1_t @ Jih),
        Omega0=symmetrize(J0ih @ tp.Omega0_t @ J0ih),
        SigmaYX=tp.SigmaYX,
        A=A,
    )


def beta_from_tilde(A, eta_t) -> np.ndarray:
    """beta = eta_t^T C_A^T (r-by-p)."""
    return np.asarray(eta_t, dtype=float).T @ env.c_block(A).T


def beta_natural(nat: PredictorNaturalParams) -> np.ndarray:
    G, _ = env.gamma_from_A(nat.A)
    return nat.eta.T @ G.T


def x_covariance(nat: PredictorNaturalParams) -> np.ndarray:
    A = np.asarray(nat.A, dtype=float)
    if A.shape[1] == 0:
        return symmetrize(nat.Omega0)
    if A.shape[0] == 0:
        return symmetrize(nat.Omega1)
    G, G0 = env.gamma_from_A(A)
    return symmetrize(G @ nat.Omega1 @ G.T + G0 @ nat.Omega0 @ G0.T)


def x_covariance_tilde(tp: PredictorTildeParams) -> np.ndarray:
    A = tp.A
    C, D = env.c_block(A), env.d_block(A)
    Ji = np.linalg.inv(env.j_inner(A))
    J0i = np.linalg.inv(env.j0_inner(A))
    return symmetrize(C @ Ji @ tp.Omega1_t @ Ji @ C.T + D @ J0i @ tp.Omega0_t @ J0i @ D.T)


def loglik_at(params: PredictorNaturalParams, ds: Dataset) -> float:
    """Joint Gaussian log-likelihood of (X, Y).

    ``m = 0`` (A of shape (p, 0)) means no slope and X covariance Omega0;
    ``m = p`` (A of shape (0, p)) means beta = eta^T and X covariance Omega1.
    """
    A = np.asarray(params.A, dtype=float)
    if A.shape[1] == 0:
        beta = np.zeros((ds.r, ds.p))
    elif A.shape[0] == 0:
        beta = np.asarray(params.eta, dtype=float).T
    else:
        beta = beta_natural(params)
    Xmu = ds.X - params.muX
    out = gaussian_loglik(ds.X, params.muX, x_covariance(params))
    out += gaussian_loglik(ds.Y, params.muY + Xmu @ beta.T, params.SigmaYX)
    return float(out)


def log_posterior(nat: PredictorNaturalParams, ds: Dataset, priors: PredictorPriors) -> float:
    """Unnormalized log posterior over natural parameters (flat priors on both means)."""
    A = np.asarray(nat.A, dtype=float)
    J = env.j_inner(A)
    Jh = sqrt_spd(J)
    out = loglik_at(nat, ds)
    out += log_iw(nat.SigmaYX, priors.PsiY, priors.nuY)
    out += log_iw(nat.Omega1, priors.psiX1, priors.nuX1)
    out += log_iw(nat.Omega0, priors.psiX0, priors.nuX0)
    row_cov = symmetrize(priors.psi_eta0 * J @ nat.Omega1 @ J)
    Sinv = np.linalg.inv(nat.SigmaYX)
    out += log_matrix_normal(nat.eta, Jh @ env.c_block(A).T @ priors.B0, row_cov, -logdet_spd(nat.SigmaYX), Sinv)
    U0inv = np.linalg.inv(priors.U0A)
    out += log_matrix_normal(A.T, priors.A0.T, priors.V0A, -logdet_spd(priors.U0A), U0inv)
    return float(out)


def log_jacobian_tilde(A, r: int) -> float:
    """log |d(natural)/d(tilde)| at fixed A."""
    A = np.asarray(A, dtype=float)
    q, m = A.shape
    ld = logdet_spd(env.j_inner(A))
    return float(0.5 * r * ld - 0.5 * (m + 1) * ld - 0.5 * (q + 1) * ld)


def log_joint_tilde(tp: PredictorTildeParams, ds: Dataset, priors: PredictorPriors) -> float:
    return log_posterior(inverse_reparameterize(tp), ds, priors) + log_jacobian_tilde(tp.A, ds.r)
