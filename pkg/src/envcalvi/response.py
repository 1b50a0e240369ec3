"""Response envelope model: dimensions, priors, parameter records and exact densities.

The model is ``Y_i = mu + Gamma eta X_i + e_i`` with
``e_i ~ N(0, Gamma Omega Gamma^T + Gamma0 Omega0 Gamma0^T)`` and
``(Gamma, Gamma0)`` built from an unconstrained (r-u)-by-u matrix ``A``.

The "tilde" coordinates absorb the inverse square-root factors of the
basis: ``eta_t = J^{1/2} eta``, ``Omega_t = J^{1/2} Omega J^{1/2}``,
``Omega0_t = J0^{1/2} Omega0 J0^{1/2}`` and
``mu_t = mu + C J^{-1} eta_t Xbar`` where ``J = I + A^T A`` and
``J0 = I + A A^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import multigammaln

from . import envelope as env
from .errors import ValidationError
from .kron import check_spd, invsqrt_spd, logdet_spd, solve_spd, sqrt_spd, symmetrize

LOG2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ResponseEnvSpec:
    r: int
    p: int
    u: int

    def validate(self, fitting: bool = True) -> "ResponseEnvSpec":
        if self.r < 2 or self.p < 1:
            raise ValidationError("need r >= 2 and p >= 1", r=self.r, p=self.p)
        lo, hi = (1, self.r - 1) if fitting else (0, self.r)
        if not lo <= self.u <= hi:
            raise ValidationError(f"envelope dimension u must lie in [{lo}, {hi}]", u=self.u)
        return self


@dataclass(frozen=True)
class ResponsePriors:
    """Hyperparameters; inverse-Wishart scales are isotropic (psi * I)."""

    psi1: float
    nu1: float
    psi0: float
    nu0: float
    B0: np.ndarray
    M: np.ndarray
    A0: np.ndarray
    U0A: np.ndarray
    V0A: np.ndarray

    @classmethod
    def vague(cls, spec: ResponseEnvSpec, variance: float = 1e6, psi: float = 1e-6) -> "ResponsePriors":
        r, p, u = spec.r, spec.p, spec.u
        return cls(
            psi1=psi,
            nu1=float(u),
            psi0=psi,
            nu0=float(r - u),
            B0=np.zeros((r, p)),
            M=np.eye(p) / variance,
            A0=np.zeros((r - u, u)),
            U0A=variance * np.eye(r - u),
            V0A=variance * np.eye(u),
        )

    def validate(self, spec: ResponseEnvSpec) -> "ResponsePriors":
        r, p, u = spec.r, spec.p, spec.u
        if self.psi1 <= 0 or self.psi0 <= 0:
            raise ValidationError("inverse-Wishart scales must be positive")
        if u > 0 and self.nu1 <= u - 1:
            raise ValidationError("nu1 must exceed u - 1", nu1=self.nu1, u=u)
        if u < r and self.nu0 <= r - u - 1:
            raise ValidationError("nu0 must exceed r - u - 1", nu0=self.nu0, u=u)
        shapes = {"B0": (r, p), "M": (p, p), "A0": (r - u, u), "U0A": (r - u, r - u), "V0A": (u, u)}
        for name, shape in shapes.items():
            if np.shape(getattr(self, name)) != shape:
                raise ValidationError(f"{name} has wrong shape", expected=shape, got=np.shape(getattr(self, name)))
        check_spd(self.M, "M")
        if u * (r - u):
            check_spd(self.U0A, "U0A")
            check_spd(self.V0A, "V0A")
        return self


@dataclass(frozen=True)
class Dataset:
    Y: np.ndarray
    X: np.ndarray
    Xbar: np.ndarray = field(init=False, repr=False)
    Ybar: np.ndarray = field(init=False, repr=False)
    Xc: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if Y.shape[0] != X.shape[0]:
            raise ValidationError("Y and X must have the same number of rows", Y=Y.shape, X=X.shape)
        if Y.shape[0] < 2:
            raise ValidationError("need at least two observations")
        if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(X))):
            raise ValidationError("data contain non-finite values")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Xbar", X.mean(axis=0))
        object.__setattr__(self, "Ybar", Y.mean(axis=0))
        object.__setattr__(self, "Xc", X - X.mean(axis=0))

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def r(self) -> int:
        return self.Y.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class NaturalParams:
    mu: np.ndarray
    eta: np.ndarray
    Omega: np.ndarray
    Omega0: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class TildeParams:
    mu_t: np.ndarray
    eta_t: np.ndarray
    Omega_t: np.ndarray
    Omega0_t: np.ndarray
    A: np.ndarray


def _root(S, power):
    if S.size == 0:
        return S
    return sqrt_spd(S) if power > 0 else invsqrt_spd(S)


def reparameterize(nat: NaturalParams, Xbar) -> TildeParams:
    A = np.asarray(nat.A, dtype=float)
    J, J0 = env.j_inner(A), env.j0_inner(A)
    Jh, J0h = _root(J, 1), _root(J0, 1)
    eta_t = Jh @ nat.eta
    mu_t = nat.mu + beta_from_tilde(A, eta_t) @ np.asarray(Xbar, dtype=float)
    return TildeParams(
        mu_t=mu_t,
        eta_t=eta_t,
        Omega_t=symmetrize(Jh @ nat.Omega @ Jh),
        Omega0_t=symmetrize(J0h @ nat.Omega0 @ J0h),
        A=A,
    )


def inverse_reparameterize(tp: TildeParams, Xbar) -> NaturalParams:
    A = np.asarray(tp.A, dtype=float)
    J, J0 = env.j_inner(A), env.j0_inner(A)
    Jih, J0ih = _root(J, -1), _root(J0, -1)
    mu = tp.mu_t - beta_from_tilde(A, tp.eta_t) @ np.asarray(Xbar, dtype=float)
    return NaturalParams(
        mu=mu,
        eta=Jih @ tp.eta_t,
        Omega=symmetrize(Jih @ tp.Omega_t @ Jih),
        Omega0=symmetrize(J0ih @ tp.Omega0_t @ J0ih),
        A=A,
    )


def beta_from_tilde(A, eta_t) -> np.ndarray:
    """beta = C J^{-1} eta_t."""
    A = np.asarray(A, dtype=float)
    if A.shape[1] == 0:
        return np.zeros((A.shape[0], np.shape(eta_t)[1]))
    return env.c_block(A) @ np.linalg.solve(env.j_inner(A), eta_t)


def beta_natural(nat: NaturalParams) -> np.ndarray:
    G, _ = env.gamma_from_A(nat.A)
    return G @ nat.eta


def covariance(nat: NaturalParams) -> np.ndarray:
    """Gamma Omega Gamma^T + Gamma0 Omega0 Gamma0^T."""
    G, G0 = env.gamma_from_A(nat.A)
    return symmetrize(G @ nat.Omega @ G.T + G0 @ nat.Omega0 @ G0.T)


def covariance_tilde(tp: TildeParams) -> np.ndarray:
    """Same covariance assembled from tilde coordinates."""
    A = tp.A
    C, D = env.c_block(A), env.d_block(A)
    Ji = np.linalg.inv(env.j_inner(A))
    J0i = np.linalg.inv(env.j0_inner(A))
    return symmetrize(C @ Ji @ tp.Omega_t @ Ji @ C.T + D @ J0i @ tp.Omega0_t @ J0i @ D.T)


def suff_stats(ds: Dataset, mu_q, Sigma_q, priors: ResponsePriors):
    """Return (G1, G2, H) built from the centered design."""
    R = ds.Y - np.asarray(mu_q, dtype=float)
    base = R.T @ R + ds.n * np.asarray(Sigma_q, dtype=float)
    r = ds.r
    G1 = symmetrize(base + priors.psi1 * np.eye(r) + priors.B0 @ priors.M @ priors.B0.T)
    G2 = symmetrize(base + priors.psi0 * np.eye(r))
    H = ds.Xc.T @ ds.Y + priors.M @ priors.B0.T
    return G1, G2, H


def gaussian_loglik(Y, mean, Sigma) -> float:
    """Sum of multivariate normal log densities of the rows of Y."""
    Y = np.atleast_2d(Y)
    E = Y - mean
    n, r = E.shape
    quad = np.sum(E * solve_spd(Sigma, E.T).T)
    return float(-0.5 * (n * r * LOG2PI + n * logdet_spd(Sigma) + quad))


def loglik_at(params: NaturalParams, ds: Dataset) -> float:
    """Gaussian log-likelihood at natural parameters.

    ``u = 0`` (A of shape (r, 0)) means no slope and covariance Omega0;
    ``u = r`` (A of shape (0, r)) means a full slope eta and covariance Omega.
    """
    A = np.asarray(params.A, dtype=float)
    u = A.shape[1]
    if u == 0:
        beta = np.zeros((ds.r, ds.p))
        Sigma = params.Omega0
    elif A.shape[0] == 0:
        beta = np.asarray(params.eta, dtype=float)
        Sigma = params.Omega
    else:
        beta = beta_natural(params)
        Sigma = covariance(params)
    mean = params.mu + ds.X @ beta.T
    return gaussian_loglik(ds.Y, mean, Sigma)


def log_iw(S, scale, nu) -> float:
    """log density of IW_d(Psi, nu) at S; a scalar ``scale`` means Psi = scale * I."""
    d = S.shape[0]
    if d == 0:
        return 0.0
    Psi = scale * np.eye(d) if np.ndim(scale) == 0 else np.asarray(scale, dtype=float)
    return float(
        0.5 * nu * logdet_spd(Psi)
        - 0.5 * nu * d * np.log(2.0)
        - multigammaln(0.5 * nu, d)
        - 0.5 * (nu + d + 1) * logdet_spd(S)
        - 0.5 * np.trace(solve_spd(S, Psi))
    )


def log_matrix_normal(X, mean, row_cov, col_prec_logdet, col_prec) -> float:
    """log MN(X; mean, row_cov, col_cov) with the column covariance given by its precision."""
    X = np.atleast_2d(X)
    a, b = X.shape
    if a * b == 0:
        return 0.0
    E = X - mean
    quad = np.trace(col_prec @ E.T @ solve_spd(row_cov, E))
    return float(-0.5 * (a * b * LOG2PI + b * logdet_spd(row_cov) - a * col_prec_logdet + quad))


def log_posterior(nat: NaturalParams, ds: Dataset, priors: ResponsePriors) -> float:
    """Unnormalized log posterior over natural parameters (flat prior on mu)."""
    A = np.asarray(nat.A, dtype=float)
    G, _ = env.gamma_from_A(A)
    out = loglik_at(nat, ds)
    out += log_iw(nat.Omega, priors.psi1, priors.nu1)
    out += log_iw(nat.Omega0, priors.psi0, priors.nu0)
    out += log_matrix_normal(nat.eta, G.T @ priors.B0, nat.Omega, logdet_spd(priors.M), priors.M)
    U0inv = np.linalg.inv(priors.U0A)
    out += log_matrix_normal(A.T, priors.A0.T, priors.V0A, -logdet_spd(priors.U0A), U0inv)
    return float(out)


def log_jacobian_tilde(A, p: int) -> float:
    """log |d(natural)/d(tilde)| for the map tilde -> natural at fixed A."""
    A = np.asarray(A, dtype=float)
    q, u = A.shape
    ld = logdet_spd(env.j_inner(A))
    return float(-0.5 * p * ld - 0.5 * (u + 1) * ld - 0.5 * (q + 1) * ld)


def log_joint_tilde(tp: TildeParams, ds: Dataset, priors: ResponsePriors) -> float:
    """Unnormalized log posterior density expressed over tilde coordinates."""
    nat = inverse_reparameterize(tp, ds.Xbar)
    return log_posterior(nat, ds, priors) + log_jacobian_tilde(tp.A, ds.p)
