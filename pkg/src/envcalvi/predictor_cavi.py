"""Coordinate-ascent Laplace variational inference for the predictor envelope model.

The variational family is q(mu_X) q(mu_Y) q(Sigma) q(vec eta_t) q(Omega1_t)
q(Omega0_t) q(vec A) with a full mr-dimensional Gaussian for eta_t and a
Laplace factor for A.  In the comments ``W_Y``, ``W1`` and ``W0`` are the
inverse-Wishart means of the three precision factors and ``E_eta`` is
E[eta_t W_Y eta_t^T].
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import envelope as env
from .errors import EnvcalviError, ValidationError
from .kron import add_kron, check_spd, inv_spd, kron, logdet_spd, symmetrize, unvec, vec
from .predictor import (
    Dataset,
    PredictorEnvSpec,
    PredictorNaturalParams,
    PredictorPriors,
    PredictorTildeParams,
    inverse_reparameterize,
)
from .response_cavi import FitOptions, FitReport, has_converged, relative_drift
from .response_laplace import (
    LaplaceFactor,
    degenerate_factor,
    factor_from_hessian,
    maximize_matrix,
)
from .special import (
    LOG2PI,
    expected_logdet_inverse,
    gaussian_entropy,
    iw_entropy,
    iw_log_normalizer,
)


@dataclass(frozen=True)
class PredictorVarState:
    muX_q: np.ndarray
    SigmaX_q: np.ndarray
    muY_q: np.ndarray
    SigmaY_q: np.ndarray
    vec_eta_q: np.ndarray
    Sigma_eta_q: np.ndarray
    PsiY_q: np.ndarray
    nuY_q: float
    PsiX1_q: np.ndarray
    nuX1_q: float
    PsiX0_q: np.ndarray
    nuX0_q: float
    laplace: LaplaceFactor

    @property
    def A_hat(self) -> np.ndarray:
        return self.laplace.A_hat

    @property
    def m(self) -> int:
        return self.PsiX1_q.shape[0]

    @property
    def eta_q(self) -> np.ndarray:
        return unvec(self.vec_eta_q, self.m, self.PsiY_q.shape[0])


@dataclass(frozen=True)
class PredictorMoments:
    """Expectations entering the A objective.

    ``Q1 = G + B0 W_Y B0^T / psi_eta0 + psiX1 I``, ``Q0 = G + psiX0 I`` and
    ``N = eta_q W_Y YX + W1 eta_q W_Y B0^T / psi_eta0`` where ``G`` is the
    expected centered gram of X and ``YX`` the centered cross product.
    """

    W_Y: np.ndarray
    W1: np.ndarray
    W0: np.ndarray
    E_eta: np.ndarray
    G: np.ndarray
    Q1: np.ndarray
    Q0: np.ndarray
    N: np.ndarray
    kappa: float
    A0: np.ndarray
    U0A_inv: np.ndarray
    V0A_inv: np.ndarray
    blocks: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = self.W1.shape[0]
        p = self.G.shape[0]
        K, L = env.selectors(p, m)
        b = {}
        for name in ("G", "Q1", "Q0"):
            S = getattr(self, name)
            b[name + "_LL"] = L.T @ S @ L
            b[name + "_LK"] = L.T @ S @ K
            b[name + "_KK"] = K.T @ S @ K
        b["const"] = (
            -0.5 * np.trace(b["G_KK"] @ self.E_eta)
            - 0.5 * np.trace(b["Q1_KK"] @ self.W1)
            - 0.5 * np.trace(L.T @ self.Q0 @ L @ self.W0)
            + np.trace(self.N @ K)
            - 0.5 * np.trace(self.V0A_inv @ self.A0.T @ self.U0A_inv @ self.A0)
        )
        b["L"] = L
        object.__setattr__(self, "blocks", b)


def ftildeX(A, mo: PredictorMoments, complete: bool = False) -> float:
    """A objective of the predictor model; ``complete`` keeps A-free terms."""
    A = np.asarray(A, dtype=float)
    C, D = env.c_block(A), env.d_block(A)
    dev = A - mo.A0
    out = (
        0.5 * mo.kappa * logdet_spd(env.j0_inner(A))
        - 0.5 * np.trace(C.T @ mo.G @ C @ mo.E_eta)
        - 0.5 * np.trace(C.T @ mo.Q1 @ C @ mo.W1)
        - 0.5 * np.trace(D.T @ mo.Q0 @ D @ mo.W0)
        + np.trace(mo.N @ C)
        - 0.5 * np.trace(mo.V0A_inv @ dev.T @ mo.U0A_inv @ dev)
    )
    if not complete:
        out -= mo.blocks["const"]
    return float(out)


def grad_ftildeX(A, mo: PredictorMoments) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    b = mo.blocks
    g = mo.kappa * np.linalg.solve(env.j0_inner(A), A)
    g -= b["G_LL"] @ A @ mo.E_eta + b["G_LK"] @ mo.E_eta
    g -= b["Q1_LL"] @ A @ mo.W1 + b["Q1_LK"] @ mo.W1
    g += mo.W0 @ b["Q0_LK"] - mo.W0 @ A @ b["Q0_KK"]
    g += (mo.N @ b["L"]).T
    g -= mo.U0A_inv @ (A - mo.A0) @ mo.V0A_inv
    return g


def hess_ftildeX(A, mo: PredictorMoments) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    b = mo.blocks
    H = env.logdet_hessian(A, mo.kappa)
    add_kron(H, mo.E_eta, b["G_LL"], -1.0)
    add_kron(H, mo.W1, b["Q1_LL"], -1.0)
    add_kron(H, b["Q0_KK"], mo.W0, -1.0)
    add_kron(H, mo.V0A_inv, mo.U0A_inv, -1.0)
    return symmetrize(H)


def _centered(ds: Dataset, st: PredictorVarState):
    Xmu = ds.X - st.muX_q
    Ymu = ds.Y - st.muY_q
    GX = symmetrize(Xmu.T @ Xmu + ds.n * st.SigmaX_q)
    GY = symmetrize(Ymu.T @ Ymu + ds.n * st.SigmaY_q)
    return GX, GY, Ymu.T @ Xmu


def expected_eta_quadratic(st: PredictorVarState, W) -> np.ndarray:
    """E[eta_t W eta_t^T] (m-by-m)."""
    eta = st.eta_q
    m, r = eta.shape
    row = env.row_cov(st.Sigma_eta_q, m, r)
    return symmetrize(eta @ W @ eta.T + env.ktr_blocks(W, row, m))


def moments(st: PredictorVarState, ds: Dataset, priors: PredictorPriors) -> PredictorMoments:
    GX, _, YX = _centered(ds, st)
    W_Y = st.nuY_q * inv_spd(st.PsiY_q)
    W1 = st.nuX1_q * inv_spd(st.PsiX1_q)
    W0 = st.nuX0_q * inv_spd(st.PsiX0_q)
    p = ds.p
    eta = st.eta_q
    ip = 1.0 / priors.psi_eta0
    return PredictorMoments(
        W_Y=W_Y,
        W1=W1,
        W0=W0,
        E_eta=expected_eta_quadratic(st, W_Y),
        G=GX,
        Q1=symmetrize(GX + ip * priors.B0 @ W_Y @ priors.B0.T + priors.psiX1 * np.eye(p)),
        Q0=symmetrize(GX + priors.psiX0 * np.eye(p)),
        N=eta @ W_Y @ YX + ip * W1 @ eta @ W_Y @ priors.B0.T,
        kappa=2.0 * ds.n + priors.nuX1 + priors.nuX0,
        A0=priors.A0,
        U0A_inv=inv_spd(priors.U0A),
        V0A_inv=inv_spd(priors.V0A),
    )


def update_vecA(st: PredictorVarState, ds: Dataset, priors: PredictorPriors, opts: FitOptions = FitOptions()):
    if st.A_hat.size == 0:  # m = 0 or m = p: no basis block to update
        return st.laplace
    mo = moments(st, ds, priors)
    res = maximize_matrix(ftildeX, grad_ftildeX, hess_ftildeX, st.A_hat, mo, opts.grad_tol, opts.max_newton)
    return factor_from_hessian(res.x_matrix, hess_ftildeX(res.x_matrix, mo))


def _s3(GX, A_hat, cov):
    return env.expected_ctc(GX, A_hat, cov)


def update_SigmaYX(st: PredictorVarState, ds: Dataset, priors: PredictorPriors):
    """Inverse-Wishart factor of the conditional covariance: (PsiY_q, nuY_q)."""
    GX, GY, YX = _centered(ds, st)
    lap = st.laplace
    A_hat, cov = lap.A_hat, lap.cov
    m = st.m
    eta = st.eta_q
    C = env.c_block(A_hat)
    _, L = env.selectors(ds.p, m)
    W1 = st.nuX1_q * inv_spd(st.PsiX1_q)
    S3 = _s3(GX, A_hat, cov)
    cross = YX @ C @ eta
    dev = C.T @ priors.B0 - eta
    row = env.row_cov(cov, ds.p - m, m)
    prior_part = (
        dev.T @ W1 @ dev
        + priors.B0.T @ L @ env.ktr_blocks(W1, row, ds.p - m) @ L.T @ priors.B0
        + env.ktr_blocks(W1, st.Sigma_eta_q, ds.r)
    )
    Psi = (
        GY
        - (cross + cross.T)
        + eta.T @ S3 @ eta
        + env.ktr_blocks(S3, st.Sigma_eta_q, ds.r)
        + priors.PsiY
        + prior_part / priors.psi_eta0
    )
    return check_spd(symmetrize(Psi), "PsiY_q"), float(ds.n + m + priors.nuY)


def update_OmegaX1(st: PredictorVarState, ds: Dataset, priors: PredictorPriors):
    GX, _, _ = _centered(ds, st)
    lap = st.laplace
    C = env.c_block(lap.A_hat)
    W_Y = st.nuY_q * inv_spd(st.PsiY_q)
    ip = 1.0 / priors.psi_eta0
    S4 = symmetrize(GX + ip * priors.B0 @ W_Y @ priors.B0.T + priors.psiX1 * np.eye(ds.p))
    cross = st.eta_q @ W_Y @ priors.B0.T @ C
    Psi = (
        env.expected_ctc(S4, lap.A_hat, lap.cov)
        + ip * expected_eta_quadratic(st, W_Y)
        - ip * (cross + cross.T)
    )
    return check_spd(symmetrize(Psi), "PsiX1_q"), float(ds.n + priors.nuX1 + ds.r)


def update_OmegaX0(st: PredictorVarState, ds: Dataset, priors: PredictorPriors):
    GX, _, _ = _centered(ds, st)
    S5 = symmetrize(GX + priors.psiX0 * np.eye(ds.p))
    Psi = env.expected_dtd(S5, st.laplace.A_hat, st.laplace.cov)
    return check_spd(Psi, "PsiX0_q"), float(ds.n + priors.nuX0)


def update_eta_vec(st: PredictorVarState, ds: Dataset, priors: PredictorPriors):
    """Gaussian factor of vec(eta_t): (vec_eta_q, Sigma_eta_q)."""
    GX, _, YX = _centered(ds, st)
    lap = st.laplace
    C = env.c_block(lap.A_hat)
    W_Y = st.nuY_q * inv_spd(st.PsiY_q)
    W1 = st.nuX1_q * inv_spd(st.PsiX1_q)
    ip = 1.0 / priors.psi_eta0
    row_prec = check_spd(symmetrize(_s3(GX, lap.A_hat, lap.cov) + ip * W1), "eta precision")
    Sigma = symmetrize(kron(inv_spd(W_Y), inv_spd(row_prec)))
    lin = W_Y @ YX @ C + ip * W_Y @ priors.B0.T @ C @ W1  # r x m
    return Sigma @ vec(lin.T), Sigma


def update_muX(st: PredictorVarState, ds: Dataset, priors: PredictorPriors):
    lap = st.laplace
    W_Y = st.nuY_q * inv_spd(st.PsiY_q)
    W1 = st.nuX1_q * inv_spd(st.PsiX1_q)
    W0 = st.nuX0_q * inv_spd(st.PsiX0_q)
    W = W1 + expected_eta_quadratic(st, W_Y)
    prec = ds.n * (env.expected_cwct(W, lap.A_hat, lap.cov) + env.expected_dwdt(W0, lap.A_hat, lap.cov))
    prec = check_spd(symmetrize(prec), "SigmaX_q^-1")
    return ds.Xbar.copy(), inv_spd(prec)


def update_muY(st: PredictorVarState, ds: Dataset, priors: PredictorPriors):
    return ds.Ybar.copy(), symmetrize(st.PsiY_q / (ds.n * st.nuY_q))


def sweep(st: PredictorVarState, ds: Dataset, priors: PredictorPriors, opts: FitOptions = FitOptions()):
    """One pass in the order A, Sigma, Omega1_t, Omega0_t, eta_t, mu_X, mu_Y."""
    st = replace(st, laplace=update_vecA(st, ds, priors, opts))
    return _conjugate_pass(st, ds, priors)


def _conjugate_pass(st, ds, priors):
    PsiY, nuY = update_SigmaYX(st, ds, priors)
    st = replace(st, PsiY_q=PsiY, nuY_q=nuY)
    Psi1, nu1 = update_OmegaX1(st, ds, priors)
    st = replace(st, PsiX1_q=Psi1, nuX1_q=nu1)
    Psi0, nu0 = update_OmegaX0(st, ds, priors)
    st = replace(st, PsiX0_q=Psi0, nuX0_q=nu0)
    v, S = update_eta_vec(st, ds, priors)
    st = replace(st, vec_eta_q=v, Sigma_eta_q=S)
    muX, SX = update_muX(st, ds, priors)
    st = replace(st, muX_q=muX, SigmaX_q=SX)
    muY, SY = update_muY(st, ds, priors)
    return replace(st, muY_q=muY, SigmaY_q=SY)


def elbo_pred(st: PredictorVarState, ds: Dataset, priors: PredictorPriors, mo: PredictorMoments | None = None,
              complete: bool = True) -> float:
    """Approximate ELBO with the quadratic Laplace plug-in for q(A).

    The default keeps every term of E_q[log p - log q] and is the convergence
    monitor. ``complete=False`` keeps only the A-dependent part of the A
    objective and drops the likelihood constant (diagnostic only).
    """
    if mo is None:
        mo = moments(st, ds, priors)
    n, r, p, m = ds.n, ds.r, ds.p, st.m
    q = p - m
    _, GY, _ = _centered(ds, st)
    out = -0.5 * n * (p + r) * LOG2PI if complete else 0.0
    out += iw_log_normalizer(logdet_spd(priors.PsiY), priors.nuY, r)
    out += iw_log_normalizer(m * np.log(priors.psiX1), priors.nuX1, m)
    out += iw_log_normalizer(q * np.log(priors.psiX0), priors.nuX0, q)
    out += -0.5 * m * r * LOG2PI - 0.5 * m * r * np.log(priors.psi_eta0)
    out += -0.5 * q * m * LOG2PI - 0.5 * m * logdet_spd(priors.U0A) - 0.5 * q * logdet_spd(priors.V0A)
    out += 0.5 * (priors.nuY + n + m + r + 1) * expected_logdet_inverse(st.PsiY_q, st.nuY_q)
    out += 0.5 * (priors.nuX1 + n + m + r + 1) * expected_logdet_inverse(st.PsiX1_q, st.nuX1_q)
    out += 0.5 * (priors.nuX0 + n + q + 1) * expected_logdet_inverse(st.PsiX0_q, st.nuX0_q)
    out -= 0.5 * np.trace((GY + priors.PsiY) @ mo.W_Y)
    out -= 0.5 / priors.psi_eta0 * np.trace(mo.E_eta @ mo.W1)
    out += ftildeX(st.A_hat, mo, complete=complete) - 0.5 * q * m
    out += gaussian_entropy(logdet_spd(st.SigmaX_q), p)
    out += gaussian_entropy(logdet_spd(st.SigmaY_q), r)
    out += gaussian_entropy(logdet_spd(st.Sigma_eta_q), m * r)
    out += iw_entropy(st.PsiY_q, st.nuY_q) + iw_entropy(st.PsiX1_q, st.nuX1_q) + iw_entropy(st.PsiX0_q, st.nuX0_q)
    out += st.laplace.entropy()
    return float(out)


def ols_pilot_A(ds: Dataset, spec: PredictorEnvSpec, priors: PredictorPriors) -> np.ndarray:
    """A from the leading left singular vectors of the OLS coefficient (p x r).

    When m exceeds its rank the basis is completed with leading eigenvectors
    of the sample predictor covariance inside the orthogonal complement.
    """
    if spec.m in (0, spec.p):
        return np.zeros((spec.p - spec.m, spec.m))
    Xc = ds.X - ds.Xbar
    Yc = ds.Y - ds.Ybar
    Bt = np.linalg.lstsq(Xc, Yc, rcond=None)[0]  # p x r
    left, s, _ = np.linalg.svd(Bt, full_matrices=False)
    rank = int(np.sum(s > s.max() * 1e-10)) if s.size else 0
    k = min(spec.m, rank)
    G = left[:, :k]
    if k < spec.m:
        P = np.eye(ds.p) - G @ G.T
        Sx = P @ (Xc.T @ Xc) @ P
        w, V = np.linalg.eigh(symmetrize(Sx))
        G = np.hstack([G, V[:, ::-1][:, : spec.m - k]])
    G1, G2 = G[: spec.m], G[spec.m :]
    if np.linalg.cond(G1) > 1e8:
        return priors.A0.copy()
    return G2 @ np.linalg.inv(G1)


def initial_state(ds: Dataset, spec: PredictorEnvSpec, priors: PredictorPriors, init="ols") -> PredictorVarState:
    if isinstance(init, np.ndarray):
        A = np.asarray(init, dtype=float)
        if A.shape != (spec.p - spec.m, spec.m):
            raise ValidationError("init A has the wrong shape", shape=A.shape)
    elif init == "ols":
        A = ols_pilot_A(ds, spec, priors)
    elif init == "prior":
        A = priors.A0.copy()
    else:
        raise ValidationError("unknown init strategy", init=str(init))
    n, r, p, m = ds.n, ds.r, ds.p, spec.m
    Xc, Yc = ds.X - ds.Xbar, ds.Y - ds.Ybar
    C = env.c_block(A)
    XC = Xc @ C
    eta = np.linalg.lstsq(XC, Yc, rcond=None)[0]  # m x r
    R = Yc - XC @ eta
    PsiY = symmetrize(R.T @ R + priors.PsiY)
    nuY = float(n + m + priors.nuY)
    st = PredictorVarState(
        muX_q=ds.Xbar.copy(),
        SigmaX_q=symmetrize(Xc.T @ Xc / (n - 1) / n),
        muY_q=ds.Ybar.copy(),
        SigmaY_q=symmetrize(PsiY / (n * nuY)),
        vec_eta_q=vec(eta).copy(),
        Sigma_eta_q=np.zeros((m * r, m * r)),
        PsiY_q=PsiY,
        nuY_q=nuY,
        PsiX1_q=np.eye(m),
        nuX1_q=float(n + priors.nuX1 + r),
        PsiX0_q=np.eye(p - m),
        nuX0_q=float(n + priors.nuX0),
        laplace=degenerate_factor(A),
    )
    Psi1, nu1 = update_OmegaX1(st, ds, priors)
    st = replace(st, PsiX1_q=Psi1, nuX1_q=nu1)
    Psi0, nu0 = update_OmegaX0(st, ds, priors)
    st = replace(st, PsiX0_q=Psi0, nuX0_q=nu0)
    return _conjugate_pass(st, ds, priors)


def beta_hat(st: PredictorVarState) -> np.ndarray:
    """eta_q^T C_A^T (r-by-p)."""
    return st.eta_q.T @ env.c_block(st.A_hat).T


def intercept(st: PredictorVarState, beta=None) -> np.ndarray:
    """Intercept of E[Y | X] = intercept + beta X, i.e. mu_Y - beta mu_X."""
    beta = beta_hat(st) if beta is None else beta
    return st.muY_q - beta @ st.muX_q


def fit_pred(ds: Dataset, spec: PredictorEnvSpec, priors: PredictorPriors | None = None,
             opts: FitOptions = FitOptions()) -> FitReport:
    """Run the CALVI iteration to convergence (1 <= m < p)."""
    spec.validate(fitting=True)
    return _run(ds, spec, priors, opts)


def fit_boundary(ds: Dataset, spec: PredictorEnvSpec, priors: PredictorPriors | None = None,
                 opts: FitOptions = FitOptions()) -> FitReport:
    """Conjugate coordinate ascent at m = 0 or m = p, where there is no basis block.

    Used only to score the boundary dimensions for BIC.
    """
    spec.validate(fitting=False)
    if spec.m not in (0, spec.p):
        raise ValidationError("fit_boundary needs m = 0 or m = p", m=spec.m)
    return _run(ds, spec, priors, opts)


def _run(ds: Dataset, spec: PredictorEnvSpec, priors: PredictorPriors | None = None,
         opts: FitOptions = FitOptions()) -> FitReport:
    if (ds.r, ds.p) != (spec.r, spec.p):
        raise ValidationError("data dimensions do not match the spec", data=(ds.r, ds.p), spec=(spec.r, spec.p))
    priors = (priors or PredictorPriors.vague(spec)).validate(spec)
    if opts.max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    start = time.perf_counter()
    st = initial_state(ds, spec, priors, opts.init)
    trace = []
    converged = False
    for it in range(1, opts.max_iter + 1):
        try:
            st = sweep(st, ds, priors, opts)
            value = elbo_pred(st, ds, priors)
        except EnvcalviError as err:
            err.details.setdefault("iteration", it)
            raise
        trace.append(value)
        if len(trace) > 1 and has_converged(trace[-1], trace[-2], opts.tol):
            converged = True
            break
    beta = beta_hat(st)
    return FitReport(
        state=st,
        elbo_trace=tuple(trace),
        iterations=len(trace),
        converged=converged,
        wall_time=time.perf_counter() - start,
        beta_hat=beta,
        mu_hat=intercept(st, beta),
    )


def fixed_point_drift(report: FitReport, ds: Dataset, priors: PredictorPriors | None = None,
                      opts: FitOptions = FitOptions()) -> float:
    st = report.state
    priors = priors or PredictorPriors.vague(PredictorEnvSpec(ds.r, ds.p, st.m))
    return relative_drift(st, sweep(st, ds, priors, opts))


def plugin_natural(st: PredictorVarState, ds: Dataset) -> PredictorNaturalParams:
    """Natural parameters at the variational means, mapped back through J(A_hat)."""
    m, q, r = st.m, ds.p - st.m, ds.r
    tp = PredictorTildeParams(
        muX=st.muX_q,
        muY=st.muY_q,
        eta_t=st.eta_q,
        Omega1_t=st.PsiX1_q / (st.nuX1_q - m - 1),
        Omega0_t=st.PsiX0_q / (st.nuX0_q - q - 1),
        SigmaYX=st.PsiY_q / (st.nuY_q - r - 1),
        A=st.A_hat,
    )
    return inverse_reparameterize(tp)
