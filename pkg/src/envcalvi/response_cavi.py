"""Coordinate-ascent Laplace variational inference for the response envelope model."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import envelope as env
from .errors import EnvcalviError, ValidationError
from .kron import check_spd, inv_spd, logdet_spd, symmetrize
from .response import Dataset, NaturalParams, ResponseEnvSpec, ResponsePriors, suff_stats
from .response_laplace import (
    LaplaceFactor,
    MomentBundle,
    degenerate_factor,
    ftilde,
    laplace_factor,
    maximize_ftilde,
)
from .special import (
    LOG2PI,
    expected_logdet_inverse,
    gaussian_entropy,
    iw_entropy,
    iw_log_normalizer,
    matrix_normal_entropy,
)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10000


@dataclass(frozen=True)
class ResponseVarState:
    mu_q: np.ndarray
    Sigma_q: np.ndarray
    eta_q: np.ndarray
    U_eta: np.ndarray
    V_eta: np.ndarray
    Psi1_q: np.ndarray
    nu1_q: float
    Psi0_q: np.ndarray
    nu0_q: float
    laplace: LaplaceFactor

    @property
    def A_hat(self) -> np.ndarray:
        return self.laplace.A_hat


@dataclass(frozen=True)
class FitReport:
    state: object
    elbo_trace: tuple
    iterations: int
    converged: bool
    wall_time: float
    beta_hat: np.ndarray
    mu_hat: np.ndarray


@dataclass(frozen=True)
class FitOptions:
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    init: str = "ols"
    grad_tol: float | None = None
    max_newton: int = 200


def _design_gram(ds: Dataset, priors: ResponsePriors) -> np.ndarray:
    return symmetrize(ds.Xc.T @ ds.Xc + priors.M)


def moment_bundle(st: ResponseVarState, ds: Dataset, priors: ResponsePriors) -> MomentBundle:
    G1, G2, H = suff_stats(ds, st.mu_q, st.Sigma_q, priors)
    return MomentBundle(
        E_Om_inv=st.nu1_q * inv_spd(st.Psi1_q),
        E_Om0_inv=st.nu0_q * inv_spd(st.Psi0_q),
        eta_q=st.eta_q,
        Gr1=G1,
        Gr2=G2,
        Hmat=H,
        kappa=2.0 * ds.n + priors.nu1 + priors.nu0,
        A0=priors.A0,
        U0A_inv=inv_spd(priors.U0A),
        V0A_inv=inv_spd(priors.V0A),
    )


def update_eta(st: ResponseVarState, ds: Dataset, priors: ResponsePriors, A_hat):
    """Matrix-normal factor of eta_t: returns (eta_q, U_eta, V_eta)."""
    S = _design_gram(ds, priors)
    V = inv_spd(S)
    H = ds.Xc.T @ ds.Y + priors.M @ priors.B0.T
    eta_q = env.c_block(A_hat).T @ H.T @ V
    U = symmetrize(st.Psi1_q / st.nu1_q)
    return eta_q, U, V


def update_omega(st: ResponseVarState, ds: Dataset, priors: ResponsePriors, laplace: LaplaceFactor):
    """Inverse-Wishart factor of Omega_t: returns (Psi1_q, nu1_q)."""
    G1, _, H = suff_stats(ds, st.mu_q, st.Sigma_q, priors)
    S = _design_gram(ds, priors)
    A_hat = laplace.A_hat
    C = env.c_block(A_hat)
    cross = st.eta_q @ H @ C
    Psi = (
        env.expected_ctc(G1, A_hat, laplace.cov)
        - (cross + cross.T)
        + np.trace(S @ st.V_eta) * st.U_eta
        + st.eta_q @ S @ st.eta_q.T
    )
    Psi = check_spd(symmetrize(Psi), "Psi1_q")
    return Psi, float(ds.n + priors.nu1 + ds.p)


def update_omega0(st: ResponseVarState, ds: Dataset, priors: ResponsePriors, laplace: LaplaceFactor):
    """Inverse-Wishart factor of Omega0_t: returns (Psi0_q, nu0_q)."""
    _, G2, _ = suff_stats(ds, st.mu_q, st.Sigma_q, priors)
    Psi = check_spd(env.expected_dtd(G2, laplace.A_hat, laplace.cov), "Psi0_q")
    return Psi, float(ds.n + priors.nu0)


def update_mu(st: ResponseVarState, ds: Dataset, laplace: LaplaceFactor):
    """Gaussian factor of mu_t: returns (mu_q, Sigma_q)."""
    W1 = st.nu1_q * inv_spd(st.Psi1_q)
    W0 = st.nu0_q * inv_spd(st.Psi0_q)
    prec = ds.n * (env.expected_cwct(W1, laplace.A_hat, laplace.cov) + env.expected_dwdt(W0, laplace.A_hat, laplace.cov))
    prec = check_spd(symmetrize(prec), "S1 + S2")
    return ds.Ybar.copy(), inv_spd(prec)


def update_laplace(st: ResponseVarState, ds: Dataset, priors: ResponsePriors, opts: FitOptions = FitOptions()):
    if st.A_hat.size == 0:  # u = 0 or u = r: no basis block to update
        return st.laplace
    mb = moment_bundle(st, ds, priors)
    A_hat = maximize_ftilde(st.A_hat, mb, grad_tol=opts.grad_tol, max_newton=opts.max_newton)
    return laplace_factor(A_hat, mb)


def sweep(st: ResponseVarState, ds: Dataset, priors: ResponsePriors, opts: FitOptions = FitOptions()):
    """One pass in the order A, eta_t, Omega_t, Omega0_t, mu_t."""
    lap = update_laplace(st, ds, priors, opts)
    st = replace(st, laplace=lap)
    eta_q, U, V = update_eta(st, ds, priors, lap.A_hat)
    st = replace(st, eta_q=eta_q, U_eta=U, V_eta=V)
    Psi1, nu1 = update_omega(st, ds, priors, lap)
    st = replace(st, Psi1_q=Psi1, nu1_q=nu1)
    Psi0, nu0 = update_omega0(st, ds, priors, lap)
    st = replace(st, Psi0_q=Psi0, nu0_q=nu0)
    mu, Sigma = update_mu(st, ds, lap)
    return replace(st, mu_q=mu, Sigma_q=Sigma)


def elbo(st: ResponseVarState, ds: Dataset, priors: ResponsePriors, mb: MomentBundle | None = None,
         complete: bool = True) -> float:
    """Approximate ELBO with the quadratic Laplace plug-in for q(A).

    The default keeps every term of E_q[log p - log q] and is the convergence
    monitor. ``complete=False`` drops the likelihood constant and the
    A-independent data and prior traces that the A objective leaves out;
    those traces move between sweeps, so that form is a diagnostic only.
    """
    if mb is None:
        mb = moment_bundle(st, ds, priors)
    n, r, p = ds.n, ds.r, ds.p
    u = st.eta_q.shape[0]
    q = r - u
    S = _design_gram(ds, priors)
    W1 = mb.E_Om_inv
    out = -0.5 * u * p * LOG2PI + 0.5 * u * logdet_spd(priors.M)
    out += iw_log_normalizer(u * np.log(priors.psi1), priors.nu1, u)
    out += iw_log_normalizer(q * np.log(priors.psi0), priors.nu0, q)
    out += -0.5 * q * u * LOG2PI - 0.5 * u * logdet_spd(priors.U0A) - 0.5 * q * logdet_spd(priors.V0A)
    out += 0.5 * (n + priors.nu1 + u + p + 1) * expected_logdet_inverse(st.Psi1_q, st.nu1_q)
    out += 0.5 * (n + priors.nu0 + q + 1) * expected_logdet_inverse(st.Psi0_q, st.nu0_q)
    out -= 0.5 * np.trace(W1 @ (np.trace(S @ st.V_eta) * st.U_eta + st.eta_q @ S @ st.eta_q.T))
    out += ftilde(st.A_hat, mb) - 0.5 * q * u
    out += gaussian_entropy(logdet_spd(st.Sigma_q), r)
    out += matrix_normal_entropy(st.U_eta, st.V_eta)
    out += iw_entropy(st.Psi1_q, st.nu1_q) + iw_entropy(st.Psi0_q, st.nu0_q)
    out += st.laplace.entropy()
    if complete:
        out += -0.5 * n * r * LOG2PI + mb.blocks["const"]
    return float(out)


def ols_pilot_A(ds: Dataset, spec: ResponseEnvSpec, priors: ResponsePriors) -> np.ndarray:
    """A = Gamma2 Gamma1^{-1} from the top-u left singular vectors of the OLS coefficient."""
    if spec.u in (0, spec.r):
        return np.zeros((spec.r - spec.u, spec.u))
    S = _design_gram(ds, priors)
    B = np.linalg.solve(S, ds.Xc.T @ (ds.Y - ds.Ybar))  # p x r
    left, _, _ = np.linalg.svd(B.T, full_matrices=True)
    G = left[:, : spec.u]
    G1, G2 = G[: spec.u], G[spec.u :]
    if np.linalg.cond(G1) > 1e8:
        return priors.A0.copy()
    return G2 @ np.linalg.inv(G1)


def initial_state(ds: Dataset, spec: ResponseEnvSpec, priors: ResponsePriors, init="ols") -> ResponseVarState:
    """Pilot A, then one conjugate sweep with a point-mass A factor."""
    if isinstance(init, np.ndarray):
        A = np.asarray(init, dtype=float)
        if A.shape != (spec.r - spec.u, spec.u):
            raise ValidationError("init A has the wrong shape", shape=A.shape)
    elif init == "ols":
        A = ols_pilot_A(ds, spec, priors)
    elif init == "prior":
        A = priors.A0.copy()
    else:
        raise ValidationError("unknown init strategy", init=str(init))
    lap = degenerate_factor(A)
    R = ds.Y - ds.Ybar
    u, q = spec.u, spec.r - spec.u
    st = ResponseVarState(
        mu_q=ds.Ybar.copy(),
        Sigma_q=symmetrize(R.T @ R / (ds.n - 1) / ds.n),
        eta_q=np.zeros((u, ds.p)),
        U_eta=np.zeros((u, u)),
        V_eta=np.zeros((ds.p, ds.p)),
        Psi1_q=np.eye(u),
        nu1_q=float(ds.n + priors.nu1 + ds.p),
        Psi0_q=np.eye(q),
        nu0_q=float(ds.n + priors.nu0),
        laplace=lap,
    )
    eta_q, _, V = update_eta(st, ds, priors, A)
    st = replace(st, eta_q=eta_q, V_eta=V)
    Psi1, nu1 = update_omega(st, ds, priors, lap)
    st = replace(st, Psi1_q=Psi1, nu1_q=nu1, U_eta=symmetrize(Psi1 / nu1))
    Psi0, nu0 = update_omega0(st, ds, priors, lap)
    st = replace(st, Psi0_q=Psi0, nu0_q=nu0)
    mu, Sigma = update_mu(st, ds, lap)
    return replace(st, mu_q=mu, Sigma_q=Sigma)


def has_converged(new: float, old: float, tol: float) -> bool:
    """Relative-change stopping rule; exact repeats count as converged."""
    return new == old or abs(new - old) < tol * abs(new)


def beta_hat(st: ResponseVarState) -> np.ndarray:
    A = st.A_hat
    return env.c_block(A) @ np.linalg.solve(env.j_inner(A), st.eta_q)


def mu_hat(st: ResponseVarState, ds: Dataset) -> np.ndarray:
    return st.mu_q - beta_hat(st) @ ds.Xbar


def fit(ds: Dataset, spec: ResponseEnvSpec, priors: ResponsePriors | None = None,
        opts: FitOptions = FitOptions()) -> FitReport:
    """Run the CALVI iteration to convergence (1 <= u < r)."""
    spec.validate(fitting=True)
    return _run(ds, spec, priors, opts)


def fit_boundary(ds: Dataset, spec: ResponseEnvSpec, priors: ResponsePriors | None = None,
                 opts: FitOptions = FitOptions()) -> FitReport:
    """Conjugate coordinate ascent at u = 0 or u = r, where there is no basis block.

    Used only to score the boundary dimensions for BIC.
    """
    spec.validate(fitting=False)
    if spec.u not in (0, spec.r):
        raise ValidationError("fit_boundary needs u = 0 or u = r", u=spec.u)
    return _run(ds, spec, priors, opts)


def _run(ds: Dataset, spec: ResponseEnvSpec, priors: ResponsePriors | None = None,
         opts: FitOptions = FitOptions()) -> FitReport:
    if (ds.r, ds.p) != (spec.r, spec.p):
        raise ValidationError("data dimensions do not match the spec", data=(ds.r, ds.p), spec=(spec.r, spec.p))
    priors = (priors or ResponsePriors.vague(spec)).validate(spec)
    if opts.max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    start = time.perf_counter()
    st = initial_state(ds, spec, priors, opts.init)
    trace = []
    converged = False
    for it in range(1, opts.max_iter + 1):
        try:
            st = sweep(st, ds, priors, opts)
            value = elbo(st, ds, priors)
        except EnvcalviError as err:
            err.details.setdefault("iteration", it)
            raise
        trace.append(value)
        if len(trace) > 1 and has_converged(trace[-1], trace[-2], opts.tol):
            converged = True
            break
    return FitReport(
        state=st,
        elbo_trace=tuple(trace),
        iterations=len(trace),
        converged=converged,
        wall_time=time.perf_counter() - start,
        beta_hat=beta_hat(st),
        mu_hat=mu_hat(st, ds),
    )


def state_arrays(st) -> dict:
    """Named arrays of a variational state (Laplace mean and covariance included)."""
    out = {}
    for name, val in vars(st).items():
        if isinstance(val, LaplaceFactor):
            out["laplace_mean"] = val.mean_vecA
            out["laplace_cov"] = val.cov
        else:
            out[name] = np.atleast_1d(np.asarray(val, dtype=float))
    return out


def relative_drift(before, after) -> float:
    """Largest relative Frobenius change across all state arrays."""
    a, b = state_arrays(before), state_arrays(after)
    worst = 0.0
    for key, x in a.items():
        y = b[key]
        denom = max(np.linalg.norm(x), np.finfo(float).tiny)
        worst = max(worst, float(np.linalg.norm(y - x) / denom))
    return worst


def fixed_point_drift(report: FitReport, ds: Dataset, priors: ResponsePriors | None = None,
                      opts: FitOptions = FitOptions()) -> float:
    """Relative drift produced by one extra sweep from the converged state."""
    st = report.state
    u = st.eta_q.shape[0]
    spec = ResponseEnvSpec(ds.r, ds.p, u)
    priors = priors or ResponsePriors.vague(spec)
    return relative_drift(st, sweep(st, ds, priors, opts))


def plugin_natural(st: ResponseVarState, ds: Dataset) -> NaturalParams:
    """Natural parameters at the variational means, mapped back through J(A_hat)."""
    from .response import TildeParams, inverse_reparameterize

    u = st.eta_q.shape[0]
    q = ds.r - u
    tp = TildeParams(
        mu_t=st.mu_q,
        eta_t=st.eta_q,
        Omega_t=st.Psi1_q / (st.nu1_q - u - 1),
        Omega0_t=st.Psi0_q / (st.nu0_q - q - 1),
        A=st.A_hat,
    )
    return inverse_reparameterize(tp, ds.Xbar)
