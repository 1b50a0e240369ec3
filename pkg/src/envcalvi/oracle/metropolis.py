"""Blocked random-walk Metropolis samplers for the exact envelope posteriors.

Covariance parameters are sampled on log-Cholesky coordinates (lower factor
with log-diagonal), so every block is unconstrained.  Each block uses an
isotropic Gaussian proposal whose scale is adapted by Robbins-Monro toward
acceptance 0.25 during burn-in and then frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import multigammaln

from ..errors import ValidationError
from ..kron import logdet_spd, symmetrize
from ..special import LOG2, LOG2PI

TARGET_ACCEPT = 0.25
WARN_LOW, WARN_HIGH = 0.02, 0.8


def batch_means_mcse(draws) -> np.ndarray:
    """Batch-means MCSE per column, batch size floor(sqrt(N))."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    n = draws.shape[0]
    size = int(np.floor(np.sqrt(n)))
    nb = n // size
    if nb < 2:
        raise ValidationError("too few draws for batch means", draws=n)
    means = draws[: nb * size].reshape(nb, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(nb)


@dataclass
class ChainResult:
    """Post-burn-in recorded draws with per-block diagnostics."""

    draws: np.ndarray
    acceptance: dict
    steps: dict
    warning: bool
    iterations: int
    burn_in: int
    final: dict = field(repr=False, default_factory=dict)

    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    def mcse(self) -> np.ndarray:
        return batch_means_mcse(self.draws)

    def half_means(self):
        half = self.draws.shape[0] // 2
        a, b = self.draws[:half], self.draws[half: 2 * half]
        return a.mean(axis=0), b.mean(axis=0), batch_means_mcse(a), batch_means_mcse(b)


def rw_metropolis(log_target, init: dict, iters: int, seed, record, burn_in=None, steps=None) -> ChainResult:
    """Run a blocked random-walk Metropolis chain.

    Parameters
    ----------
    log_target : callable
        Maps a dict of flat block vectors to an unnormalized log density.
    init : dict
        Starting block vectors.
    record : callable
        Maps the block dict to the flat vector stored per iteration.
    burn_in : int, optional
        Defaults to ``iters // 5``; adaptation happens only here.
    """
    from ..simgen import rng_for

    if iters < 10:
        raise ValidationError("iters must be at least 10", iters=iters)
    burn_in = iters // 5 if burn_in is None else int(burn_in)
    rng = rng_for(seed)
    state = {k: np.asarray(v, dtype=float).copy() for k, v in init.items()}
    names = [k for k in state if state[k].size]
    log_step = {k: np.log(0.1 / np.sqrt(state[k].size)) for k in names}
    if steps:
        log_step.update({k: np.log(v) for k, v in steps.items()})
    current = log_target(state)
    if not np.isfinite(current):
        raise ValidationError("initial state has non-finite log density")
    accepted = {k: 0 for k in names}
    keep = iters - burn_in
    first = np.asarray(record(state), dtype=float)
    draws = np.empty((keep, first.size))
    for t in range(iters):
        for k in names:
            old = state[k]
            state[k] = old + np.exp(log_step[k]) * rng.standard_normal(old.size)
            proposal = log_target(state)
            ok = np.isfinite(proposal) and np.log(rng.uniform()) < proposal - current
            if ok:
                current = proposal
            else:
                state[k] = old
            if t < burn_in:
                log_step[k] += ((1.0 if ok else 0.0) - TARGET_ACCEPT) / (t + 1) ** 0.6
            elif ok:
                accepted[k] += 1
        if t >= burn_in:
            draws[t - burn_in] = record(state)
    acceptance = {k: accepted[k] / max(keep, 1) for k in names}
    warning = any(not WARN_LOW < a < WARN_HIGH for a in acceptance.values())
    return ChainResult(
        draws=draws, acceptance=acceptance, steps={k: float(np.exp(v)) for k, v in log_step.items()},
        warning=warning, iterations=iters, burn_in=burn_in, final=state,
    )


# log-Cholesky coordinates

def chol_to_logchol(S) -> np.ndarray:
    S = np.atleast_2d(S)
    d = S.shape[0]
    if d == 0:
        return np.zeros(0)
    L = np.linalg.cholesky(symmetrize(S))
    L[np.diag_indices(d)] = np.log(np.diag(L))
    return L[np.tril_indices(d)]


def logchol_factor(v, d):
    """Lower factor L, log|S| and the log-Jacobian of S = L L^T w.r.t. v."""
    L = np.zeros((d, d))
    L[np.tril_indices(d)] = v
    logdiag = np.diag(L).copy()
    L[np.diag_indices(d)] = np.exp(logdiag)
    logjac = d * LOG2 + float(np.sum((d - np.arange(d) + 1) * logdiag))
    return L, 2.0 * float(logdiag.sum()), logjac


def logchol_to_matrix(v, d) -> np.ndarray:
    L, _, _ = logchol_factor(v, d)
    return L @ L.T


class _Cache:
    """Two-slot memo keyed on array identity, so a rejected proposal does not evict the current state."""

    def __init__(self, fn):
        self.fn = fn
        self.slots = []

    def __call__(self, arr):
        for key, value in self.slots:
            if key is arr:
                return value
        value = self.fn(arr)
        self.slots = [(arr, value)] + self.slots[:1]
        return value


def _spd_piece(d, scale, nu):
    """Cached map from log-Cholesky coordinates to (S^{-1}, log|S|, IW(scale, nu) log prior + Jacobian).

    A scalar ``scale`` means ``scale * I``.
    """
    Psi = scale * np.eye(d) if np.ndim(scale) == 0 else np.asarray(scale, dtype=float)
    iw_const = 0.5 * nu * logdet_spd(Psi) - 0.5 * nu * d * LOG2 - float(multigammaln(0.5 * nu, d)) if d else 0.0
    rows, cols = np.tril_indices(d)
    diag = np.arange(d)
    weights = d - diag + 1.0

    def piece(v):
        L = np.zeros((d, d))
        L[rows, cols] = v
        logdiag = L[diag, diag].copy()
        L[diag, diag] = np.exp(logdiag)
        Li = np.linalg.inv(L)
        S_inv = Li.T @ Li
        logdet = 2.0 * logdiag.sum()
        prior = iw_const - 0.5 * (nu + d + 1) * logdet - 0.5 * np.sum(Psi * S_inv)
        return S_inv, logdet, prior + d * LOG2 + weights @ logdiag

    return _Cache(piece)


def _basis_piece(q, u, A0, U0A, V0A, extra=None):
    """Cached map from vec(A) to (Gamma, Gamma0, log prior of A, extra(A, J))."""
    U0inv, V0inv = np.linalg.inv(U0A), np.linalg.inv(V0A)
    const = -0.5 * (q * u * LOG2PI + u * logdet_spd(U0A) + q * logdet_spd(V0A))
    eye_u, eye_q = np.eye(u), np.eye(q)

    def piece(a):
        A = a.reshape((q, u), order="F")
        J, J0 = eye_u + A.T @ A, eye_q + A @ A.T
        w, V = np.linalg.eigh(J)
        w0, V0 = np.linalg.eigh(J0)
        G = np.vstack([eye_u, A]) @ ((V / np.sqrt(w)) @ V.T)
        G0 = np.vstack([-A.T, eye_q]) @ ((V0 / np.sqrt(w0)) @ V0.T)
        E = A - A0
        prior = const - 0.5 * np.sum((U0inv @ E) * (E @ V0inv))
        return G, G0, prior, (None if extra is None else extra(A, J, w, V))

    return _Cache(piece)


class _RegressionStats:
    """Sums needed for sum_i (Y_i - a - B X_i)(...)^T."""

    def __init__(self, Y, X):
        self.n = Y.shape[0]
        self.YY, self.XY, self.XX = Y.T @ Y, X.T @ Y, X.T @ X
        self.ys, self.xs = Y.sum(axis=0), X.sum(axis=0)

    def scatter(self, a, B):
        BXY = B @ self.XY
        rs = self.ys - B @ self.xs
        ra = np.outer(rs, a)
        return self.YY - BXY - BXY.T + B @ self.XX @ B.T - ra - ra.T + self.n * np.outer(a, a)


# response model

def response_target(ds, spec, priors):
    """Return (log_target, to_blocks, beta_of) for the response posterior on blocked coordinates."""
    r, p, u = spec.r, spec.p, spec.u
    q = r - u
    stats = _RegressionStats(ds.Y, ds.X)
    n = stats.n
    M = np.asarray(priors.M, dtype=float)
    const = -0.5 * n * r * LOG2PI - 0.5 * u * p * LOG2PI + 0.5 * u * logdet_spd(M)
    B0 = np.asarray(priors.B0, dtype=float)
    basis = _basis_piece(q, u, priors.A0, priors.U0A, priors.V0A, extra=lambda A, *_: None)
    omega = _spd_piece(u, priors.psi1, priors.nu1)
    omega0 = _spd_piece(q, priors.psi0, priors.nu0)

    def log_target(b):
        G, G0, a_prior, _ = basis(b["A"])
        Om_inv, ld1, prior1 = omega(b["L1"])
        Om0_inv, ld0, prior0 = omega0(b["L0"])
        S_inv = G @ Om_inv @ G.T + G0 @ Om0_inv @ G0.T
        eta = b["eta"].reshape((u, p), order="F")
        E = stats.scatter(b["mu"], G @ eta)
        D = eta - G.T @ B0
        return (
            const + a_prior + prior1 + prior0
            - 0.5 * n * (ld1 + ld0) - 0.5 * p * ld1
            - 0.5 * np.sum(S_inv * E) - 0.5 * np.sum((Om_inv @ D) * (D @ M))
        )

    def to_blocks(nat):
        return {
            "mu": np.asarray(nat.mu, dtype=float).ravel(),
            "eta": np.asarray(nat.eta, dtype=float).ravel(order="F"),
            "A": np.asarray(nat.A, dtype=float).ravel(order="F"),
            "L1": chol_to_logchol(nat.Omega),
            "L0": chol_to_logchol(nat.Omega0),
        }

    def beta_of(b):
        G = basis(b["A"])[0]
        return (G @ b["eta"].reshape((u, p), order="F")).ravel(order="F")

    return log_target, to_blocks, beta_of


def rw_metropolis_response(ds, spec, priors, iters: int, seed, init, step=None, burn_in=None) -> ChainResult:
    """Random-walk Metropolis on the response-envelope posterior; records vec(beta)."""
    spec.validate(fitting=True)
    if spec.r > 6:
        raise ValidationError("the reference sampler is meant for r <= 6", r=spec.r)
    log_target, to_blocks, beta_of = response_target(ds, spec, priors)
    return rw_metropolis(log_target, to_blocks(init), iters, seed, beta_of, burn_in=burn_in, steps=step)


# predictor model

def predictor_target(ds, spec, priors):
    """Return (log_target, to_blocks, beta_of) for the predictor posterior on blocked coordinates."""
    r, p, m = spec.r, spec.p, spec.m
    q = p - m
    stats = _RegressionStats(ds.Y, ds.X)
    n = stats.n
    XX, xs = stats.XX, stats.xs
    PsiY = np.asarray(priors.PsiY, dtype=float)
    B0 = np.asarray(priors.B0, dtype=float)
    psi = priors.psi_eta0
    const = -0.5 * n * (p + r) * LOG2PI - 0.5 * m * r * LOG2PI - 0.5 * r * m * np.log(psi)

    def eta_prior_parts(A, J, w, V):
        Jinv = (V / w) @ V.T
        mean = (V * np.sqrt(w)) @ V.T @ np.vstack([np.eye(m), A]).T @ B0
        return Jinv, mean, float(np.sum(np.log(w)))

    basis = _basis_piece(q, m, priors.A0, priors.U0A, priors.V0A, extra=eta_prior_parts)
    omega1 = _spd_piece(m, priors.psiX1, priors.nuX1)
    omega0 = _spd_piece(q, priors.psiX0, priors.nuX0)
    sigma = _spd_piece(r, PsiY, priors.nuY)

    def log_target(b):
        G, G0, a_prior, (Jinv, eta_mean, ldJ) = basis(b["A"])
        Om1_inv, ld1, prior1 = omega1(b["L1"])
        Om0_inv, ld0, prior0 = omega0(b["L0"])
        SY_inv, ldY, priorY = sigma(b["LY"])
        muX, muY = b["muX"], b["muY"]
        eta = b["eta"].reshape((m, r), order="F")
        beta = eta.T @ G.T
        SX_inv = G @ Om1_inv @ G.T + G0 @ Om0_inv @ G0.T
        xm = np.outer(xs, muX)
        EX = XX - xm - xm.T + n * np.outer(muX, muX)
        EY = stats.scatter(muY - beta @ muX, beta)
        D = eta - eta_mean
        row_prec = Jinv @ Om1_inv @ Jinv
        return (
            const + a_prior + prior1 + prior0 + priorY
            - 0.5 * n * (ld1 + ld0) - 0.5 * n * ldY
            - 0.5 * (r * (2.0 * ldJ + ld1) + m * ldY)
            - 0.5 * np.sum(SX_inv * EX) - 0.5 * np.sum(SY_inv * EY)
            - 0.5 / psi * np.sum((row_prec @ D) * (D @ SY_inv))
        )

    def to_blocks(nat):
        return {
            "muX": np.asarray(nat.muX, dtype=float).ravel(),
            "muY": np.asarray(nat.muY, dtype=float).ravel(),
            "eta": np.asarray(nat.eta, dtype=float).ravel(order="F"),
            "A": np.asarray(nat.A, dtype=float).ravel(order="F"),
            "L1": chol_to_logchol(nat.Omega1),
            "L0": chol_to_logchol(nat.Omega0),
            "LY": chol_to_logchol(nat.SigmaYX),
        }

    def beta_of(b):
        G = basis(b["A"])[0]
        return (b["eta"].reshape((m, r), order="F").T @ G.T).ravel(order="F")

    return log_target, to_blocks, beta_of


def rw_metropolis_predictor(ds, spec, priors, iters: int, seed, init, step=None, burn_in=None) -> ChainResult:
    """Random-walk Metropolis on the predictor-envelope posterior; records vec(beta)."""
    spec.validate(fitting=True)
    if spec.p > 6:
        raise ValidationError("the reference sampler is meant for p <= 6", p=spec.p)
    log_target, to_blocks, beta_of = predictor_target(ds, spec, priors)
    return rw_metropolis(log_target, to_blocks(init), iters, seed, beta_of, burn_in=burn_in, steps=step)
