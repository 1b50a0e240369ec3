"""Derivatives of (U^T U)^{-1/2} over vec(U) and the derivative-cost benchmark.

With ``F = (U^T U)^{-1/2}`` and ``P = F F`` the Jacobian of vec(F) is
``-Q^{-1} R`` where ``Q = F (x) I + I (x) F`` and
``R = P (x) (P U^T) + (P U^T (x) P) K_{r,k}``.
"""

from __future__ import annotations

import time

import numpy as np

from .. import envelope as env
from ..kron import Commutation, invsqrt_spd, kron, unvec


def _pieces(U):
    U = np.asarray(U, dtype=float)
    r, k = U.shape
    F = invsqrt_spd(U.T @ U)
    P = F @ F
    eye = np.eye(k)
    Q = kron(F, eye) + kron(eye, F)
    PUt = P @ U.T
    R = kron(P, PUt) + kron(PUt, P) @ Commutation(r, k)
    return F, P, Q, R


def euclid_invsqrt_jacobian(U) -> np.ndarray:
    """Jacobian (k^2 by rk) of vec((U^T U)^{-1/2}) with respect to vec(U)."""
    _, _, Q, R = _pieces(U)
    return -np.linalg.solve(Q, R)


def euclid_invsqrt_second(U, dU) -> np.ndarray:
    """Directional derivative of :func:`euclid_invsqrt_jacobian` along ``dU``."""
    U = np.asarray(U, dtype=float)
    dU = np.asarray(dU, dtype=float)
    r, k = U.shape
    F, P, Q, R = _pieces(U)
    jac = -np.linalg.solve(Q, R)
    dF = unvec(jac @ dU.reshape(-1, order="F"), k, k)
    dJ = dU.T @ U + U.T @ dU
    dP = -P @ dJ @ P
    PUt = P @ U.T
    dPUt = dP @ U.T + P @ dU.T
    eye = np.eye(k)
    dQ = kron(dF, eye) + kron(eye, dF)
    dR = kron(dP, PUt) + kron(P, dPUt) + (kron(dPUt, P) + kron(PUt, dP)) @ Commutation(r, k)
    # d(-Q^{-1} R) = Q^{-1} dQ Q^{-1} R - Q^{-1} dR
    return np.linalg.solve(Q, dQ @ np.linalg.solve(Q, R) - dR)


def _median_ms(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * float(np.median(times))


def bench_derivatives(r: int, u: int, reps: int = 5, seed=0) -> dict:
    """Median wall-clock milliseconds of the two derivative assemblies.

    ``euclid_ms`` times the inverse square-root Jacobians for both basis
    blocks (k = u and k = r - u); ``reparam_ms`` times the Hessian of the
    reparameterized A objective.
    """
    from ..response_laplace import MomentBundle, hess_ftilde
    from ..simgen import rng_for

    reps = max(int(reps), 5)
    rng = rng_for(seed)
    q = r - u
    A = rng.uniform(-1.0, 1.0, (q, u))
    C, D = env.c_block(A), env.d_block(A)
    M = rng.standard_normal((r, r))
    G = M @ M.T + r * np.eye(r)
    mb = MomentBundle(
        E_Om_inv=np.eye(u), E_Om0_inv=np.eye(q), eta_q=np.zeros((u, 1)), Gr1=G, Gr2=G,
        Hmat=np.zeros((1, r)), kappa=2.0 * r, A0=np.zeros((q, u)), U0A_inv=np.eye(q), V0A_inv=np.eye(u),
    )

    def euclid():
        euclid_invsqrt_jacobian(C)
        euclid_invsqrt_jacobian(D)

    euclid_ms = _median_ms(euclid, reps)
    reparam_ms = _median_ms(lambda: hess_ftilde(A, mb), reps)
    return {"r": r, "u": u, "reps": reps, "euclid_ms": euclid_ms, "reparam_ms": reparam_ms,
            "ratio": euclid_ms / reparam_ms}
