"""Randomized verification gates shared by the ``check`` command and the test suite.

Each gate returns a list of per-instance records with the measured error and
a pass flag, so callers can report or assert on them.
"""

from __future__ import annotations

import numpy as np

from .. import envelope as env
from .. import predictor as pred
from .. import predictor_cavi as pc
from .. import response as resp
from .. import response_cavi as rc
from .. import response_laplace as rl
from ..kron import ktr, unvec, vec
from .fd import fd_grad, fd_hess, relative_error
from .mc import mc_gaussian_quadratic

GRAD_TOL = 1e-5
HESS_TOL = 1e-4


def _random_spd(rng, d, scale=1.0):
    M = rng.standard_normal((d, d))
    return scale * (M @ M.T / d + np.eye(d))


def _record(name, error, tol, **info):
    return {"check": name, "error": float(error), "tol": tol, "passed": bool(error <= tol), **info}


def _response_instance(rng):
    from ..simgen import gen_response

    r = int(rng.integers(2, 9))
    u = int(rng.integers(1, min(3, r - 1) + 1))
    p = int(rng.integers(1, 5))
    n = int(rng.integers(20, 201))
    spec = resp.ResponseEnvSpec(r, p, u)
    ds, _ = gen_response(spec, int(rng.integers(2**31)), n)
    priors = resp.ResponsePriors.vague(spec)
    st = rc.initial_state(ds, spec, priors)
    mb = rc.moment_bundle(st, ds, priors)
    A = st.A_hat + 0.3 * rng.standard_normal(st.A_hat.shape)
    return (r, p, u, n), mb, A


def _predictor_instance(rng):
    from ..simgen import gen_predictor

    p = int(rng.integers(2, 9))
    m = int(rng.integers(1, min(3, p - 1) + 1))
    r = int(rng.integers(1, 5))
    n = int(rng.integers(20, 201))
    spec = pred.PredictorEnvSpec(r, p, m)
    ds, _ = gen_predictor(spec, int(rng.integers(2**31)), n)
    priors = pred.PredictorPriors.vague(spec)
    st = pc.initial_state(ds, spec, priors)
    mo = pc.moments(st, ds, priors)
    A = st.A_hat + 0.3 * rng.standard_normal(st.A_hat.shape)
    return (r, p, m, n), mo, A


def derivative_gate(model: str, instances: int = 20, seed=0) -> list:
    """Analytic gradient and Hessian of the basis objective against central differences."""
    from ..simgen import rng_for

    rng = rng_for(seed)
    out = []
    for i in range(instances):
        if model == "response":
            dims, bundle, A = _response_instance(rng)
            fn, gr, hs = rl.ftilde, rl.grad_ftilde, rl.hess_ftilde
        else:
            dims, bundle, A = _predictor_instance(rng)
            fn, gr, hs = pc.ftildeX, pc.grad_ftildeX, pc.hess_ftildeX
        shape = A.shape

        def f(v):
            return fn(unvec(v, *shape), bundle)

        x = vec(A)
        g_err = relative_error(vec(gr(A, bundle)), fd_grad(f, x))
        h_err = relative_error(hs(A, bundle), fd_hess(f, x))
        out.append(_record(f"{model}_grad", g_err, GRAD_TOL, instance=i, dims=dims))
        out.append(_record(f"{model}_hess", h_err, HESS_TOL, instance=i, dims=dims))
    return out


def ktr_identity_gate(instances: int = 200, seed=0, tol: float = 1e-12) -> list:
    """tr((S kron R) H) == tr(S ktr(R, H)) on random square blocks."""
    from ..simgen import rng_for

    rng = rng_for(seed)
    out = []
    for i in range(instances):
        a, d = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        S, R = rng.standard_normal((a, a)), rng.standard_normal((d, d))
        H = rng.standard_normal((a * d, a * d))
        lhs = np.trace(np.kron(S, R) @ H)
        rhs = np.trace(S @ ktr(R, H))
        out.append(_record("ktr_identity", abs(lhs - rhs) / max(1.0, abs(lhs)), tol, instance=i))
    return out


def gaussian_expectation_gate(instances: int = 20, draws: int = 100_000, seed=0) -> list:
    """Closed-form E tr(C_A' C1 C_A C2) and its D_A analogue against Monte Carlo (3 MCSE)."""
    from ..simgen import rng_for

    rng = rng_for(seed)
    out = []
    for i in range(instances):
        d = int(rng.integers(2, 7))
        k = int(rng.integers(1, d))
        A_hat = rng.uniform(-1, 1, (d - k, k))
        cov = _random_spd(rng, (d - k) * k, 0.05)
        C1 = _random_spd(rng, d)
        for kind, size, closed in (("C", k, env.expected_c_quadratic), ("D", d - k, env.expected_d_quadratic)):
            C2 = _random_spd(rng, size)
            exact = closed(C1, C2, A_hat, cov)
            est, mcse = mc_gaussian_quadratic(C1, C2, A_hat, cov, kind, draws, seed=int(rng.integers(2**31)))
            z = abs(est - exact) / mcse
            out.append(_record(f"expectation_{kind}", z, 3.0, instance=i, exact=exact, estimate=est, mcse=mcse))
    return out


def _response_draw(rng):
    from ..simgen import draw_response_truth

    r = int(rng.integers(2, 8))
    u = int(rng.integers(1, r))
    p = int(rng.integers(1, 5))
    spec = resp.ResponseEnvSpec(r, p, u)
    return spec, draw_response_truth(spec, rng)


def _predictor_draw(rng):
    from ..simgen import draw_predictor_truth

    p = int(rng.integers(2, 8))
    m = int(rng.integers(1, p))
    r = int(rng.integers(1, 5))
    spec = pred.PredictorEnvSpec(r, p, m)
    return spec, draw_predictor_truth(spec, rng)


def _max_diff(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) if np.size(a) else 0.0


def _scaled(a, b) -> float:
    return _max_diff(a, b) / max(1.0, float(np.max(np.abs(b))) if np.size(b) else 1.0)


def reparameterization_gate(draws: int = 100, seed=0, tol: float = 1e-10, orth_tol: float = 1e-12) -> list:
    """Round trip, covariance reconstruction, two-path beta and basis orthogonality for both models."""
    from ..simgen import rng_for

    rng = rng_for(seed)
    out = []
    for i in range(draws):
        spec, nat = _response_draw(rng)
        Xbar = rng.standard_normal(spec.p)
        tp = resp.reparameterize(nat, Xbar)
        back = resp.inverse_reparameterize(tp, Xbar)
        rt = max(_scaled(getattr(back, f), getattr(nat, f)) for f in ("mu", "eta", "Omega", "Omega0", "A"))
        out.append(_record("response_roundtrip", rt, tol, instance=i))
        out.append(_record("response_covariance", _scaled(resp.covariance_tilde(tp), resp.covariance(nat)), tol, instance=i))
        out.append(_record("response_beta", _scaled(resp.beta_from_tilde(tp.A, tp.eta_t), resp.beta_natural(nat)), tol, instance=i))
        out.append(_record("response_orthogonality", _orth_error(nat.A), orth_tol, instance=i))

        spec, nat = _predictor_draw(rng)
        tp = pred.reparameterize(nat)
        back = pred.inverse_reparameterize(tp)
        fields = ("muX", "muY", "eta", "Omega1", "Omega0", "SigmaYX", "A")
        rt = max(_scaled(getattr(back, f), getattr(nat, f)) for f in fields)
        out.append(_record("predictor_roundtrip", rt, tol, instance=i))
        out.append(_record("predictor_covariance", _scaled(pred.x_covariance_tilde(tp), pred.x_covariance(nat)), tol, instance=i))
        out.append(_record("predictor_beta", _scaled(pred.beta_from_tilde(tp.A, tp.eta_t), pred.beta_natural(nat)), tol, instance=i))
        out.append(_record("predictor_orthogonality", _orth_error(nat.A), orth_tol, instance=i))
    return out


def _orth_error(A) -> float:
    G, G0 = env.gamma_from_A(A)
    u, q = G.shape[1], G0.shape[1]
    return max(_max_diff(G.T @ G, np.eye(u)), _max_diff(G0.T @ G0, np.eye(q)), _max_diff(G.T @ G0, np.zeros((u, q))))


def run_all(seed=0, quick: bool = True) -> list:
    """Every gate; ``quick`` shrinks instance counts for interactive use."""
    scale = 0.25 if quick else 1.0
    n_fd = max(2, int(20 * scale))
    out = derivative_gate("response", n_fd, seed) + derivative_gate("predictor", n_fd, seed)
    out += ktr_identity_gate(max(10, int(200 * scale)), seed)
    out += gaussian_expectation_gate(max(2, int(20 * scale)), 20_000 if quick else 100_000, seed)
    out += reparameterization_gate(max(10, int(100 * scale)), seed)
    return out
