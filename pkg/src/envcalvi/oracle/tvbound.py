"""Computable total-variation bound between a Laplace factor and the exact coordinate update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AssumptionError, ValidationError


@dataclass(frozen=True)
class TvBoundInputs:
    """Constants of the bound.

    ``H_f`` is minus the objective Hessian at its maximizer divided by n,
    ``H_l`` the same for the variational log-likelihood; the remaining
    fields are the radii and derivative suprema of the local assumptions.
    """

    n: float
    d1: int
    H_f: np.ndarray
    H_l: np.ndarray
    delta_hat: float
    delta_bar: float
    M1_hat: float
    M1_bar: float
    M2_bar: float
    kappa_hat: float

    def matrices(self):
        Hf = np.atleast_2d(np.asarray(self.H_f, dtype=float))
        Hl = np.atleast_2d(np.asarray(self.H_l, dtype=float))
        if Hf.shape != (self.d1, self.d1) or Hl.shape != (self.d1, self.d1):
            raise ValidationError("H_f and H_l must be d1-by-d1", d1=self.d1)
        return Hf, Hl


def _gauss_exponent(delta, n, Minv):
    tr = float(np.trace(Minv))
    op = float(np.linalg.norm(Minv, 2))
    return -0.5 * (delta * np.sqrt(n) - np.sqrt(tr)) ** 2 / op


def check_assumptions(inp: TvBoundInputs) -> None:
    Hf, Hl = inp.matrices()
    for name in ("delta_hat", "delta_bar", "M1_hat", "M1_bar", "M2_bar", "kappa_hat"):
        if getattr(inp, name) <= 0:
            raise AssumptionError(f"{name} must be positive", violated=f"{name} > 0")
    lam_f = float(np.linalg.eigvalsh(Hf).min())
    if lam_f <= inp.delta_hat * inp.M1_hat:
        raise AssumptionError(
            "lambda_min(H_f) must exceed delta_hat * M1_hat",
            violated="lambda_min(H_f) > delta_hat * M1_hat",
            lambda_min=lam_f,
            product=inp.delta_hat * inp.M1_hat,
        )
    if float(np.linalg.eigvalsh(Hl).min()) <= 0:
        raise AssumptionError("H_l must be positive definite", violated="H_l > 0")
    root_n = np.sqrt(inp.n)
    tr_f = float(np.trace(np.linalg.inv(Hf)))
    if not inp.delta_hat * root_n > np.sqrt(tr_f):
        raise AssumptionError(
            "delta_hat * sqrt(n) must exceed sqrt(tr(H_f^-1))",
            violated="delta_hat sqrt(n) > sqrt(tr H_f^-1)",
        )
    tr_l = float(np.trace(np.linalg.inv(Hl)))
    if not inp.delta_bar * root_n > np.sqrt(tr_l):
        raise AssumptionError(
            "delta_bar * sqrt(n) must exceed sqrt(tr(H_l^-1))",
            violated="delta_bar sqrt(n) > sqrt(tr H_l^-1)",
        )


def tv_bound(inp: TvBoundInputs) -> dict:
    """Return {bound, C1, C2, T_hat, T_bar_J}; raises AssumptionError on violated inequalities."""
    check_assumptions(inp)
    Hf, Hl = inp.matrices()
    n, d1 = float(inp.n), inp.d1
    Hf_inv = np.linalg.inv(Hf)
    J = Hl + (inp.M1_bar * inp.delta_bar / 3.0) * np.eye(d1)
    J_inv = np.linalg.inv(J)
    T_hat = _gauss_exponent(inp.delta_hat, n, Hf_inv)
    T_bar = _gauss_exponent(inp.delta_bar, n, J_inv)
    lam_f = float(np.linalg.eigvalsh(Hf).min())
    C1 = (np.sqrt(3.0) * np.trace(Hf_inv) * inp.M1_hat) / (
        4.0 * np.sqrt((lam_f - inp.delta_hat * inp.M1_hat) * (1.0 - np.exp(T_hat)))
    )
    det_term = abs(np.linalg.det(J_inv)) ** (-0.5)
    C2 = 2.0 * det_term * inp.M2_bar / ((2.0 * np.pi) ** (d1 / 2.0) * (1.0 - np.exp(T_bar)))
    bound = C1 / np.sqrt(n) + 2.0 * np.exp(T_hat) + C2 * n ** (d1 / 2.0) * np.exp(-n * inp.kappa_hat)
    return {"bound": float(bound), "C1": float(C1), "C2": float(C2), "T_hat": float(T_hat), "T_bar_J": float(T_bar)}


def tv_bound_crossover(inp: TvBoundInputs) -> float:
    """Sample size beyond which every term of the bound is strictly decreasing in n."""
    Hf, Hl = inp.matrices()
    J = Hl + (inp.M1_bar * inp.delta_bar / 3.0) * np.eye(inp.d1)
    return float(
        max(
            np.trace(np.linalg.inv(Hf)) / inp.delta_hat**2,
            np.trace(np.linalg.inv(J)) / inp.delta_bar**2,
            inp.d1 / (2.0 * inp.kappa_hat),
        )
    )


def estimate_third_derivative_norm(f, x, radius: float, directions: int = 64, seed=0, h: float = 1e-3) -> float:
    """Sampled-direction ESTIMATE of sup |f'''(x)[v, v, v]| over unit v on a ball.

    Not a certified bound: it evaluates third directional differences at
    random points and directions and returns the largest magnitude seen.
    """
    from ..simgen import rng_for

    rng = rng_for(seed)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    best = 0.0
    for _ in range(directions):
        v = rng.standard_normal(x.size)
        v /= np.linalg.norm(v)
        z = rng.standard_normal(x.size)
        z *= radius * rng.uniform() ** (1.0 / x.size) / np.linalg.norm(z)
        c = x + z
        third = (f(c + 2 * h * v) - 2 * f(c + h * v) + 2 * f(c - h * v) - f(c - 2 * h * v)) / (2 * h**3)
        best = max(best, abs(float(third)))
    return best
