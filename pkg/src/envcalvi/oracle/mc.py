"""Monte Carlo estimates of Gaussian expectations over vec(A)."""

from __future__ import annotations

import numpy as np

from .. import envelope as env
from ..errors import ValidationError
from ..kron import unvec, vec


def mc_mean(values) -> tuple[float, float]:
    """Sample mean and its iid standard error."""
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def sample_vec_gaussian(A_hat, cov, draws: int, rng) -> np.ndarray:
    """Draws of A (shape (draws, rows, cols)) with vec(A) ~ N(vec(A_hat), cov)."""
    A_hat = np.asarray(A_hat, dtype=float)
    k = A_hat.size
    w, V = np.linalg.eigh(np.asarray(cov, dtype=float).reshape(k, k))
    root = V * np.sqrt(np.clip(w, 0.0, None))
    z = rng.standard_normal((draws, k)) @ root.T + vec(A_hat)
    return np.stack([unvec(row, *A_hat.shape) for row in z])


def mc_gaussian_quadratic(C1, C2, A_hat, cov, kind: str = "C", draws: int = 100_000, seed=0):
    """MC estimate of E tr(C_A^T C1 C_A C2) (kind "C") or the D_A analogue.

    Returns (estimate, mcse).
    """
    from ..simgen import rng_for

    if kind not in ("C", "D"):
        raise ValidationError("kind must be 'C' or 'D'", kind=kind)
    A_hat = np.asarray(A_hat, dtype=float)
    q, u = A_hat.shape
    rng = rng_for(seed)
    samples = sample_vec_gaussian(A_hat, cov, draws, rng)
    K, L = env.selectors(q + u, u)
    if kind == "C":
        B = K[None] + L[None] @ samples  # (draws, d, u)
    else:
        B = L[None] - K[None] @ np.transpose(samples, (0, 2, 1))  # (draws, d, q)
    vals = np.einsum("nai,ab,nbj,ji->n", B, C1, B, C2)
    if np.allclose(cov, 0.0):
        return float(vals[0]), 0.0
    return mc_mean(vals)
