"""Entropies and log-moment identities of the variational factor families."""

from __future__ import annotations

import numpy as np
from scipy.special import digamma, multigammaln

from .kron import logdet_spd

LOG2 = float(np.log(2.0))
LOG2PI = float(np.log(2.0 * np.pi))


def mvdigamma(x: float, d: int) -> float:
    """Multivariate digamma sum_{s=1..d} psi(x + (1 - s)/2)."""
    if d == 0:
        return 0.0
    return float(np.sum(digamma(x + 0.5 * (1 - np.arange(1, d + 1)))))


def mvgammaln(x: float, d: int) -> float:
    return float(multigammaln(x, d)) if d else 0.0


def expected_logdet_inverse(Psi, nu: float) -> float:
    """E log|S^{-1}| for S ~ IW_d(Psi, nu)."""
    d = Psi.shape[0]
    return mvdigamma(0.5 * nu, d) + d * LOG2 - logdet_spd(Psi)


def iw_log_normalizer(logdet_scale: float, nu: float, d: int) -> float:
    """log of the IW_d(Psi, nu) normalizing constant given log|Psi|."""
    return 0.5 * nu * logdet_scale - 0.5 * nu * d * LOG2 - mvgammaln(0.5 * nu, d)


def iw_entropy(Psi, nu: float) -> float:
    d = Psi.shape[0]
    if d == 0:
        return 0.0
    ld_inv = -logdet_spd(Psi)
    return (
        0.5 * nu * ld_inv
        + 0.5 * nu * d * (LOG2 + 1.0)
        + mvgammaln(0.5 * nu, d)
        - 0.5 * (nu + d + 1) * (mvdigamma(0.5 * nu, d) + d * LOG2 + ld_inv)
    )


def gaussian_entropy(logdet_cov: float, d: int) -> float:
    return 0.5 * d * (LOG2PI + 1.0) + 0.5 * logdet_cov


def matrix_normal_entropy(U, V) -> float:
    """Entropy of MN(., U, V) with U the row and V the column covariance."""
    a, b = U.shape[0], V.shape[0]
    return 0.5 * a * b * (LOG2PI + 1.0) + 0.5 * b * logdet_spd(U) + 0.5 * a * logdet_spd(V)
