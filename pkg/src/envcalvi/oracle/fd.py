"""Central finite differences.

Gradients and Jacobians use step ``1e-5 (1 + |x_i|)``; second differences use
``1e-4 (1 + |x_i|)``, which balances truncation and roundoff for O(h^2) stencils.
"""

from __future__ import annotations

import numpy as np

DEFAULT_REL_STEP = 1e-5
HESS_REL_STEP = 1e-4


def _steps(x, h, rel=DEFAULT_REL_STEP):
    x = np.asarray(x, dtype=float)
    if h is None:
        return rel * (1.0 + np.abs(x))
    return np.broadcast_to(np.asarray(h, dtype=float), x.shape).copy()


def fd_grad(f, x, h=None) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float).ravel()
    steps = _steps(x, h)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = steps[i]
        g[i] = (f(x + e) - f(x - e)) / (2.0 * steps[i])
    return g


def fd_jacobian(F, x, h=None) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued function; rows index outputs."""
    x = np.asarray(x, dtype=float).ravel()
    steps = _steps(x, h)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = steps[i]
        cols.append((np.ravel(F(x + e)) - np.ravel(F(x - e))) / (2.0 * steps[i]))
    return np.column_stack(cols)


def fd_hess(f, x, h=None) -> np.ndarray:
    """Second-order central-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float).ravel()
    steps = _steps(x, h, HESS_REL_STEP)
    d = x.size
    H = np.empty((d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = steps[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / steps[i] ** 2
        for j in range(i):
            ej = np.zeros(d)
            ej[j] = steps[j]
            val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * steps[i] * steps[j])
            H[i, j] = H[j, i] = val
    return H


def relative_error(approx, exact) -> float:
    """max |approx - exact| / max(max |exact|, tiny)."""
    approx, exact = np.asarray(approx, dtype=float), np.asarray(exact, dtype=float)
    scale = max(float(np.max(np.abs(exact))) if exact.size else 0.0, np.finfo(float).tiny)
    return float(np.max(np.abs(approx - exact)) / scale) if exact.size else 0.0
