"""Synthetic data for both envelope models.

All randomness comes from ``numpy.random.Generator(Philox(seed))``.  Truth
parameters are drawn before the design and the errors, so one seed fixes the
truth regardless of ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import envelope as env
from .errors import ValidationError
from .kron import check_spd, symmetrize
from .predictor import Dataset, PredictorEnvSpec, PredictorNaturalParams, beta_natural as pred_beta
from .predictor import x_covariance
from .response import NaturalParams, ResponseEnvSpec, beta_natural, covariance


def rng_for(seed) -> np.random.Generator:
    """Counter-based Philox stream for ``seed``."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class ResponseRanges:
    mu: tuple = (0.0, 10.0)
    eta: tuple = (0.0, 10.0)
    A: tuple = (-1.0, 1.0)
    omega: tuple = (0.0, 1.0)
    omega0: tuple = (5.0, 10.0)


def _uniform(rng, bounds, size):
    lo, hi = bounds
    return rng.uniform(lo, hi, size=size) if hi > lo else np.full(size, float(lo))


def draw_response_truth(spec: ResponseEnvSpec, rng, ranges: ResponseRanges = ResponseRanges()) -> NaturalParams:
    r, p, u = spec.r, spec.p, spec.u
    return NaturalParams(
        mu=_uniform(rng, ranges.mu, r),
        eta=_uniform(rng, ranges.eta, (u, p)),
        Omega=np.diag(_uniform(rng, ranges.omega, u)),
        Omega0=np.diag(_uniform(rng, ranges.omega0, r - u)),
        A=_uniform(rng, ranges.A, (r - u, u)),
    )


def gen_response(spec: ResponseEnvSpec, seed, n: int, ranges: ResponseRanges = ResponseRanges(),
                 x_law: str = "normal"):
    """Return (Dataset, truth) for the response envelope model."""
    spec.validate(fitting=True)
    if n < 2:
        raise ValidationError("n must be at least 2", n=n)
    rng = rng_for(seed)
    truth = draw_response_truth(spec, rng, ranges)
    if x_law == "normal":
        X = rng.standard_normal((n, spec.p))
    elif x_law == "uniform":
        X = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(n, spec.p))
    else:
        raise ValidationError("x_law must be 'normal' or 'uniform'", x_law=x_law)
    Sigma = covariance(truth)
    E = rng.multivariate_normal(np.zeros(spec.r), Sigma, size=n, method="cholesky")
    Y = truth.mu + X @ beta_natural(truth).T + E
    return Dataset(Y=Y, X=X), truth


def sample_inverse_wishart(df: float, scale, seed=None, rng=None) -> np.ndarray:
    """One draw from IW_d(scale, df) by the Bartlett construction."""
    scale = check_spd(np.atleast_2d(scale), "scale")
    d = scale.shape[0]
    if df <= d - 1:
        raise ValidationError("df must exceed d - 1", df=df, d=d)
    if rng is None:
        rng = rng_for(0 if seed is None else seed)
    # W ~ Wishart(scale^{-1}, df); the inverse is IW(scale, df)
    chol = np.linalg.cholesky(np.linalg.inv(scale))
    B = np.zeros((d, d))
    B[np.diag_indices(d)] = np.sqrt(rng.chisquare(df - np.arange(d)))
    B[np.tril_indices(d, -1)] = rng.standard_normal(d * (d - 1) // 2)
    F = chol @ B
    W = F @ F.T
    return symmetrize(np.linalg.inv(symmetrize(W)))


def draw_predictor_truth(spec: PredictorEnvSpec, rng) -> PredictorNaturalParams:
    r, p, m = spec.r, spec.p, spec.m
    muX = rng.uniform(-10.0, 10.0, p)
    muY = rng.uniform(-10.0, 10.0, r)
    eta = rng.uniform(5.0, 10.0, (m, r))
    A = rng.uniform(0.0, 5.0, (p - m, m))
    Omega1 = 5.0 * sample_inverse_wishart(m + 2, 5.0 * np.eye(m), rng=rng)
    Omega0 = sample_inverse_wishart(p - m + 2, 0.1 * np.eye(p - m), rng=rng)
    SigmaYX = sample_inverse_wishart(r + 1, 5.0 * np.eye(r), rng=rng)
    return PredictorNaturalParams(muX=muX, muY=muY, eta=eta, Omega1=Omega1, Omega0=Omega0, SigmaYX=SigmaYX, A=A)


def gen_predictor(spec: PredictorEnvSpec, seed, n: int):
    """Return (Dataset, truth) for the predictor envelope model."""
    spec.validate(fitting=True)
    if n < 2:
        raise ValidationError("n must be at least 2", n=n)
    rng = rng_for(seed)
    truth = draw_predictor_truth(spec, rng)
    X = rng.multivariate_normal(truth.muX, x_covariance(truth), size=n, method="cholesky")
    E = rng.multivariate_normal(np.zeros(spec.r), truth.SigmaYX, size=n, method="cholesky")
    Y = truth.muY + (X - truth.muX) @ pred_beta(truth).T + E
    return Dataset(Y=Y, X=X), truth


def true_beta(truth) -> np.ndarray:
    if isinstance(truth, PredictorNaturalParams):
        return pred_beta(truth)
    return beta_natural(truth)


def envelope_basis(truth):
    return env.gamma_from_A(truth.A)
