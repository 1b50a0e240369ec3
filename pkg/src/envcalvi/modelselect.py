"""BIC dimension posterior, model averaging of beta, MSE and the residual bootstrap.

Candidate fits and bootstrap replicates are independent tasks.  They run in
worker processes when ``parallel > 1``; results are collected in task order
and each replicate draws from its own stream ``seed ^ index``, so the output
does not depend on scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import predictor as pred
from . import predictor_cavi as pc
from . import response as resp
from . import response_cavi as rc
from .errors import EnvcalviError, NumericalError, ValidationError
from .response import Dataset
from .response_cavi import FitOptions

MODELS = ("response", "predictor")


@dataclass(frozen=True)
class DimensionPosterior:
    dims: tuple
    logliks: tuple
    bics: tuple
    probs: tuple

    @property
    def mode(self) -> int:
        return self.dims[int(np.argmax(self.probs))]

    def prob_of(self, dim: int) -> float:
        """Posterior mass of ``dim``; zero for a dimension that is not a candidate."""
        return self.probs[self.dims.index(dim)] if dim in self.dims else 0.0


def bic(loglik: float, d_M: int, n: int) -> float:
    """-2 loglik + d_M log n."""
    return -2.0 * float(loglik) + float(d_M) * float(np.log(n))


def model_size(model: str, r: int, p: int, dim: int) -> int:
    """Free-parameter count d_M of an envelope model of dimension ``dim``."""
    if model == "response":
        return r + r * (r + 1) // 2 + dim * p
    if model == "predictor":
        return r + p + r * (r + 1) // 2 + p * (p + 1) // 2 + dim * r
    raise ValidationError("model must be 'response' or 'predictor'", model=model)


def dim_posterior(bics, prior=None, dims=None, logliks=None) -> DimensionPosterior:
    """Posterior over dimensions proportional to exp(-BIC/2) prior, by log-sum-exp."""
    bics = np.asarray(bics, dtype=float)
    if bics.ndim != 1 or bics.size == 0:
        raise ValidationError("need at least one candidate BIC")
    if not np.all(np.isfinite(bics)):
        raise ValidationError("BIC values must be finite", bics=bics.tolist())
    if prior is None:
        log_prior = np.full(bics.size, -np.log(bics.size))
    else:
        prior = np.asarray(prior, dtype=float)
        if prior.shape != bics.shape or np.any(prior < 0) or prior.sum() <= 0:
            raise ValidationError("prior must be non-negative, one weight per candidate")
        with np.errstate(divide="ignore"):
            log_prior = np.log(prior / prior.sum())
    logits = -0.5 * bics + log_prior
    probs = np.exp(logits - logsumexp(logits))
    dims = tuple(range(bics.size)) if dims is None else tuple(int(d) for d in dims)
    logliks = tuple([float("nan")] * bics.size) if logliks is None else tuple(float(v) for v in logliks)
    return DimensionPosterior(dims=dims, logliks=logliks, bics=tuple(bics.tolist()), probs=tuple(probs.tolist()))


def bma_beta(betas, probs) -> np.ndarray:
    """Probability-weighted average of per-dimension coefficient matrices."""
    betas = np.asarray(betas, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if betas.ndim != 3 or betas.shape[0] != probs.size:
        raise ValidationError("need one r-by-p matrix per weight", betas=betas.shape, probs=probs.shape)
    return np.tensordot(probs, betas, axes=1)


def mse_beta(beta_hat, beta_star) -> float:
    """Squared Frobenius distance."""
    diff = np.asarray(beta_hat, dtype=float) - np.asarray(beta_star, dtype=float)
    return float(np.sum(diff * diff))


# per-dimension fits

@dataclass(frozen=True)
class DimensionFit:
    dim: int
    loglik: float
    d_M: int
    bic: float
    beta_hat: np.ndarray
    mu_hat: np.ndarray
    converged: bool
    iterations: int
    wall_time: float
    drift: float


def _spec(model, r, p, dim):
    if model == "response":
        return resp.ResponseEnvSpec(r, p, dim)
    if model == "predictor":
        return pred.PredictorEnvSpec(r, p, dim)
    raise ValidationError("model must be 'response' or 'predictor'", model=model)


def fit_model(ds: Dataset, model: str, dim: int, priors=None, opts: FitOptions = FitOptions()):
    """Run the variational fit of one model; boundary dimensions use the conjugate-only path."""
    spec = _spec(model, ds.r, ds.p, dim)
    full = ds.r if model == "response" else ds.p
    if model == "response":
        return (rc.fit_boundary if dim in (0, full) else rc.fit)(ds, spec, priors, opts)
    return (pc.fit_boundary if dim in (0, full) else pc.fit_pred)(ds, spec, priors, opts)


def plugin_loglik(ds: Dataset, model: str, report) -> float:
    """Log-likelihood at the variational plug-in parameters."""
    if model == "response":
        return resp.loglik_at(rc.plugin_natural(report.state, ds), ds)
    return pred.loglik_at(pc.plugin_natural(report.state, ds), ds)


def fit_dimension(ds: Dataset, model: str, dim: int, priors=None, opts: FitOptions = FitOptions()):
    """Fit one candidate and score it; returns (DimensionFit, FitReport).

    ``drift`` is the relative change produced by one extra sweep from the
    final state (the fixed-point diagnostic).
    """
    report = fit_model(ds, model, dim, priors, opts)
    ll = plugin_loglik(ds, model, report)
    d_M = model_size(model, ds.r, ds.p, dim)
    drift_of = rc.fixed_point_drift if model == "response" else pc.fixed_point_drift
    summary = DimensionFit(
        dim=dim, loglik=ll, d_M=d_M, bic=bic(ll, d_M, ds.n), beta_hat=report.beta_hat, mu_hat=report.mu_hat,
        converged=report.converged, iterations=report.iterations, wall_time=report.wall_time,
        drift=drift_of(report, ds, priors, opts),
    )
    return summary, report


def worker_count(parallel: int, tasks: int) -> int:
    """Requested workers capped by ENVCALVI_THREADS (default: available cores) and the task count."""
    cap = os.environ.get("ENVCALVI_THREADS")
    limit = int(cap) if cap else (len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
    return max(1, min(int(parallel), max(limit, 1), tasks))


def _run_tasks(fn, tasks, parallel: int):
    workers = worker_count(parallel, len(tasks))
    if workers == 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _dimension_task(task):
    ds, model, dim, priors, opts = task
    try:
        summary, _ = fit_dimension(ds, model, dim, priors, opts)
    except NumericalError as err:
        return None, {"dim": dim, **err.to_dict()}
    return summary, None


@dataclass(frozen=True)
class Selection:
    posterior: DimensionPosterior
    fits: tuple
    beta_bma: np.ndarray
    failed: tuple = ()

    @property
    def mode(self) -> int:
        return self.posterior.mode


def select_dimension(ds: Dataset, model: str, dims=None, prior=None, opts: FitOptions = FitOptions(),
                     parallel: int = 1, priors=None) -> Selection:
    """Fit every candidate dimension, form the BIC posterior and the BMA coefficient.

    ``priors`` may map a dimension to its prior object; missing dimensions use
    the vague defaults.  A candidate whose fit raises a numerical error is
    recorded in ``failed`` and left out of the posterior.
    """
    full = ds.r if model == "response" else ds.p
    dims = list(range(full + 1)) if dims is None else [int(d) for d in dims]
    if not dims:
        raise ValidationError("need at least one candidate dimension")
    priors = priors or {}
    tasks = [(ds, model, d, priors.get(d), opts) for d in dims]
    results = _run_tasks(_dimension_task, tasks, parallel)
    fits = [f for f, _ in results if f is not None]
    failed = tuple(err for _, err in results if err is not None)
    if not fits:
        raise NumericalError("every candidate fit failed", failed=list(failed))
    kept = [i for i, (f, _) in enumerate(results) if f is not None]
    if prior is not None:
        prior = np.asarray(prior, dtype=float)
        if prior.shape != (len(dims),):
            raise ValidationError("prior must have one weight per candidate", prior=prior.shape, dims=len(dims))
        prior = prior[kept]
    post = dim_posterior([f.bic for f in fits], prior, dims=[f.dim for f in fits], logliks=[f.loglik for f in fits])
    beta = bma_beta([f.beta_hat for f in fits], post.probs)
    return Selection(posterior=post, fits=tuple(fits), beta_bma=beta, failed=failed)


# residual bootstrap

@dataclass(frozen=True)
class BootstrapResult:
    rmse: float
    per_replicate: tuple
    failures: int
    betas: tuple
    B: int


def residuals(ds: Dataset, beta_hat, mu_hat) -> np.ndarray:
    return ds.Y - mu_hat - ds.X @ np.asarray(beta_hat).T


def _bootstrap_task(task):
    from .simgen import rng_for

    ds, model, dim, priors, opts, beta_hat, mu_hat, seed, b = task
    R = residuals(ds, beta_hat, mu_hat)
    rng = rng_for(int(seed) ^ int(b))
    idx = rng.integers(0, ds.n, ds.n)
    Y_star = mu_hat + ds.X @ beta_hat.T + R[idx]
    try:
        report = fit_model(Dataset(Y=Y_star, X=ds.X), model, dim, priors, opts)
    except EnvcalviError as err:
        return None, err.to_dict()
    if not report.converged:
        return None, {"error": "ConvergenceError", "message": "replicate fit did not converge"}
    return report.beta_hat, None


def residual_bootstrap(ds: Dataset, model: str, report, B: int, seed, priors=None,
                       opts: FitOptions = FitOptions(), parallel: int = 1) -> BootstrapResult:
    """Residual bootstrap of beta at the dimension of ``report``.

    Replicates whose fit raises or does not converge are excluded and counted
    in ``failures``.  ``rmse = sqrt(mean_b ||beta_b - beta_hat||_F^2 / (r p))``.
    """
    if B < 1:
        raise ValidationError("B must be >= 1", B=B)
    if not report.converged:
        raise ValidationError("the original fit must have converged")
    st = report.state
    dim = st.eta_q.shape[0] if model == "response" else st.m
    beta_hat, mu_hat = np.asarray(report.beta_hat), np.asarray(report.mu_hat)
    tasks = [(ds, model, dim, priors, opts, beta_hat, mu_hat, seed, b) for b in range(B)]
    results = _run_tasks(_bootstrap_task, tasks, parallel)
    betas = [beta for beta, _ in results if beta is not None]
    failures = sum(beta is None for beta, _ in results)
    scale = ds.r * ds.p
    per = tuple(float(mse_beta(beta, beta_hat) / scale) for beta in betas)
    rmse = float(np.sqrt(np.mean(per))) if per else float("nan")
    return BootstrapResult(rmse=rmse, per_replicate=per, failures=failures, betas=tuple(betas), B=B)
