import math

import numpy as np
import pytest
from dataclasses import replace

from envcalvi import envelope as env
from envcalvi import response as resp
from envcalvi import simgen
from envcalvi.errors import AssumptionError, ValidationError
from envcalvi.kron import invsqrt_spd, unvec, vec
from envcalvi.oracle import (
    TvBoundInputs,
    bench_derivatives,
    euclid_invsqrt_jacobian,
    euclid_invsqrt_second,
    exact_coordinate_update_1d,
    fd_grad,
    fd_hess,
    fd_jacobian,
    mc_gaussian_quadratic,
    relative_error,
    rw_metropolis,
    rw_metropolis_response,
    tv_bound,
    tv_bound_crossover,
    tv_to_gaussian,
)
from envcalvi.oracle.checks import gaussian_expectation_gate, ktr_identity_gate, reparameterization_gate
from envcalvi.oracle.metropolis import response_target

from .conftest import random_spd

SCALAR_TV = TvBoundInputs(n=100, d1=1, H_f=np.eye(1), H_l=np.eye(1), delta_hat=1.0, delta_bar=1.0,
                          M1_hat=0.1, M1_bar=0.1, M2_bar=1.0, kappa_hat=1.0)


# finite differences

def test_fd_gradient_of_quadratic_and_linear(rng):
    Q = random_spd(rng, 4)
    x = rng.standard_normal(4)
    assert relative_error(fd_grad(lambda v: 0.5 * v @ Q @ v, x), Q @ x) <= 1e-9
    c = rng.standard_normal(4)
    np.testing.assert_allclose(fd_grad(lambda v: c @ v, x), c, rtol=1e-9)
    np.testing.assert_allclose(fd_hess(lambda v: 0.5 * v @ Q @ v, x), Q, rtol=1e-5, atol=1e-6)


def test_fd_jacobian_of_linear_map(rng):
    M = rng.standard_normal((3, 5))
    np.testing.assert_allclose(fd_jacobian(lambda v: M @ v, rng.standard_normal(5)), M, rtol=1e-8, atol=1e-9)


def test_fd_degrades_at_tiny_steps():
    f, x = np.sin, np.array([0.7])
    good = abs(fd_grad(lambda v: f(v[0]), x)[0] - np.cos(0.7))
    bad = abs(fd_grad(lambda v: f(v[0]), x, h=1e-12)[0] - np.cos(0.7))
    assert good < 1e-9 and bad > 100 * good


# Monte Carlo expectations

def test_mc_zero_covariance_is_plugin(rng):
    A = rng.standard_normal((2, 1))
    C1, C2 = random_spd(rng, 3), random_spd(rng, 1)
    est, se = mc_gaussian_quadratic(C1, C2, A, np.zeros((2, 2)), draws=10)
    C = env.c_block(A)
    assert se == 0.0 and est == pytest.approx(np.trace(C.T @ C1 @ C @ C2), rel=1e-12)


def test_mc_scalar_case_against_hand_integral():
    # C_A = (1, a)^T, C1 = I, C2 = 1: E[1 + a^2] = 1 + m^2 + s^2
    m, s2 = 0.4, 0.09
    est, se = mc_gaussian_quadratic(np.eye(2), np.eye(1), np.array([[m]]), np.array([[s2]]), draws=100_000, seed=3)
    assert abs(est - (1 + m * m + s2)) <= 3 * se


@pytest.mark.parametrize("kind", ["C", "D"])
def test_mc_matches_closed_form(kind, rng):
    A = rng.standard_normal((2, 2))
    M = rng.standard_normal((4, 4))
    cov = 0.05 * (M @ M.T + np.eye(4))
    C1, C2 = random_spd(rng, 4), random_spd(rng, 2)
    est, se = mc_gaussian_quadratic(C1, C2, A, cov, kind=kind, seed=5)
    exact = (env.expected_c_quadratic if kind == "C" else env.expected_d_quadratic)(C1, C2, A, cov)
    assert abs(est - exact) <= 3 * se


def test_identity_gates_pass_quickly():
    assert all(r["passed"] for r in ktr_identity_gate(instances=20, seed=1))
    assert all(r["passed"] for r in gaussian_expectation_gate(instances=2, draws=20_000, seed=1))
    assert all(r["passed"] for r in reparameterization_gate(draws=10, seed=1))


# Metropolis

def standard_normal_chain(seed, iters=40_000):
    return rw_metropolis(lambda b: -0.5 * float(b["x"] @ b["x"]), {"x": np.zeros(1)}, iters, seed,
                         record=lambda b: b["x"].copy())


def test_metropolis_standard_normal_mean():
    chain = standard_normal_chain(1)
    assert abs(chain.mean()[0]) <= 3 * chain.mcse()[0]
    assert chain.draws.var() == pytest.approx(1.0, rel=0.1)
    assert not chain.warning and 0.15 <= chain.acceptance["x"] <= 0.35


def test_metropolis_is_deterministic():
    a, b = standard_normal_chain(7, 2000), standard_normal_chain(7, 2000)
    assert np.array_equal(a.draws, b.draws)


def test_metropolis_rejects_bad_start():
    with pytest.raises(ValidationError):
        rw_metropolis(lambda b: -np.inf, {"x": np.zeros(1)}, 100, 0, record=lambda b: b["x"])


def test_response_target_matches_model_density(response_small, rng):
    spec, ds, truth, priors = response_small
    log_target, to_blocks, beta_of = response_target(ds, spec, priors)
    other = replace(truth, mu=truth.mu + 0.1, eta=truth.eta * 1.05)
    diff_target = log_target(to_blocks(other)) - log_target(to_blocks(truth))
    diff_model = resp.log_posterior(other, ds, priors) - resp.log_posterior(truth, ds, priors)
    assert diff_target == pytest.approx(diff_model, rel=1e-9)
    np.testing.assert_allclose(beta_of(to_blocks(truth)), vec(resp.beta_natural(truth)), rtol=1e-12)


def test_response_chain_half_means_agree(response_small):
    spec, ds, truth, priors = response_small
    chain = rw_metropolis_response(ds, spec, priors, 20_000, seed=2, init=truth)
    m1, m2, s1, s2 = chain.half_means()
    assert np.all(np.abs(m1 - m2) <= 3 * np.sqrt(s1**2 + s2**2))


# quadrature

def test_exact_quadratic_has_zero_tv():
    out = tv_to_gaussian(lambda a: -0.5 * (a - 0.3) ** 2 / 0.04, 0.3, 0.04)
    assert out["tv"] <= 1e-6


def test_cubic_perturbation_tv_shrinks():
    tvs = [tv_to_gaussian(lambda a, c=c: -0.5 * a * a + c * a**3 - c * c * a**4, 0.0, 1.0)["tv"]
           for c in (0.2, 0.1, 0.05, 0.0)]
    assert tvs[0] > tvs[1] > tvs[2] > 0 and tvs[3] <= 1e-6


def test_grid_density_is_normalized():
    g = exact_coordinate_update_1d(lambda a: -2.0 * a * a + a**3 / 10, 0.0, 0.5)
    assert g.mass == pytest.approx(1.0, abs=1e-8)
    assert g.argmax() == pytest.approx(0.0, abs=1e-2)
    with pytest.raises(ValidationError):
        exact_coordinate_update_1d(lambda a: -a * a, 0.0, 0.0)


# Euclidean derivatives

def test_orthonormal_columns_simplify():
    U = np.linalg.qr(simgen.rng_for(0).standard_normal((5, 2)))[0]
    jac = euclid_invsqrt_jacobian(U)
    # F = I and P = I, so Q = 2I and the Jacobian is -(I (x) U^T + (U^T (x) I) K) / 2
    from envcalvi.kron import Commutation

    expected = -0.5 * (np.kron(np.eye(2), U.T) + np.kron(U.T, np.eye(2)) @ Commutation(5, 2).dense())
    np.testing.assert_allclose(jac, expected, atol=1e-12)


@pytest.mark.parametrize("block", ["C", "D"])
def test_euclid_jacobian_matches_fd(block, rng):
    A = rng.uniform(-1, 1, (3, 2))
    U = env.c_block(A) if block == "C" else env.d_block(A)
    k = U.shape[1]
    f = lambda v: vec(invsqrt_spd(unvec(v, *U.shape).T @ unvec(v, *U.shape)))
    assert relative_error(euclid_invsqrt_jacobian(U), fd_jacobian(f, vec(U))) <= 1e-5
    assert euclid_invsqrt_jacobian(U).shape == (k * k, U.size)


def test_euclid_second_derivative(rng):
    U = rng.standard_normal((4, 2))
    dU, dV = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
    np.testing.assert_array_equal(euclid_invsqrt_second(U, np.zeros_like(U)), 0.0)
    h = 1e-5
    fd = (euclid_invsqrt_jacobian(U + h * dU) - euclid_invsqrt_jacobian(U - h * dU)) / (2 * h)
    assert relative_error(euclid_invsqrt_second(U, dU), fd) <= 1e-4
    lhs = euclid_invsqrt_second(U, 2.0 * dU - dV)
    rhs = 2.0 * euclid_invsqrt_second(U, dU) - euclid_invsqrt_second(U, dV)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_bench_schema():
    out = bench_derivatives(6, 3, reps=1)
    assert set(out) == {"r", "u", "reps", "euclid_ms", "reparam_ms", "ratio"}
    assert out["reps"] == 5 and out["euclid_ms"] > 0 and out["reparam_ms"] > 0


# TV bound

def scalar_re_evaluation(n):
    j = 1.0 + 0.1 / 3.0
    t_hat = -0.5 * (math.sqrt(n) - 1.0) ** 2
    t_bar = -0.5 * (math.sqrt(n) - math.sqrt(1.0 / j)) ** 2 * j
    c1 = math.sqrt(3.0) * 0.1 / (4.0 * math.sqrt(0.9 * (1.0 - math.exp(t_hat))))
    c2 = 2.0 * math.sqrt(j) / (math.sqrt(2.0 * math.pi) * (1.0 - math.exp(t_bar)))
    bound = c1 / math.sqrt(n) + 2.0 * math.exp(t_hat) + c2 * math.sqrt(n) * math.exp(-n)
    return {"bound": bound, "C1": c1, "C2": c2, "T_hat": t_hat, "T_bar_J": t_bar}


def test_scalar_bound_constants():
    got = tv_bound(SCALAR_TV)
    for key, value in scalar_re_evaluation(100).items():
        assert got[key] == pytest.approx(value, rel=1e-12, abs=1e-12)
    assert got["bound"] == pytest.approx(0.00456435464587639, rel=1e-12)


def test_bound_decreases_beyond_crossover():
    start = tv_bound_crossover(SCALAR_TV)
    ns = [n for n in np.logspace(2, 6, 41) if n > start]
    bounds = [tv_bound(replace(SCALAR_TV, n=float(n)))["bound"] for n in ns]
    assert len(ns) == 41 and all(b > c for b, c in zip(bounds, bounds[1:]))


def test_bound_rejects_violated_curvature_assumption():
    with pytest.raises(AssumptionError) as info:
        tv_bound(replace(SCALAR_TV, M1_hat=2.0))
    assert "violated" in info.value.details
