import numpy as np
import pytest

from envcalvi import envelope as env
from envcalvi import response_cavi as rc
from envcalvi import response_laplace as rl
from envcalvi.errors import ConvergenceError, CurvatureError
from envcalvi.kron import unvec, vec
from envcalvi.oracle import fd_grad, fd_hess, relative_error
from envcalvi.oracle.checks import derivative_gate


def zero_bundle(q, u, kappa, prior_precision=0.0, p=1):
    r = q + u
    return rl.MomentBundle(
        E_Om_inv=np.zeros((u, u)), E_Om0_inv=np.zeros((q, q)), eta_q=np.zeros((u, p)),
        Gr1=np.zeros((r, r)), Gr2=np.zeros((r, r)), Hmat=np.zeros((p, r)), kappa=kappa,
        A0=np.zeros((q, u)), U0A_inv=prior_precision * np.eye(q), V0A_inv=prior_precision * np.eye(u),
    )


@pytest.fixture(scope="module")
def live_bundle():
    from envcalvi import simgen
    from envcalvi.response import ResponseEnvSpec, ResponsePriors

    spec = ResponseEnvSpec(2, 1, 1)
    ds, _ = simgen.gen_response(spec, 3, 80)
    priors = ResponsePriors.vague(spec)
    st = rc.initial_state(ds, spec, priors)
    return rc.moment_bundle(st, ds, priors), st


def test_zeroed_moments_leave_only_logdet(rng):
    mb = zero_bundle(3, 2, 7.0)
    A = rng.standard_normal((3, 2))
    expected = 3.5 * np.linalg.slogdet(env.j0_inner(A))[1]
    assert rl.ftilde(A, mb) - rl.ftilde(np.zeros((3, 2)), mb) == pytest.approx(expected, rel=1e-13)
    assert rl.ftilde(np.zeros((3, 2)), mb) == 0.0


def test_scalar_logdet_gradient():
    mb = zero_bundle(1, 1, 2.0)
    assert rl.grad_ftilde(np.array([[1.0]]), mb)[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_gradient_vanishes_at_zero():
    np.testing.assert_array_equal(rl.grad_ftilde(np.zeros((2, 2)), zero_bundle(2, 2, 5.0)), 0.0)


def test_hessian_at_zero_is_kappa_identity():
    np.testing.assert_allclose(rl.hess_ftilde(np.zeros((3, 2)), zero_bundle(3, 2, 4.0)), 4.0 * np.eye(6))


def test_logdet_gradient_identity_is_exact(rng):
    mb = zero_bundle(3, 2, 6.0)
    A = rng.standard_normal((3, 2))
    np.testing.assert_allclose(rl.grad_ftilde(A, mb), 6.0 * np.linalg.solve(env.j0_inner(A), A), atol=1e-14)


def test_hessian_symmetric_and_fd_agreement(live_bundle, rng):
    mb, st = live_bundle
    A = st.A_hat + 0.2 * rng.standard_normal(st.A_hat.shape)
    H = rl.hess_ftilde(A, mb)
    assert np.max(np.abs(H - H.T)) <= 1e-10
    f = lambda v: rl.ftilde(unvec(v, *A.shape), mb)
    assert relative_error(vec(rl.grad_ftilde(A, mb)), fd_grad(f, vec(A))) <= 1e-5
    assert relative_error(H, fd_hess(f, vec(A))) <= 1e-4


@pytest.mark.parametrize("seed", [0, 1])
def test_derivative_gate_random_instances(seed):
    records = derivative_gate("response", instances=10, seed=seed)
    assert all(r["passed"] for r in records), [r for r in records if not r["passed"]]


def test_ftilde_matches_monte_carlo_over_other_factors(live_bundle):
    """f(A) - f(0) equals E_q[log p(Y, theta) at A] - E_q[log p(Y, theta) at 0] over the non-A factors."""
    from scipy.stats import invwishart, matrix_normal, multivariate_normal

    from envcalvi import response as resp
    from envcalvi import simgen
    from envcalvi.response import ResponseEnvSpec, ResponsePriors

    spec = ResponseEnvSpec(2, 1, 1)
    ds, _ = simgen.gen_response(spec, 3, 80)
    priors = ResponsePriors.vague(spec)
    _, st = live_bundle
    st = rc.sweep(st, ds, priors)
    mb = rc.moment_bundle(st, ds, priors)
    A = st.A_hat + 0.05
    zero = np.zeros_like(A)
    gen = np.random.default_rng(5)
    draws = 4000
    mus = multivariate_normal(st.mu_q, st.Sigma_q).rvs(draws, random_state=gen)
    etas = matrix_normal(st.eta_q, st.U_eta, st.V_eta).rvs(draws, random_state=gen).reshape(draws, 1, ds.p)
    oms = invwishart(st.nu1_q, st.Psi1_q).rvs(draws, random_state=gen).reshape(draws, 1, 1)
    om0s = invwishart(st.nu0_q, st.Psi0_q).rvs(draws, random_state=gen).reshape(draws, 1, 1)
    diffs = np.empty(draws)
    for i in range(draws):
        vals = []
        for a in (A, zero):
            tp = resp.TildeParams(mu_t=mus[i], eta_t=etas[i], Omega_t=oms[i], Omega0_t=om0s[i], A=a)
            vals.append(resp.log_joint_tilde(tp, ds, priors))
        diffs[i] = vals[0] - vals[1]
    exact = rl.ftilde(A, mb) - rl.ftilde(zero, mb)
    assert abs(diffs.mean() - exact) <= 0.01 * abs(exact)


def test_pure_prior_maximizer_is_prior_mean():
    kappa = 3.0
    mb = zero_bundle(2, 1, kappa, prior_precision=2.0 * kappa)
    A_hat = rl.maximize_ftilde(np.array([[0.7], [-0.3]]), mb)
    np.testing.assert_allclose(A_hat, 0.0, atol=1e-8)


def test_scalar_maximizer_matches_grid_search(live_bundle):
    mb, st = live_bundle
    A_hat = rl.maximize_ftilde(st.A_hat, mb)
    grid = np.arange(-5.0, 5.0 + 1e-12, 1e-4)
    vals = np.array([rl.ftilde(np.array([[a]]), mb) for a in grid])
    assert abs(A_hat[0, 0] - grid[np.argmax(vals)]) <= 1e-4


def test_maximizer_meets_gradient_tolerance(live_bundle):
    mb, st = live_bundle
    A_hat = rl.maximize_ftilde(st.A_hat + 0.5, mb)
    f = rl.ftilde(A_hat, mb)
    assert np.max(np.abs(rl.grad_ftilde(A_hat, mb))) <= 1e-8 * (1 + abs(f))


def test_newton_budget_exhaustion_reports_iterate(live_bundle):
    mb, st = live_bundle
    with pytest.raises(ConvergenceError) as info:
        rl.maximize_ftilde(st.A_hat + 1.0, mb, max_newton=0)
    assert "iterate" in info.value.details and "grad_norm" in info.value.details


def test_scalar_laplace_covariance_closed_form():
    kappa = 2.0
    prec = 2.0 * kappa
    mb = zero_bundle(1, 1, kappa, prior_precision=prec)
    lap = rl.laplace_factor(np.zeros((1, 1)), mb)
    # prior contributes prec^2 (row times column precision), log-det curvature kappa
    assert lap.cov[0, 0] == pytest.approx(1.0 / (prec * prec - kappa), rel=1e-14)


def test_laplace_covariance_inverts_negative_hessian(live_bundle):
    mb, st = live_bundle
    A_hat = rl.maximize_ftilde(st.A_hat, mb)
    lap = rl.laplace_factor(A_hat, mb)
    np.testing.assert_allclose(-lap.hessian_at_mode @ lap.cov, np.eye(1), atol=1e-10)
    np.testing.assert_array_equal(lap.mean_vecA, vec(A_hat))


def test_indefinite_hessian_raises_curvature_error():
    mb = zero_bundle(1, 1, 5.0)  # pure log-det: convex at zero
    with pytest.raises(CurvatureError):
        rl.laplace_factor(np.zeros((1, 1)), mb)


def test_degenerate_factor_has_zero_covariance():
    lap = rl.degenerate_factor(np.ones((2, 1)))
    np.testing.assert_array_equal(lap.cov, np.zeros((2, 2)))
