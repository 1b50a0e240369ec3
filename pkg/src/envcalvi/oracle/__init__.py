"""Independent verification machinery: finite differences, Monte Carlo checks,
reference samplers, quadrature, the Euclidean derivative benchmark and the
TV-bound calculator."""

from .euclid import bench_derivatives, euclid_invsqrt_jacobian, euclid_invsqrt_second
from .fd import fd_grad, fd_hess, fd_jacobian, relative_error
from .mc import mc_gaussian_quadratic
from .metropolis import rw_metropolis, rw_metropolis_predictor, rw_metropolis_response
from .quadrature import exact_coordinate_update_1d, tv_to_gaussian
from .tvbound import TvBoundInputs, tv_bound, tv_bound_crossover

__all__ = [
    "TvBoundInputs",
    "bench_derivatives",
    "euclid_invsqrt_jacobian",
    "euclid_invsqrt_second",
    "exact_coordinate_update_1d",
    "fd_grad",
    "fd_hess",
    "fd_jacobian",
    "mc_gaussian_quadratic",
    "relative_error",
    "rw_metropolis",
    "rw_metropolis_predictor",
    "rw_metropolis_response",
    "tv_bound",
    "tv_bound_crossover",
    "tv_to_gaussian",
]
