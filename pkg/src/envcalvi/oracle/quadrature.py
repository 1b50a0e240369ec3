"""Grid normalization of exp(f) for a scalar coordinate and TV distances to Gaussians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from ..errors import ValidationError

DEFAULT_WIDTH = 12.0


@dataclass(frozen=True)
class GridDensity:
    x: np.ndarray
    density: np.ndarray
    step: float

    @property
    def mass(self) -> float:
        return float(self.density.sum() * self.step)

    def mean(self) -> float:
        return float(np.sum(self.x * self.density) * self.step)

    def argmax(self) -> float:
        return float(self.x[np.argmax(self.density)])


def _grid_density(f, lo, hi, npts) -> GridDensity:
    x = np.linspace(lo, hi, npts)
    logd = np.array([f(v) for v in x], dtype=float)
    h = (hi - lo) / (npts - 1)
    logz = logsumexp(logd) + np.log(h)
    return GridDensity(x=x, density=np.exp(logd - logz), step=h)


def exact_coordinate_update_1d(f, center: float, scale: float, width: float = DEFAULT_WIDTH,
                               npts: int = 4001, grid=None) -> GridDensity:
    """Density proportional to exp(f) on a uniform grid.

    The default window is ``center +- width * scale``; an explicit ``grid``
    (increasing, uniform) overrides it.
    """
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size < 3:
            raise ValidationError("grid must be a 1-D array with at least 3 points")
        return _grid_density(f, grid[0], grid[-1], grid.size)
    if scale <= 0:
        raise ValidationError("scale must be positive", scale=scale)
    return _grid_density(f, center - width * scale, center + width * scale, npts)


def _tv_on(f, lo, hi, npts, mean, sd):
    g = _grid_density(f, lo, hi, npts)
    q = norm.pdf(g.x, loc=mean, scale=sd)
    return 0.5 * float(np.sum(np.abs(g.density - q)) * g.step)


def tv_to_gaussian(f, mean: float, var: float, width: float = DEFAULT_WIDTH, npts: int = 2001,
                   tol: float = 1e-6, max_doublings: int = 10) -> dict:
    """TV distance between exp(f) (grid-normalized) and N(mean, var).

    The grid is refined by doubling until successive values change by less
    than ``tol``; ``extrapolated`` is the Richardson combination of the last
    two values, assuming second-order error.
    """
    sd = float(np.sqrt(var))
    lo, hi = mean - width * sd, mean + width * sd
    prev = _tv_on(f, lo, hi, npts, mean, sd)
    for _ in range(max_doublings):
        npts = 2 * npts - 1
        cur = _tv_on(f, lo, hi, npts, mean, sd)
        if abs(cur - prev) < tol:
            return {"tv": cur, "extrapolated": (4.0 * cur - prev) / 3.0, "npts": npts}
        prev = cur
    return {"tv": cur, "extrapolated": (4.0 * cur - prev) / 3.0, "npts": npts}
