"""Closed-form Gaussian kernels.

Exponentials are assembled in log space and exponentiated last, so large
times or far-away points underflow to 0 cleanly instead of producing
``0 * inf``.
"""

from __future__ import annotations

import math

import numpy as np

from .quadrature import TAIL_SIGMAS, integrate_1d


class KernelError(ValueError):
    pass


def _require_positive_time(t):
    if not (t > 0):
        raise KernelError(f"time must be positive, got {t!r}")


def _ret(out):
    return float(out) if np.ndim(out) == 0 else out


def gaussian(d: int, y):
    """Standard Gaussian density in R^d at a point of norm ``|y|``."""
    y = np.asarray(y, dtype=float)
    return _ret(np.exp(-0.5 * d * math.log(2 * math.pi) - 0.5 * y * y))


def heat_gamma(d: int, t: float, x):
    """Fundamental solution (4 pi t)^{-d/2} exp(-|x|^2 / 4t)."""
    _require_positive_time(t)
    x = np.asarray(x, dtype=float)
    return _ret(np.exp(-0.5 * d * math.log(4 * math.pi * t) - x * x / (4.0 * t)))


def dipole(t: float, x):
    """D(t, x) = -d/dx Gamma(t, x) = x/(2t) Gamma(t, x) in one dimension."""
    _require_positive_time(t)
    x = np.asarray(x, dtype=float)
    return _ret(x / (2.0 * t) * heat_gamma(1, t, x))


def halfline_kernel(t: float, x, y, x0: float = 0.0):
    """Dirichlet heat kernel of ``(x0, inf)`` by the method of images.

    Written as Gamma(t, x-y) (1 - exp(-(x-x0)(y-x0)/t)) so that the value
    stays accurate (and nonnegative) when the two image terms nearly cancel.
    """
    _require_positive_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < x0) or np.any(y < x0):
        raise KernelError(f"points must lie in ({x0!r}, inf)")
    out = heat_gamma(1, t, x - y) * -np.expm1(-(x - x0) * (y - x0) / t)
    return _ret(out)


def gamma_shift_weighted_l1(d: int, t: float, v: float, *, abs_tol=1e-12):
    """Integral over R^d of |x|^2 |Gamma(t, x) - Gamma(t, x - v)|.

    Writing x = s e + z with e the unit vector along v, the kernel factorises
    as Gamma_1(s) Gamma_{d-1}(z); the transverse integral of |z|^2 against
    Gamma_{d-1} is 2t(d-1), which leaves a one-dimensional integral in s.
    The difference changes sign at s = v/2, where the range is split.
    """
    _require_positive_time(t)
    if v < 0:
        raise KernelError("displacement magnitude must be nonnegative")
    if v == 0:
        return 0.0
    transverse = 2.0 * t * (d - 1)

    def f(s):
        return (s * s + transverse) * abs(heat_gamma(1, t, s) - heat_gamma(1, t, s - v))

    sigma = math.sqrt(2.0 * t)
    lo = -TAIL_SIGMAS * sigma
    hi = v + TAIL_SIGMAS * sigma
    mid = 0.5 * v
    scale = max(1.0, t)
    left, _ = integrate_1d(f, lo, mid, abs_tol=abs_tol * scale, rel_tol=1e-12,
                           points=[-sigma, 0.0])
    right, _ = integrate_1d(f, mid, hi, abs_tol=abs_tol * scale, rel_tol=1e-12,
                            points=[v, v + sigma])
    return left + right
