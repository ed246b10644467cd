"""Adaptive quadrature for Gaussian-dominated integrands.

Thin layer over QUADPACK's adaptive Gauss-Kronrod rule (``scipy.integrate.quad``)
that turns silent accuracy warnings into exceptions and handles the two
features shared by every integral in this package: a Gaussian tail, cut off
at a fixed number of standard deviations, and an inner boundary that may
shrink towards the origin exponentially fast.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate

ABS_TOL = 1e-10
REL_TOL = 1e-13
TAIL_SIGMAS = 12.0


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature does not reach its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message if achieved is None
                         else f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


def integrate_1d(f, a, b, *, abs_tol=ABS_TOL, rel_tol=REL_TOL, points=None,
                 limit=400):
    """Integrate ``f`` on ``[a, b]``; return ``(value, error_estimate)``."""
    if b <= a:
        return 0.0, 0.0
    kw = {}
    if points is not None:
        pts = [p for p in points if a < p < b]
        if pts:
            kw["points"] = sorted(set(pts))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, a, b, epsabs=abs_tol, epsrel=rel_tol,
                             limit=limit, full_output=1, **kw)
    val, err = out[0], out[1]
    if not (math.isfinite(val) and math.isfinite(err)):
        raise QuadratureError(f"non-finite integral on [{a!r}, {b!r}]")
    if len(out) > 3 and err > max(abs_tol, rel_tol * abs(val)) * 1e3:
        raise QuadratureError(f"quad did not converge on [{a!r}, {b!r}]: {out[3]}",
                              achieved=err)
    return val, err


def radial_integral(f, a, *, sigma=1.0, center=0.0, abs_tol=ABS_TOL,
                    rel_tol=REL_TOL):
    """Integrate ``f`` on ``[a, inf)`` for an integrand with Gaussian decay.

    The upper limit sits ``TAIL_SIGMAS`` standard deviations beyond the bulk.
    When ``0 < a < 1`` the stretch ``[a, 1]`` is integrated in ``log r`` so an
    inner boundary at ``e^{-tau}`` costs the same as one at ``1``.
    """
    upper = max(a, center) + TAIL_SIGMAS * sigma
    total, err = 0.0, 0.0
    lo = a
    if 0.0 < a < sigma * 1e-2:
        split = sigma * 1e-2

        def g(s):
            r = math.exp(s)
            return f(r) * r

        v, e = integrate_1d(g, math.log(a), math.log(split), abs_tol=abs_tol,
                            rel_tol=rel_tol)
        total += v
        err += e
        lo = split
    pts = [center, lo + sigma, lo + 3 * sigma]
    v, e = integrate_1d(f, lo, upper, abs_tol=abs_tol, rel_tol=rel_tol,
                        points=pts)
    return total + v, err + e


def gauss_legendre_panels(a, b, panels, order=20):
    """Nodes and weights of a composite Gauss-Legendre rule on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights
