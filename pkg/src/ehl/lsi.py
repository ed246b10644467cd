"""Logarithmic Sobolev machinery for one-dimensional reductions of F_tau.

A density f on (a, b) is handled through its log, f = exp(-Phi).  Convexity
of Phi gives a Bakry-Emery lower bound 2 min Phi'' on the LSI constant; the
Poincare constant is the spectral gap of -(f u')' = lambda f u with natural
boundary conditions; the two are assembled into a bound for the radially
symmetric d-dimensional density.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .geometry import BALL_COMPLEMENT, FULL_SPACE, HALF_LINE, HarmonicProfile
from .normalization import k_tau
from .quadrature import integrate_1d

SCAN_OFFSET = 1e-3
SCAN_LENGTH = 12.0
TAIL_PHIDD = 1.0  # Phi'' -> 1 as r -> infinity for every Gaussian-confined f


class LSIError(RuntimeError):
    pass


class ConvexityWarning(UserWarning):
    """Phi'' went negative on the sampled grid; Bakry-Emery gives no bound."""


@dataclass(frozen=True)
class RadialDensity1D:
    """A positive density on (left, right) described by its potential.

    ``log_f`` returns log f up to an additive constant; ``phidd`` is the
    closed-form second derivative of Phi = -log f when one is known.
    ``tail_limit`` is the value of Phi'' as r -> infinity (None when the
    density lives on a bounded interval).
    """

    left: float
    right: float
    log_f: Callable
    phidd: Optional[Callable] = None
    tail_limit: Optional[float] = TAIL_PHIDD
    dimension: int = 1
    label: str = ""

    def __post_init__(self):
        if not self.right > self.left:
            raise LSIError("empty interval")

    def f(self, r):
        return np.exp(self.log_f(r))

    def _mass_and_moment(self, k):
        # rescale by the peak of log f on a coarse grid to keep quad well-conditioned
        probe = np.linspace(self.left, self.right, 401)[1:-1]
        shift = float(np.max(self.log_f(probe)))

        def g(r, k=k):
            return math.exp(float(self.log_f(r)) - shift) * r ** k

        pts = list(probe[::40])
        Z, _ = integrate_1d(lambda r: g(r, 0), self.left, self.right, abs_tol=1e-14,
                            rel_tol=1e-12, points=pts)
        M, _ = integrate_1d(g, self.left, self.right, abs_tol=1e-14, rel_tol=1e-12,
                            points=pts)
        return Z, M

    def moment(self, k: int) -> float:
        """m_k of the density normalised to unit mass on (left, right)."""
        Z, M = self._mass_and_moment(k)
        return M / Z


def _log_phi_tau_derivs(profile: HarmonicProfile, tau: float, r):
    """log phi_tau and its first two r-derivatives, phi_tau(r) = phi(e^tau r)."""
    e = math.exp(tau)
    x = e * np.asarray(r, dtype=float)
    p = np.asarray(profile.phi(x))
    dp = e * np.asarray(profile.grad(x))
    ddp = e * e * np.asarray(profile.second_derivative(x))
    q = dp / p
    return np.log(p), q, ddp / p - q * q


def density_for(profile: HarmonicProfile, tau: float) -> RadialDensity1D:
    """The reduced density f_tau(r) = K r^{d-1} phi(e^tau r)^2 G(r) on (a, a + 12].

    For the half-line this is F_tau itself.  The full space gives
    r^{d-1} G(r) on (0, 12] (the plain Gaussian on the whole line for d = 1).
    """
    dom = profile.domain
    d = dom.dimension
    K = k_tau(profile, tau)
    if dom.kind == FULL_SPACE:
        if d == 1:
            return gaussian_density()
        left, right = 0.0, SCAN_LENGTH

        def log_f(r):
            r = np.asarray(r, dtype=float)
            return (d - 1) * np.log(r) - 0.5 * r * r

        def phidd(r):
            r = np.asarray(r, dtype=float)
            return 1.0 + (d - 1) / (r * r)

        return RadialDensity1D(left, right, log_f, phidd, TAIL_PHIDD, d,
                               f"full_space(d={d})")
    a = dom.boundary * math.exp(-tau)
    left, right = a, a + SCAN_LENGTH

    def log_f(r):
        r = np.asarray(r, dtype=float)
        lp, _, _ = _log_phi_tau_derivs(profile, tau, r)
        return math.log(K) + (d - 1) * np.log(np.abs(r)) + 2.0 * lp - 0.5 * r * r

    def phidd(r):
        r = np.asarray(r, dtype=float)
        _, _, lpp = _log_phi_tau_derivs(profile, tau, r)
        return 1.0 + (d - 1) / (r * r) - 2.0 * lpp

    return RadialDensity1D(left, right, log_f, phidd, TAIL_PHIDD, d,
                           f"{dom.describe()} tau={tau!r}")


def gaussian_density(half_width: float = SCAN_LENGTH) -> RadialDensity1D:
    """Standard Gaussian on the line, truncated to [-half_width, half_width]."""
    return RadialDensity1D(-half_width, half_width, lambda r: -0.5 * np.asarray(r) ** 2,
                           lambda r: np.ones_like(np.asarray(r, dtype=float)),
                           TAIL_PHIDD, 1, "gaussian")


def potential_phi(density: RadialDensity1D, r):
    """Phi(r) = -log f(r), up to an additive constant."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= density.left):
        raise LSIError(f"potential evaluated at or left of the endpoint {density.left!r}")
    out = -density.log_f(r)
    return float(out) if np.ndim(out) == 0 else out


def phidd_numeric(density: RadialDensity1D, r, h: Optional[float] = None):
    """Five-point second difference of Phi.

    The step shrinks near the endpoint so that the stencil stays inside.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r)
    for i, ri in enumerate(r):
        dist = ri - density.left
        hi = h if h is not None else min(1e-2, 0.01 * dist)
        if 2 * hi >= dist:
            raise LSIError(f"stencil at r = {ri!r} leaves the domain")
        vals = [float(potential_phi(density, ri + k * hi)) for k in (-2, -1, 0, 1, 2)]
        out[i] = (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * hi * hi)
    return out


def scan_grid(density: RadialDensity1D, n: int = 4000) -> np.ndarray:
    lo = density.left + SCAN_OFFSET
    hi = min(density.right, density.left + SCAN_LENGTH)
    return np.linspace(lo, hi, n)


def phi_dd_min(density: RadialDensity1D, grid=None) -> float:
    """min Phi'' over the scan grid and the r -> infinity limit.

    Uses the closed form when available, else second differences.
    """
    r = scan_grid(density) if grid is None else np.asarray(grid, dtype=float)
    if density.phidd is not None:
        vals = np.asarray(density.phidd(r), dtype=float)
    else:
        vals = phidd_numeric(density, r)
    m = float(np.min(vals))
    if density.tail_limit is not None:
        m = min(m, density.tail_limit)
    return m


def bakry_emery_lambda(density: RadialDensity1D, grid=None) -> float:
    """2 min Phi''; 0 (with a ConvexityWarning) when Phi'' < 0 somewhere."""
    rho = phi_dd_min(density, grid)
    if rho < 0:
        warnings.warn(f"Phi'' reaches {rho:.3e} on {density.label or 'density'}; "
                      "no Bakry-Emery bound", ConvexityWarning, stacklevel=2)
        return 0.0
    return 2.0 * rho


def poincare_1d(density: RadialDensity1D, n: int = 2000) -> float:
    """Spectral gap of -(f u')' = lambda f u with zero-flux ends.

    Cell-centred finite volumes on n equal cells: mass f(c_i) h, face
    transmissibility f(face)/h.  The matrix is symmetrised with the inverse
    square root of the mass, everything in log space so that tiny tails do
    not underflow, and the two lowest eigenvalues are found by bisection.
    The lowest is 0 (constants); the second is returned.
    """
    if n < 8:
        raise LSIError("need at least 8 cells")
    edges = np.linspace(density.left, density.right, n + 1)
    h = edges[1] - edges[0]
    c = 0.5 * (edges[1:] + edges[:-1])
    lc = np.asarray(density.log_f(c), dtype=float)
    lface = np.asarray(density.log_f(edges[1:-1]), dtype=float)
    if not np.all(np.isfinite(lc)) or not np.all(np.isfinite(lface)):
        raise LSIError("density must be positive at interior cell centres and faces")
    off = -np.exp(lface - 0.5 * (lc[:-1] + lc[1:])) / (h * h)
    diag = np.zeros(n)
    diag[:-1] += np.exp(lface - lc[:-1]) / (h * h)
    diag[1:] += np.exp(lface - lc[1:]) / (h * h)
    try:
        ev = linalg.eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, 1),
                                         lapack_driver="stebz")
    except (linalg.LinAlgError, ValueError) as exc:
        raise LSIError(f"eigenvalue bisection failed: {exc}") from exc
    return float(ev[1])


def radial_lsi_bound(lambda_l: float, lambda_p: float, m1: float, m2: float, d: int,
                     c_assembly: float = 1.0) -> float:
    """c (1/lambda_L + m1 max{1/lambda_P, m2/(d-1)}^{1/2})^{-1}."""
    if d < 2:
        raise LSIError("radial assembly needs d >= 2")
    for name, v in (("lambda_L", lambda_l), ("lambda_P", lambda_p), ("m1", m1),
                    ("m2", m2), ("c_assembly", c_assembly)):
        if not v > 0:
            raise LSIError(f"{name} must be positive, got {v!r}")
    return c_assembly / (1.0 / lambda_l + m1 * math.sqrt(max(1.0 / lambda_p, m2 / (d - 1))))


@dataclass(frozen=True)
class LSIRow:
    tau: float
    phidd_min: float
    be_lambda: float
    poincare: float
    assembled_bound: float


def lsi_row(profile: HarmonicProfile, tau: float, c_assembly: float = 1.0,
            n: int = 2000) -> LSIRow:
    dens = density_for(profile, tau)
    rho = phi_dd_min(dens)
    be = bakry_emery_lambda(dens)
    lp = poincare_1d(dens, n)
    d = profile.dimension
    if d == 1 or profile.domain.kind == FULL_SPACE:
        bound = 2.0
    elif be <= 0:
        bound = 0.0
    else:
        bound = radial_lsi_bound(be, lp, dens.moment(1), dens.moment(2), d, c_assembly)
    return LSIRow(float(tau), rho, be, lp, bound)


def lambda_hat(profile: HarmonicProfile, tau: float, c_assembly: float = 1.0,
               n: int = 2000) -> float:
    """Best available lower bound on the LSI constant of F_tau.

    d = 1 (half-line) and the full space give 2; ball complements in d >= 2
    go through the radial assembly.
    """
    dom = profile.domain
    if dom.dimension == 1 or dom.kind == FULL_SPACE:
        return 2.0
    if dom.kind != BALL_COMPLEMENT:
        raise LSIError(f"no LSI bound for {dom.kind}")
    return lsi_row(profile, tau, c_assembly, n).assembled_bound


@dataclass(frozen=True)
class LSITable:
    rows: tuple

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "phidd_min", "be_lambda", "poincare", "assembled_bound"])
        for r in self.rows:
            w.writerow([repr(r.tau), repr(r.phidd_min), repr(r.be_lambda),
                        repr(r.poincare), repr(r.assembled_bound)])
        return buf.getvalue()


def lsi_table(profile: HarmonicProfile, taus, c_assembly: float = 1.0,
              n: int = 2000) -> LSITable:
    return LSITable(tuple(lsi_row(profile, t, c_assembly, n) for t in taus))


__all__ = [
    "HALF_LINE", "LSIError", "ConvexityWarning", "RadialDensity1D", "density_for",
    "gaussian_density", "potential_phi", "phidd_numeric", "scan_grid", "phi_dd_min",
    "bakry_emery_lambda", "poincare_1d", "radial_lsi_bound", "lsi_row", "lambda_hat",
    "LSIRow", "LSITable", "lsi_table",
]
