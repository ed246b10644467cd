"""Exterior domains and their harmonic profiles.

Three geometries are representable: the half-line ``(x0, inf)`` in one
dimension, the complement of the closed ball of radius ``R`` centred at the
origin in dimension ``d >= 2``, and the whole space (the hole-free baseline).
For each one the harmonic profile ``phi`` (positive, harmonic, zero on the
hole boundary, normalised at infinity) is explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HALF_LINE = "half_line"
BALL_COMPLEMENT = "ball_complement"
FULL_SPACE = "full_space"
KINDS = (HALF_LINE, BALL_COMPLEMENT, FULL_SPACE)


class DomainError(ValueError):
    """Invalid domain parameters or a point outside the domain."""


@dataclass(frozen=True)
class ExteriorDomain:
    kind: str
    dimension: int
    hole_radius: float | None = None
    left_endpoint: float | None = None

    @property
    def boundary(self) -> float:
        """Radial coordinate of the hole boundary (0 for the full space)."""
        if self.kind == HALF_LINE:
            return float(self.left_endpoint)
        if self.kind == BALL_COMPLEMENT:
            return float(self.hole_radius)
        return 0.0

    @property
    def has_hole(self) -> bool:
        return self.kind != FULL_SPACE

    def measure_factor(self) -> float:
        """Factor turning a radial integral into a volume integral.

        On the half-line the coordinate is ``x`` itself, so the factor is 1;
        otherwise it is the surface measure of the unit sphere.
        """
        if self.kind == HALF_LINE:
            return 1.0
        return sphere_area(self.dimension)

    def describe(self) -> str:
        if self.kind == HALF_LINE:
            return f"half_line(x0={self.left_endpoint!r})"
        if self.kind == BALL_COMPLEMENT:
            return f"ball_complement(d={self.dimension}, R={self.hole_radius!r})"
        return f"full_space(d={self.dimension})"


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def make_domain(kind: str, d: int, R: float | None = None,
                x0: float | None = None) -> ExteriorDomain:
    if kind not in KINDS:
        raise DomainError(f"unknown domain kind {kind!r}; expected one of {KINDS}")
    if int(d) != d or d < 1:
        raise DomainError(f"dimension must be a positive integer, got {d!r}")
    d = int(d)
    if kind == HALF_LINE:
        if d != 1:
            raise DomainError("half_line requires d = 1")
        if R is not None:
            raise DomainError("half_line takes x0, not R")
        x0 = 0.0 if x0 is None else float(x0)
        if not math.isfinite(x0):
            raise DomainError("x0 must be finite")
        return ExteriorDomain(HALF_LINE, 1, left_endpoint=x0)
    if kind == BALL_COMPLEMENT:
        if d < 2:
            raise DomainError("ball_complement requires d >= 2 "
                              "(the complement of an interval is disconnected)")
        if x0 is not None:
            raise DomainError("ball_complement takes R, not x0")
        if R is None or not (float(R) > 0.0) or not math.isfinite(float(R)):
            raise DomainError(f"hole radius must be positive and finite, got {R!r}")
        return ExteriorDomain(BALL_COMPLEMENT, d, hole_radius=float(R))
    if R is not None or x0 is not None:
        raise DomainError("full_space takes neither R nor x0")
    return ExteriorDomain(FULL_SPACE, d)


@dataclass(frozen=True)
class HarmonicProfile:
    domain: ExteriorDomain

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def cstar(self) -> float:
        return cstar(self)

    def _check(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.domain.has_hole and np.any(r < self.domain.boundary):
            raise DomainError(
                f"point inside the hole of {self.domain.describe()}: "
                f"min r = {float(np.min(r))!r}")
        return r

    def phi(self, r):
        return phi(self, r)

    def grad(self, r):
        return grad_phi_radial(self, r)

    def second_derivative(self, r):
        """phi''(r) of the radial profile."""
        r = self._check(r)
        dom = self.domain
        d = dom.dimension
        if dom.kind == HALF_LINE or dom.kind == FULL_SPACE:
            return np.zeros_like(r)
        if d == 2:
            return -1.0 / r**2
        R = dom.hole_radius
        return (d - 2) * (1 - d) * R ** (d - 2) * r ** (-float(d))


def profile_for(domain: ExteriorDomain) -> HarmonicProfile:
    return HarmonicProfile(domain)


def phi(profile: HarmonicProfile, r):
    """Harmonic profile at radial coordinate ``r`` (array or scalar)."""
    r = profile._check(r)
    dom = profile.domain
    d = dom.dimension
    if dom.kind == FULL_SPACE:
        out = np.ones_like(r)
    elif dom.kind == HALF_LINE:
        out = r - dom.left_endpoint
    elif d == 2:
        out = np.log(r / dom.hole_radius)
    else:
        # -expm1 keeps 1 - (r/R)^{2-d} accurate right at the boundary
        out = -np.expm1((2 - d) * np.log(r / dom.hole_radius))
    return out if out.ndim else float(out)


def grad_phi_radial(profile: HarmonicProfile, r):
    r = profile._check(r)
    dom = profile.domain
    d = dom.dimension
    if dom.kind == FULL_SPACE:
        out = np.zeros_like(r)
    elif dom.kind == HALF_LINE:
        out = np.ones_like(r)
    elif d == 2:
        out = 1.0 / r
    else:
        out = (d - 2) * dom.hole_radius ** (d - 2) * r ** (1.0 - d)
    return out if out.ndim else float(out)


def cstar(profile: HarmonicProfile) -> float:
    """Limit of (1 - phi(r)) r^{d-2}; exactly R^{d-2} for a centred ball."""
    dom = profile.domain
    if dom.dimension < 3:
        raise DomainError("C* is defined only for d >= 3")
    if dom.kind == FULL_SPACE:
        return 0.0
    return dom.hole_radius ** (dom.dimension - 2)


def check_harmonicity(profile: HarmonicProfile, grid) -> float:
    """Max |(r^{d-1} phi')'| from centred differences on a grid inside the domain.

    The flux ``r^{d-1} phi'`` is differenced at midpoints and then differenced
    again, so for the closed forms the residual is pure truncation error.
    """
    r = profile._check(np.asarray(grid, dtype=float))
    if r.size < 3:
        raise ValueError("need at least 3 grid points")
    d = profile.dimension
    p = np.asarray(profile.phi(r))
    h = np.diff(r)
    mid = 0.5 * (r[1:] + r[:-1])
    flux = mid ** (d - 1) * np.diff(p) / h
    cell = 0.5 * (h[1:] + h[:-1])
    res = np.diff(flux) / cell
    return float(np.max(np.abs(res)))
