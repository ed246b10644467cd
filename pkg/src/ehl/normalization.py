"""Normalisation of the transient equilibria.

``I(tau)`` is the integral of phi(e^tau y)^2 against the standard Gaussian
over the rescaled domain e^{-tau} Omega; ``K(tau) = 1/I(tau)`` and the
time-variable form is ``k(t) = K(log(2t)/2)``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .geometry import BALL_COMPLEMENT, FULL_SPACE, HALF_LINE, HarmonicProfile
from .kernels import gaussian
from .quadrature import radial_integral

ABS_TOL = 1e-10


def _radial_gaussian(d, r):
    return gaussian(d, r) * r ** (d - 1)


def _inner(profile: HarmonicProfile, tau: float) -> float:
    return profile.domain.boundary * math.exp(-tau)


def _i_tau_halfline(profile, tau):
    x0 = profile.domain.left_endpoint
    a = x0 * math.exp(-tau)
    e = math.exp(tau)

    def f(y):
        return (e * y - x0) ** 2 * gaussian(1, y)

    # scale out e^{2 tau} so the tolerance is relative
    val, err = radial_integral(lambda y: f(y) / (e * e), a,
                               abs_tol=ABS_TOL * 1e-3)
    return val * e * e, err * e * e


def _ball_deficit(profile, tau):
    """1 - I(tau) for d >= 3, integrated directly to keep small values accurate."""
    d = profile.dimension
    R = profile.domain.hole_radius
    a = R * math.exp(-tau)
    omega = profile.domain.measure_factor()
    inside = float(special.gammainc(d / 2.0, a * a / 2.0))

    def f(r):
        psi = (a / r) ** (d - 2)
        return omega * psi * (2.0 - psi) * _radial_gaussian(d, r)

    val, err = radial_integral(f, a, abs_tol=ABS_TOL * 1e-4, rel_tol=1e-13)
    return inside + val, err


def i_tau_with_error(profile: HarmonicProfile, tau: float):
    """I(tau) together with the quadrature error estimate."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau!r}")
    dom = profile.domain
    d = dom.dimension
    if dom.kind == FULL_SPACE:
        return 1.0, 0.0
    if dom.kind == HALF_LINE:
        return _i_tau_halfline(profile, tau)
    if d >= 3:
        deficit, err = _ball_deficit(profile, tau)
        return 1.0 - deficit, err
    a = _inner(profile, tau)
    R = dom.hole_radius
    omega = dom.measure_factor()

    def f(r):
        return omega * (tau + math.log(r / R)) ** 2 * _radial_gaussian(2, r)

    scale = 1.0 + tau * tau
    val, err = radial_integral(lambda r: f(r) / scale, a, abs_tol=ABS_TOL * 1e-3)
    return val * scale, err * scale


def i_tau(profile: HarmonicProfile, tau: float) -> float:
    return i_tau_with_error(profile, tau)[0]


def k_tau(profile: HarmonicProfile, tau: float) -> float:
    return 1.0 / i_tau(profile, tau)


def k_of_t(profile: HarmonicProfile, t: float) -> float:
    """k(t), defined by k(t) * integral(phi^2 Gamma(t, .)) = 1, for t >= 1/2."""
    if not (t >= 0.5):
        raise ValueError(f"k_t is evaluated only for t >= 1/2, got {t!r}")
    return 1.0 / i_tau(profile, 0.5 * math.log(2.0 * t))


def i_tau_prime(profile: HarmonicProfile, tau: float) -> float:
    """dI/dtau = 2 e^tau int phi(e^tau y) y . grad phi(e^tau y) G(y) dy."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau!r}")
    dom = profile.domain
    if dom.kind == FULL_SPACE:
        return 0.0
    e = math.exp(tau)
    d = dom.dimension
    a = _inner(profile, tau)
    omega = dom.measure_factor()
    if dom.kind == HALF_LINE:
        x0 = dom.left_endpoint

        def f(y):
            return 2.0 * (e * y - x0) * e * y * gaussian(1, y) / (e * e)

        val, _ = radial_integral(f, a, abs_tol=ABS_TOL * 1e-3)
        return val * e * e
    R = dom.hole_radius
    if d == 2:
        def f(r):
            # phi'(e^tau r) e^tau r = 1 in two dimensions
            return omega * 2.0 * (tau + math.log(r / R)) * _radial_gaussian(2, r)

        scale = 1.0 + tau
        val, _ = radial_integral(lambda r: f(r) / scale, a, abs_tol=ABS_TOL * 1e-3)
        return val * scale

    def f(r):
        psi = (a / r) ** (d - 2)
        # phi = 1 - psi and phi'(e^tau r) e^tau r = (d-2) psi
        return omega * 2.0 * (1.0 - psi) * (d - 2) * psi * _radial_gaussian(d, r)

    scale = math.exp(-(d - 2) * tau)
    val, _ = radial_integral(lambda r: f(r) / scale, a, abs_tol=ABS_TOL * 1e-3)
    return val * scale


def kprime_over_k(profile: HarmonicProfile, tau: float) -> float:
    """|K'(tau)| / K(tau), which equals |I'(tau)| / I(tau)."""
    return abs(i_tau_prime(profile, tau)) / i_tau(profile, tau)


def asymptote_residual(profile: HarmonicProfile, tau: float) -> float:
    """Scaled distance of K(tau) from its large-tau asymptote.

    d = 1: |K - 2 e^{-2 tau}|; d = 2: tau^3 |K - tau^{-2}|;
    d >= 3: e^{(d-2) tau} |K - 1|.
    """
    dom = profile.domain
    d = dom.dimension
    if dom.kind == FULL_SPACE:
        return 0.0
    if dom.kind == HALF_LINE:
        return abs(k_tau(profile, tau) - 2.0 * math.exp(-2.0 * tau))
    if d == 2:
        return tau**3 * abs(k_tau(profile, tau) - tau**-2.0)
    deficit, _ = _ball_deficit(profile, tau)
    # K - 1 = deficit / (1 - deficit), without cancellation
    return math.exp((d - 2) * tau) * deficit / (1.0 - deficit)


@dataclass(frozen=True)
class NormalizationRow:
    tau: float
    I: float
    K: float
    Iprime: float
    err: float


@dataclass(frozen=True)
class NormalizationTable:
    profile: HarmonicProfile
    rows: tuple = field(default_factory=tuple)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "I", "K", "Iprime", "err"])
        for r in self.rows:
            w.writerow([repr(r.tau), repr(r.I), repr(r.K), repr(r.Iprime), repr(r.err)])
        return buf.getvalue()


def _row(profile, tau):
    tau = float(tau)
    I, err = i_tau_with_error(profile, tau)
    return NormalizationRow(tau, I, 1.0 / I, i_tau_prime(profile, tau), err)


def build_table(profile: HarmonicProfile, taus, workers: int = 1) -> NormalizationTable:
    taus = list(taus)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(lambda t: _row(profile, t), taus))
    else:
        rows = [_row(profile, t) for t in taus]
    return NormalizationTable(profile, tuple(rows))


def mass_constant(profile: HarmonicProfile) -> float:
    """C* times the Gaussian average of |y|^{2-d} (d >= 3).

    For the standard Gaussian E|y|^{2-d} = Gamma(1) 2^{1-d/2} / Gamma(d/2).
    """
    d = profile.dimension
    if d < 3 or profile.domain.kind != BALL_COMPLEMENT:
        raise ValueError("mass constant is defined for ball complements with d >= 3")
    moment = 2.0 ** (1.0 - d / 2.0) / math.gamma(d / 2.0)
    return profile.cstar * moment
