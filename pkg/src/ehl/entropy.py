"""Relative entropy, Fisher information and the remainder term.

All functionals act on a rescaled field g(tau, .) living on e^{-tau} Omega
and compare it with the transient equilibrium
F_tau(y) = K_tau phi(e^tau y)^2 G(y).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .evolve import RadialField
from .geometry import FULL_SPACE, HarmonicProfile
from .kernels import gaussian
from .normalization import k_tau

FLOOR = 1e-300
SNAP = 1e-12


class EntropyError(ValueError):
    pass


@dataclass(frozen=True)
class TransientEquilibrium:
    profile: HarmonicProfile
    tau: float
    K: float

    @property
    def inner(self) -> float:
        return self.profile.domain.boundary * math.exp(-self.tau)

    def physical(self, y):
        """x = e^tau y, with roundoff below the boundary snapped onto it."""
        x = np.asarray(y, dtype=float) * math.exp(self.tau)
        if self.profile.domain.has_hole:
            b = self.profile.domain.boundary
            x = np.where((x < b) & (x >= b - SNAP * max(1.0, abs(b))), b, x)
        return x

    def log_density(self, y):
        """log F_tau(y); -inf on and beyond the boundary."""
        y = np.asarray(y, dtype=float)
        d = self.profile.dimension
        logG = -0.5 * d * math.log(2 * math.pi) - 0.5 * y * y
        if self.profile.domain.kind == FULL_SPACE:
            return logG + math.log(self.K)
        x = np.atleast_1d(self.physical(y))
        inside = x >= self.profile.domain.boundary
        p = np.zeros_like(x)
        p[inside] = self.profile.phi(x[inside])
        with np.errstate(divide="ignore"):
            out = math.log(self.K) + 2.0 * np.log(p) + np.atleast_1d(logG)
        return out.reshape(np.shape(y))

    def drift_weight(self, y):
        """Z-weight phi'(e^tau y) e^tau y / phi(e^tau y) (0 on the boundary)."""
        y = np.asarray(y, dtype=float)
        if self.profile.domain.kind == FULL_SPACE:
            return np.zeros_like(y)
        x = self.physical(y)
        p = np.asarray(self.profile.phi(x))
        dp = np.asarray(self.profile.grad(x))
        out = np.zeros_like(y)
        ok = p > 0
        out[ok] = dp[ok] * x[ok] / p[ok]
        return out


def transient_equilibrium(profile: HarmonicProfile, tau: float) -> TransientEquilibrium:
    return TransientEquilibrium(profile, float(tau), k_tau(profile, tau))


def f_tau(eq: TransientEquilibrium, y):
    y = np.asarray(y, dtype=float)
    if eq.profile.domain.has_hole and np.any(y < eq.inner * (1 - SNAP)):
        raise EntropyError(f"point outside the rescaled domain (boundary {eq.inner!r})")
    d = eq.profile.dimension
    if eq.profile.domain.kind == FULL_SPACE:
        out = eq.K * gaussian(d, y)
    else:
        out = eq.K * np.asarray(eq.profile.phi(eq.physical(y))) ** 2 * gaussian(d, y)
    return float(out) if np.ndim(out) == 0 else out


def _densities(g: RadialField, eq: TransientEquilibrium):
    """Grid-normalised g and F on g's grid, plus the quadrature weights."""
    y = g.r
    gs = g.samples
    if np.any(gs < -1e-12):
        raise EntropyError(f"negative density value {float(gs.min())!r}")
    gs = np.clip(gs, 0.0, None)
    w = g.measure_factor() * g.grid.weights(g.dimension)
    mg = float(np.dot(w, gs))
    if abs(mg - 1.0) > 1e-4:
        raise EntropyError(f"g has mass {mg!r}; expected 1 within 1e-4")
    F = np.asarray(f_tau(eq, y), dtype=float)
    mF = float(np.dot(w, F))
    return gs / mg, F / mF, w


def _log_ratio(g, F):
    ratio = np.clip(g / np.maximum(F, FLOOR), FLOOR, 1e300)
    return np.log(ratio)


def rel_entropy(g: RadialField, eq: TransientEquilibrium) -> float:
    """H(g | F_tau) with the convention 0 log 0 = 0.

    Both densities are renormalised on the grid, so the discrete value is a
    genuine Kullback-Leibler divergence and hence nonnegative.
    """
    gn, Fn, w = _densities(g, eq)
    live = (gn > FLOOR) & (Fn > FLOOR)
    integrand = np.zeros_like(gn)
    integrand[live] = gn[live] * _log_ratio(gn[live], Fn[live])
    return max(float(np.dot(w, integrand)), 0.0)


def l1_distance(g: RadialField, eq: TransientEquilibrium) -> float:
    gn, Fn, w = _densities(g, eq)
    return float(np.dot(w, np.abs(gn - Fn)))


def ck_gap(g: RadialField, eq: TransientEquilibrium) -> float:
    """2 H - ||g - F||_1^2, nonnegative by the Csiszar-Kullback inequality."""
    return 2.0 * rel_entropy(g, eq) - l1_distance(g, eq) ** 2


def fisher(g: RadialField, eq: TransientEquilibrium, floor: float = 1e-250) -> float:
    """Integral of g |d/dy log(g/F)|^2 by centred differences of the log-ratio.

    Nodes where g or F is below ``floor`` are dropped (the boundary node, where
    both vanish, always is).
    """
    gn, Fn, w = _densities(g, eq)
    y = g.r
    live = np.flatnonzero((gn > floor) & (Fn > floor))
    if live.size < 3:
        return 0.0
    # contiguous run of live nodes
    lo, hi = live[0], live[-1] + 1
    keep = np.arange(lo, hi)
    keep = keep[(gn[keep] > floor) & (Fn[keep] > floor)]
    lr = _log_ratio(gn[keep], Fn[keep])
    dlr = np.gradient(lr, y[keep])
    return float(np.dot(w[keep], gn[keep] * dlr * dlr))


def remainder_R(g: RadialField, eq: TransientEquilibrium) -> float:
    """R(tau) = 2 int (phi'(e^tau y) e^tau y / phi(e^tau y)) (g - F_tau) dy."""
    gn, Fn, w = _densities(g, eq)
    return 2.0 * float(np.dot(w, eq.drift_weight(g.r) * (gn - Fn)))


def remainder_R_direct(g: RadialField, profile: HarmonicProfile, tau: float,
                       dtau: float = 1e-4) -> float:
    """R(tau) = int g d/dtau log F_tau, with the tau-derivative by differences.

    Independent of the closed-form rewriting: K is recomputed at tau +- dtau.
    Nodes that are outside e^{-(tau - dtau)} Omega use a one-sided stencil.
    """
    eq = transient_equilibrium(profile, tau)
    gn, _, w = _densities(g, eq)
    if profile.domain.kind == FULL_SPACE:
        return 0.0
    y = g.r
    eqs = {k: transient_equilibrium(profile, tau + k * dtau) for k in (-1, 1, 2)}
    with np.errstate(invalid="ignore", divide="ignore"):
        lp = eqs[1].log_density(y)
        lm = eqs[-1].log_density(y) if tau - dtau >= 0 else np.full_like(y, -np.inf)
        l0 = eq.log_density(y)
        l2 = eqs[2].log_density(y)
        central = (lp - lm) / (2 * dtau)
        forward = (-3 * l0 + 4 * lp - l2) / (2 * dtau)
    deriv = np.where(np.isfinite(lm) & np.isfinite(lp), central, forward)
    live = np.isfinite(deriv) & (gn > 0)
    return float(np.dot(w[live], gn[live] * deriv[live]))


def q_bound(g: RadialField, eq: TransientEquilibrium) -> float:
    """Q_g(tau) = int |grad phi(e^tau y)|^2 |e^tau y|^2 / phi(e^tau y)^2 (g + F)."""
    gn, Fn, w = _densities(g, eq)
    z = eq.drift_weight(g.r)
    return float(np.dot(w, z * z * (gn + Fn)))


def chi_square_sym(g: RadialField, eq: TransientEquilibrium) -> float:
    """int (g - F)^2 / (g + F), the quantity controlled by H in the R bound."""
    gn, Fn, w = _densities(g, eq)
    s = gn + Fn
    live = s > FLOOR
    return float(np.dot(w[live], (gn[live] - Fn[live]) ** 2 / s[live]))


@dataclass(frozen=True)
class TraceRow:
    tau: float
    H: float
    fisher: float
    R: float
    R_direct: float
    ck_gap: float
    balance_residual: float


@dataclass(frozen=True)
class EntropyTrace:
    rows: tuple

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "H", "fisher", "R", "ck_gap", "balance_residual"])
        for r in self.rows:
            w.writerow([repr(r.tau), repr(r.H), repr(r.fisher), repr(r.R),
                        repr(r.ck_gap), repr(r.balance_residual)])
        return buf.getvalue()


def entropy_trace(g_fields, eqs, *, direct: bool = True) -> EntropyTrace:
    """Rows (tau, H, Fisher, R, CK gap) plus the residual of the entropy balance.

    The balance residual dH/dtau + Fisher + R uses centred differences in tau
    (one-sided at the two ends).
    """
    g_fields = list(g_fields)
    eqs = list(eqs)
    if len(g_fields) != len(eqs):
        raise ValueError("one equilibrium per field")
    taus = np.array([eq.tau for eq in eqs])
    if np.any(np.diff(taus) <= 0):
        raise ValueError("tau values must be increasing")
    H = np.array([rel_entropy(g, eq) for g, eq in zip(g_fields, eqs)])
    I = np.array([fisher(g, eq) for g, eq in zip(g_fields, eqs)])
    R = np.array([remainder_R(g, eq) for g, eq in zip(g_fields, eqs)])
    if direct:
        Rd = np.array([remainder_R_direct(g, eq.profile, eq.tau)
                       for g, eq in zip(g_fields, eqs)])
    else:
        Rd = np.full_like(R, np.nan)
    gaps = np.array([ck_gap(g, eq) for g, eq in zip(g_fields, eqs)])
    if taus.size >= 3:
        dH = np.gradient(H, taus, edge_order=2)
        bal = dH + I + R
    else:
        bal = np.full_like(H, np.nan)
    rows = tuple(TraceRow(float(t), float(h), float(i), float(r), float(rd),
                          float(c), float(b))
                 for t, h, i, r, rd, c, b in zip(taus, H, I, R, Rd, gaps, bal))
    return EntropyTrace(rows)
