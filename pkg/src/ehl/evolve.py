"""Solutions u(t, .) of the Dirichlet heat equation and their rescalings.

Two solvers are provided: an exact one for the half-line (quadrature of the
initial datum against the image kernel) and a Crank-Nicolson finite-volume
solver for radial data in ball complements and in the full space.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .geometry import (BALL_COMPLEMENT, FULL_SPACE, HALF_LINE, DomainError,
                       ExteriorDomain, HarmonicProfile, profile_for)
from .kernels import dipole, halfline_kernel, heat_gamma
from .quadrature import gauss_legendre_panels, integrate_1d

UNIFORM = "uniform"
GRADED = "graded"
MIN_NODES = 16


class SolverError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class RadialGrid:
    r_min: float
    r_max: float
    n: int
    rule: str = UNIFORM
    quadrature: str = "volume"
    nodes: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n < MIN_NODES:
            raise ValueError(f"grid needs at least {MIN_NODES} nodes, got {self.n}")
        if not self.r_max > self.r_min:
            raise ValueError("r_max must exceed r_min")
        if self.rule not in (UNIFORM, GRADED):
            raise ValueError(f"unknown grid rule {self.rule!r}")
        if self.quadrature not in ("volume", "simpson"):
            raise ValueError(f"unknown quadrature {self.quadrature!r}")
        if self.quadrature == "simpson" and (self.rule != UNIFORM or self.n % 2 == 0):
            raise ValueError("simpson weights need a uniform grid with an odd node count")
        if self.nodes is None:
            object.__setattr__(self, "nodes", _build_nodes(self))

    def scaled(self, factor: float) -> "RadialGrid":
        return replace(self, r_min=self.r_min * factor, r_max=self.r_max * factor,
                       nodes=self.nodes * factor)

    @property
    def spacing(self) -> float:
        return float(np.max(np.diff(self.nodes)))

    def weights(self, d: int) -> np.ndarray:
        """Node weights for the radial integral of f(r) r^{d-1} dr."""
        r = self.nodes
        if self.quadrature == "simpson":
            h = (r[-1] - r[0]) / (r.size - 1)
            w = np.full(r.size, 2.0)
            w[1::2] = 4.0
            w[0] = w[-1] = 1.0
            return w * h / 3.0 * np.abs(r) ** (d - 1)
        return control_volumes(r, d)


def _build_nodes(grid: RadialGrid) -> np.ndarray:
    a, b, n = grid.r_min, grid.r_max, grid.n
    if grid.rule == UNIFORM or b - a <= 1.0:
        return np.linspace(a, b, n)
    # spacing halves within distance 1 of the boundary
    h = (b - a + 1.0) / (n - 1)
    m1 = max(1, min(n - 2, int(round(2.0 / h))))
    fine = np.linspace(a, a + 1.0, m1 + 1)
    coarse = np.linspace(a + 1.0, b, n - m1)[1:]
    return np.concatenate([fine, coarse])


def _antiderivative(r, d):
    if d == 1:
        return r
    return np.sign(r) * np.abs(r) ** d / d


def control_volumes(r: np.ndarray, d: int) -> np.ndarray:
    """Exact measure of the dual cells [r_{i-1/2}, r_{i+1/2}] under r^{d-1} dr."""
    edges = np.concatenate([[r[0]], 0.5 * (r[1:] + r[:-1]), [r[-1]]])
    big = _antiderivative(edges, d)
    return np.diff(big)


def uniform_grid(r_min, r_max, n, quadrature="volume"):
    return RadialGrid(float(r_min), float(r_max), int(n), UNIFORM, quadrature)


@dataclass(frozen=True)
class RadialField:
    grid: RadialGrid
    samples: np.ndarray
    time: float
    dimension: int
    domain: ExteriorDomain | None = None
    tau: float | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.shape != self.grid.nodes.shape:
            raise ValueError("samples do not match grid")
        if not np.all(np.isfinite(s)):
            raise ValueError("field samples must be finite")
        object.__setattr__(self, "samples", s)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def measure_factor(self) -> float:
        if self.domain is None:
            raise ValueError("field is not attached to a domain")
        return self.domain.measure_factor()

    def integrate(self, values) -> float:
        """Volume integral of ``values`` sampled on this field's grid."""
        return float(self.measure_factor() * np.dot(self.grid.weights(self.dimension), values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        dom = self.domain.describe() if self.domain is not None else "none"
        buf.write(f"# t = {self.time!r}\n# d = {self.dimension}\n# domain = {dom}\n")
        if self.tau is not None:
            buf.write(f"# tau = {self.tau!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "u"])
        for r, u in zip(self.grid.nodes, self.samples):
            w.writerow([repr(float(r)), repr(float(u))])
        return buf.getvalue()


# --------------------------------------------------------------------------
# initial data

GAUSSIAN_SHELL = "gaussian_shell"
ANNULUS = "annulus"
POINT_APPROX = "point_approx"
DIPOLE = "dipole"


@dataclass(frozen=True)
class InitialDatum:
    """Nonnegative radial initial datum.

    ``gaussian_shell``: mass ``mass`` spread as exp(-(r-center)^2 / 2 width^2).
    ``annulus``: constant ``height`` on ``[r1, r2]``.
    ``point_approx``: unit mass at ``location``, mollified with width ``width``
    (``width = 0`` means an exact point mass, half-line solver only).
    ``dipole``: the half-line datum whose solution is 2 m D(t + t_shift, x - x0),
    with m = ``mass`` its harmonic mass.
    """
    kind: str
    center: float = 0.0
    width: float = 0.0
    mass: float = 1.0
    r1: float = 0.0
    r2: float = 0.0
    height: float = 0.0
    t_shift: float = 0.0

    def __post_init__(self):
        if self.kind == GAUSSIAN_SHELL:
            if not (self.width > 0 and self.mass > 0):
                raise ValueError("gaussian_shell needs positive width and mass")
        elif self.kind == ANNULUS:
            if not (self.r2 > self.r1 and self.height > 0):
                raise ValueError("annulus needs r2 > r1 and positive height")
        elif self.kind == POINT_APPROX:
            if self.width < 0:
                raise ValueError("point_approx width must be >= 0")
        elif self.kind == DIPOLE:
            if not (self.mass > 0 and self.t_shift >= 0):
                raise ValueError("dipole needs positive mass and t_shift >= 0")
        else:
            raise ValueError(f"unknown datum kind {self.kind!r}")

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == GAUSSIAN_SHELL:
            return self.center - 12 * self.width, self.center + 12 * self.width
        if self.kind == ANNULUS:
            return self.r1, self.r2
        if self.kind == POINT_APPROX:
            return self.center - 12 * self.width, self.center + 12 * self.width
        return 0.0, 0.0

    def check_domain(self, domain: ExteriorDomain):
        a = domain.boundary
        if self.kind == DIPOLE:
            if domain.kind != HALF_LINE:
                raise DomainError("dipole datum exists only on the half-line")
            return
        lo = self.r1 if self.kind == ANNULUS else self.center
        if domain.has_hole and lo <= a:
            raise DomainError("initial datum must sit inside the domain")
        if domain.kind == FULL_SPACE and lo < 0:
            raise DomainError("radial datum needs nonnegative radii")

    def _shape(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == ANNULUS:
            return np.where((r >= self.r1) & (r <= self.r2), self.height, 0.0)
        return np.exp(-0.5 * ((r - self.center) / self.width) ** 2)

    def amplitude(self, domain: ExteriorDomain) -> float:
        """Prefactor making the datum carry its nominal mass inside ``domain``."""
        if self.kind == ANNULUS:
            return 1.0
        target = self.mass if self.kind == GAUSSIAN_SHELL else 1.0
        d = domain.dimension
        a = domain.boundary
        lo = max(a, self.support[0])
        if domain.kind == FULL_SPACE:
            lo = max(0.0, lo)
        val, _ = integrate_1d(lambda r: float(self._shape(r)) * abs(r) ** (d - 1),
                              lo, self.support[1], abs_tol=1e-14, rel_tol=1e-13,
                              points=[self.center])
        return target / (domain.measure_factor() * val)

    def evaluate(self, domain: ExteriorDomain, r):
        """Datum values at radii ``r`` (zero inside the hole)."""
        if self.kind == DIPOLE:
            raise ValueError("dipole datum has no pointwise values at t = 0")
        if self.kind == POINT_APPROX and self.width == 0:
            raise ValueError("exact point mass has no pointwise values")
        r = np.asarray(r, dtype=float)
        vals = self.amplitude(domain) * self._shape(r)
        if domain.has_hole:
            vals = np.where(r > domain.boundary, vals, 0.0)
        return vals


def gaussian_shell(center, width, mass=1.0):
    return InitialDatum(GAUSSIAN_SHELL, center=center, width=width, mass=mass)


def annulus(r1, r2, height):
    return InitialDatum(ANNULUS, r1=r1, r2=r2, height=height)


def point_approx(location, width=0.0):
    return InitialDatum(POINT_APPROX, center=location, width=width)


def dipole_datum(mass=1.0, t_shift=0.0):
    return InitialDatum(DIPOLE, mass=mass, t_shift=t_shift)


def harmonic_mass_of_datum(datum: InitialDatum, domain: ExteriorDomain) -> float:
    """m_phi = integral of phi u_0, computed by quadrature (or exactly)."""
    prof = profile_for(domain)
    if datum.kind == DIPOLE:
        return datum.mass
    if datum.kind == POINT_APPROX and datum.width == 0:
        return float(prof.phi(datum.center))
    d = domain.dimension
    a = domain.boundary
    lo, hi = datum.support
    lo = max(lo, a) if domain.has_hole else max(lo, 0.0)
    amp = datum.amplitude(domain)

    def f(r):
        return float(datum._shape(r)) * float(prof.phi(r)) * abs(r) ** (d - 1)

    val, _ = integrate_1d(f, lo, hi, abs_tol=1e-14, rel_tol=1e-13,
                          points=[datum.center])
    return amp * domain.measure_factor() * val


# --------------------------------------------------------------------------
# solvers


def tail_radius(t_final: float, support_radius: float, eps_tail: float = 1e-12) -> float:
    """Outer radius beyond which a heat kernel of age t_final is below eps_tail."""
    return math.sqrt(2.0 * t_final) * math.sqrt(2.0 * math.log(1.0 / eps_tail)) + support_radius


def solve_exact_halfline(datum: InitialDatum, x0: float, times, *, n: int = 4001,
                         eps_tail: float = 1e-12, panels: int = 64):
    """u(t, .) on (x0, inf) from the image kernel, on a uniform grid per time.

    Each snapshot gets its own grid [x0, x0 + L(t)] with L(t) growing like
    sqrt(t), so the Simpson weights stay equally accurate at every time.
    """
    domain = ExteriorDomain(HALF_LINE, 1, left_endpoint=float(x0))
    datum.check_domain(domain)
    if n % 2 == 0:
        n += 1
    out = []
    if datum.kind in (GAUSSIAN_SHELL, ANNULUS) or (datum.kind == POINT_APPROX
                                                   and datum.width > 0):
        lo, hi = datum.support
        lo = max(lo, x0)
        z, wz = gauss_legendre_panels(lo, hi, panels)
        wz = wz * datum.evaluate(domain, z)
        reach = hi - x0
    elif datum.kind == POINT_APPROX:
        z, wz = np.array([datum.center]), np.array([1.0])
        reach = datum.center - x0
    else:
        reach = 0.0
    for t in times:
        t = float(t)
        if not t > 0:
            raise SolverError("output times must be positive")
        L = tail_radius(t + datum.t_shift, reach, eps_tail)
        grid = uniform_grid(x0, x0 + L, n, quadrature="simpson")
        x = grid.nodes
        if datum.kind == DIPOLE:
            u = 2.0 * datum.mass * dipole(t + datum.t_shift, x - x0)
        else:
            u = halfline_kernel(t, x[:, None], z[None, :], x0) @ wz
        out.append(RadialField(grid, u, t, 1, domain))
    return out


def _transmissibility(domain: ExteriorDomain, r: np.ndarray) -> np.ndarray:
    """Face coefficients a_{i+1/2} of the flux a (u_{i+1} - u_i).

    With a hole the coefficient is 1 / int_{r_i}^{r_{i+1}} s^{1-d} ds, which
    makes the radial harmonic profile exactly discrete-harmonic; then the
    discrete harmonic mass sum V_i phi_i u_i is conserved up to the outer flux.
    """
    d = domain.dimension
    left, right = r[:-1], r[1:]
    if domain.kind == FULL_SPACE:
        mid = 0.5 * (left + right)
        return mid ** (d - 1) / (right - left)
    if d == 2:
        return 1.0 / np.log(right / left)
    return (d - 2) / (left ** (2 - d) - right ** (2 - d))


def solve_radial_fd(domain: ExteriorDomain, datum: InitialDatum, times,
                    grid: RadialGrid, dt: float | None = None, *,
                    startup_steps: int = 4):
    """Crank-Nicolson for u_t = r^{1-d} (r^{d-1} u_r)_r with Dirichlet data.

    u = 0 at the hole (r = R) and at r = r_max; in the full space the origin is
    a symmetry point (zero flux).  The first steps are backward Euler half
    steps to damp the non-smooth part of the datum.
    """
    if domain.kind == HALF_LINE:
        raise SolverError("use solve_exact_halfline on the half-line")
    if domain.kind == BALL_COMPLEMENT and abs(grid.r_min - domain.boundary) > 1e-12:
        raise SolverError("grid must start at the hole boundary")
    if domain.kind == FULL_SPACE and grid.r_min != 0.0:
        raise SolverError("full-space grid must start at r = 0")
    datum.check_domain(domain)
    r = grid.nodes
    d = domain.dimension
    h = grid.spacing
    dt = h if dt is None else float(dt)
    if not dt > 0:
        raise SolverError("time step must be positive")
    V = control_volumes(r, d)
    a = _transmissibility(domain, r)
    n = r.size

    # unknowns: all nodes except the Dirichlet ones
    first = 1 if domain.has_hole else 0
    idx = slice(first, n - 1)
    Vi = V[idx]
    # L u = (a_{i+1/2}(u_{i+1}-u_i) - a_{i-1/2}(u_i-u_{i-1})) / V_i on interior
    lower_face = np.concatenate([[0.0], a])[:n]   # a_{i-1/2}
    upper_face = np.concatenate([a, [0.0]])       # a_{i+1/2}
    lo_f = lower_face[idx]
    up_f = upper_face[idx]
    diag = -(lo_f + up_f) / Vi
    sup = up_f[:-1] / Vi[:-1]
    sub = lo_f[1:] / Vi[1:]
    m = diag.size

    def banded(theta_dt):
        ab = np.zeros((3, m))
        ab[0, 1:] = -theta_dt * sup
        ab[1, :] = 1.0 - theta_dt * diag
        ab[2, :-1] = -theta_dt * sub
        return ab

    def apply_L(v):
        out = diag * v
        out[:-1] += sup * v[1:]
        out[1:] += sub * v[:-1]
        return out

    u = datum.evaluate(domain, r)
    u[-1] = 0.0
    if domain.has_hole:
        u[0] = 0.0
    v = u[idx].copy()
    mass = float(np.dot(Vi, v))
    t = 0.0
    step = 0
    fields = []
    cache = {}
    for t_out in times:
        t_out = float(t_out)
        if t_out < t:
            raise SolverError("output times must be increasing")
        span = t_out - t
        k = max(1, int(math.ceil(span / dt - 1e-9))) if span > 0 else 0
        dts = span / k if k else 0.0
        for _ in range(k):
            if step < startup_steps // 2:
                # two backward-Euler half steps
                key = ("be", dts)
                if key not in cache:
                    cache[key] = banded(0.5 * dts)
                v = linalg.solve_banded((1, 1), cache[key], v)
                v = linalg.solve_banded((1, 1), cache[key], v)
            else:
                key = ("cn", dts)
                if key not in cache:
                    cache[key] = banded(0.5 * dts)
                v = linalg.solve_banded((1, 1), cache[key], v + 0.5 * dts * apply_L(v))
            step += 1
            if not np.all(np.isfinite(v)):
                raise SolverError(f"non-finite values at step {step} (t = {t + dts:.6g})")
            new_mass = float(np.dot(Vi, v))
            if new_mass > mass * (1 + 1e-9) + 1e-300:
                raise SolverError(f"mass grew at step {step} (t = {t + dts:.6g}): "
                                  f"{mass!r} -> {new_mass!r}")
            mass = new_mass
            t += dts
        t = t_out
        full = np.zeros(n)
        full[idx] = v
        fields.append(RadialField(grid, full, t_out, d, domain))
    return fields


def solve_exact_fullspace_shell(datum: InitialDatum, times, *, n: int = 4001):
    """Exact solution on the whole line for a pair of Gaussians at +-center.

    The datum is the even function m/2 [N(center, width^2) + N(-center, width^2)],
    so the solution at time t is the same pair with variance width^2 + 2t.
    ``t = 0`` is allowed and returns the datum itself.
    """
    if datum.kind != GAUSSIAN_SHELL:
        raise SolverError("exact full-line solution needs a gaussian_shell datum")
    domain = ExteriorDomain(FULL_SPACE, 1)
    c, s, m = datum.center, datum.width, datum.mass
    if n % 2 == 0:
        n += 1
    out = []
    for t in times:
        t = float(t)
        if t < 0:
            raise SolverError("times must be nonnegative")
        var = s * s + 2.0 * t
        grid = uniform_grid(0.0, abs(c) + 12.0 * math.sqrt(var), n, quadrature="simpson")
        r = grid.nodes
        amp = 0.5 * m / math.sqrt(2.0 * math.pi * var)
        u = amp * (np.exp(-0.5 * (r - c) ** 2 / var) + np.exp(-0.5 * (r + c) ** 2 / var))
        out.append(RadialField(grid, u, t, 1, domain))
    return out


# --------------------------------------------------------------------------
# rescaling and moments


def similarity_tau(t: float) -> float:
    return 0.5 * math.log(2.0 * t + 1.0)


def self_similar(u_field: RadialField, m_phi: float,
                 profile: HarmonicProfile | None = None) -> RadialField:
    """g(tau, y) = e^{d tau} phi(e^tau y) u(t, e^tau y) / m_phi on e^{-tau} Omega."""
    if not m_phi > 0:
        raise ValueError("harmonic mass must be positive")
    prof = profile or profile_for(u_field.domain)
    tau = similarity_tau(u_field.time)
    e = math.exp(tau)
    d = u_field.dimension
    g = e ** d * np.asarray(prof.phi(u_field.r)) * u_field.samples / m_phi
    return RadialField(u_field.grid.scaled(1.0 / e), g, u_field.time, d,
                       u_field.domain, tau=tau)


def moment(field: RadialField, k: int = 0, weight: str = "one", *,
           total: bool = False) -> float:
    """Radial moment of a field.

    ``weight="one"`` gives m_k, ``weight="phi"`` gives m_{k,phi}; with
    ``total=True`` the corresponding M-quantity m_0 + m_k is returned.
    """
    if k < 0:
        raise ValueError("moment order must be >= 0")
    r = field.r
    if weight == "one":
        w = np.ones_like(r)
    elif weight == "phi":
        w = np.asarray(profile_for(field.domain).phi(r))
    else:
        raise ValueError(f"unknown weight {weight!r}")
    vals = field.samples * w
    mk = field.integrate(vals * np.abs(r) ** k)
    if total:
        return field.integrate(vals) + mk
    return mk


def harmonic_mass(field: RadialField) -> float:
    return moment(field, 0, "phi")


def full_space_solution(domain: ExteriorDomain, u0: InitialDatum, times, grid, dt=None):
    """Same datum evolved without the hole, on a grid starting at r = 0."""
    full = ExteriorDomain(FULL_SPACE, domain.dimension)
    return solve_radial_fd(full, u0, times, grid, dt)

