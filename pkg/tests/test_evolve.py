import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from ehl.geometry import DomainError, make_domain, profile_for
from ehl.evolve import (RadialField, RadialGrid, SolverError, annulus, control_volumes,
                        dipole_datum, full_space_solution, gaussian_shell,
                        harmonic_mass, harmonic_mass_of_datum, moment, point_approx,
                        self_similar, similarity_tau, solve_exact_fullspace_shell,
                        solve_exact_halfline, solve_radial_fd, tail_radius, uniform_grid)
from ehl.kernels import dipole, halfline_kernel

BALL3 = make_domain("ball_complement", 3, R=1.0)
HALF = make_domain("half_line", 1, x0=0.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        RadialGrid(0.0, 1.0, 8)
    with pytest.raises(ValueError):
        RadialGrid(1.0, 1.0, 32)
    with pytest.raises(ValueError):
        RadialGrid(0.0, 1.0, 32, quadrature="simpson")
    with pytest.raises(ValueError):
        RadialGrid(0.0, 1.0, 33, rule="graded", quadrature="simpson")
    with pytest.raises(ValueError):
        RadialGrid(0.0, 1.0, 33, rule="chebyshev")


def test_graded_grid_halves_spacing():
    g = RadialGrid(1.0, 41.0, 1000, rule="graded")
    h = np.diff(g.nodes)
    near, far = h[g.nodes[1:] <= 2.0], h[g.nodes[:-1] >= 2.0]
    assert near.max() == pytest.approx(0.5 * far.max(), rel=0.02)
    assert g.nodes[0] == 1.0 and g.nodes[-1] == 41.0 and g.nodes.size == 1000


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 5), a=st.floats(0.0, 3.0), L=st.floats(0.5, 20.0),
       n=st.integers(16, 400))
def test_control_volumes_partition(d, a, L, n):
    r = np.linspace(a, a + L, n)
    total = ((a + L) ** d - a ** d) / d
    assert control_volumes(r, d).sum() == pytest.approx(total, rel=1e-12)


def test_datum_validation():
    with pytest.raises(ValueError):
        gaussian_shell(3.0, 0.0)
    with pytest.raises(ValueError):
        annulus(2.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        gaussian_shell(0.5, 0.1).check_domain(BALL3)
    with pytest.raises(DomainError):
        dipole_datum().check_domain(BALL3)


def test_gaussian_shell_carries_its_mass():
    dat = gaussian_shell(3.0, 0.5, 2.5)
    r = np.linspace(1.0, 10.0, 9001)
    u = dat.evaluate(BALL3, r)
    mass = 4 * math.pi * np.dot(control_volumes(r, 3), u)
    assert mass == pytest.approx(2.5, rel=1e-6)


def test_exact_point_mass_is_the_kernel():
    fs = solve_exact_halfline(point_approx(2.0), 0.0, [0.5, 4.0])
    for f in fs:
        assert np.allclose(f.samples, halfline_kernel(f.time, f.r, 2.0), rtol=0, atol=1e-15)


def test_mollified_point_mass_converges_to_kernel():
    errs = []
    for eps in (0.1, 0.05, 0.025):
        f = solve_exact_halfline(point_approx(2.0, eps), 0.0, [1.0])[0]
        errs.append(np.max(np.abs(f.samples - halfline_kernel(1.0, f.r, 2.0))))
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


def test_point_mass_total_mass_is_erf():
    times = [0.5, 3.0, 50.0, 1e3]
    for f in solve_exact_halfline(point_approx(2.0), 0.0, times):
        mass = f.integrate(f.samples)
        assert mass == pytest.approx(special.erf(2.0 / (2 * math.sqrt(f.time))), abs=1e-8)


def test_exact_harmonic_mass_conserved():
    fs = solve_exact_halfline(gaussian_shell(2.0, 0.3), 0.0, np.geomspace(0.1, 1e3, 9))
    m = np.array([harmonic_mass(f) for f in fs])
    m0 = harmonic_mass_of_datum(gaussian_shell(2.0, 0.3), HALF)
    assert np.max(np.abs(m / m0 - 1)) <= 1e-6


def test_dipole_moments():
    for f in solve_exact_halfline(dipole_datum(), 0.0, [0.5, 10.0, 300.0]):
        assert moment(f, 0, "phi") == pytest.approx(1.0, abs=1e-10)
        assert moment(f, 0, "one") == pytest.approx((math.pi * f.time) ** -0.5, rel=1e-9)
        assert np.allclose(f.samples, 2 * dipole(f.time, f.r), rtol=1e-13, atol=0)


def test_full_space_mass_conserved_fd():
    full = make_domain("full_space", 3)
    dat = gaussian_shell(3.0, 0.5, 1.0)
    grid = RadialGrid(0.0, tail_radius(10.0, 9.0), 3000)
    fs = solve_radial_fd(full, dat, [0.5, 2.0, 10.0], grid)
    r = grid.nodes
    m0 = 4 * math.pi * np.dot(control_volumes(r, 3), dat.evaluate(full, r))
    # the scheme conserves the discrete mass; sampling the datum costs O(h^2)
    assert m0 == pytest.approx(1.0, abs=1e-5)
    for f in fs:
        assert moment(f, 0, "one") == pytest.approx(m0, rel=1e-9)


def test_ball_harmonic_mass_and_monotone_mass(d3_shell):
    hm = d3_shell.harmonic_mass_series().values
    assert np.max(np.abs(hm / hm[0] - 1)) <= 1e-4
    m = d3_shell.mass_series().values
    assert np.all(np.diff(m) <= 1e-12 * m[:-1])
    assert all(f.samples[0] == 0.0 for f in d3_shell.fields())


def _solve_at_2(n, dt):
    return solve_radial_fd(BALL3, gaussian_shell(3.0, 0.5), [2.0],
                           RadialGrid(1.0, 21.0, n), dt)[0]


def test_second_order_self_convergence():
    ref = _solve_at_2(8001, 0.0025 / 4)
    errs = []
    for n, dt in [(201, 0.1), (401, 0.05), (801, 0.025)]:
        f = _solve_at_2(n, dt)
        errs.append(np.max(np.abs(f.samples - ref.samples[:: 8000 // (n - 1)])))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.15)


def test_comparison_with_full_space():
    dat = gaussian_shell(3.0, 0.5)
    hole = RadialGrid(1.0, 21.0, 1001)
    free = RadialGrid(0.0, 21.0, 1051)
    assert np.allclose(free.nodes[50:], hole.nodes)
    a = solve_radial_fd(BALL3, dat, [0.5, 2.0, 10.0], hole, 0.02)
    b = full_space_solution(BALL3, dat, [0.5, 2.0, 10.0], free, 0.02)
    for x, y in zip(a, b):
        assert np.all(x.samples <= y.samples[50:] + 1e-8)


def test_solver_errors():
    grid = RadialGrid(1.5, 20.0, 100)
    with pytest.raises(SolverError):
        solve_radial_fd(BALL3, gaussian_shell(3.0, 0.5), [1.0], grid)
    with pytest.raises(SolverError):
        solve_radial_fd(HALF, gaussian_shell(3.0, 0.5), [1.0], RadialGrid(0, 20.0, 100))
    with pytest.raises(SolverError):
        solve_radial_fd(BALL3, gaussian_shell(3.0, 0.5), [2.0, 1.0],
                        RadialGrid(1.0, 20.0, 100))
    with pytest.raises(SolverError):
        solve_exact_halfline(point_approx(2.0), 0.0, [0.0])


def test_similarity_variables():
    assert similarity_tau(0.5) == pytest.approx(0.5 * math.log(2), rel=1e-15)
    assert similarity_tau(0.0) == 0.0


def test_dipole_is_the_fixed_point():
    # u = 2 D(t + 1/2) maps to F(y) = sqrt(2/pi) y^2 e^{-y^2/2} for every tau
    for f in solve_exact_halfline(dipole_datum(t_shift=0.5), 0.0, [0.5, 7.0, 400.0]):
        g = self_similar(f, 1.0)
        F = math.sqrt(2 / math.pi) * g.r ** 2 * np.exp(-0.5 * g.r ** 2)
        assert np.allclose(g.samples, F, rtol=1e-12, atol=1e-300)
        assert g.integrate(g.samples) == pytest.approx(1.0, abs=1e-6)


def test_self_similar_unit_mass(d3_shell):
    m = d3_shell.m_phi()
    for f in d3_shell.fields()[::10]:
        g = self_similar(f, m)
        assert g.integrate(g.samples) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        self_similar(d3_shell.fields()[0], 0.0)


def test_full_space_gaussian_moment():
    f = solve_exact_fullspace_shell(gaussian_shell(0.0, 1.0), [0.0, 3.0])[1]
    assert moment(f, 0, "one") == pytest.approx(1.0, abs=1e-12)
    assert moment(f, 0, "one", total=True) == pytest.approx(2.0, abs=1e-12)
    # second moment of N(0, 1 + 2t) is 1 + 2t
    assert moment(f, 2) == pytest.approx(7.0, rel=1e-10)


def test_field_csv_header():
    f = RadialField(uniform_grid(1.0, 2.0, 16), np.zeros(16), 0.25, 3, BALL3)
    text = f.to_csv()
    assert text.startswith("# t = 0.25\n# d = 3\n# domain = ball_complement(d=3, R=1.0)\nr,u\n")
    assert len(text.strip().splitlines()) == 4 + 16
