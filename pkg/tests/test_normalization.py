import csv
import io
import math

import numpy as np
import pytest

from ehl.geometry import make_domain, profile_for
from ehl.normalization import (asymptote_residual, build_table, i_tau, i_tau_prime,
                               i_tau_with_error, k_of_t, k_tau, kprime_over_k,
                               mass_constant)

# independent 30-digit quadrature (mpmath) of the defining integrals
ORACLE = {
    (3, 0.0): 0.150679566687541506063409431601,
    (3, 2.0): 0.801693123081591527317956486103,
    (2, 0.0): 0.179137596576160667229990236833,
    (2, 2.0): 4.64188290188876364284454895766,
}


def test_halfline_exact(halfline):
    assert i_tau(halfline, 0.0) == pytest.approx(0.5, rel=1e-14)
    for tau in (0.3, 1.0, 4.0, 10.0):
        assert i_tau(halfline, tau) == pytest.approx(math.exp(2 * tau) / 2, rel=1e-12)
        assert i_tau_prime(halfline, tau) == pytest.approx(math.exp(2 * tau), rel=1e-12)
        assert kprime_over_k(halfline, tau) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("key", sorted(ORACLE))
def test_ball_against_oracle(key):
    d, tau = key
    p = profile_for(make_domain("ball_complement", d, R=1.0))
    assert i_tau(p, tau) == pytest.approx(ORACLE[key], rel=1e-12)


def test_negative_tau_rejected(ball3):
    with pytest.raises(ValueError):
        i_tau(ball3, -0.1)
    with pytest.raises(ValueError):
        i_tau_prime(ball3, -0.1)


def test_k_of_t(halfline, ball3, ball2):
    for t in (0.5, 1.0, 7.5, 1e3):
        assert k_of_t(halfline, t) == pytest.approx(1.0 / t, rel=1e-12)
    with pytest.raises(ValueError):
        k_of_t(halfline, 0.4)
    gaps = [abs(k_of_t(ball3, t) - 1) for t in (10.0, 1e3, 1e5)]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-2
    # k_t (log t)^2 / 4 -> 1, slowly
    errs = [abs(k_of_t(ball2, t) * math.log(t) ** 2 / 4 - 1) for t in (1e2, 1e6, 1e12)]
    assert errs[0] > errs[1] > errs[2]


def test_full_space_trivial():
    p = profile_for(make_domain("full_space", 3))
    assert i_tau(p, 2.0) == 1.0 and i_tau_prime(p, 2.0) == 0.0


def test_table_invariants(ball3, ball2):
    taus = np.linspace(0, 15, 31)
    t3 = build_table(ball3, taus)
    assert np.all(t3.column("K") * t3.column("I") == pytest.approx(1.0, rel=1e-15))
    assert np.all((t3.column("I") > 0) & (t3.column("I") <= 1.0))
    t2 = build_table(ball2, taus)
    ratio = t2.column("I") / (1 + taus ** 2)
    assert ratio.min() > 0.1 and ratio.max() < 1.1


def test_table_parallel_matches_serial(ball3):
    taus = [0.0, 0.5, 1.0, 3.0]
    assert build_table(ball3, taus).to_csv() == build_table(ball3, taus, workers=2).to_csv()


def test_table_csv(halfline):
    text = build_table(halfline, [0.0, 0.25]).to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["tau", "I", "K", "Iprime", "err"]
    assert float(rows[2][0]) == 0.25
    assert float(rows[2][2]) == pytest.approx(2 * math.exp(-0.5), rel=1e-12)


def _split_bound(taus, values, rate, margin=1.01):
    """Fit C on the first half (with a small margin), check it on the second half.

    The ratios here climb monotonically to a finite limit, so the margin is
    what separates "bounded" from "still growing".
    """
    ratio = np.abs(values) / rate(taus)
    half = len(taus) // 2
    return margin * ratio[:half].max(), ratio[half:].max()


def test_iprime_decay_d3(ball3):
    # e^tau I'(tau) climbs to 2 C* E|y|^{-1} = 2 sqrt(2/pi)
    taus = np.linspace(0, 15, 31)
    scaled = np.array([abs(i_tau_prime(ball3, t)) * math.exp(t) for t in taus])
    assert np.all(scaled <= 2 * mass_constant(ball3))
    assert scaled[-1] == pytest.approx(2 * mass_constant(ball3), rel=1e-4)


def test_iprime_growth_d2(ball2):
    taus = np.linspace(0, 20, 21)
    ratio = np.array([abs(i_tau_prime(ball2, t)) / (1 + t) for t in taus])
    # I ~ tau^2 + O(tau), so the ratio climbs towards 2
    assert np.all(np.isfinite(ratio)) and ratio.max() <= 2.0


@pytest.mark.parametrize("d", [2, 3, 4])
def test_kprime_over_k_decay(d):
    p = profile_for(make_domain("ball_complement", d, R=1.0))
    taus = np.linspace(0.5, 12, 24)
    vals = np.array([kprime_over_k(p, t) for t in taus])
    rate = (lambda s: 1 / (1 + s)) if d == 2 else (lambda s: np.exp(-(d - 2) * s))
    C, v = _split_bound(taus, vals, rate)
    assert v <= C


def test_asymptote_residuals(halfline, ball2, ball3):
    for tau in np.arange(0, 10.5, 0.5):
        assert asymptote_residual(halfline, tau) <= 1e-10
    r2 = np.array([asymptote_residual(ball2, t) for t in np.linspace(5, 50, 10)])
    assert r2.max() < 1.0 and r2[-1] < r2[0]
    r3 = np.array([asymptote_residual(ball3, t) for t in np.linspace(2, 15, 14)])
    assert r3.max() < 2.0 and np.all(np.diff(r3) < 0)


def test_d2_tau_squared_gap(ball2):
    taus = np.linspace(5, 50, 10)
    gap = np.array([abs(t * t - i_tau(ball2, t)) for t in taus])
    C, v = _split_bound(taus, gap, lambda s: s)
    assert v <= C


def test_error_estimate_reported(ball3):
    _, err = i_tau_with_error(ball3, 1.0)
    assert 0 <= err < 1e-10


def test_mass_constant(ball3):
    assert mass_constant(ball3) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-15)
    p = profile_for(make_domain("ball_complement", 5, R=2.0))
    # C* E|y|^{-3} for the standard Gaussian in R^5 is 8 * 2^{-3/2}/Gamma(5/2)
    assert mass_constant(p) == pytest.approx(8 * 2 ** -1.5 / math.gamma(2.5), rel=1e-14)
    with pytest.raises(ValueError):
        mass_constant(profile_for(make_domain("ball_complement", 2, R=1.0)))
