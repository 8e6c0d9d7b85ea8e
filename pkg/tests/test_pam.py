import math

import numpy as np
import pytest

from pamlab import pam
from pamlab.potential import sample_field, constant_field, box, field_from_values
from pamlab.spectral import LatticeDomain, principal_eig
from pamlab.errors import DivergentIntegralError


def test_singleton_closed_form():
    f = sample_field(1, box((0,), 3), rho=1.0, seed=11)
    dom = LatticeDomain.from_sites([[0]])
    want = math.exp((f.at((0,)) - 2.0) * 1.5)
    s = pam.solve_spectral(dom, f, 1.5)
    assert s.total_mass == pytest.approx(want, rel=1e-12)
    o = pam.solve_ode(dom, f, 1.5)
    assert o.total_mass == pytest.approx(want, rel=1e-8)


def test_spectral_vs_ode():
    rng = np.random.default_rng(1)
    worst = 0.0
    for trial in range(6):
        fld = sample_field(1, box((0,), 10), rho=1.0, seed=100 + trial)
        dom = LatticeDomain.from_box(box((0,), 10))
        t = float(rng.uniform(0.2, 2.0))
        a = pam.solve_spectral(dom, fld, t)
        b = pam.solve_ode(dom, fld, t)
        rel = np.abs(a.values - b.values).max() / np.abs(a.values).max()
        rel_mass = abs(a.total_mass - b.total_mass) / a.total_mass
        worst = max(worst, rel, rel_mass)
    assert worst < 1e-6


def test_expm_matches_spectral():
    fld = sample_field(1, box((0,), 2), rho=1.0, seed=5)
    dom = LatticeDomain.from_box(box((0,), 2))
    e = pam.expm_oracle(dom, fld, 1.0)
    a = pam.solve_spectral(dom, fld, 1.0)
    assert np.abs(e.values - a.values).max() < 1e-10
    assert e.total_mass == pytest.approx(a.total_mass, rel=1e-12)


def test_fk_agrees_with_expm():
    fld = sample_field(1, box((0,), 2), rho=1.0, seed=5)
    dom = LatticeDomain.from_box(box((0,), 2))
    e = pam.expm_oracle(dom, fld, 1.0)
    fk = pam.fk_estimate(fld, 1.0, 60_000, seed=99, window=box((0,), 2))
    z = np.abs(fk.values - e.values) / np.maximum(fk.mc_stderr, 1e-300)
    assert z.max() < 4.0
    mass_z = abs(fk.total_mass - e.total_mass) / fk.mass_stderr
    assert mass_z < 4.0


def test_fk_free_mode_constant_field():
    cf = constant_field(box((0,), 60), 0.7)
    fk = pam.fk_estimate(cf, 1.0, 20_000, seed=3, window=box((0,), 30),
                         mode="free")
    assert fk.total_mass == pytest.approx(math.exp(0.7), rel=1e-12)


def test_heat_kernel_zero_potential():
    cf0 = constant_field(box((0,), 25), 0.0)
    dom0 = LatticeDomain.from_box(box((0,), 25))
    sol = pam.solve_ode(dom0, cf0, 1.0)
    hk = np.array([pam.heat_kernel_1d(x, 1.0) for x in dom0.sites[:, 0]])
    assert np.abs(sol.values - hk).max() < 1e-8


def test_path_weight_closed_form():
    cf0 = constant_field(box((0,), 25), 0.0)
    # single site path carries weight 1 (no jumps happen)
    assert pam.path_weight([(0,)], 1.0, cf0) == 1.0
    # one jump at rate 2d against gamma - xi = 1: 2/(2+1)
    assert pam.path_weight([0, 1], 1.0, cf0) == pytest.approx(2.0 / 3.0,
                                                              abs=1e-15)
    vals = np.array([0.5, -1.0, 2.0])
    fld = field_from_values(box((1,), 1), vals)
    w = pam.path_weight([0, 1, 2], 3.0, fld)
    want = (2.0 / (2.0 + 3.0 - 0.5)) * (2.0 / (2.0 + 3.0 - (-1.0)))
    assert w == pytest.approx(want, rel=1e-14)


def test_path_weight_divergent_rate():
    vals = np.array([10.0, 0.0, 0.0])
    fld = field_from_values(box((1,), 1), vals)
    with pytest.raises(DivergentIntegralError):
        pam.path_weight([0, 1], 1.0, fld)


def test_mass_out_exact_bound():
    fld = sample_field(1, box((0,), 2), rho=1.0, seed=5)
    dom = LatticeDomain.from_box(box((0,), 2))
    V = fld.values_at(dom.sites)
    lam1 = principal_eig(dom, V).lam
    g = lam1 + 1.0
    w = pam.mass_out_exact(dom, V, g)
    assert np.all(w > 0.0)
    assert np.all(w <= 1.0 + 2.0 * dom.n / (g - lam1))


def test_mass_out_requires_gap():
    dom = LatticeDomain.from_box(box((0,), 2))
    V = np.zeros(dom.n)
    lam1 = principal_eig(dom, V).lam
    with pytest.raises(DivergentIntegralError):
        pam.mass_out_exact(dom, V, lam1 - 0.5)


def test_concentration_profile():
    fld = sample_field(1, box((0,), 10), rho=1.0, seed=42)
    dom = LatticeDomain.from_box(box((0,), 10))
    sol = pam.solve_spectral(dom, fld, 1.0)
    prof = pam.concentration_profile(sol, (0,), [0, 1, 2, 5, 50])
    assert np.all(np.diff(prof) <= 1e-15)
    assert prof[-1] == 0.0
    assert 0.0 <= prof[0] <= 1.0


def test_tv_distance():
    fld = sample_field(1, box((0,), 6), rho=1.0, seed=8)
    dom = LatticeDomain.from_box(box((0,), 6))
    a = pam.solve_spectral(dom, fld, 0.5)
    b = pam.solve_spectral(dom, fld, 1.5)
    assert pam.tv_profile_distance(a, a) == 0.0
    d_ab = pam.tv_profile_distance(a, b)
    assert d_ab == pytest.approx(pam.tv_profile_distance(b, a), abs=1e-15)
    assert 0.0 < d_ab <= 1.0


def test_solution_positive_and_normalized_profile():
    fld = sample_field(2, box((0, 0), 3), rho=1.0, seed=21)
    dom = LatticeDomain.from_box(box((0, 0), 3))
    sol = pam.solve_spectral(dom, fld, 1.0)
    assert sol.values.min() >= 0.0
    assert sol.total_mass == pytest.approx(sol.values.sum(), rel=1e-12)
