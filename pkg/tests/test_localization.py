import math

import numpy as np
import pytest

from pamlab import localization as loc
from pamlab.potential import sample_field, box, hat_a, ln3_plus
from pamlab.spectral import LatticeDomain, EigenPair


def brute_capitals(field, search, kappa):
    out = []
    for site in search.sites():
        z = tuple(int(c) for c in site)
        xi = field.at(z)
        r = loc.capital_radius(xi, kappa, field.rho, dim=field.window.dim)
        if all(field.at(tuple(int(c) for c in y)) <= xi
               for y in box(z, r).sites()):
            out.append(z)
    return out


def test_capital_radius_values():
    assert loc.capital_radius(0.0, 0.5, 1.0) == 1
    assert loc.capital_radius(math.log(2) / 0.5, 0.5, 1.0) == 2
    assert loc.capital_radius(-0.3, 0.5, 1.0) == 0


def test_default_kappa_range():
    for dim in (1, 2, 3):
        k = loc.default_kappa(dim)
        assert 0.0 < k < 1.0 / dim


def test_capitals_match_brute_force():
    for trial in range(8):
        f = sample_field(1, box((0,), 40), rho=1.0, seed=500 + trial)
        search = box((0,), 25)
        caps = loc.find_capitals(f, search, kappa=0.5)
        assert [c.z for c in caps] == brute_capitals(f, search, 0.5)


def test_capital_eigenvalue_sandwich():
    f = sample_field(1, box((0,), 40), rho=1.0, seed=519)
    caps = loc.find_capitals(f, box((0,), 25), kappa=0.5)
    assert len(caps) > 0
    for c in caps:
        assert c.xi_value - 2.0 <= c.lambda_C <= c.xi_value + 1e-12


def test_order_stats_against_sort():
    f = sample_field(1, box((0,), 40), rho=1.0, seed=503)
    caps = loc.find_capitals(f, box((0,), 25), kappa=0.5)
    t = 7.0
    st = loc.order_stats(caps, t, k=3)
    vals = sorted(
        ((c.lambda_C - ln3_plus(abs(c.z[0])) * abs(c.z[0]) / t,
          c.lambda_C, c.z[0]) for c in caps),
        reverse=True,
    )
    assert st.entries[0].psi == pytest.approx(vals[0][0], abs=1e-15)
    assert st.entries[0].z[0] == vals[0][2]
    psis = [e.psi for e in st.entries]
    assert psis == sorted(psis, reverse=True)


def test_two_capital_crossing_closed_form():
    cap_a = loc.Capital(z=(2,), varrho=1, xi_value=1.0, lambda_C=1.0)
    cap_b = loc.Capital(z=(30,), varrho=1, xi_value=1.6, lambda_C=1.5)
    pa = float(ln3_plus(2)) * 2
    pb = float(ln3_plus(30)) * 30
    t_star = (pb - pa) / (cap_b.lambda_C - cap_a.lambda_C)
    jumps = loc.z_jump_times([cap_a, cap_b], 1.0, 400.0)
    assert len(jumps) == 1
    assert jumps[0] == pytest.approx(t_star, rel=1e-10)


def test_trajectory_monotone():
    f = sample_field(1, box((0,), 80), rho=1.0, seed=9)
    traj = loc.z_trajectory(f, [16.0, 20.0, 25.0, 30.0], kappa=0.5)
    zs = [abs(s.top.z[0]) for s in traj.stats]
    assert all(a <= b for a, b in zip(zs, zs[1:]))
    for tj in traj.jump_times:
        assert 16.0 <= tj <= 30.0


def brute_islands(field, L, A, R_L):
    a_hat = hat_a(L, 1, field.rho)
    exceed = [int(s[0]) for s in box((0,), L).sites()
              if field.at((int(s[0]),)) > a_hat - 2 * A]
    covered = set()
    for z in exceed:
        covered.update(range(max(z - R_L, -L), min(z + R_L, L) + 1))
    comps, cur = [], []
    for y in sorted(covered):
        if cur and y != cur[-1] + 1:
            comps.append(cur)
            cur = []
        cur.append(y)
    if cur:
        comps.append(cur)
    return comps


def test_islands_match_flood_fill():
    f = sample_field(1, box((0,), 60), rho=1.0, seed=77)
    A = 1.2
    with pytest.warns(UserWarning):
        isl = loc.islands(f, L=40, A=A, beta_R=0.6, kappa=0.5, chi=1.0)
    R_L = loc.island_radius(40, 0.6)
    want = brute_islands(f, 40, A, R_L)
    assert [list(i.sites[:, 0]) for i in isl] == want
    for i in isl:
        zc = i.z_C[0]
        assert f.at((zc,)) == max(f.at((int(y),)) for y in i.sites[:, 0])


def test_curly_L_counts():
    assert loc.curly_L(np.zeros(5)) == 5.0
    assert loc.curly_L(np.array([-np.inf, 0.0])) == 1.0


def test_eigfun_decay_fit_exact():
    dom = LatticeDomain.from_box(box((0,), 10))
    phi = np.exp(-0.7 * np.abs(dom.sites[:, 0]))
    phi /= np.linalg.norm(phi)
    ep = EigenPair(lam=0.0, phi=phi, domain=dom, residual=0.0, iterations=1)
    rate, r2 = loc.eigfun_decay_fit(ep, (0,))
    assert rate == pytest.approx(-0.7, abs=1e-10)
    assert r2 == pytest.approx(1.0, abs=1e-10)
