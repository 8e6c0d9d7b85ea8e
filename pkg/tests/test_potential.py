import math

import numpy as np
import pytest

from pamlab import potential as P
from pamlab.errors import InvalidParameterError, FormatError


def test_tail_roundtrip():
    rng = np.random.default_rng(0)
    for rho in (0.5, 1.0, 2.3):
        u = rng.uniform(1e-6, 1 - 1e-6, size=200)
        r = P.quantile(u, rho)
        back = P.tail_sf(r, rho)
        assert np.abs(back - u).max() < 1e-12
        assert np.abs(P.tail_cdf(r, rho) + back - 1.0).max() < 1e-12


def test_tail_values():
    # survival exp(-e^{r/rho}) at r = 0 is e^{-1}
    assert abs(P.tail_sf(0.0, 1.0) - math.exp(-1.0)) < 1e-15
    assert abs(P.tail_sf(math.log(2.0), 1.0) - math.exp(-2.0)) < 1e-15


def test_field_matches_tail():
    win = P.box((0,), 20000)
    fld = P.sample_field(1, win, rho=1.0, seed=4)
    # empirical sf at r=0 should be near e^{-1}
    frac = float((fld.values > 0.0).mean())
    assert abs(frac - math.exp(-1.0)) < 4.0 * math.sqrt(0.25 / win.n_sites)


def test_field_determinism():
    win = P.box((0, 0), 8)
    a = P.sample_field(2, win, rho=1.3, seed=9)
    b = P.sample_field(2, win, rho=1.3, seed=9)
    c = P.sample_field(2, win, rho=1.3, seed=10)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_window_geometry():
    w = P.box((1, -2), 3)
    assert w.dim == 2 and w.side == 7 and w.n_sites == 49
    assert w.contains((4, 1)) and not w.contains((5, 1))
    inner = P.box((1, -2), 2)
    assert w.contains_window(inner) and not inner.contains_window(w)
    sites = w.sites()
    assert sites.shape == (49, 2)
    idx = w.flat_index(sites)
    assert np.array_equal(np.sort(idx), np.arange(49))


def test_ln_helpers():
    assert P.ln2(math.e ** math.e) == pytest.approx(1.0)
    assert P.ln3(math.exp(math.e ** math.e)) == pytest.approx(1.0)
    # floored variants never go below 1 and agree above the threshold
    assert P.ln3_plus(2.0) == 1.0
    big = math.exp(math.exp(math.exp(1.5)))
    assert P.ln3_plus(big) == pytest.approx(1.5, rel=1e-12)
    # guarded double log bottoms out at 0, not 1
    assert P.ln2_plus(1.0) == 0.0


def test_hat_a_formula():
    for L in (10.0, 1e3, 1e6):
        for dim in (1, 2):
            for rho in (0.7, 1.0):
                want = rho * math.log(dim * math.log(L))
                assert P.hat_a(L, dim, rho) == pytest.approx(want, rel=1e-13)


def test_scales_domain():
    with pytest.raises(InvalidParameterError):
        P.scales(10.0, 1, 1.0)
    sc = P.scales(100.0, 1, 1.0)
    assert sc.d_t == pytest.approx(1.0 / math.log(100.0))
    assert sc.L_t == int(100.0 * P.ln2_plus(100.0))
    assert sc.N_t == int(0.5 * math.sqrt(100.0))
    assert sc.r_t == pytest.approx(100.0 * sc.d_t / P.ln3(100.0))


def test_constant_and_values():
    win = P.box((0,), 3)
    cf = P.constant_field(win, 0.25)
    assert np.all(cf.values == 0.25)
    fv = P.field_from_values(win, np.arange(7.0))
    assert fv.at((-3,)) == 0.0 and fv.at((3,)) == 6.0
    assert fv.argmax_site() == (3,)
    with pytest.raises(InvalidParameterError):
        P.field_from_values(win, np.arange(6.0))


def test_save_load_roundtrip(tmp_path):
    win = P.box((1,), 5)
    fld = P.sample_field(1, win, rho=1.7, seed=2)
    path = tmp_path / "field.json"
    P.save_field(fld, path)
    back = P.load_field(path)
    assert back.rho == fld.rho and back.seed == fld.seed
    assert back.window.center == fld.window.center
    assert np.array_equal(back.values, fld.values)
    (tmp_path / "junk.json").write_text("{not json")
    with pytest.raises(FormatError):
        P.load_field(tmp_path / "junk.json")


def test_values_at_outside_raises():
    win = P.box((0,), 2)
    fld = P.sample_field(1, win, rho=1.0, seed=0)
    with pytest.raises(InvalidParameterError):
        fld.at((5,))
