"""End-to-end acceptance checks, one test per headline guarantee.

Each test prints one summary line (visible in a plain ``pytest -v`` run)
with the measured quantities, then asserts the guarantee.  Seeds are
frozen so every run is deterministic.
"""

import csv
import math
import time
import warnings

import numpy as np
import pytest
from scipy import stats

from pamlab import limits as L
from pamlab import localization as loc
from pamlab import pam
from pamlab import experiments as E
from pamlab.potential import sample_field, box, scales, hat_a, ln3_plus
from pamlab.spectral import LatticeDomain, dense_oracle, principal_eig
from pamlab.variational import chi_monotonicity_scan


def _report(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


# ── 1. limiting penalized-maximum laws ───────────────────────────────────

def test_limit_law_distributions(capsys):
    t0 = time.time()
    n = 100_000
    worst_psi = worst_z = worst_corr = 0.0
    for theta in (1.0, 2.0):
        mx = L.sample_limit_maxima(1, theta, n, seed=101)
        d_psi = stats.kstest(mx.psi,
                             lambda x: L.limit_cdf_gumbel(x, theta, 1)).statistic
        d_z = stats.kstest(mx.z[:, 0],
                           lambda x: L.limit_cdf_laplace(x, theta)).statistic
        corr = abs(np.corrcoef(mx.psi, mx.z[:, 0])[0, 1])
        worst_psi = max(worst_psi, d_psi)
        worst_z = max(worst_z, d_z)
        worst_corr = max(worst_corr, corr)
    elapsed = time.time() - t0
    ok = (worst_psi < 0.006 and worst_z < 0.006
          and worst_corr < 4.0 / math.sqrt(n) and elapsed < 300.0)
    _report(capsys, "limit laws", ok,
            f"n={n} per theta, KS(value)={worst_psi:.4f} "
            f"KS(position)={worst_z:.4f} (<0.006), "
            f"|corr|={worst_corr:.4f} (<{4.0 / math.sqrt(n):.4f}), "
            f"{elapsed:.1f}s (<300s)")
    assert ok


# ── 2. aging-time tail vs quadrature ─────────────────────────────────────

def test_aging_tail_agreement(capsys):
    t0 = time.time()
    ts = L.theta_sampler(1, 120_000, seed=20260823)
    worst_z = 0.0
    for s in (0.5, 1.0, 2.0, 5.0, 10.0):
        p, se, bias = ts.survival(s)
        ref = L.aging_tail_oracle(s, dim=1)
        worst_z = max(worst_z, abs(p - ref) / se + bias / se)
    p1000 = ts.survival(1000.0)[0]
    ratio = 1000.0 * p1000 / math.log(1000.0)
    elapsed = time.time() - t0
    ok = (ts.n_censored == 0 and worst_z <= 3.0
          and 0.6 <= ratio <= 1.4 and elapsed < 900.0)
    _report(capsys, "aging tail", ok,
            f"n=120000, censored={ts.n_censored}, worst |z|={worst_z:.2f} "
            f"(<=3), trend ratio at s=1e3: {ratio:.3f} (in [0.6,1.4]), "
            f"{elapsed:.1f}s (<900s)")
    assert ok


# ── 3. variational cost scan ─────────────────────────────────────────────

def _proj_simplex(p):
    u = np.sort(p)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, len(p) + 1)
    k = ks[u - (css - 1.0) / ks > 0][-1]
    return np.maximum(p - (css[k - 1] - 1.0) / k, 0.0)


def _chi_projected_gradient(rho, R):
    from pamlab.spectral import dense_matrix

    dom = LatticeDomain.from_box(box((0,), R))

    def lam1(p):
        V = rho * np.log(np.maximum(p, 1e-300))
        w, v = np.linalg.eigh(dense_matrix(dom, V))
        return w[-1], v[:, -1]

    p = np.full(2 * R + 1, 1.0 / (2 * R + 1))
    eta = 0.05
    lam, phi = lam1(p)
    for _ in range(20000):
        g = rho * phi ** 2 / np.maximum(p, 1e-300)
        cand = np.maximum(_proj_simplex(p + eta * g), 1e-18)
        cand /= cand.sum()
        lc, pc = lam1(cand)
        if lc >= lam:
            p, lam, phi = cand, lc, pc
            eta *= 1.05
        else:
            eta *= 0.5
            if eta < 1e-14:
                break
    return -lam


def test_variational_cost_scan(capsys):
    t0 = time.time()
    scan = chi_monotonicity_scan(1.0, [0, 1, 2, 3, 4, 5, 6])
    chis = [s.chi_R for s in scan]
    point_mass_exact = chis[0] == 2.0
    non_increasing = all(a >= b - 1e-12 for a, b in zip(chis, chis[1:]))
    worst_resid = max(s.residual for s in scan)
    pg = _chi_projected_gradient(1.0, 2)
    pg_gap = abs(chis[2] - pg)
    elapsed = time.time() - t0
    ok = (point_mass_exact and non_increasing and worst_resid < 1e-8
          and pg_gap < 1e-4 and elapsed < 120.0)
    _report(capsys, "variational cost", ok,
            f"chi(0)={chis[0]} (=2d exactly), non-increasing={non_increasing}, "
            f"max residual={worst_resid:.1e} (<1e-8), "
            f"gradient-oracle gap={pg_gap:.1e} (<1e-4), "
            f"{elapsed:.1f}s (<120s)")
    assert ok


# ── 4. solver cross-validation ───────────────────────────────────────────

def test_solver_cross_validation(capsys):
    t0 = time.time()
    rng = np.random.default_rng(404)
    worst_rel = 0.0
    for trial in range(50):
        rad = int(rng.integers(3, 11))
        fld = sample_field(1, box((0,), rad), rho=1.0, seed=7000 + trial)
        dom = LatticeDomain.from_box(box((0,), rad))
        t = float(rng.uniform(0.25, 2.0))
        a = pam.solve_spectral(dom, fld, t)
        b = pam.solve_ode(dom, fld, t)
        rel = np.abs(a.values - b.values).max() / np.abs(a.values).max()
        rel_mass = abs(a.total_mass - b.total_mass) / a.total_mass
        worst_rel = max(worst_rel, rel, rel_mass)
    worst_fk_z = 0.0
    for inst_seed, fk_seed in ((5, 909), (23, 911)):
        fld = sample_field(1, box((0,), 2), rho=1.0, seed=inst_seed)
        dom = LatticeDomain.from_box(box((0,), 2))
        e = pam.expm_oracle(dom, fld, 1.0)
        fk = pam.fk_estimate(fld, 1.0, 1_000_000, seed=fk_seed,
                             window=box((0,), 2))
        z = np.abs(fk.values - e.values) / np.maximum(fk.mc_stderr, 1e-300)
        mz = abs(fk.total_mass - e.total_mass) / fk.mass_stderr
        worst_fk_z = max(worst_fk_z, float(z.max()), mz)
    elapsed = time.time() - t0
    ok = worst_rel < 1e-6 and worst_fk_z <= 3.0 and elapsed < 600.0
    _report(capsys, "solver cross-validation", ok,
            f"50 instances, worst rel err={worst_rel:.1e} (<1e-6); "
            f"2x1e6 walk samples, worst |z|={worst_fk_z:.2f} (<=3), "
            f"{elapsed:.1f}s (<600s)")
    assert ok


# ── 5. principal-eigenvalue invariants ───────────────────────────────────

def test_principal_eigenvalue_invariants(capsys):
    t0 = time.time()
    rng = np.random.default_rng(505)
    worst_iter = worst_union = 0.0
    sandwich_ok = shift_ok = True
    for trial in range(1000):
        dim = int(rng.integers(1, 3))
        rad = int(rng.integers(1, 5)) if dim == 1 else int(rng.integers(1, 3))
        win = box((0,) * dim, rad)
        fld = sample_field(dim, win, rho=1.0, seed=90_000 + trial)
        dom = LatticeDomain.from_box(win)
        V = fld.values_at(dom.sites)
        lam_full = dense_oracle(dom, V)[0][0]
        dom_s = LatticeDomain.from_box(box((0,) * dim, max(rad - 1, 0)))
        Vs = fld.values_at(dom_s.sites)
        lam_sub = dense_oracle(dom_s, Vs)[0][0]
        sandwich_ok &= (Vs.max() - 2 * dim <= lam_sub + 1e-12
                        and lam_sub <= lam_full + 1e-12
                        and lam_full <= V.max() + 1e-12)
        worst_iter = max(worst_iter, abs(principal_eig(dom, V).lam - lam_full))
        # distant translate with an independent potential: the joint
        # problem decouples, so its top eigenvalue is the pairwise max
        shift = 2 * rad + 2 + int(rng.integers(0, 3))
        sites_b = dom.sites.copy()
        sites_b[:, 0] += shift
        Vb = rng.normal(size=dom.n)
        lam_b = dense_oracle(LatticeDomain.from_sites(sites_b), Vb)[0][0]
        union = LatticeDomain.from_sites(np.vstack([dom.sites, sites_b]))
        VU = np.empty(union.n)
        for s, v in zip(dom.sites, V):
            VU[union.index_of(s)] = v
        for s, v in zip(sites_b, Vb):
            VU[union.index_of(s)] = v
        lam_u = dense_oracle(union, VU)[0][0]
        worst_union = max(worst_union, abs(lam_u - max(lam_full, lam_b)))
        lam_shift = dense_oracle(
            LatticeDomain.from_box(box((5,) * dim, rad)), V)[0][0]
        shift_ok &= lam_shift == lam_full
    elapsed = time.time() - t0
    ok = (sandwich_ok and shift_ok and worst_iter < 1e-9
          and worst_union < 1e-9 and elapsed < 300.0)
    _report(capsys, "eigenvalue invariants", ok,
            f"1000 instances, sandwich={sandwich_ok}, "
            f"union-max gap={worst_union:.1e} (<1e-9), "
            f"shift exact={shift_ok}, solver gap={worst_iter:.1e} (<1e-9), "
            f"{elapsed:.1f}s (<300s)")
    assert ok


# ── 6. exact-formula suite ───────────────────────────────────────────────

def _ctrw_weights(dom, V, level, start_idx, stop_idx, n_paths, seed):
    """Mean discounted weight of walks killed at exit, absorbed at
    ``stop_idx`` (pass None to absorb only at exit)."""
    rng = np.random.default_rng(seed)
    two_d = 2 * dom.dim
    pos = np.full(n_paths, start_idx, dtype=np.int64)
    acc = np.zeros(n_paths)
    weights = np.zeros(n_paths)
    alive = np.ones(n_paths, dtype=bool)
    for _ in range(200_000):
        idx = np.nonzero(alive)[0]
        if len(idx) == 0:
            break
        tau = rng.exponential(1.0 / two_d, size=len(idx))
        acc[idx] += (V[pos[idx]] - level) * tau
        direc = rng.integers(0, two_d, size=len(idx))
        nxt = dom.neighbors[pos[idx], direc]
        out = nxt < 0
        if stop_idx is None:
            weights[idx[out]] = np.exp(acc[idx[out]])
            alive[idx[out]] = False
            pos[idx[~out]] = nxt[~out]
        else:
            hit = nxt == stop_idx
            weights[idx[hit]] = np.exp(acc[idx[hit]])
            alive[idx[out | hit]] = False
            move = ~(out | hit)
            pos[idx[move]] = nxt[move]
    if alive.any():
        raise RuntimeError("walkers exceeded the step guard")
    return weights.mean(), weights.std(ddof=1) / math.sqrt(n_paths)


def test_exact_formula_suite(capsys):
    t0 = time.time()
    # product formula for a fixed jump sequence vs direct simulation
    rng = np.random.default_rng(606)
    fld = sample_field(1, box((0,), 30), rho=1.0, seed=66)
    worst_path_z = 0.0
    for _ in range(20):
        m = int(rng.integers(2, 8))
        sites = [int(rng.integers(-20, 20))]
        for st in rng.choice([-1, 1], size=m - 1):
            sites.append(sites[-1] + int(st))
        xi = np.array([fld.at((s,)) for s in sites[:-1]])
        gamma = float(fld.values.max()) + 0.5
        want = pam.path_weight([(s,) for s in sites], gamma, fld)
        tau = rng.exponential(0.5, size=(100_000, m - 1))
        w = np.exp(((xi - gamma) * tau).sum(axis=1))
        se = w.std(ddof=1) / math.sqrt(len(w))
        worst_path_z = max(worst_path_z, abs(w.mean() - want) / se)

    # propagator sandwich with every term from the dense exponential
    rng = np.random.default_rng(66)
    sandwich_ok = True
    bound_ok = True
    for trial in range(20):
        dim = 1 if trial % 2 == 0 else 2
        rad = int(rng.integers(5, 25)) if dim == 1 else int(rng.integers(1, 4))
        win = box((0,) * dim, rad)
        dom = LatticeDomain.from_box(win)
        fld2 = sample_field(dim, win, rho=1.0, seed=8000 + trial)
        V = fld2.values_at(dom.sites)
        t = float(rng.uniform(0.5, 2.0))
        P = pam.expm_propagator(dom, V, t)
        lams, vecs = dense_oracle(dom, V)
        scale = math.exp(t * lams[0])
        diag = np.diag(P)
        rows = P.sum(axis=1)
        eps = 1e-10 * scale
        sandwich_ok &= bool(
            np.all(diag >= scale * vecs[:, 0] ** 2 - eps)
            and np.all(rows >= diag - eps)
            and np.all(rows <= scale * dom.n ** 1.5 + eps))
        # exit-mass functional stays under its resolvent bound
        gamma = lams[0] + 1.0
        w_exit = pam.mass_out_exact(dom, V, gamma)
        bound_ok &= bool(np.all(
            w_exit <= 1.0 + 2 * dim * dom.n / (gamma - lams[0]) + 1e-12))

    # the exit-mass functional vs direct walk simulation
    fld3 = sample_field(1, box((0,), 3), rho=1.0, seed=31)
    dom3 = LatticeDomain.from_box(box((0,), 3))
    V3 = fld3.values_at(dom3.sites)
    lams3, vecs3 = dense_oracle(dom3, V3)
    gamma3 = lams3[0] + 1.5
    w_exact = pam.mass_out_exact(dom3, V3, gamma3)
    start = dom3.index_of((0,))
    mc, se = _ctrw_weights(dom3, V3, gamma3, start, None, 100_000, seed=79)
    mass_out_z = abs(mc - w_exact[start]) / se

    # eigenfunction ratio as an absorbed-walk expectation
    phi = np.abs(vecs3[:, 0])
    y_idx = int(np.argmax(phi))
    x_idx = y_idx + 1 if y_idx + 1 < dom3.n else y_idx - 1
    mc_r, se_r = _ctrw_weights(dom3, V3, lams3[0], x_idx, y_idx,
                               100_000, seed=77)
    ratio_z = abs(mc_r - phi[x_idx] / phi[y_idx]) / se_r

    elapsed = time.time() - t0
    ok = (worst_path_z <= 3.0 and sandwich_ok and bound_ok
          and mass_out_z <= 3.0 and ratio_z <= 3.0)
    _report(capsys, "exact formulas", ok,
            f"20 paths worst |z|={worst_path_z:.2f} (<=3); "
            f"20-instance sandwich={sandwich_ok}; exit bound={bound_ok}; "
            f"exit-mass |z|={mass_out_z:.2f}; "
            f"eigenfunction-ratio |z|={ratio_z:.2f} (<=3); {elapsed:.1f}s")
    assert ok


# ── 7. localization construction vs brute force ──────────────────────────

def _brute_capitals(field, search, kappa):
    out = []
    for site in search.sites():
        z = tuple(int(c) for c in site)
        xi = field.at(z)
        r = loc.capital_radius(xi, kappa, field.rho, dim=field.window.dim)
        if all(field.at(tuple(int(c) for c in y)) <= xi
               for y in box(z, r).sites()):
            out.append(z)
    return out


def _brute_islands(field, Lr, A, R_L):
    a_hat = hat_a(Lr, 1, field.rho)
    exceed = [int(s[0]) for s in box((0,), Lr).sites()
              if field.at((int(s[0]),)) > a_hat - 2 * A]
    covered = set()
    for z in exceed:
        covered.update(range(max(z - R_L, -Lr), min(z + R_L, Lr) + 1))
    comps, cur = [], []
    for y in sorted(covered):
        if cur and y != cur[-1] + 1:
            comps.append(cur)
            cur = []
        cur.append(y)
    if cur:
        comps.append(cur)
    return comps


def test_localization_brute_force(capsys):
    t0 = time.time()
    rng = np.random.default_rng(707)
    caps_ok = isl_ok = order_ok = True
    for trial in range(100):
        rad = int(rng.integers(30, 101))
        fld = sample_field(1, box((0,), rad), rho=1.0, seed=40_000 + trial)
        search = box((0,), rad - 10)
        caps = loc.find_capitals(fld, search, kappa=0.5)
        caps_ok &= [c.z for c in caps] == _brute_capitals(fld, search, 0.5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            isl = loc.islands(fld, L=rad - 10, A=1.0, beta_R=0.6,
                              kappa=0.5, chi=1.0)
        R_L = loc.island_radius(rad - 10, 0.6)
        isl_ok &= [list(i.sites[:, 0]) for i in isl] == \
            _brute_islands(fld, rad - 10, 1.0, R_L)
        t = float(rng.uniform(5.0, 60.0))
        k = min(5, len(caps))
        st = loc.order_stats(caps, t, k=k)
        brute = sorted(
            ((c.lambda_C - float(ln3_plus(abs(c.z[0]))) * abs(c.z[0]) / t,
              c.lambda_C, c.z) for c in caps), reverse=True)
        order_ok &= [e.z for e in st.entries] == [b[2] for b in brute[:k]]

    traj_ok = True
    for i in range(10):
        fld = sample_field(1, box((0,), 85), rho=1.0, seed=41_000 + i)
        traj = loc.z_trajectory(fld, np.linspace(16.0, 30.0, 8), kappa=0.5)
        zs = [abs(s.top.z[0]) for s in traj.stats]
        traj_ok &= all(a <= b for a, b in zip(zs, zs[1:]))

    cap_a = loc.Capital(z=(2,), varrho=1, xi_value=1.0, lambda_C=1.0)
    cap_b = loc.Capital(z=(30,), varrho=1, xi_value=1.6, lambda_C=1.5)
    t_star = (float(ln3_plus(30)) * 30 - float(ln3_plus(2)) * 2) \
        / (cap_b.lambda_C - cap_a.lambda_C)
    jumps = loc.z_jump_times([cap_a, cap_b], 1.0, 400.0)
    cross_ok = len(jumps) == 1 and abs(jumps[0] - t_star) <= 1e-10 * t_star

    elapsed = time.time() - t0
    ok = caps_ok and isl_ok and order_ok and traj_ok and cross_ok
    _report(capsys, "localization brute force", ok,
            f"100 windows: capitals={caps_ok}, islands={isl_ok}, "
            f"order stats={order_ok}; 10 trajectories monotone={traj_ok}; "
            f"crossing to 1e-10={cross_ok}; {elapsed:.1f}s")
    assert ok


# ── 8. mass concentration around the localization center ─────────────────

def test_mass_concentration(capsys, tmp_path):
    t0 = time.time()
    cfg = E.ExperimentConfig(experiment="mass-concentration", t_list=(50.0,),
                             replicas=100, seed=17, out_dir=str(tmp_path),
                             workers=2)
    E.run(cfg)
    with open(tmp_path / "mass_concentration.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    by = {}
    for r in rows[1:]:
        rec = dict(zip(head, r))
        by.setdefault(rec["seed"], []).append(
            (int(rec["R"]), float(rec["outside_fraction"])))
    mono_bad = 0
    below = 0
    for recs in by.values():
        recs.sort()
        fr = [f for _, f in recs]
        if any(a < b - 1e-12 for a, b in zip(fr, fr[1:])):
            mono_bad += 1
        if min(fr) < 0.5:
            below += 1
    elapsed = time.time() - t0
    ok = len(by) == 100 and mono_bad == 0 and below >= 90
    _report(capsys, "mass concentration", ok,
            f"100 replicas at t=50: monotone violations={mono_bad} (=0), "
            f"below 0.5 at some radius: {below}/100 (>=90); {elapsed:.1f}s")
    assert ok
