"""Solvers for the lattice Cauchy problem du/dt = (Delta + xi) u, u(.,0) = 1_0.

Three mutually independent routes are provided: spectral reconstruction
from Dirichlet eigenpairs, explicit Runge-Kutta integration of the linear
ODE system, and Feynman-Kac Monte Carlo over continuous-time rate-2d
random walks.  A dense matrix-exponential oracle (scaling and squaring,
small domains only) sits outside all three code paths and serves as
ground truth.  Mass-concentration functionals of the solution live here
as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.special

from ._rng import make_generator
from .errors import (
    AccuracyError,
    DegenerateInputError,
    DivergentIntegralError,
    InvalidParameterError,
    ResourceError,
    StiffnessError,
    WindowError,
)
from .potential import PotentialField, Window
from .spectral import (
    DENSE_CAP_DEFAULT,
    LatticeDomain,
    apply_hamiltonian,
    dense_matrix,
    dense_oracle,
    top_k_eigs,
)

EXPM_CAP_DEFAULT = 50
FK_BLOCK = 65_536
_CLIP_REL = 1e-14


@dataclass
class SolutionField:
    """u(x, t) on a finite domain together with provenance and error data."""

    domain: LatticeDomain
    values: np.ndarray
    t: float
    method: str
    total_mass: float
    mc_stderr: Optional[np.ndarray] = None
    mass_stderr: Optional[float] = None
    error_estimate: Optional[float] = None
    clipped_sites: int = 0
    edge_mass_fraction: Optional[float] = None
    n_paths: Optional[int] = None

    def normalized(self) -> np.ndarray:
        if self.total_mass <= 0:
            raise DegenerateInputError("solution has no mass to normalize")
        return self.values / self.total_mass


@dataclass
class StepControl:
    """Tuning knobs for the explicit ODE integrator."""

    stability_factor: float = 0.25
    rtol: float = 1e-8
    max_refinements: int = 12
    min_dt: float = 1e-13


def _origin_index(domain: LatticeDomain) -> int:
    return domain.index_of((0,) * domain.dim)


def _field_on_domain(domain: LatticeDomain, field: PotentialField) -> np.ndarray:
    return field.values_at(domain.sites)


def _edge_fraction(domain: LatticeDomain, values: np.ndarray, total: float):
    if total <= 0:
        return None
    edge = domain.exterior_degree > 0
    return float(values[edge].sum() / total)


def _initial_condition(domain: LatticeDomain, method: str) -> SolutionField:
    u = np.zeros(domain.n)
    u[_origin_index(domain)] = 1.0
    return SolutionField(domain=domain, values=u, t=0.0, method=method,
                         total_mass=1.0,
                         edge_mass_fraction=_edge_fraction(domain, u, 1.0))


# ── spectral route ───────────────────────────────────────────────────────

def solve_spectral(domain: LatticeDomain, field: PotentialField, t,
                   k=None, rtol=1e-9, dense_cap=DENSE_CAP_DEFAULT) -> SolutionField:
    """u(x,t) = sum_j e^{t lam_j} phi_j(x) phi_j(0) from Dirichlet eigenpairs.

    With k = None the full spectrum is taken from the dense solver (domain
    must fit the dense cap).  With finite k the series is truncated after
    the k leading eigenpairs and the dropped remainder is certified by
    |domain| * e^{t lam_(k+1)} (Cauchy-Schwarz over the orthonormal tail);
    an uncertifiable truncation raises an accuracy error.
    """
    t = float(t)
    if t < 0:
        raise InvalidParameterError("t must be non-negative")
    origin = _origin_index(domain)
    if t == 0.0:
        return _initial_condition(domain, "spectral")
    V = _field_on_domain(domain, field)
    remainder = 0.0
    if k is None:
        if domain.n > dense_cap:
            raise ResourceError(
                f"full-spectrum reconstruction capped at {dense_cap} sites; "
                f"pass k for a certified truncated solve ({domain.n} sites)")
        lams, vecs = dense_oracle(domain, V, cap=dense_cap)
        weights = np.exp(t * lams) * vecs[origin]
        u = vecs @ weights
        lam_top = float(lams[0])
    else:
        if k >= domain.n:
            return solve_spectral(domain, field, t, k=None, rtol=rtol,
                                  dense_cap=dense_cap)
        pairs = top_k_eigs(domain, V, k + 1)
        u = np.zeros(domain.n)
        for p in pairs[:k]:
            u += math.exp(t * p.lam) * p.phi[origin] * p.phi
        remainder = domain.n * math.exp(t * pairs[k].lam)
        lam_top = float(pairs[0].lam)
    if not np.all(np.isfinite(u)):
        raise AccuracyError("spectral reconstruction overflowed float range")
    total = float(u.sum())
    if k is not None and remainder > rtol * max(abs(total), 1e-300):
        raise AccuracyError(
            f"truncation remainder bound {remainder:.3e} exceeds "
            f"rtol * U = {rtol * abs(total):.3e}; increase k")
    # negative round-off dust is clipped; anything larger is a real error.
    # Entries of the propagator carry absolute round-off on the scale of
    # its operator norm e^{t lam_1}, which can dwarf u(x) itself when the
    # origin sits deep in an eigenfunction tail.
    eps_scale = domain.n * np.finfo(float).eps \
        * math.exp(min(t * lam_top, 700.0))
    clip_floor = -max(_CLIP_REL * abs(total), eps_scale, 1e-300) - remainder
    bad = u < clip_floor
    if np.any(bad):
        raise AccuracyError(
            f"negative values below the round-off clip threshold at "
            f"{int(bad.sum())} sites (min {u.min():.3e})")
    clipped = int(np.count_nonzero(u < 0))
    u = np.clip(u, 0.0, None)
    total = float(u.sum())
    return SolutionField(domain=domain, values=u, t=t, method="spectral",
                         total_mass=total, clipped_sites=clipped,
                         error_estimate=remainder if k is not None else None,
                         edge_mass_fraction=_edge_fraction(domain, u, total))


# ── ODE route ────────────────────────────────────────────────────────────

def _rk4_run(domain, V, t, n_steps):
    u = np.zeros(domain.n)
    u[_origin_index(domain)] = 1.0
    dt = t / n_steps
    for _ in range(n_steps):
        k1 = apply_hamiltonian(domain, V, u)
        k2 = apply_hamiltonian(domain, V, u + 0.5 * dt * k1)
        k3 = apply_hamiltonian(domain, V, u + 0.5 * dt * k2)
        k4 = apply_hamiltonian(domain, V, u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise StiffnessError("ODE state overflowed; system too stiff "
                                 "for the explicit integrator at this t")
    return u


def solve_ode(domain: LatticeDomain, field: PotentialField, t,
              dt_ctrl: Optional[StepControl] = None) -> SolutionField:
    """Explicit 4th-order integration of the linear system u' = (Delta+V)u.

    The step starts at the stability limit c/(4d + max|V|) and is halved
    until the step-doubling Richardson estimate meets rtol; the final
    estimate is reported on the returned solution.
    """
    ctrl = dt_ctrl or StepControl()
    t = float(t)
    if t < 0:
        raise InvalidParameterError("t must be non-negative")
    if t == 0.0:
        return _initial_condition(domain, "ode")
    V = _field_on_domain(domain, field)
    rate = 4.0 * domain.dim + float(np.abs(V).max())
    dt0 = ctrl.stability_factor / rate
    n = max(1, int(math.ceil(t / dt0)))
    coarse = _rk4_run(domain, V, t, n)
    est = math.inf
    fine = coarse
    for _ in range(ctrl.max_refinements):
        if t / (2 * n) < ctrl.min_dt:
            raise StiffnessError(
                f"step fell below {ctrl.min_dt} before meeting rtol "
                f"{ctrl.rtol} (best estimate {est:.3e})")
        n *= 2
        fine = _rk4_run(domain, V, t, n)
        scale = max(float(np.abs(fine).max()), 1e-300)
        est = float(np.abs(fine - coarse).max()) / 15.0 / scale
        if est <= ctrl.rtol:
            break
        coarse = fine
    else:
        raise StiffnessError(
            f"Richardson estimate {est:.3e} still above rtol {ctrl.rtol} "
            f"after {ctrl.max_refinements} refinements")
    u = np.clip(fine, 0.0, None)
    total = float(u.sum())
    return SolutionField(domain=domain, values=u, t=t, method="ode",
                         total_mass=total, error_estimate=est,
                         clipped_sites=int(np.count_nonzero(fine < 0)),
                         edge_mass_fraction=_edge_fraction(domain, u, total))


# ── Feynman-Kac route ────────────────────────────────────────────────────

def _window_flat(window: Window, pos: np.ndarray) -> np.ndarray:
    offs = pos - np.asarray(window.lower, dtype=np.int64)
    side = window.side
    flat = np.zeros(pos.shape[0], dtype=np.int64)
    for k in range(window.dim):
        flat = flat * side + offs[:, k]
    return flat


def _inside(window: Window, pos: np.ndarray) -> np.ndarray:
    center = np.asarray(window.center, dtype=np.int64)
    return np.all(np.abs(pos - center) <= window.radius, axis=1)


def fk_estimate(field: PotentialField, t, n_paths, seed, window: Window,
                mode="killed") -> SolutionField:
    """Monte Carlo estimate of u(x,t) from rate-2d continuous-time walks.

    The potential integral along each path is accumulated exactly between
    jumps (piecewise-constant integrand), so the only error is statistical
    and it is reported per site.  mode="killed" zeroes paths that leave
    the window (Dirichlet); mode="free" lets them run and books their
    weight into the total mass only.  Paths are processed in fixed-size
    blocks with per-block derived RNG streams and summed in block order,
    so results are reproducible and independent of any worker count.
    """
    if mode not in ("killed", "free"):
        raise InvalidParameterError(f"unknown Feynman-Kac mode {mode!r}")
    if n_paths < 1:
        raise InvalidParameterError("n_paths must be >= 1")
    t = float(t)
    if t < 0:
        raise InvalidParameterError("t must be non-negative")
    if not field.window.contains_window(window):
        raise WindowError("solve window must lie inside the field window")
    dim = field.window.dim
    domain = LatticeDomain.from_box(window)
    if t == 0.0:
        sol = _initial_condition(domain, "feynman-kac")
        sol.mc_stderr = np.zeros(domain.n)
        sol.mass_stderr = 0.0
        sol.n_paths = int(n_paths)
        return sol

    n_flat = window.n_sites
    sums = np.zeros(n_flat)
    sumsq = np.zeros(n_flat)
    mass_sum = 0.0
    mass_sumsq = 0.0
    two_d = 2 * dim

    n_blocks = (int(n_paths) + FK_BLOCK - 1) // FK_BLOCK
    for blk in range(n_blocks):
        b = min(FK_BLOCK, int(n_paths) - blk * FK_BLOCK)
        rng = make_generator(seed, blk)
        pos = np.zeros((b, dim), dtype=np.int64)
        acc = np.zeros(b)
        t_rem = np.full(b, t)
        alive = np.ones(b, dtype=bool)
        xi_cur = np.full(b, field.at((0,) * dim))
        while True:
            active = alive & (t_rem > 0.0)
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            tau = rng.exponential(scale=1.0 / two_d, size=idx.size)
            dt_eff = np.minimum(tau, t_rem[idx])
            acc[idx] += xi_cur[idx] * dt_eff
            jumped = tau < t_rem[idx]
            t_rem[idx] -= tau
            move = idx[jumped]
            if move.size:
                dirs = rng.integers(0, two_d, size=move.size)
                axis = (dirs >> 1).astype(np.int64)
                sign = (2 * (dirs & 1) - 1).astype(np.int64)
                pos[move, axis] += sign
                if mode == "killed":
                    ok = _inside(window, pos[move])
                    alive[move[~ok]] = False
                    kept = move[ok]
                else:
                    if not np.all(_inside(field.window, pos[move])):
                        raise WindowError(
                            "free-mode path left the field window; enlarge "
                            "the field or use killed mode")
                    kept = move
                if kept.size:
                    xi_cur[kept] = field.values_at(pos[kept])
        w = np.exp(acc)
        if mode == "killed":
            w[~alive] = 0.0
            ended = alive
        else:
            ended = _inside(window, pos)
        fi = _window_flat(window, pos[ended])
        np.add.at(sums, fi, w[ended])
        np.add.at(sumsq, fi, w[ended] ** 2)
        mass_sum += float(w.sum())
        mass_sumsq += float((w ** 2).sum())

    n = float(n_paths)
    mean = sums / n
    var = np.maximum(sumsq / n - mean ** 2, 0.0)
    stderr = np.sqrt(var / n)
    mass_mean = mass_sum / n
    mass_var = max(mass_sumsq / n - mass_mean ** 2, 0.0)

    # reorder the row-major window flat layout onto the (sorted) domain
    perm = _window_flat(window, domain.sites)
    values = mean[perm]
    return SolutionField(domain=domain, values=values, t=t,
                         method="feynman-kac", total_mass=float(mass_mean),
                         mc_stderr=stderr[perm],
                         mass_stderr=float(math.sqrt(mass_var / n)),
                         n_paths=int(n_paths),
                         edge_mass_fraction=_edge_fraction(domain, values,
                                                           float(mass_mean)))


# ── exact path evaluation ────────────────────────────────────────────────

def path_weight(path_sites, gamma, field: PotentialField) -> float:
    """prod_i 2d/(2d + gamma - xi(pi_i)) over the non-terminal path sites.

    This is the exact expectation of exp of the integral of (xi - gamma)
    up to the path's last jump time, conditional on the jump chain.
    """
    sites = np.asarray(list(path_sites), dtype=np.int64)
    if sites.ndim == 1 and sites.size > 0:
        sites = sites[:, None]
    if sites.shape[0] <= 1:
        return 1.0
    dim = sites.shape[1]
    steps = np.abs(np.diff(sites, axis=0)).sum(axis=1)
    if np.any(steps != 1):
        raise InvalidParameterError("path sites must be nearest neighbors")
    xi = field.values_at(sites[:-1])
    two_d = 2.0 * dim
    denom = two_d + float(gamma) - xi
    if np.any(denom <= 0):
        raise DivergentIntegralError(
            "gamma must exceed max xi - 2d along the path; the exponential "
            "moment diverges otherwise")
    return float(np.prod(two_d / denom))


# ── dense matrix-exponential oracle ──────────────────────────────────────

def expm_propagator(domain: LatticeDomain, V, t, cap=EXPM_CAP_DEFAULT) -> np.ndarray:
    """Full propagator e^{tH} by scaling-and-squaring on the dense matrix.

    Independent of the eigensolver and the ODE integrator; entry (z, x) is
    the Feynman-Kac expectation from z with endpoint pinned at x and the
    walk killed outside the domain.
    """
    if domain.n > cap:
        raise ResourceError(f"matrix-exponential oracle cap {cap} exceeded")
    H = dense_matrix(domain, np.asarray(V, dtype=float))
    return scipy.linalg.expm(float(t) * H)


def expm_oracle(domain: LatticeDomain, field: PotentialField, t,
                cap=EXPM_CAP_DEFAULT) -> SolutionField:
    """u(.,t) as the origin row of the dense propagator."""
    V = _field_on_domain(domain, field)
    P = expm_propagator(domain, V, t, cap=cap)
    u = P[_origin_index(domain)].copy()
    u = np.clip(u, 0.0, None)
    total = float(u.sum())
    return SolutionField(domain=domain, values=u, t=float(t), method="expm",
                         total_mass=total,
                         edge_mass_fraction=_edge_fraction(domain, u, total))


def mass_out_exact(domain: LatticeDomain, V, gamma) -> np.ndarray:
    """E_z[exp of the integral of (xi - gamma) up to the exit time], per z.

    Solves (gamma I - H) w = exterior-neighbor count, the linear system
    the exit functional satisfies; finite for gamma above the principal
    eigenvalue.
    """
    V = np.asarray(V, dtype=float)
    A = float(gamma) * np.eye(domain.n) - dense_matrix(domain, V)
    b = domain.exterior_degree.astype(float)
    lams = np.linalg.eigvalsh(A)
    if lams.min() <= 0:
        raise DivergentIntegralError(
            "gamma must exceed the principal eigenvalue for the exit "
            "functional to be finite")
    return np.linalg.solve(A, b)


def heat_kernel_1d(x, t) -> float:
    """P(X_t = x) for the rate-2 simple walk on Z (d=1, xi = 0 reference)."""
    return float(math.exp(-2.0 * t) * scipy.special.iv(abs(int(x)), 2.0 * t))


# ── concentration functionals ────────────────────────────────────────────

def concentration_profile(solution: SolutionField, center, radii) -> np.ndarray:
    """Fraction of total mass strictly outside the l1 ball of each radius."""
    if solution.total_mass <= 0:
        raise DegenerateInputError("solution has no mass")
    center = np.asarray(center, dtype=np.int64)
    if center.shape != (solution.domain.dim,):
        raise InvalidParameterError("center dimension mismatch")
    dist = np.abs(solution.domain.sites - center).sum(axis=1)
    out = []
    for R in np.atleast_1d(radii):
        out.append(float(solution.values[dist > R].sum() / solution.total_mass))
    return np.array(out)


def tv_profile_distance(sol_a: SolutionField, sol_b: SolutionField) -> float:
    """l1 distance between the mass-normalized profiles of two solutions."""
    if not np.array_equal(sol_a.domain.sites, sol_b.domain.sites):
        raise InvalidParameterError("solutions must share one window")
    return float(np.abs(sol_a.normalized() - sol_b.normalized()).sum())
