"""Capitals, islands, the distance-penalized cost functional, and the
localization process built from its order statistics.

A capital is a site whose potential dominates the box of radius
floor(exp(kappa xi(z)/rho)) around it; it carries the local principal
Dirichlet eigenvalue of that box.  The cost functional

    Psi_{t,c}(z) = lambda_C(z) - (ln3+|z| - c)^+ |z| / t

ranks capitals by eigenvalue against a distance penalty; its running
argmax in t is the localization center Z_t.  Because Psi is affine in
1/t, the trajectory of Z_t has exactly computable jump times.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _crossings
from .errors import (
    DegenerateInputError,
    InsufficientDataError,
    InvalidParameterError,
    WindowError,
)
from .potential import PotentialField, Window, box, hat_a, ln2_plus, ln3_plus
from .spectral import EigenPair, LatticeDomain, principal_eig

_RADIUS_CAP = 1_000_000_000


def default_kappa(dim: int) -> float:
    return 0.5 / dim


@dataclass
class Capital:
    """A locally dominant site with its ball radius and local eigenvalue."""

    z: tuple
    varrho: int
    xi_value: float
    lambda_C: float
    eigpair: Optional[EigenPair] = None

    @property
    def abs_z(self) -> int:
        return int(np.abs(np.asarray(self.z)).sum())


class CapitalList(list):
    """List of capitals; carries the sites excluded by the margin policy."""

    def __init__(self, items=(), excluded_sites=()):
        super().__init__(items)
        self.excluded_sites = list(excluded_sites)


@dataclass
class Island:
    """A connected component of the thickened high-exceedance set."""

    sites: np.ndarray
    z_C: tuple
    lambda1: float
    eigpair: EigenPair
    relevant: bool
    threshold: float


@dataclass
class OrderEntry:
    rank: int
    psi: float
    z: tuple
    lambda_C: float


@dataclass
class OrderStats:
    t: float
    c: float
    entries: list
    search_window: Optional[Window] = None

    @property
    def top(self) -> OrderEntry:
        return self.entries[0]


@dataclass
class ZTrajectory:
    t_grid: np.ndarray
    stats: list
    jump_times: np.ndarray
    capitals: CapitalList


# ── capitals ─────────────────────────────────────────────────────────────

def capital_radius(xi_value, kappa, rho, dim=1) -> int:
    """floor(exp(kappa xi / rho)); zero for negative potential values."""
    if not (0.0 < kappa < 1.0 / dim):
        raise InvalidParameterError(
            f"kappa must lie in (0, 1/d) = (0, {1.0 / dim}), got {kappa}")
    if rho <= 0:
        raise InvalidParameterError("rho must be positive")
    val = float(kappa) * float(xi_value) / float(rho)
    if val > 25 * np.log(10.0):
        return _RADIUS_CAP
    return int(np.floor(np.exp(val)))


def find_capitals(field: PotentialField, search_window: Window,
                  kappa=None, margin_policy="error") -> CapitalList:
    """All sites of search_window dominating their kappa-dependent box.

    Every comparison box must fit inside the field window; a site whose
    box does not fit triggers a window error (margin_policy="error") or is
    excluded and reported on the result (margin_policy="exclude").  Sites
    with negative potential have radius 0 and qualify trivially with
    lambda_C = xi(z) - 2d.
    """
    if margin_policy not in ("error", "exclude"):
        raise InvalidParameterError(f"unknown margin policy {margin_policy!r}")
    dim = field.window.dim
    if kappa is None:
        kappa = default_kappa(dim)
    if not field.window.contains_window(search_window):
        raise WindowError("search window must lie inside the field window")
    grid = field.values.reshape((field.window.side,) * dim)
    lower = np.asarray(field.window.lower, dtype=np.int64)

    capitals = []
    excluded = []
    for site in search_window.sites():
        z = tuple(int(c) for c in site)
        xi_z = field.at(z)
        rho_z = capital_radius(xi_z, kappa, field.rho, dim=dim)
        ball = box(z, rho_z) if rho_z < _RADIUS_CAP else None
        if ball is None or not field.window.contains_window(ball):
            if margin_policy == "error":
                raise WindowError(
                    f"comparison box of radius {rho_z} around {z} leaves "
                    f"the field window; enlarge the field margin")
            excluded.append(z)
            continue
        if rho_z == 0:
            capitals.append(Capital(z=z, varrho=0, xi_value=xi_z,
                                    lambda_C=xi_z - 2.0 * dim))
            continue
        off = np.asarray(z, dtype=np.int64) - lower
        sl = tuple(slice(int(o - rho_z), int(o + rho_z + 1)) for o in off)
        if float(grid[sl].max()) > xi_z:
            continue
        dom = LatticeDomain.from_box(ball)
        pair = principal_eig(dom, field.values_at(dom.sites))
        capitals.append(Capital(z=z, varrho=rho_z, xi_value=xi_z,
                                lambda_C=pair.lam, eigpair=pair))
    return CapitalList(capitals, excluded)


# ── cost functional and order statistics ─────────────────────────────────

def _penalty(abs_z: float, c: float) -> float:
    return max(ln3_plus(abs_z) - c, 0.0) * abs_z


def psi(capital: Capital, t, c=0.0) -> float:
    """lambda_C(z) minus the clipped distance penalty at time t."""
    if t <= 0:
        raise InvalidParameterError("t must be positive")
    return capital.lambda_C - _penalty(capital.abs_z, c) / float(t)


def _tie_keys(capitals) -> list:
    return [(cap.lambda_C,) + tuple(cap.z) for cap in capitals]


def order_stats(capitals, t, k, c=0.0,
                search_window: Optional[Window] = None) -> OrderStats:
    """Top-k capitals by the cost functional at time t.

    Exact ties in Psi are resolved by the maximal (lambda_C, z) in
    lexicographic order, which makes every rank unique.
    """
    if len(capitals) == 0:
        raise DegenerateInputError("no capitals to rank")
    if not (1 <= k <= len(capitals)):
        raise InvalidParameterError(f"k must be in [1, {len(capitals)}]")
    if t <= 0:
        raise InvalidParameterError("t must be positive")
    vals = [psi(cap, t, c) for cap in capitals]
    keys = _tie_keys(capitals)
    order = sorted(range(len(capitals)),
                   key=lambda i: (vals[i],) + keys[i], reverse=True)
    entries = [OrderEntry(rank=r + 1, psi=vals[i], z=capitals[i].z,
                          lambda_C=capitals[i].lambda_C)
               for r, i in enumerate(order[:k])]
    return OrderStats(t=float(t), c=float(c), entries=entries,
                      search_window=search_window)


def z_jump_times(capitals, t_lo, t_hi, c=0.0) -> np.ndarray:
    """Exact times in [t_lo, t_hi] at which the rank-1 maximizer changes.

    Psi is affine in s = 1/t, so each change is a pairwise line crossing;
    no grid is involved.
    """
    if len(capitals) == 0:
        raise DegenerateInputError("no capitals to rank")
    if not (0 < t_lo <= t_hi):
        raise InvalidParameterError("need 0 < t_lo <= t_hi")
    lams = np.array([cap.lambda_C for cap in capitals])
    pens = np.array([_penalty(cap.abs_z, c) for cap in capitals])
    _, crossings = _crossings.leader_segments(
        lams, pens, 1.0 / t_lo, 1.0 / t_hi, _tie_keys(capitals))
    return np.array([1.0 / s for s in crossings])


def z_trajectory(field: PotentialField, t_grid, kappa=None, k=1,
                 c=0.0, search_window: Optional[Window] = None) -> ZTrajectory:
    """Order statistics along a time grid from one fixed capital set.

    The capital search covers the box of radius L_{t_max} around the
    origin (the solve window scale for the largest requested time) unless
    an explicit search window is given; rank-1 jump times inside the grid
    span are computed exactly from line crossings.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0):
        raise InvalidParameterError("t_grid must be strictly increasing")
    if t_grid[0] <= 0:
        raise InvalidParameterError("times must be positive")
    dim = field.window.dim
    t_max = float(t_grid[-1])
    required = box((0,) * dim, max(1, int(np.floor(t_max * ln2_plus(t_max)))))
    if search_window is None:
        search_window = required
    elif not search_window.contains_window(required):
        raise WindowError(
            f"search window must cover the box of radius {required.radius} "
            f"needed for t = {t_max}")
    caps = find_capitals(field, search_window, kappa=kappa)
    stats = [order_stats(caps, t, min(k, len(caps)), c=c,
                         search_window=search_window) for t in t_grid]
    jumps = z_jump_times(caps, float(t_grid[0]), t_max, c=c)
    return ZTrajectory(t_grid=t_grid, stats=stats, jump_times=jumps,
                       capitals=caps)


# ── islands ──────────────────────────────────────────────────────────────

def island_radius(L, beta_R) -> int:
    """ceil((ln L)^beta_R), clipped into [1, (ln L) or 1]."""
    lnL = float(np.log(L))
    r = int(np.ceil(lnL ** beta_R)) if lnL > 0 else 1
    return max(1, min(r, max(int(lnL), 1)))


def islands(field: PotentialField, L, A, beta_R, kappa=None,
            chi=None, delta=0.5) -> list:
    """Connected components of the thickened high-exceedance set in B_L.

    Exceedances are sites of B_L with xi above hat_a(L) - 2A; each is
    thickened by the box of radius island_radius(L, beta_R) and the union
    is split into lattice-connected components.  Every island carries its
    top-potential site z_C, its principal eigenvalue, and a relevance flag
    lambda1 > hat_a(L) - chi - delta.
    """
    dim = field.window.dim
    if kappa is None:
        kappa = default_kappa(dim)
    if A <= 0:
        raise InvalidParameterError("A must be positive")
    if A < 4 * dim:
        warnings.warn(
            f"A = {A} is below 4d = {4 * dim}; island structure may be "
            f"unstable at this threshold", stacklevel=2)
    if not (kappa < beta_R < 1.0 / dim):
        raise InvalidParameterError(
            f"beta_R must lie in (kappa, 1/d) = ({kappa}, {1.0 / dim})")
    big_box = box((0,) * dim, int(L))
    if not field.window.contains_window(big_box):
        raise WindowError("field window does not cover the box of radius L")
    if chi is None:
        from .variational import solve_chi
        chi = solve_chi(field.rho, R=4 if dim == 1 else 2).chi_R

    a_hat = hat_a(int(L), dim, field.rho)
    threshold = a_hat - chi - delta
    R_L = island_radius(int(L), beta_R)

    sites = big_box.sites()
    vals = field.values_at(sites)
    exceed = sites[vals > a_hat - 2.0 * A]
    if exceed.shape[0] == 0:
        return []
    covered = set()
    for z in exceed:
        lo = np.maximum(z - R_L, np.asarray(big_box.lower))
        hi = np.minimum(z + R_L, np.asarray(big_box.upper))
        ranges = [np.arange(lo[i], hi[i] + 1) for i in range(dim)]
        mesh = np.meshgrid(*ranges, indexing="ij")
        block = np.stack([m.ravel() for m in mesh], axis=1)
        covered.update(map(tuple, block.tolist()))
    dom = LatticeDomain.from_sites(sorted(covered))
    out = []
    for comp in dom.components:
        comp_sites = dom.sites[comp]
        comp_vals = field.values_at(comp_sites)
        top = int(np.argmax(comp_vals))
        sub = LatticeDomain(comp_sites)
        pair = principal_eig(sub, field.values_at(sub.sites))
        out.append(Island(
            sites=comp_sites,
            z_C=tuple(int(c_) for c_ in comp_sites[top]),
            lambda1=pair.lam,
            eigpair=pair,
            relevant=bool(pair.lam > threshold),
            threshold=float(threshold),
        ))
    return out


# ── auxiliary functionals ────────────────────────────────────────────────

def curly_L(V_shifted, domain=None, rho=1.0) -> float:
    """Sum of exp(V/rho); -inf entries contribute zero."""
    if rho <= 0:
        raise InvalidParameterError("rho must be positive")
    V = np.asarray(V_shifted, dtype=float)
    if domain is not None and V.shape != (domain.n,):
        raise InvalidParameterError("V must be a per-site vector on domain")
    with np.errstate(over="raise"):
        return float(np.exp(V / float(rho)).sum())


def eigfun_decay_fit(eigpair: EigenPair, center) -> tuple:
    """Least-squares slope of ln phi against l1 distance from center.

    Returns (rate, r_squared).  Sites with phi below 1e-14 are dropped;
    fewer than 3 usable sites (or zero distance spread) is an error.
    """
    center = np.asarray(center, dtype=np.int64)
    phi = eigpair.phi
    usable = phi > 1e-14
    if int(usable.sum()) < 3:
        raise InsufficientDataError(
            "need at least 3 sites with non-negligible eigenfunction mass")
    x = np.abs(eigpair.domain.sites[usable] - center).sum(axis=1).astype(float)
    y = np.log(phi[usable])
    if np.ptp(x) == 0:
        raise InsufficientDataError("all usable sites are equidistant from center")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float((resid ** 2).sum())
    r_squared = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return float(slope), float(r_squared)
