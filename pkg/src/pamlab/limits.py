"""Limiting point-process laws for the localization analysis.

Samples the Poisson point process with intensity e^{-lam} dlam x dz,
tracks penalized-maximizer trajectories theta -> argmax(lam - |z|/theta)
with exact crossing breakpoints, draws the aging variable
Theta = inf{theta > 0 : leader at 1 + theta differs from leader at 1},
and provides closed-form and quadrature oracles for the limit laws
(Gumbel maxima, Laplace positions, aging tail).
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate, special

from .errors import (
    AccuracyError,
    DegenerateInputError,
    InsufficientTruncationError,
    InternalConsistencyError,
    InvalidParameterError,
    ResourceError,
    StatisticalPowerError,
    TruncationCapError,
)
from ._rng import make_generator
from .potential import hat_a, ln2, ln3, ln2_plus, ln3_plus, scales, EE

__all__ = [
    "PointSample",
    "MaximizerTrajectory",
    "TruncationControl",
    "ThetaSamples",
    "LimitMaxima",
    "RescaledPoints",
    "QuadControl",
    "QuantileControl",
    "sample_ppp",
    "psi_theta",
    "argmax_order",
    "trajectory",
    "count_jump_candidates",
    "theta_sampler",
    "sample_limit_maxima",
    "mu_jump_region",
    "aging_tail_oracle",
    "aging_tail_exact_1d",
    "theta_tail_asymptote",
    "limit_cdf_gumbel",
    "limit_cdf_laplace",
    "quantile_level",
    "matching_box_radius",
    "rescale_capitals",
]

# cap on the expected number of points drawn for any truncated sample batch
_MAX_EXPECTED_POINTS = 20_000_000

_PATH_PPP = 11
_PATH_THETA = 13
_PATH_MAXIMA = 17
_PATH_QUANTILE = 19


def _l1(z):
    """Elementwise l1 norm along the last axis of a coordinate array."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        return float(abs(z))
    return np.abs(z).sum(axis=-1)


# ---------------------------------------------------------------------------
# point samples on a rectangular truncation window


@dataclass
class PointSample:
    """Poisson sample of (lam, z) points on a rectangular truncation window.

    The window is {lam > lambda_min} x [-z_max, z_max]^dim; the intensity
    e^{-lam} dlam x dz makes the expected count e^{-lambda_min} (2 z_max)^dim.
    """

    lams: np.ndarray
    zs: np.ndarray
    dim: int
    lambda_min: float
    z_max: float
    seed: int

    def __post_init__(self):
        self.lams = np.asarray(self.lams, dtype=float)
        self.zs = np.asarray(self.zs, dtype=float).reshape(len(self.lams), self.dim)
        if len(self.lams) and self.lams.min() < self.lambda_min - 1e-12:
            raise InvalidParameterError("point below the lambda floor")
        if len(self.lams) and np.abs(self.zs).max() > self.z_max + 1e-12:
            raise InvalidParameterError("point outside the spatial window")

    @property
    def n_points(self) -> int:
        return len(self.lams)

    @property
    def z_norms(self) -> np.ndarray:
        return _l1(self.zs)

    @property
    def points(self):
        return [(float(l), tuple(z)) for l, z in zip(self.lams, self.zs)]


def sample_ppp(dim, lambda_min, z_max, seed) -> PointSample:
    """Draw one truncated sample of the limiting Poisson point process.

    Count ~ Poisson(e^{-lambda_min} (2 z_max)^dim); each point has
    lam = lambda_min + Exp(1) and z uniform on the box [-z_max, z_max]^dim.
    """
    if dim < 1 or int(dim) != dim:
        raise InvalidParameterError("dim must be a positive integer")
    if z_max <= 0:
        raise InvalidParameterError("z_max must be positive")
    mean = math.exp(-lambda_min) * (2.0 * z_max) ** dim
    if mean > _MAX_EXPECTED_POINTS:
        raise ResourceError(
            f"expected point count {mean:.3e} exceeds the sampling cap; "
            "raise lambda_min or shrink z_max")
    rng = make_generator(seed, _PATH_PPP)
    n = int(rng.poisson(mean))
    lams = lambda_min + rng.exponential(size=n)
    zs = rng.uniform(-z_max, z_max, size=(n, dim))
    return PointSample(lams=lams, zs=zs, dim=int(dim),
                       lambda_min=float(lambda_min), z_max=float(z_max),
                       seed=int(seed))


def psi_theta(lam, z, theta):
    """Penalized value lam - |z|/theta with the l1 norm of z."""
    if np.any(np.asarray(theta) <= 0):
        raise InvalidParameterError("theta must be positive")
    return np.asarray(lam, dtype=float) - _l1(z) / np.asarray(theta, dtype=float)


def _ordered_indices(psis, lams, zs):
    """Indices sorted descending by (psi, lam, z1, ..., zd)."""
    psis = np.asarray(psis, dtype=float)
    lams = np.asarray(lams, dtype=float)
    zs = np.asarray(zs, dtype=float)
    keys = [zs[:, j] for j in range(zs.shape[1] - 1, -1, -1)]
    keys += [lams, psis]
    return np.lexsort(tuple(keys))[::-1]


def argmax_order(sample: PointSample, theta, k):
    """Top-k points by psi_theta, ties broken by largest (lam, z).

    Returns a list of (psi, lam, z) triples in decreasing rank order.
    """
    if sample.n_points == 0:
        raise DegenerateInputError("cannot rank an empty point sample")
    if k < 1 or k > sample.n_points:
        raise InvalidParameterError("k must lie in [1, point count]")
    psis = psi_theta(sample.lams, sample.zs, theta)
    order = _ordered_indices(psis, sample.lams, sample.zs)[:k]
    return [(float(psis[i]), float(sample.lams[i]), tuple(sample.zs[i]))
            for i in order]


def count_jump_candidates(sample: PointSample, lam, z, theta) -> int:
    """Number of points strictly dominating (lam, z) at a given theta.

    A point dominates when its penalized value is larger, or equal with a
    strictly larger lam.  A zero count at theta = b, evaluated at the
    leader taken at theta = a < b, is equivalent to the leader being
    constant on [a, b].
    """
    psis = psi_theta(sample.lams, sample.zs, theta)
    ref = float(psi_theta(lam, z, theta))
    above = psis > ref
    tied = (psis == ref) & (sample.lams > float(lam))
    return int(np.count_nonzero(above | tied))


# ---------------------------------------------------------------------------
# exact maximizer trajectories


@dataclass
class TruncationCertificate:
    """Evidence that the truncation window was adequate for a trajectory."""

    void_mass: float
    lambda_clearance: float
    z_clearance: float
    passed: bool


@dataclass
class MaximizerTrajectory:
    """Top-k maximizer process over a theta interval with exact breakpoints.

    segments[i] = (theta_start, theta_end, indices) where indices give the
    ranked top-k points of the sample on that interval; consecutive
    segments differ by one transposition.  jump_times lists the theta
    values where rank 1 changes.
    """

    sample: PointSample
    theta_lo: float
    theta_hi: float
    k: int
    segments: list
    breakpoints: np.ndarray
    jump_times: np.ndarray
    certificate: TruncationCertificate

    def rank_values(self, theta):
        """(psis, lams, zs) of the ranked top-k at theta, right-continuous."""
        if not (self.theta_lo <= theta <= self.theta_hi):
            raise InvalidParameterError("theta outside the trajectory range")
        idx = self.segments[-1][2]
        for t0, t1, ids in self.segments:
            if t0 <= theta < t1:
                idx = ids
                break
        idx = np.asarray(idx)
        psis = psi_theta(self.sample.lams[idx], self.sample.zs[idx], theta)
        return psis, self.sample.lams[idx], self.sample.zs[idx]

    def first_jump_after(self, anchor):
        """Smallest rank-1 jump time strictly greater than anchor, or None."""
        later = self.jump_times[self.jump_times > anchor]
        return float(later[0]) if len(later) else None


def _crossing_s(lam_hi, p_hi, lam_lo, p_lo):
    """Crossing of two ranked lines in s = 1/theta, or None.

    The line ranked lower can only overtake (as s decreases) when it has
    strictly larger lam and strictly larger l1 position norm.
    """
    if lam_lo > lam_hi and p_lo > p_hi:
        return (lam_lo - lam_hi) / (p_lo - p_hi)
    return None


def trajectory(sample: PointSample, theta_lo, theta_hi, k=1,
               boundary_margin=1.0) -> MaximizerTrajectory:
    """Exact top-k maximizer trajectory on [theta_lo, theta_hi].

    Sweeps s = 1/theta downward through every order-changing crossing
    among the ranked lines lam - s |z|; no theta grid is involved.
    Raises an insufficient-truncation error when an achieved maximizer
    sits within boundary_margin of the spatial window boundary or the
    achieved rank-k value comes within boundary_margin of the lambda
    floor (an unsampled point could then alter the ranking).
    """
    if not (0 < theta_lo < theta_hi):
        raise InvalidParameterError("need 0 < theta_lo < theta_hi")
    n = sample.n_points
    if n == 0:
        raise DegenerateInputError("cannot track an empty point sample")
    if k < 1 or k > n:
        raise InvalidParameterError("k must lie in [1, point count]")
    if boundary_margin < 0:
        raise InvalidParameterError("boundary_margin must be non-negative")

    lams = sample.lams
    ps = sample.z_norms
    s_hi = 1.0 / theta_lo
    s_lo = 1.0 / theta_hi

    psis = lams - s_hi * ps
    order = list(_ordered_indices(psis, lams, sample.zs))
    top = order[:k]
    rest = sorted(order[k:])

    segments = []
    breakpoints = []
    jump_times = []
    s_cur = s_hi
    seg_start_theta = theta_lo
    guard = 0
    max_events = 4 * n * (k + 2) + 64
    while True:
        guard += 1
        if guard > max_events:
            raise InternalConsistencyError(
                "crossing sweep exceeded the combinatorial event bound")
        best_key = None
        best_s = None
        best_event = None
        for i in range(len(top) - 1):
            a, b = top[i], top[i + 1]
            s = _crossing_s(lams[a], ps[a], lams[b], ps[b])
            if s is not None and s_lo <= s <= s_cur:
                key = (s, lams[b], tuple(sample.zs[b]))
                if best_key is None or key > best_key:
                    best_key, best_s, best_event = key, s, ("swap", i)
        kk = top[-1]
        for j in rest:
            s = _crossing_s(lams[kk], ps[kk], lams[j], ps[j])
            if s is not None and s_lo <= s <= s_cur:
                key = (s, lams[j], tuple(sample.zs[j]))
                if best_key is None or key > best_key:
                    best_key, best_s, best_event = key, s, ("enter", j)
        if best_event is None:
            break
        theta_star = 1.0 / best_s
        segments.append((seg_start_theta, theta_star, tuple(top)))
        breakpoints.append(theta_star)
        if best_event[0] == "swap":
            i = best_event[1]
            if i == 0:
                jump_times.append(theta_star)
            top[i], top[i + 1] = top[i + 1], top[i]
        else:
            j = best_event[1]
            rest.remove(j)
            rest.append(top[-1])
            rest.sort()
            top[-1] = j
            if k == 1:
                jump_times.append(theta_star)
        seg_start_theta = theta_star
        s_cur = best_s
    segments.append((seg_start_theta, theta_hi, tuple(top)))

    cert = _trajectory_certificate(sample, segments, theta_hi, boundary_margin)
    traj = MaximizerTrajectory(
        sample=sample, theta_lo=float(theta_lo), theta_hi=float(theta_hi),
        k=int(k), segments=segments,
        breakpoints=np.asarray(breakpoints, dtype=float),
        jump_times=np.asarray(sorted(set(jump_times)), dtype=float),
        certificate=cert)
    if not cert.passed:
        raise InsufficientTruncationError(
            "an achieved maximizer sits too close to the truncation "
            "boundary; enlarge the sample window",
            void_mass=cert.void_mass, boundary_margin=boundary_margin)
    _validate_trajectory(traj)
    return traj


def _trajectory_certificate(sample, segments, theta_hi, margin):
    """Boundary clearances and unsampled-preemptor mass for a trajectory."""
    achieved = sorted({i for _, _, ids in segments for i in ids})
    idx = np.asarray(achieved)
    z_clear = float(sample.z_max - np.abs(sample.zs[idx]).max())
    env_lo = np.inf
    for t0, t1, ids in segments:
        ids = np.asarray(ids)
        for th in (t0, min(t1, theta_hi)):
            vals = psi_theta(sample.lams[ids], sample.zs[ids], th)
            env_lo = min(env_lo, float(vals.min()))
    lam_clear = env_lo - sample.lambda_min
    void = _box_void_mass(env_lo, theta_hi, sample.z_max, sample.dim)
    passed = (z_clear > margin) and (lam_clear > margin)
    return TruncationCertificate(void_mass=float(void),
                                 lambda_clearance=float(lam_clear),
                                 z_clearance=float(z_clear),
                                 passed=bool(passed))


def _box_void_mass(b, theta, z_max, dim):
    """Mass of {lam - |z|_1/theta > b, |z|_inf > z_max} under the intensity."""
    full = (2.0 * theta) ** dim
    inner = (2.0 * theta * (1.0 - math.exp(-z_max / theta))) ** dim
    return math.exp(-b) * (full - inner)


def _validate_trajectory(traj: MaximizerTrajectory):
    """Assert continuity and monotonicity of the computed trajectory."""
    sample = traj.sample
    prev_ids = None
    prev_lam1 = -np.inf
    prev_absz1 = -np.inf
    prev_psi1 = -np.inf
    for t0, t1, ids in traj.segments:
        idx = np.asarray(ids)
        psis0 = psi_theta(sample.lams[idx], sample.zs[idx], t0)
        if np.any(np.diff(psis0) > 1e-12):
            raise InternalConsistencyError("rank values out of order")
        if prev_ids is not None:
            left = float(psi_theta(sample.lams[prev_ids[0]],
                                   sample.zs[prev_ids[0]], t0))
            if abs(left - float(psis0[0])) > 1e-9 * max(1.0, abs(left)):
                raise InternalConsistencyError("top value discontinuous")
        lam1 = float(sample.lams[idx[0]])
        absz1 = float(sample.z_norms[idx[0]])
        if lam1 < prev_lam1 - 1e-12 or absz1 < prev_absz1 - 1e-12:
            raise InternalConsistencyError(
                "leader lam or |z| decreased along the trajectory")
        psi1_end = float(psi_theta(sample.lams[idx[0]], sample.zs[idx[0]],
                                   min(t1, traj.theta_hi)))
        if psi1_end < prev_psi1 - 1e-12:
            raise InternalConsistencyError("top value decreased")
        prev_psi1 = psi1_end
        prev_lam1, prev_absz1, prev_ids = lam1, absz1, ids


# ---------------------------------------------------------------------------
# mass sampling of the aging variable


@dataclass
class TruncationControl:
    """Windowing policy for mass sampling of the aging variable.

    policy "staircase" uses an l1-radial window whose lambda floor rises
    logarithmically with the radius (tracking the level where points can
    still compete for leadership), certified per draw by an exact
    unsampled-preemptor mass bound.  policy "box" is the rectangular
    window with lambda floor -2 ln(z_max); it is sound but costs a point
    count cubic in z_max, so it only suits small draw counts.
    """

    policy: str = "staircase"
    cert_tol: float = 1e-7
    floor_margin: float = 5.0
    theta_ref: float = 16.0
    radius_factor: float = 25.0
    ring_growth: float = 2.0
    extension_factor: float = 16.0
    floor_drop_step: float = 2.0
    max_extensions: int = 8
    z_max0: float = 50.0
    chunk: int = 4096
    strict_cap: bool = False


@dataclass
class ThetaSamples:
    """Draws of the aging variable with capture certificates."""

    values: np.ndarray
    censored: np.ndarray
    dim: int
    seed: int
    control: TruncationControl
    max_void_mass: float
    extension_counts: np.ndarray

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def n_censored(self) -> int:
        return int(np.count_nonzero(self.censored))

    def survival(self, s):
        """(estimate, stderr, bias_bound) for P(Theta > s).

        Censored draws are excluded; the bias bound is the censored
        fraction, which caps the distortion their exclusion can cause.
        """
        ok = ~self.censored
        n_eff = int(np.count_nonzero(ok))
        if n_eff == 0:
            raise DegenerateInputError("every draw was censored")
        p = float(np.mean(self.values[ok] > s))
        stderr = math.sqrt(max(p * (1.0 - p), 1.0 / n_eff) / n_eff)
        bias = self.n_censored / self.n
        return p, stderr, bias


def _staircase_window(dim, ctrl: TruncationControl, radius_steps, drop):
    """(edges, floors) for a staircase stage.

    Ring edges follow a fixed geometric ladder so that windows at
    successive stages are nested with identical shared rings; the floor
    on each ring is dim*ln(2e*edge/dim) - floor_margin - drop, evaluated
    at the ring's outer edge.
    """
    p_max = ctrl.radius_factor * ctrl.theta_ref \
        * ctrl.extension_factor ** radius_steps
    edges = [0.0, float(dim)]
    while edges[-1] < p_max:
        edges.append(edges[-1] * ctrl.ring_growth)
    edges = np.asarray(edges)
    floors = dim * np.log(2.0 * math.e * edges[1:] / dim) \
        - ctrl.floor_margin - drop
    return edges, floors


def _box_window(dim, ctrl: TruncationControl, radius_steps, drop):
    z_max = ctrl.z_max0 * 2.0 ** radius_steps
    edges = np.asarray([0.0, z_max])
    floors = np.asarray([-2.0 * math.log(z_max) - drop])
    return edges, floors


def _stage_window(dim, ctrl, radius_steps, drop):
    if ctrl.policy == "staircase":
        return _staircase_window(dim, ctrl, radius_steps, drop)
    return _box_window(dim, ctrl, radius_steps, drop)


def _window_cells(edges, floors):
    """Full window as (p_lo, p_hi, lam_lo, lam_hi=inf) sampling cells."""
    return [(edges[j], edges[j + 1], floors[j], np.inf)
            for j in range(len(floors))]


def _window_diff_cells(edges_new, floors_new, edges_old, floors_old):
    """Sampling cells for the set difference of two nested windows.

    The old ring edges must be a prefix of the new ones (box windows are
    the special case of a single ring, handled by edge comparison).
    """
    cells = []
    n_old = len(floors_old)
    if len(edges_old) == 2 and len(edges_new) == 2:
        # box policy: radial growth splits into slab + outer annulus
        if floors_new[0] < floors_old[0] - 1e-12:
            cells.append((edges_old[0], edges_old[1],
                          floors_new[0], floors_old[0]))
        if edges_new[1] > edges_old[1] + 1e-12:
            cells.append((edges_old[1], edges_new[1], floors_new[0], np.inf))
        return cells
    if not np.allclose(edges_new[:len(edges_old)], edges_old):
        raise InternalConsistencyError("window ladder edges are not nested")
    for j in range(len(floors_new)):
        lo, hi = edges_new[j], edges_new[j + 1]
        if j < n_old:
            if floors_new[j] < floors_old[j] - 1e-12:
                cells.append((lo, hi, floors_new[j], floors_old[j]))
        else:
            cells.append((lo, hi, floors_new[j], np.inf))
    return cells


def _cell_mass(cell, dim):
    """Intensity mass of one sampling cell."""
    lo, hi, flo, fhi = cell
    vol = (2.0 ** dim / math.gamma(dim + 1)) * (hi ** dim - lo ** dim)
    if np.isinf(fhi):
        return vol * math.exp(-flo)
    return vol * (math.exp(-flo) - math.exp(-fhi))


def _sample_cells(rng, cells, counts, dim):
    """Flat (lam, p, seg) draws for per-sample Poisson counts over cells.

    Only the pair (lam, |z|_1) is materialized: the aging variable is a
    function of values and l1 radii alone.  Radii follow the density
    proportional to p^{dim-1} on each ring.
    """
    lams, ps, segs = [], [], []
    for c, (lo, hi, flo, fhi) in enumerate(cells):
        col = counts[:, c]
        total = int(col.sum())
        if total == 0:
            continue
        seg = np.repeat(np.arange(len(col)), col)
        u = rng.uniform(size=total)
        p = (lo ** dim + u * (hi ** dim - lo ** dim)) ** (1.0 / dim)
        if np.isinf(fhi):
            lam = flo + rng.exponential(size=total)
        else:
            v = rng.uniform(size=total)
            lam = -np.log(math.exp(-flo)
                          - v * (math.exp(-flo) - math.exp(-fhi)))
        lams.append(lam)
        ps.append(p)
        segs.append(seg)
    if not lams:
        empty = np.empty(0)
        return empty, empty, np.empty(0, dtype=np.int64)
    return (np.concatenate(lams), np.concatenate(ps),
            np.concatenate(segs).astype(np.int64))


def _segment_argmax(primary, secondary, seg, n_seg):
    """Per-segment argmax of (primary, secondary); -1 for empty segments."""
    counts = np.bincount(seg, minlength=n_seg)
    out = np.full(n_seg, -1, dtype=np.int64)
    if len(primary) == 0:
        return out, counts
    order = np.lexsort((secondary, primary, seg))
    ends = np.cumsum(counts)
    nonempty = counts > 0
    out[nonempty] = order[ends[nonempty] - 1]
    return out, counts


def _mass_exp_shell(a, b, x, y, dim):
    """Integral of (2^d/(d-1)!) r^{d-1} e^{-(a + b r)} dr over [x, y].

    Vectorized; b must be positive; y may be infinite.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    upper_x = special.gammaincc(dim, b * x)
    upper_y = special.gammaincc(dim, b * y)
    val = 2.0 ** dim * np.exp(-a) / b ** dim * (upper_x - upper_y)
    return np.where(y > x, val, 0.0)


def _mass_floor_shell(F, x, y, dim):
    """Integral of (2^d/(d-1)!) r^{d-1} e^{-F} dr over [x, y]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    coef = 2.0 ** dim / math.gamma(dim + 1)
    return np.where(y > x, np.exp(-F) * coef * (y ** dim - x ** dim), 0.0)


def _preemptor_mass(lam_l, p_l, s_end, edges, floors, dim):
    """Unsampled-point mass able to overtake the leader line.

    The leader (lam_l, p_l) holds rank 1 for s in [s_end, 1]; a point at
    l1 radius r alters the leader process only when its value exceeds
        lam_req(r) = lam_l + (r - p_l) * (s_end if r >= p_l else 1).
    Returns (floor part, outer part) of the intensity mass of
    {lam > lam_req} outside the staircase window.
    """
    lam_l = np.asarray(lam_l, dtype=float)
    p_l = np.asarray(p_l, dtype=float)
    s_end = np.asarray(s_end, dtype=float)
    n = lam_l.shape[0]
    p_max = edges[-1]
    ones = np.ones(n)

    floor_mass = np.zeros(n)
    for j in range(len(floors)):
        x0, x1 = float(edges[j]), float(edges[j + 1])
        F = float(floors[j])
        r_star = np.where(F <= lam_l,
                          p_l + (F - lam_l),
                          p_l + (F - lam_l) / s_end)
        hi = np.minimum(x1, np.maximum(r_star, x0))
        mid = np.clip(p_l, x0, hi)
        m = _mass_exp_shell(lam_l - p_l, ones, np.full(n, x0), mid, dim)
        m = m + _mass_exp_shell(lam_l - s_end * p_l, s_end, mid, hi, dim)
        m = m - _mass_floor_shell(F, np.full(n, x0), hi, dim)
        floor_mass += np.maximum(m, 0.0)

    start = np.maximum(p_max, p_l)
    outer = _mass_exp_shell(lam_l - s_end * p_l, s_end, start,
                            np.full(n, np.inf), dim)
    outer = np.where(p_l >= p_max, np.inf, outer)
    return floor_mass, outer


def theta_sampler(dim, n_samples, seed, truncation_ctrl=None) -> ThetaSamples:
    """Draw i.i.d. copies of the aging variable.

    Theta is the first theta > 1 at which the penalized leader of the
    limiting point process changes, minus 1.  Each draw is certified: the
    intensity mass of unsampled points that could have altered the leader
    on [1, 1 + Theta] is bounded below cert_tol, with the truncation
    window extended (preserving the realization) until the bound holds.
    Draws that exhaust the extension ladder are flagged censored.
    """
    if n_samples < 1:
        raise InvalidParameterError("n_samples must be at least 1")
    if dim < 1 or int(dim) != dim:
        raise InvalidParameterError("dim must be a positive integer")
    ctrl = truncation_ctrl if truncation_ctrl is not None else TruncationControl()
    if ctrl.policy not in ("staircase", "box"):
        raise InvalidParameterError("policy must be 'staircase' or 'box'")

    edges0, floors0 = _stage_window(dim, ctrl, 0, 0.0)
    mean0 = sum(_cell_mass(c, dim) for c in _window_cells(edges0, floors0))
    if mean0 * min(n_samples, ctrl.chunk) > _MAX_EXPECTED_POINTS:
        raise ResourceError(
            f"window policy '{ctrl.policy}' needs about {mean0:.3e} points "
            "per draw; reduce the chunk size or the draw count")

    values = np.empty(n_samples)
    censored = np.zeros(n_samples, dtype=bool)
    ext_counts = np.zeros(n_samples, dtype=np.int64)
    max_void = 0.0

    for chunk_idx, start in enumerate(range(0, n_samples, ctrl.chunk)):
        stop = min(start + ctrl.chunk, n_samples)
        vals, cens, exts, void = _theta_sample_chunk(
            dim, stop - start, seed, chunk_idx, ctrl)
        values[start:stop] = vals
        censored[start:stop] = cens
        ext_counts[start:stop] = exts
        max_void = max(max_void, void)

    if ctrl.strict_cap and censored.any():
        raise TruncationCapError(
            f"{int(censored.sum())} draws exhausted the truncation ladder")
    return ThetaSamples(values=values, censored=censored, dim=int(dim),
                        seed=int(seed), control=ctrl,
                        max_void_mass=float(max_void),
                        extension_counts=ext_counts)


def _theta_sample_chunk(dim, n, seed, chunk_idx, ctrl):
    """Resolve one chunk of aging draws through the extension ladder."""
    radius_steps = 0
    drop = 0.0
    edges, floors = _stage_window(dim, ctrl, radius_steps, drop)
    rng = make_generator(seed, _PATH_THETA, chunk_idx, 0)
    cells = _window_cells(edges, floors)
    masses = np.asarray([_cell_mass(c, dim) for c in cells])
    counts = rng.poisson(masses, size=(n, len(cells)))
    lam, p, seg = _sample_cells(rng, cells, counts, dim)

    values = np.full(n, np.inf)
    censored = np.zeros(n, dtype=bool)
    exts = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    max_void = 0.0

    for stage in range(ctrl.max_extensions + 1):
        if stage > 0:
            rng_s = make_generator(seed, _PATH_THETA, chunk_idx, stage)
            edges_new, floors_new = _stage_window(dim, ctrl, radius_steps, drop)
            diff = _window_diff_cells(edges_new, floors_new, edges, floors)
            if diff:
                masses = np.asarray([_cell_mass(c, dim) for c in diff])
                if masses.sum() * len(active) > _MAX_EXPECTED_POINTS:
                    break
                cmat = rng_s.poisson(masses, size=(len(active), len(diff)))
                lam_x, p_x, seg_x = _sample_cells(rng_s, diff, cmat, dim)
                seg_x = active[seg_x]
                keep = np.isin(seg, active)
                lam = np.concatenate([lam[keep], lam_x])
                p = np.concatenate([p[keep], p_x])
                seg = np.concatenate([seg[keep], seg_x])
            edges, floors = edges_new, floors_new

        psi1 = lam - p
        lead, _ = _segment_argmax(psi1, lam, seg, n)
        if len(lam) == 0:
            radius_steps += 1
            continue
        lam_l = np.where(lead >= 0, lam[np.maximum(lead, 0)], np.nan)
        p_l = np.where(lead >= 0, p[np.maximum(lead, 0)], np.nan)

        dlam = lam - lam_l[seg]
        dp = p - p_l[seg]
        ok = (dlam > 0) & (dp > 0)
        s_all = np.where(ok, dlam / np.where(dp != 0.0, dp, 1.0), -np.inf)
        cross, _ = _segment_argmax(s_all, lam, seg, n)
        has_cross = (cross >= 0) & (lead >= 0)
        has_cross &= np.where(cross >= 0, ok[np.maximum(cross, 0)], False)
        s_star = np.where(has_cross, s_all[np.maximum(cross, 0)], np.nan)

        cand = active[has_cross[active]]
        need_radius = bool(np.any(~has_cross[active]))
        need_floor = False
        if len(cand):
            fl, ou = _preemptor_mass(lam_l[cand], p_l[cand], s_star[cand],
                                     edges, floors, dim)
            total = fl + ou
            good = total <= ctrl.cert_tol
            done = cand[good]
            values[done] = 1.0 / s_star[done] - 1.0
            exts[done] = stage
            if good.any():
                max_void = max(max_void, float(total[good].max()))
            bad = ~good
            if bad.any():
                need_radius = need_radius or bool((ou[bad] > ctrl.cert_tol / 2).any())
                need_floor = bool((fl[bad] > ctrl.cert_tol / 2).any())
            solved = np.zeros(n, dtype=bool)
            solved[done] = True
            active = active[~solved[active]]
        if len(active) == 0:
            break
        if need_radius or not need_floor:
            radius_steps += 1
        if need_floor:
            drop += ctrl.floor_drop_step
    if len(active):
        censored[active] = True
        values[active] = np.inf
        exts[active] = ctrl.max_extensions
    return values, censored, exts, max_void


# ---------------------------------------------------------------------------
# direct sampling of the fixed-theta maxima


@dataclass
class LimitMaxima:
    """Per-draw maximizer of the penalized value at a fixed theta."""

    psi: np.ndarray
    lam: np.ndarray
    z: np.ndarray
    theta: float
    dim: int
    seed: int
    z_max: float
    max_void_mass: float


def sample_limit_maxima(dim, theta, n_samples, seed, cert_tol=1e-8,
                        batch=20000) -> LimitMaxima:
    """Draw the penalized maximum of the limiting process at one theta.

    Points are generated in decreasing value order (the value marginal on
    the spatial box is a Poisson process in the e^{-lam} scale), so each
    draw stops exactly when no remaining point can beat the running
    maximum; the spatial box is sized so that the mass of outside-the-box
    points able to win stays below cert_tol for every draw.
    """
    if theta <= 0:
        raise InvalidParameterError("theta must be positive")
    if n_samples < 1:
        raise InvalidParameterError("n_samples must be at least 1")
    if dim < 1 or int(dim) != dim:
        raise InvalidParameterError("dim must be a positive integer")
    z_max = theta * (math.log(1.0 / cert_tol)
                     + dim * math.log(2.0 * theta) + 6.0)
    psi_out = np.empty(n_samples)
    lam_out = np.empty(n_samples)
    z_out = np.empty((n_samples, dim))
    max_void = 0.0
    for b_idx, start in enumerate(range(0, n_samples, batch)):
        stop = min(start + batch, n_samples)
        rng = make_generator(seed, _PATH_MAXIMA, b_idx)
        psi_b, lam_b, z_b, void = _maxima_batch(
            rng, dim, theta, stop - start, z_max, cert_tol)
        psi_out[start:stop] = psi_b
        lam_out[start:stop] = lam_b
        z_out[start:stop] = z_b
        max_void = max(max_void, void)
    return LimitMaxima(psi=psi_out, lam=lam_out, z=z_out, theta=float(theta),
                       dim=int(dim), seed=int(seed), z_max=float(z_max),
                       max_void_mass=float(max_void))


def _maxima_batch(rng, dim, theta, n, z_max, cert_tol):
    """One batch of fixed-theta maxima with exact per-draw stopping."""
    k0 = 48
    vol = (2.0 * z_max) ** dim
    log_vol = math.log(vol)
    gam = np.cumsum(rng.exponential(size=(n, k0)), axis=1)
    lam = log_vol - np.log(gam)
    z = rng.uniform(-z_max, z_max, size=(n, k0, dim))
    psi = lam - np.abs(z).sum(axis=2) / theta
    best = np.argmax(psi, axis=1)
    rows = np.arange(n)
    psi_b = psi[rows, best]
    lam_b = lam[rows, best]
    z_b = z[rows, best].copy()
    last_gam = gam[:, -1].copy()
    pending = np.where(log_vol - np.log(last_gam) > psi_b)[0]
    rounds = 0
    while len(pending):
        rounds += 1
        if rounds > 200:
            raise InternalConsistencyError("maxima sampling failed to stop")
        m = len(pending)
        gam_x = last_gam[pending, None] + np.cumsum(
            rng.exponential(size=(m, k0)), axis=1)
        lam_x = log_vol - np.log(gam_x)
        z_x = rng.uniform(-z_max, z_max, size=(m, k0, dim))
        psi_x = lam_x - np.abs(z_x).sum(axis=2) / theta
        bx = np.argmax(psi_x, axis=1)
        rx = np.arange(m)
        better = psi_x[rx, bx] > psi_b[pending]
        upd = pending[better]
        psi_b[upd] = psi_x[rx, bx][better]
        lam_b[upd] = lam_x[rx, bx][better]
        z_b[upd] = z_x[rx, bx][better]
        last_gam[pending] = gam_x[:, -1]
        pending = pending[log_vol - np.log(last_gam[pending]) > psi_b[pending]]
    worst = _box_void_mass(float(psi_b.min()), theta, z_max, dim)
    if worst > cert_tol:
        raise InsufficientTruncationError(
            "spatial truncation too tight for the observed maxima",
            void_mass=worst, boundary_margin=0.0)
    return psi_b, lam_b, z_b, worst


# ---------------------------------------------------------------------------
# aging law oracles


def _G_u(r, u, dim):
    """Radial factor of the overtaking-region mass."""
    r = np.asarray(r, dtype=float)
    total = 1.0 - u ** (-dim) + np.zeros_like(r)
    fact = 1.0
    for k in range(1, dim):
        fact *= k
        total = total + (r ** k / fact) * (u ** (-k) - u ** (-dim))
    return total


def mu_jump_region(lam, r, u, dim=1):
    """Intensity mass of points overtaking a leader (lam, |z|=r) by theta=u.

    The region collects points ahead of the leader at theta = u but
    behind it at theta = 1; its mass is (2u)^dim e^{-lam} G_u(r) with
    G_u(r) = 1 - u^{-dim} + sum_{k<dim} (r^k/k!) (u^{-k} - u^{-dim}).
    """
    if u <= 1:
        raise InvalidParameterError("u must exceed 1")
    if dim < 1 or int(dim) != dim:
        raise InvalidParameterError("dim must be a positive integer")
    return (2.0 * u) ** dim * np.exp(-np.asarray(lam, dtype=float)) \
        * _G_u(r, u, dim)


@dataclass
class QuadControl:
    epsabs: float = 1e-12
    epsrel: float = 1e-11
    tol: float = 1e-8


def aging_tail_oracle(s, dim=1, quad_ctrl=None) -> float:
    """P(Theta > s) by adaptive quadrature of the leader-law expectation.

    Averages exp(-mass of overtaking points) over the joint law of the
    theta = 1 leader; integrating the leader's value coordinate in closed
    form leaves one integral over the leader's l1 radius r:
        integral of [2^d r^{d-1}/(d-1)!] e^{-r}
                    / (2^d + (2u)^d e^{-r} G_u(r)) dr,   u = 1 + s.
    """
    if s < 0:
        raise InvalidParameterError("s must be non-negative")
    if s == 0:
        return 1.0
    ctrl = quad_ctrl if quad_ctrl is not None else QuadControl()
    u = 1.0 + float(s)
    coef = 2.0 ** dim / math.gamma(dim)

    def integrand(r):
        g = float(_G_u(r, u, dim))
        return coef * r ** (dim - 1) * math.exp(-r) \
            / (2.0 ** dim + (2.0 * u) ** dim * math.exp(-r) * g)

    split = dim * math.log(u) + 1.0
    val1, err1 = integrate.quad(integrand, 0.0, split, epsabs=ctrl.epsabs,
                                epsrel=ctrl.epsrel, limit=200)
    val2, err2 = integrate.quad(integrand, split, np.inf, epsabs=ctrl.epsabs,
                                epsrel=ctrl.epsrel, limit=200)
    if err1 + err2 > ctrl.tol:
        raise AccuracyError(
            f"quadrature error {err1 + err2:.3e} above tolerance "
            f"{ctrl.tol:.3e}")
    return val1 + val2


def aging_tail_exact_1d(s) -> float:
    """Closed form of the one-dimensional aging tail: ln(1+s)/s."""
    if s < 0:
        raise InvalidParameterError("s must be non-negative")
    if s == 0:
        return 1.0
    return math.log1p(s) / s


def theta_tail_asymptote(s, dim=1):
    """Leading-order tail (d^d/d!) (ln s)^d / s^d of the aging variable."""
    s = np.asarray(s, dtype=float)
    return (dim ** dim / math.gamma(dim + 1)) * np.log(s) ** dim / s ** dim


def limit_cdf_gumbel(x, theta, dim=1):
    """CDF of the limiting penalized maximum: Gumbel(dim ln(2 theta), 1)."""
    if theta <= 0:
        raise InvalidParameterError("theta must be positive")
    loc = dim * math.log(2.0 * theta)
    return np.exp(-np.exp(-(np.asarray(x, dtype=float) - loc)))


def limit_cdf_laplace(x, theta):
    """CDF of one maximizer coordinate: Laplace with location 0, scale theta."""
    if theta <= 0:
        raise InvalidParameterError("theta must be positive")
    x = np.asarray(x, dtype=float)
    half = 0.5 * np.exp(-np.abs(x) / theta)
    return np.where(x < 0, half, 1.0 - half)


# ---------------------------------------------------------------------------
# finite-time rescaling of capital values


@dataclass
class QuantileControl:
    n_replicas: int = 4000
    seed: int = 0
    min_tail_count: int = 30


@dataclass
class RescaledPoints:
    """Capital values recentered and rescaled for limit comparison."""

    lams: np.ndarray
    zs: np.ndarray
    t: float
    a_t: float
    d_t: float
    r_t: float
    mode: str


def quantile_level(t, dim=1):
    """Exceedance level ((ln t)(ln ln t)(ln ln ln t)/t)^{dim/2}."""
    if t <= EE:
        raise InvalidParameterError("t must exceed e^e")
    return ((math.log(t) * ln2(t) * ln3(t)) / t) ** (dim / 2.0)


def _invert_spatial_scale(target, dim, rho):
    """Time tau whose spatial scale r_tau equals target, by bisection."""
    def r_of(tau):
        return rho * tau / (dim * math.log(tau) * ln3_plus(tau))
    lo = EE + 1e-6
    if r_of(lo) > target:
        raise InvalidParameterError("t too small to invert the spatial scale")
    hi = 4.0 * lo
    while r_of(hi) < target:
        hi *= 4.0
        if hi > 1e300:
            raise InvalidParameterError("spatial scale target out of range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if r_of(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def matching_box_radius(t, dim=1, rho=1.0) -> int:
    """Box radius whose principal-value quantile calibrates the recentering.

    Takes the radius floor(sqrt(rho L / dim)/2) at the auxiliary length
    L = floor(tau ln ln tau), where tau is the time whose spatial scale
    equals t.
    """
    tau = _invert_spatial_scale(float(t), dim, rho)
    L = int(math.floor(tau * ln2_plus(tau)))
    return int(math.floor(0.5 * math.sqrt(rho * L / dim)))


def rescale_capitals(field, t, chi_est=None, a_t_mode="approx",
                     capitals=None, mc_ctrl=None) -> RescaledPoints:
    """Rescaled capital cloud {((lam_C - a_t)/d_t, z/r_t)}.

    The centering a_t either subtracts the variational constant from the
    peak-potential scale ("approx": hat_a(t) - chi) or matches a Monte
    Carlo quantile of the principal value over boxes of the calibrated
    radius ("mc-quantile").
    """
    from .localization import find_capitals

    if t <= EE:
        raise InvalidParameterError("t must exceed e^e")
    sc = scales(t, field.window.dim, field.rho)
    if a_t_mode == "approx":
        if chi_est is None:
            raise InvalidParameterError(
                "approx mode needs a variational constant estimate")
        a_t = hat_a(t, field.window.dim, field.rho) - float(chi_est)
    elif a_t_mode == "mc-quantile":
        ctrl = mc_ctrl if mc_ctrl is not None else QuantileControl()
        a_t = _mc_quantile_level(field, t, ctrl)
    else:
        raise InvalidParameterError(
            "a_t_mode must be 'approx' or 'mc-quantile'")
    if capitals is None:
        capitals = find_capitals(field, field.window, margin_policy="exclude")
    if len(capitals) == 0:
        raise DegenerateInputError("no capitals to rescale")
    lams = np.asarray([c.lambda_C for c in capitals])
    zs = np.asarray([c.z for c in capitals], dtype=float)
    return RescaledPoints(lams=(lams - a_t) / sc.d_t, zs=zs / sc.r_t,
                          t=float(t), a_t=float(a_t), d_t=float(sc.d_t),
                          r_t=float(sc.r_t), mode=a_t_mode)


def _mc_quantile_level(field, t, ctrl: QuantileControl) -> float:
    """Upper quantile of the principal value over replica boxes."""
    from .potential import box, sample_field
    from .spectral import LatticeDomain, dense_oracle

    dim = field.window.dim
    q = quantile_level(t, dim)
    if ctrl.n_replicas * q < ctrl.min_tail_count:
        raise StatisticalPowerError(
            f"{ctrl.n_replicas} replicas resolve only "
            f"{ctrl.n_replicas * q:.1f} tail points at level {q:.3e}; "
            f"need at least {ctrl.min_tail_count}")
    radius = matching_box_radius(t, dim, field.rho)
    win = box((0,) * dim, radius)
    dom = LatticeDomain.from_box(win)
    lams = np.empty(ctrl.n_replicas)
    for i in range(ctrl.n_replicas):
        rep = sample_field(dim, win, field.rho,
                           seed=int(ctrl.seed) + 100003 * i)
        vals, _ = dense_oracle(dom, rep.values)
        lams[i] = vals[0]
    return float(np.quantile(lams, 1.0 - q))
