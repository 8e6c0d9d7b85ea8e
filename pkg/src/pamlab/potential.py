"""Doubly-exponential potential fields and the deterministic scale functions.

The random potential xi is an i.i.d. field on a finite lattice window of
Z^d whose upper tail is

    P(xi(0) > r) = exp(-e^(r/rho)),   rho > 0.

Sampling uses the exact quantile inverse r = rho*ln(ln(1/U)).  This module
also provides the threshold level hat_a(L) (the (1 - L^-d)-quantile of the
site law), the time-dependent scale bundle used by the localization and
rescaling code, and a simple binary save/load format for fields.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import RNG_ALGORITHM, make_generator
from .errors import (
    AccuracyError,
    FormatError,
    InvalidParameterError,
    ResourceError,
)

E = math.e
EE = math.exp(math.e)            # e^e, lower bound for admissible times
EEE = math.exp(math.exp(math.e))  # e^(e^e), floor argument of ln3_plus

# Dense storage budget: windows above this many sites are refused rather
# than silently swapped to disk.
MAX_WINDOW_SITES = 10_000_000


# ── iterated logarithms ──────────────────────────────────────────────────

def ln2(x):
    return np.log(np.log(x))


def ln3(x):
    return np.log(np.log(np.log(x)))


def ln2_plus(x):
    """ln ln (x or e), guarded so the iterate is defined for all x > 0."""
    return ln2(np.maximum(x, E))


def ln3_plus(x):
    """Penalty coefficient: ln ln ln x, floored at 1.

    Equals 1 for every x <= e^(e^e) (in particular on |z| <= e^e, where the
    distance penalty of the cost functional must reduce to |z|/t exactly)
    and grows like ln3 x beyond that.
    """
    return ln3(np.maximum(x, EEE))


# ── site law ─────────────────────────────────────────────────────────────

def tail_sf(r, rho):
    """P(xi(0) > r) = exp(-e^(r/rho))."""
    _check_rho(rho)
    return np.exp(-np.exp(np.asarray(r, dtype=float) / rho))


def tail_cdf(r, rho):
    """P(xi(0) <= r)."""
    return 1.0 - tail_sf(r, rho)


def quantile(u, rho):
    """Exact inverse of the survival function: r = rho*ln(ln(1/u)).

    For U uniform on (0,1) the value quantile(U, rho) has the doubly
    exponential law above.  Strictly decreasing in u.
    """
    _check_rho(rho)
    u = np.asarray(u, dtype=float)
    return rho * np.log(np.log(1.0 / u))


def analytic_exp_moment(rho):
    """E[e^(xi/rho)] computed by quadrature against the site law.

    Used by the law-of-large-numbers self test.  (Analytically the value
    is 1: e^(xi/rho) = ln(1/U) is a unit exponential.)
    """
    from scipy.integrate import quad

    _check_rho(rho)
    # density of xi: d/dr [1 - exp(-e^(r/rho))] = exp(r/rho - e^(r/rho))/rho
    val, err = quad(
        lambda r: math.exp(2.0 * r / rho - math.exp(r / rho)) / rho,
        -60.0 * rho,
        40.0 * rho,
        limit=200,
        points=[-3.0 * rho, 0.0, 3.0 * rho],
    )
    if err > 1e-9:
        raise AccuracyError(f"exp-moment quadrature error {err:.2e} too large")
    return val


def _check_rho(rho):
    if not (rho > 0 and math.isfinite(rho)):
        raise InvalidParameterError(f"rho must be positive and finite, got {rho}")


# ── lattice windows ──────────────────────────────────────────────────────

@dataclass(frozen=True)
class Window:
    """Axis-aligned box in Z^d: all sites with |x - center|_inf <= radius."""

    center: tuple
    radius: int

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))
        if self.radius < 0:
            raise InvalidParameterError("window radius must be >= 0")

    @property
    def dim(self):
        return len(self.center)

    @property
    def side(self):
        return 2 * self.radius + 1

    @property
    def n_sites(self):
        return self.side ** self.dim

    @property
    def lower(self):
        return tuple(c - self.radius for c in self.center)

    @property
    def upper(self):
        return tuple(c + self.radius for c in self.center)

    def contains(self, site) -> bool:
        return all(abs(int(s) - c) <= self.radius for s, c in zip(site, self.center))

    def contains_window(self, other: "Window") -> bool:
        return all(
            ol >= sl and ou <= su
            for ol, sl, ou, su in zip(other.lower, self.lower, other.upper, self.upper)
        )

    def sites(self) -> np.ndarray:
        """All sites as an (n, d) int array in row-major (lexicographic) order."""
        axes = [np.arange(lo, lo + self.side) for lo in self.lower]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=-1)

    def flat_index(self, sites) -> np.ndarray:
        """Row-major index of each site (shape (..., d)) into the window."""
        sites = np.asarray(sites, dtype=np.int64)
        rel = sites - np.asarray(self.lower, dtype=np.int64)
        if np.any(rel < 0) or np.any(rel >= self.side):
            raise InvalidParameterError("site outside window")
        idx = rel[..., 0]
        for k in range(1, self.dim):
            idx = idx * self.side + rel[..., k]
        return idx


def box(center, radius) -> Window:
    c = (center,) if isinstance(center, int) else tuple(center)
    return Window(center=c, radius=int(radius))


# ── the sampled field ────────────────────────────────────────────────────

@dataclass(frozen=True)
class PotentialField:
    """An i.i.d. doubly-exponential sample on a window, with provenance."""

    window: Window
    values: np.ndarray        # flat, row-major over window.sites()
    rho: float
    seed: int
    rng_algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.window.n_sites,):
            raise InvalidParameterError(
                f"values shape {v.shape} does not match window with "
                f"{self.window.n_sites} sites"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("field values must be finite")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def dim(self):
        return self.window.dim

    def at(self, site) -> float:
        return float(self.values[self.window.flat_index(np.asarray(site))])

    def values_at(self, sites) -> np.ndarray:
        return self.values[self.window.flat_index(sites)]

    def argmax_site(self) -> tuple:
        # row-major order makes this the lexicographically smallest maximizer
        idx = int(np.argmax(self.values))
        return tuple(self.window.sites()[idx])


def sample_field(dim, window: Window, rho, seed) -> PotentialField:
    """Sample the field; bit-identical regeneration at fixed inputs.

    Each site draws U uniform on (0,1) in row-major site order from a
    Philox stream keyed by the seed, then applies the exact quantile.
    """
    _check_rho(rho)
    if window.dim != dim:
        raise InvalidParameterError(f"window dim {window.dim} != requested dim {dim}")
    if window.n_sites > MAX_WINDOW_SITES:
        raise ResourceError(
            f"window has {window.n_sites} sites, budget is {MAX_WINDOW_SITES}"
        )
    rng = make_generator(seed)
    u = rng.random(window.n_sites)
    # rng.random lives in [0,1); nudge exact zeros so ln(1/u) stays finite
    tiny = np.finfo(float).tiny
    np.maximum(u, tiny, out=u)
    vals = quantile(u, rho)
    return PotentialField(window=window, values=vals, rho=float(rho), seed=int(seed))


def constant_field(window: Window, value, rho=1.0, seed=0) -> PotentialField:
    """Deterministic field xi = value everywhere; handy for oracle tests."""
    vals = np.full(window.n_sites, float(value))
    return PotentialField(window=window, values=vals, rho=float(rho), seed=int(seed))


def field_from_values(window: Window, values, rho=1.0, seed=0) -> PotentialField:
    """Wrap explicit per-site values (row-major) as a field."""
    return PotentialField(
        window=window, values=np.asarray(values, dtype=float),
        rho=float(rho), seed=int(seed),
    )


# ── deterministic scales ─────────────────────────────────────────────────

@dataclass(frozen=True)
class ScaleSet:
    """The scale bundle at time t: eigenvalue spacing d_t, spatial scale
    r_t, the solve-window radius L_t, the quantile box radius N_t, and the
    threshold level hat_a at L_t."""

    t: float
    d_t: float
    r_t: float
    L_t: int
    N_t: int
    hat_a_L: float


def hat_a(L, dim, rho) -> float:
    """Threshold level: the exact solution of P(xi(0) > a) = L^(-d).

    Closed form rho*ln(d*ln L); strictly increasing in L.
    """
    _check_rho(rho)
    if not L >= 2:
        raise InvalidParameterError(f"hat_a needs L >= 2, got {L}")
    if not dim >= 1:
        raise InvalidParameterError(f"dim must be >= 1, got {dim}")
    return rho * math.log(dim * math.log(L))


def scales(t, dim, rho) -> ScaleSet:
    """Scale bundle at time t; requires t > e^e so ln3 t is positive."""
    _check_rho(rho)
    if not t > EE:
        raise InvalidParameterError(f"scales need t > e^e = {EE:.6f}, got {t}")
    t = float(t)
    d_t = rho / (dim * math.log(t))
    r_t = t * d_t / float(ln3(t))
    L_t = int(math.floor(t * float(ln2_plus(t))))
    N_t = int(math.floor(0.5 * math.sqrt(rho * t / dim)))
    return ScaleSet(
        t=t, d_t=d_t, r_t=r_t, L_t=L_t, N_t=N_t,
        hat_a_L=hat_a(L_t, dim, rho),
    )


# ── save / load ──────────────────────────────────────────────────────────

_MAGIC = b"PAMF"
_FORMAT_VERSION = 1


def save_field(field_: PotentialField, path) -> None:
    """Binary container (header + row-major float64) plus a JSON sidecar."""
    path = Path(path)
    w = field_.window
    alg = field_.rng_algorithm.encode("utf-8")
    header = bytearray()
    header += _MAGIC
    header += struct.pack("<II", _FORMAT_VERSION, w.dim)
    header += struct.pack(f"<{w.dim}q", *w.center)
    header += struct.pack("<q", w.radius)
    header += struct.pack("<d", field_.rho)
    header += struct.pack("<q", field_.seed)
    header += struct.pack("<I", len(alg)) + alg
    data = np.ascontiguousarray(field_.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        fh.write(data.tobytes())
    sidecar = {
        "format_version": _FORMAT_VERSION,
        "dim": w.dim,
        "center": list(w.center),
        "radius": w.radius,
        "n_sites": w.n_sites,
        "rho": field_.rho,
        "seed": field_.seed,
        "rng_algorithm": field_.rng_algorithm,
        "sha256": hashlib.sha256(data.tobytes()).hexdigest(),
    }
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_field(path) -> PotentialField:
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise FormatError(f"{path}: not a field container (bad magic)")
    off = 4
    version, dim = struct.unpack_from("<II", blob, off)
    off += 8
    if version != _FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    center = struct.unpack_from(f"<{dim}q", blob, off)
    off += 8 * dim
    (radius,) = struct.unpack_from("<q", blob, off)
    off += 8
    (rho,) = struct.unpack_from("<d", blob, off)
    off += 8
    (seed,) = struct.unpack_from("<q", blob, off)
    off += 8
    (alg_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    alg = blob[off:off + alg_len].decode("utf-8")
    off += alg_len
    w = Window(center=center, radius=int(radius))
    vals = np.frombuffer(blob, dtype="<f8", count=w.n_sites, offset=off).copy()
    if vals.size != w.n_sites:
        raise FormatError(f"{path}: truncated data section")
    fld = PotentialField(window=w, values=vals, rho=rho, seed=seed, rng_algorithm=alg)
    return fld
