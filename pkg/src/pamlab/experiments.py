"""End-to-end experiment harness with reproducible CSV and manifest output.

Each experiment wires fields, solvers, the localization construction and
the limit-law samplers into a seeded run that writes UTF-8 CSV tables
(floats at 17 significant digits) plus a JSON manifest holding seeds,
package versions and timings.  Identical configs produce bit-identical
CSV files regardless of the worker count.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
import csv
import json
import math
import os
import platform
import time

import numpy as np
import scipy

from . import limits
from .errors import ConfigError, FormatError, InternalConsistencyError
from .localization import default_kappa, find_capitals, order_stats
from .pam import concentration_profile, solve_ode, solve_spectral, tv_profile_distance
from .potential import EE, box, sample_field, scales
from .spectral import LatticeDomain
from .variational import chi_monotonicity_scan

__all__ = [
    "ExperimentConfig",
    "EXPERIMENT_IDS",
    "validate_config",
    "parse_config_text",
    "serialize_config",
    "run",
]

EXPERIMENT_IDS = (
    "mass-concentration",
    "aging-Z",
    "aging-solution",
    "limit-laws",
    "theta-tail",
    "chi-scan",
    "solver-xval",
)

# fixed stride between replica seeds, prime to keep lineages disjoint
_SEED_STRIDE = 104729


@dataclass
class ExperimentConfig:
    """Typed parameters of one experiment run.

    t_list carries the probe values of the experiment: times for the
    finite-t experiments, theta values for limit-laws, s values for
    aging and theta-tail.  kappa = None resolves to the dimension
    default 0.5/dim.
    """

    experiment: str = "chi-scan"
    dim: int = 1
    rho: float = 1.0
    kappa: float = None
    A: float = 1.0
    delta: float = 0.5
    t_list: tuple = (50.0,)
    replicas: int = 20
    seed: int = 0
    window_policy: str = "staircase"
    out_dir: str = "runs"
    workers: int = 1

    def resolved_kappa(self) -> float:
        return default_kappa(self.dim) if self.kappa is None else self.kappa


_INT_KEYS = {"dim", "replicas", "seed", "workers"}
_FLOAT_KEYS = {"rho", "kappa", "A", "delta"}
_STR_KEYS = {"experiment", "window_policy", "out_dir"}
_LIST_KEYS = {"t_list"}


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse a config from flat key-value lines or a JSON object.

    An empty document yields the full-default config.  Simple format:
    one `key = value` per line, `#` comments, t_list comma-separated.
    """
    stripped = text.strip()
    if not stripped:
        return _config_from_dict({})
    if stripped.startswith("{"):
        try:
            raw = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise FormatError(
                f"config is not valid JSON: {exc.msg} "
                f"(line {exc.lineno}, column {exc.colno})")
        if not isinstance(raw, dict):
            raise FormatError("JSON config must be an object")
        return _config_from_dict(raw)
    raw = {}
    for ln_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise FormatError(
                f"expected 'key = value' (line {ln_no}, column 1)")
        key, _, val = body.partition("=")
        raw[key.strip()] = val.strip()
    return _config_from_dict(raw)


def _config_from_dict(raw: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    errors = []
    for key, val in raw.items():
        try:
            if key in _INT_KEYS:
                setattr(cfg, key, int(val))
            elif key in _FLOAT_KEYS:
                if val is None or (isinstance(val, str)
                                   and val.lower() in ("", "none")):
                    setattr(cfg, key, None)
                else:
                    setattr(cfg, key, float(val))
            elif key in _STR_KEYS:
                setattr(cfg, key, str(val))
            elif key in _LIST_KEYS:
                if isinstance(val, str):
                    parts = [p for p in val.split(",") if p.strip()]
                    setattr(cfg, key, tuple(float(p) for p in parts))
                else:
                    setattr(cfg, key, tuple(float(v) for v in val))
            else:
                errors.append(f"unknown key {key!r}")
        except (TypeError, ValueError):
            errors.append(f"key {key!r}: cannot parse value {val!r}")
    errors += _config_errors(cfg)
    if errors:
        raise ConfigError("invalid config: " + "; ".join(errors))
    return cfg


def _config_errors(cfg: ExperimentConfig) -> list:
    errs = []
    if cfg.experiment not in EXPERIMENT_IDS:
        errs.append(f"experiment {cfg.experiment!r} not one of "
                    f"{'|'.join(EXPERIMENT_IDS)}")
    if cfg.dim < 1 or cfg.dim > 3:
        errs.append(f"dim = {cfg.dim} outside [1, 3]")
    if cfg.rho is None or cfg.rho <= 0:
        errs.append(f"rho = {cfg.rho} must be positive")
    if cfg.kappa is not None and cfg.dim >= 1:
        if not (0.0 < cfg.kappa < 1.0 / max(cfg.dim, 1)):
            errs.append(f"kappa = {cfg.kappa} outside (0, 1/d) "
                        f"for d = {cfg.dim}")
    if cfg.A is None or cfg.A <= 0:
        errs.append(f"A = {cfg.A} must be positive")
    if cfg.delta is None or cfg.delta <= 0:
        errs.append(f"delta = {cfg.delta} must be positive")
    if len(cfg.t_list) == 0:
        errs.append("t_list must be non-empty")
    if any(v <= 0 for v in cfg.t_list):
        errs.append("t_list values must be positive")
    if cfg.experiment in ("mass-concentration", "aging-Z", "aging-solution"):
        bad = [v for v in cfg.t_list if v <= EE]
        if bad:
            errs.append(f"t values {bad} must exceed e^e for "
                        f"{cfg.experiment}")
    if cfg.replicas < 1:
        errs.append(f"replicas = {cfg.replicas} must be at least 1")
    if cfg.workers < 1:
        errs.append(f"workers = {cfg.workers} must be at least 1")
    if cfg.window_policy not in ("staircase", "box"):
        errs.append(f"window_policy {cfg.window_policy!r} not "
                    "'staircase' or 'box'")
    return errs


def serialize_config(cfg: ExperimentConfig) -> str:
    """Flat key-value rendering that parse_config_text inverts exactly."""
    lines = []
    for key, val in asdict(cfg).items():
        if key in _LIST_KEYS:
            lines.append(f"{key} = {','.join(repr(float(v)) for v in val)}")
        elif val is None:
            lines.append(f"{key} = none")
        elif isinstance(val, float):
            lines.append(f"{key} = {val!r}")
        else:
            lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def validate_config(path) -> ExperimentConfig:
    """Load, normalize and range-check a config file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text)


# ---------------------------------------------------------------------------
# CSV plumbing


def _fmt_cell(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row])


def _replica_seed(base_seed, index) -> int:
    return int(base_seed) + _SEED_STRIDE * int(index)


def _map_replicas(fn, jobs, workers):
    """Run replica jobs preserving input order; pool only when workers > 1."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------------------
# experiment bodies (top-level functions so worker pools can pickle them)


def _mass_conc_replica(job):
    dim, rho, kappa, t, seed = job
    sc = scales(t, dim, rho)
    win = box((0,) * dim, sc.L_t)
    fld = sample_field(dim, win, rho, seed=seed)
    caps = find_capitals(fld, win, kappa=kappa, margin_policy="exclude")
    top = order_stats(caps, t, 1).top
    dom = LatticeDomain.from_box(win)
    sol = solve_spectral(dom, fld, t)
    # probe out to half the spatial scale r_t: balls that stay local
    # relative to the distance of the localization center itself
    r_max = min(int(math.ceil(sc.r_t / 2.0)), sc.L_t)
    radii = np.arange(0, r_max + 1)
    outside = concentration_profile(sol, top.z, radii)
    return [(t, seed, int(R), float(fr), str(top.z))
            for R, fr in zip(radii, outside)]


def _run_mass_concentration(cfg: ExperimentConfig, out_dir):
    jobs = [(cfg.dim, cfg.rho, cfg.resolved_kappa(), float(t),
             _replica_seed(cfg.seed, i * len(cfg.t_list) + j))
            for i in range(cfg.replicas)
            for j, t in enumerate(cfg.t_list)]
    rows = []
    for reps in _map_replicas(_mass_conc_replica, jobs, cfg.workers):
        rows.extend(reps)
    path = os.path.join(out_dir, "mass_concentration.csv")
    _write_csv(path, ["t", "seed", "R", "outside_fraction", "z_center"], rows)
    return {"mass_concentration.csv": len(rows)}, {}


def _aging_z_replica(job):
    dim, rho, kappa, t, s_values, seed = job
    t_max = max(t * (1.0 + s) for s in s_values)
    sc = scales(t_max, dim, rho)
    win = box((0,) * dim, sc.L_t)
    fld = sample_field(dim, win, rho, seed=seed)
    caps = find_capitals(fld, win, kappa=kappa, margin_policy="exclude")
    z_t = order_stats(caps, t, 1).top.z
    return [z_t == order_stats(caps, t * (1.0 + s), 1).top.z
            for s in s_values]


def _run_aging_z(cfg: ExperimentConfig, out_dir):
    t0 = float(cfg.t_list[0])
    s_values = (0.25, 0.5, 1.0, 2.0, 5.0)
    jobs = [(cfg.dim, cfg.rho, cfg.resolved_kappa(), t0, s_values,
             _replica_seed(cfg.seed, i)) for i in range(cfg.replicas)]
    flags = np.asarray(_map_replicas(_aging_z_replica, jobs, cfg.workers))
    rows = []
    for j, s in enumerate(s_values):
        frac = float(flags[:, j].mean())
        se = math.sqrt(max(frac * (1 - frac), 1.0 / cfg.replicas)
                       / cfg.replicas)
        rows.append((t0, s, cfg.replicas, frac, se,
                     limits.aging_tail_oracle(s, dim=cfg.dim), cfg.seed))
    path = os.path.join(out_dir, "aging_z.csv")
    _write_csv(path, ["t", "s", "n", "frac_equal", "stderr",
                      "limit_tail", "seed"], rows)
    return {"aging_z.csv": len(rows)}, {}


def _aging_solution_replica(job):
    dim, rho, t, s_values, seed = job
    t_max = max(t * (1.0 + s) for s in s_values)
    sc = scales(t_max, dim, rho)
    win = box((0,) * dim, sc.L_t)
    fld = sample_field(dim, win, rho, seed=seed)
    dom = LatticeDomain.from_box(win)
    base = solve_spectral(dom, fld, t)
    return [tv_profile_distance(base, solve_spectral(dom, fld, t * (1.0 + s)))
            for s in s_values]


def _run_aging_solution(cfg: ExperimentConfig, out_dir):
    t0 = float(cfg.t_list[0])
    s_values = (0.25, 0.5, 1.0, 2.0)
    jobs = [(cfg.dim, cfg.rho, t0, s_values, _replica_seed(cfg.seed, i))
            for i in range(cfg.replicas)]
    tvs = np.asarray(_map_replicas(_aging_solution_replica, jobs,
                                   cfg.workers))
    rows = []
    for j, s in enumerate(s_values):
        col = tvs[:, j]
        rows.append((t0, s, cfg.replicas, float(col.mean()),
                     float(np.median(col)), float((col < 1.0).mean()),
                     cfg.seed))
    path = os.path.join(out_dir, "aging_solution.csv")
    _write_csv(path, ["t", "s", "n", "mean_tv", "median_tv",
                      "frac_tv_below_1", "seed"], rows)
    return {"aging_solution.csv": len(rows)}, {}


def _run_limit_laws(cfg: ExperimentConfig, out_dir):
    from scipy import stats as sstats

    thetas = [float(v) for v in cfg.t_list]
    n = cfg.replicas
    rows = []
    oracle_rows = []
    for theta in thetas:
        mx = limits.sample_limit_maxima(cfg.dim, theta, n, seed=cfg.seed)
        ks_psi = sstats.kstest(
            mx.psi, lambda x: limits.limit_cdf_gumbel(x, theta, cfg.dim))
        ks_z = sstats.kstest(
            mx.z[:, 0], lambda x: limits.limit_cdf_laplace(x, theta))
        corr = float(np.corrcoef(mx.psi, np.abs(mx.z[:, 0]))[0, 1])
        rows.append((theta, n, float(ks_psi.statistic),
                     float(ks_psi.pvalue), float(ks_z.statistic),
                     float(ks_z.pvalue), corr, cfg.seed))
        loc = cfg.dim * math.log(2.0 * theta)
        for x in np.linspace(loc - 5.0, loc + 10.0, 151):
            oracle_rows.append(
                (theta, "gumbel", float(x),
                 float(limits.limit_cdf_gumbel(x, theta, cfg.dim))))
        for x in np.linspace(-8.0 * theta, 8.0 * theta, 151):
            oracle_rows.append(
                (theta, "laplace", float(x),
                 float(limits.limit_cdf_laplace(x, theta))))
    path = os.path.join(out_dir, "limit_laws.csv")
    _write_csv(path, ["theta", "n", "ks_psi", "p_psi", "ks_z", "p_z",
                      "corr_psi_absz", "seed"], rows)
    opath = os.path.join(out_dir, "limit_law_oracle.csv")
    _write_csv(opath, ["theta", "kind", "x", "cdf"], oracle_rows)
    return {"limit_laws.csv": len(rows),
            "limit_law_oracle.csv": len(oracle_rows)}, {}


def _run_theta_tail(cfg: ExperimentConfig, out_dir):
    s_values = [float(v) for v in cfg.t_list]
    ctrl = limits.TruncationControl(policy=cfg.window_policy)
    samples = limits.theta_sampler(cfg.dim, cfg.replicas, seed=cfg.seed,
                                   truncation_ctrl=ctrl)
    rows = []
    oracle_rows = []
    for s in s_values:
        p, se, bias = samples.survival(s)
        rows.append((s, samples.n, samples.n_censored, p, se, bias,
                     limits.aging_tail_oracle(s, dim=cfg.dim),
                     float(limits.theta_tail_asymptote(s, dim=cfg.dim))
                     if s > 1 else float("nan"),
                     cfg.seed))
    for s in np.geomspace(0.25, 2000.0, 60):
        oracle_rows.append(
            (float(s), limits.aging_tail_oracle(float(s), dim=cfg.dim),
             float(limits.theta_tail_asymptote(float(s), dim=cfg.dim))
             if s > 1 else float("nan")))
    path = os.path.join(out_dir, "theta_tail.csv")
    _write_csv(path, ["s", "n", "n_censored", "mc", "stderr", "bias_bound",
                      "quadrature", "asymptote", "seed"], rows)
    opath = os.path.join(out_dir, "theta_tail_oracle.csv")
    _write_csv(opath, ["s", "quadrature", "asymptote"], oracle_rows)
    return {"theta_tail.csv": len(rows),
            "theta_tail_oracle.csv": len(oracle_rows)}, \
        {"max_void_mass": samples.max_void_mass,
         "censored": samples.n_censored}


def _run_chi_scan(cfg: ExperimentConfig, out_dir):
    R_list = list(range(0, 7))
    t0 = time.perf_counter()
    sols = chi_monotonicity_scan(cfg.rho, R_list, dim=cfg.dim)
    elapsed = time.perf_counter() - t0
    first = sols[0].chi_R
    if abs(first - 2.0 * cfg.dim) > 1e-12:
        raise InternalConsistencyError(
            f"chi at R = 0 is {first!r}, expected exactly {2.0 * cfg.dim}")
    rows = [(s.R, s.chi_R, s.residual, s.iterations) for s in sols]
    path = os.path.join(out_dir, "chi_scan.csv")
    _write_csv(path, ["R", "chi", "residual", "iterations"], rows)
    return {"chi_scan.csv": len(rows)}, {"scan_seconds": elapsed}


def _xval_replica(job):
    dim, rho, index, seed = job
    rng = np.random.default_rng(seed)
    radius = int(rng.integers(3, 11))
    t = float(rng.uniform(0.25, 2.0))
    win = box((0,) * dim, radius)
    fld = sample_field(dim, win, rho, seed=seed + 1)
    dom = LatticeDomain.from_box(win)
    spec = solve_spectral(dom, fld, t)
    ode = solve_ode(dom, fld, t)
    scale_u = float(np.abs(spec.values).max())
    rel_u = float(np.abs(spec.values - ode.values).max() / scale_u)
    rel_U = float(abs(spec.total_mass - ode.total_mass)
                  / abs(spec.total_mass))
    return (index, seed, dom.n, t, rel_u, rel_U)


def _run_solver_xval(cfg: ExperimentConfig, out_dir):
    jobs = [(cfg.dim, cfg.rho, i, _replica_seed(cfg.seed, i))
            for i in range(cfg.replicas)]
    rows = _map_replicas(_xval_replica, jobs, cfg.workers)
    path = os.path.join(out_dir, "solver_xval.csv")
    _write_csv(path, ["instance", "seed", "sites", "t", "rel_err_u",
                      "rel_err_mass"], rows)
    worst_u = max(r[4] for r in rows)
    worst_U = max(r[5] for r in rows)
    return {"solver_xval.csv": len(rows)}, \
        {"max_rel_err_u": worst_u, "max_rel_err_mass": worst_U}


_RUNNERS = {
    "mass-concentration": _run_mass_concentration,
    "aging-Z": _run_aging_z,
    "aging-solution": _run_aging_solution,
    "limit-laws": _run_limit_laws,
    "theta-tail": _run_theta_tail,
    "chi-scan": _run_chi_scan,
    "solver-xval": _run_solver_xval,
}


def run(config: ExperimentConfig) -> dict:
    """Execute one experiment; returns the manifest written alongside CSVs.

    Any error inside the experiment body still writes a manifest marked
    incomplete before propagating.
    """
    errs = _config_errors(config)
    if errs:
        raise ConfigError("invalid config: " + "; ".join(errs))
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "experiment": config.experiment,
        "config": asdict(config),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "seed": config.seed,
        "seed_stride": _SEED_STRIDE,
        "status": "incomplete",
        "outputs": {},
        "extras": {},
        "elapsed_seconds": None,
    }
    t0 = time.perf_counter()
    try:
        outputs, extras = _RUNNERS[config.experiment](config, out_dir)
        manifest["outputs"] = outputs
        manifest["extras"] = extras
        manifest["status"] = "complete"
    except Exception as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        manifest["elapsed_seconds"] = time.perf_counter() - t0
        mpath = os.path.join(out_dir, "manifest.json")
        with open(mpath, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, default=str)
            fh.write("\n")
    return manifest
