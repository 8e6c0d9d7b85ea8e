"""Command-line front end for field sampling, solvers and experiments.

Every subcommand is seeded and deterministic; tabular results go to
stdout or --out as CSV (UTF-8, header row, 17 significant digits) or
JSON records.  Exit codes: 0 success, 2 invalid parameters or config,
3 numeric or convergence failure, 4 resource exhaustion.
"""

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import experiments, limits
from .errors import PamlabError
from .localization import find_capitals, islands, order_stats, z_trajectory
from .pam import solve_ode, solve_spectral, expm_oracle
from .potential import box, sample_field
from .spectral import LatticeDomain, top_k_eigs
from .variational import chi_monotonicity_scan


def _fmt_cell(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _emit(header, rows, fmt, out):
    if fmt == "json":
        records = [dict(zip(header, row)) for row in rows]
        text = json.dumps(records, indent=2, default=str) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row])
        text = buf.getvalue()
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _field_from_args(args):
    win = box((0,) * args.dim, args.radius)
    return win, sample_field(args.dim, win, args.rho, seed=args.seed)


def _add_field_args(p):
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--radius", type=int, default=25)
    p.add_argument("--rho", type=float, default=1.0)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _cmd_sample_field(args):
    win, fld = _field_from_args(args)
    rows = [tuple(site) + (float(v),)
            for site, v in zip(win.sites(), fld.values)]
    header = [f"x{i}" for i in range(args.dim)] + ["xi"]
    _emit(header, rows, args.format, args.out)
    return 0


def _cmd_eig(args):
    win, fld = _field_from_args(args)
    dom = LatticeDomain.from_box(win)
    pairs = top_k_eigs(dom, fld.values_at(dom.sites), args.k)
    rows = [(r + 1, p.lam, float(np.abs(p.phi).max()))
            for r, p in enumerate(pairs)]
    _emit(["rank", "lam", "phi_max"], rows, args.format, args.out)
    return 0


def _cmd_solve(args):
    win, fld = _field_from_args(args)
    dom = LatticeDomain.from_box(win)
    if args.method == "spectral":
        sol = solve_spectral(dom, fld, args.t)
    elif args.method == "ode":
        sol = solve_ode(dom, fld, args.t)
    else:
        sol = expm_oracle(dom, fld, args.t)
    rows = [tuple(site) + (float(u),)
            for site, u in zip(dom.sites, sol.values)]
    header = [f"x{i}" for i in range(args.dim)] + ["u"]
    _emit(header, rows, args.format, args.out)
    sys.stderr.write(f"total mass {sol.total_mass:.17g}\n")
    return 0


def _cmd_capitals(args):
    win, fld = _field_from_args(args)
    caps = find_capitals(fld, win, margin_policy="exclude")
    rows = [(str(c.z), c.varrho, c.xi_value, c.lambda_C) for c in caps]
    _emit(["z", "varrho", "xi", "lambda_C"], rows, args.format, args.out)
    return 0


def _cmd_islands(args):
    win, fld = _field_from_args(args)
    isl = islands(fld, args.L, args.A, args.beta_r)
    rows = [(i, str(g.z_C), len(g.sites), g.lambda1, int(g.relevant))
            for i, g in enumerate(isl)]
    _emit(["island", "z_C", "sites", "lambda1", "relevant"],
          rows, args.format, args.out)
    return 0


def _cmd_ztraj(args):
    _, fld = _field_from_args(args)
    grid = np.linspace(args.t_lo, args.t_hi, args.points)
    # default search box (radius L_{t_max}) keeps the capital comparison
    # balls inside the sampled window; the window itself is too wide
    traj = z_trajectory(fld, grid)
    rows = [(float(t), str(st.top.z), st.top.psi, st.top.lambda_C)
            for t, st in zip(traj.t_grid, traj.stats)]
    _emit(["t", "z", "psi", "lambda_C"], rows, args.format, args.out)
    sys.stderr.write(
        "jump times: " + ",".join(f"{v:.6g}" for v in traj.jump_times) + "\n")
    return 0


def _cmd_ppp(args):
    mx = limits.sample_limit_maxima(args.dim, args.theta, args.n,
                                    seed=args.seed)
    rows = [(i, float(mx.psi[i]), float(mx.lam[i]))
            + tuple(float(v) for v in mx.z[i]) for i in range(args.n)]
    header = ["draw", "psi", "lam"] + [f"z{i}" for i in range(args.dim)]
    _emit(header, rows, args.format, args.out)
    return 0


def _cmd_theta(args):
    ctrl = limits.TruncationControl(policy=args.policy)
    ts = limits.theta_sampler(args.dim, args.n, seed=args.seed,
                              truncation_ctrl=ctrl)
    rows = [(i, float(ts.values[i]), int(ts.censored[i]),
             int(ts.extension_counts[i])) for i in range(ts.n)]
    _emit(["draw", "theta", "censored", "extensions"],
          rows, args.format, args.out)
    return 0


def _cmd_chi(args):
    sols = chi_monotonicity_scan(args.rho, list(range(args.r_max + 1)),
                                 dim=args.dim)
    rows = [(s.R, s.chi_R, s.residual, s.iterations) for s in sols]
    _emit(["R", "chi", "residual", "iterations"], rows, args.format, args.out)
    return 0


def _cmd_run(args):
    cfg = experiments.validate_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    if args.workers:
        cfg.workers = args.workers
    manifest = experiments.run(cfg)
    sys.stderr.write(f"wrote {', '.join(manifest['outputs'])} "
                     f"to {cfg.out_dir}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pamlab",
        description="Lattice simulation laboratory for localized random "
                    "heat flow: fields, solvers, localization statistics "
                    "and limit-law samplers.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-field", help="draw one potential field")
    _add_field_args(p); _add_common(p)
    p.set_defaults(fn=_cmd_sample_field)

    p = sub.add_parser("eig", help="leading Dirichlet eigenpairs")
    _add_field_args(p); _add_common(p)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(fn=_cmd_eig)

    p = sub.add_parser("solve", help="solve the lattice heat equation")
    _add_field_args(p); _add_common(p)
    p.add_argument("--t", type=float, default=2.0)
    p.add_argument("--method", choices=("spectral", "ode", "expm"),
                   default="spectral")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("capitals", help="locally dominant sites")
    _add_field_args(p); _add_common(p)
    p.set_defaults(fn=_cmd_capitals)

    p = sub.add_parser("islands", help="high-exceedance islands")
    _add_field_args(p); _add_common(p)
    p.add_argument("--L", type=float, default=100.0)
    p.add_argument("--A", type=float, default=1.0)
    p.add_argument("--beta-r", type=float, default=0.5)
    p.set_defaults(fn=_cmd_islands)

    p = sub.add_parser("ztraj", help="localization center trajectory")
    _add_field_args(p); _add_common(p)
    p.add_argument("--t-lo", type=float, default=20.0)
    p.add_argument("--t-hi", type=float, default=60.0)
    p.add_argument("--points", type=int, default=21)
    p.set_defaults(fn=_cmd_ztraj)

    p = sub.add_parser("ppp", help="limiting penalized maxima draws")
    _add_common(p)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--n", type=int, default=1000)
    p.set_defaults(fn=_cmd_ppp)

    p = sub.add_parser("theta", help="aging-variable draws")
    _add_common(p)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--policy", choices=("staircase", "box"),
                   default="staircase")
    p.set_defaults(fn=_cmd_theta)

    p = sub.add_parser("chi", help="variational constant scan")
    _add_common(p)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--r-max", type=int, default=6)
    p.set_defaults(fn=_cmd_chi)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=_cmd_run)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except PamlabError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
