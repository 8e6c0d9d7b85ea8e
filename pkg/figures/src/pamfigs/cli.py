"""Command line wrapper: render figures from JSON spec files."""

from __future__ import annotations

import argparse
import sys

from .errors import PamfigsError
from .render import render
from .spec import load_spec


def _cmd_render(args) -> int:
    spec = load_spec(args.spec)
    if args.out:
        spec.output = args.out
        spec.validate()
    path = render(spec)
    sys.stderr.write(f"wrote {path}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pamfigs",
        description="Batch figure renderer for the lattice localization "
                    "laboratory's CSV result tables.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render one figure from a spec file")
    p.add_argument("--spec", required=True, help="JSON figure spec")
    p.add_argument("--out", default=None,
                   help="override the output path in the spec")
    p.set_defaults(fn=_cmd_render)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except PamfigsError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
