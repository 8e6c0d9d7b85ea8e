"""Figure specs: which tables to read, what to draw, where to write it.

A spec is a small JSON object:

    {"kind": "chi-vs-R",
     "inputs": {"data": "out/chi_scan.csv"},
     "output": "figs/chi.png",
     "style": {"title": "variational cost"}}

``inputs`` maps a role to a CSV path. Every kind needs a ``data`` table;
``cdf-vs-limit`` and ``theta-tail-loglog`` also accept an ``oracle`` table
of reference values used to cross-check the drawn overlay.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import SpecError

FIGURE_KINDS = (
    "concentration-vs-R",
    "cdf-vs-limit",
    "theta-tail-loglog",
    "z-trajectory",
    "chi-vs-R",
    "eigenfunction-decay",
)

IMAGE_SUFFIXES = (".png", ".svg", ".pdf")

_KIND_ROLES = {
    "cdf-vs-limit": ("data", "oracle"),
    "theta-tail-loglog": ("data", "oracle"),
}

_BASE_STYLE = ("title", "figsize", "dpi")

_KIND_STYLE = {
    "concentration-vs-R": ("show_mean",),
    "cdf-vs-limit": ("family", "theta", "dim", "value_column"),
    "theta-tail-loglog": ("dim",),
    "z-trajectory": ("coordinate",),
    "chi-vs-R": (),
    "eigenfunction-decay": ("value_column", "fit"),
}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass
class FigureSpec:
    """One figure request; rendering never mutates the input tables."""

    kind: str
    inputs: dict
    output: str
    style: dict = field(default_factory=dict)

    def validate(self) -> None:
        """Collect every problem and raise one SpecError listing them."""
        problems = []
        if self.kind not in FIGURE_KINDS:
            problems.append(
                f"unknown figure kind {self.kind!r}; expected one of "
                f"{', '.join(FIGURE_KINDS)}")
            raise SpecError(problems)
        problems += self._check_inputs()
        problems += self._check_output()
        problems += self._check_style()
        if problems:
            raise SpecError(problems)

    def _check_inputs(self):
        problems = []
        if not isinstance(self.inputs, dict) or not self.inputs:
            return [f"inputs must be a non-empty mapping of role to CSV "
                    f"path, got {self.inputs!r}"]
        allowed = _KIND_ROLES.get(self.kind, ("data",))
        for role, path in self.inputs.items():
            if role not in allowed:
                problems.append(
                    f"figure kind '{self.kind}' accepts input role(s) "
                    f"{list(allowed)}, not {role!r}")
            elif not isinstance(path, str) or not path:
                problems.append(f"input '{role}' must be a CSV path")
            elif not os.path.isfile(path):
                problems.append(f"input '{role}': no such file: {path}")
        if "data" not in self.inputs:
            problems.append("an input with role 'data' is required")
        return problems

    def _check_output(self):
        if not isinstance(self.output, str) or not self.output:
            return [f"output must be an image path, got {self.output!r}"]
        suffix = os.path.splitext(self.output)[1].lower()
        if suffix not in IMAGE_SUFFIXES:
            return [f"output suffix {suffix!r} is not supported; use one "
                    f"of {', '.join(IMAGE_SUFFIXES)}"]
        return []

    def _check_style(self):
        problems = []
        if not isinstance(self.style, dict):
            return [f"style must be a mapping, got {self.style!r}"]
        allowed = _BASE_STYLE + _KIND_STYLE[self.kind]
        for key in self.style:
            if key not in allowed:
                problems.append(
                    f"unknown style key {key!r} for kind '{self.kind}'; "
                    f"allowed: {', '.join(allowed)}")
        problems += self._check_style_values()
        if self.kind == "cdf-vs-limit":
            fam = self.style.get("family")
            if fam not in ("gumbel", "laplace"):
                problems.append(
                    "cdf-vs-limit needs style.family set to 'gumbel' or "
                    f"'laplace', got {fam!r}")
            theta = self.style.get("theta")
            if not _is_number(theta) or theta <= 0:
                problems.append(
                    f"cdf-vs-limit needs a positive style.theta, got "
                    f"{theta!r}")
        return problems

    def _check_style_values(self):
        checks = {
            "title": (lambda v: isinstance(v, str), "a string"),
            "figsize": (lambda v: isinstance(v, (list, tuple))
                        and len(v) == 2
                        and all(_is_number(e) and e > 0 for e in v),
                        "two positive numbers"),
            "dpi": (lambda v: _is_number(v) and v > 0, "a positive number"),
            "dim": (lambda v: isinstance(v, int)
                    and not isinstance(v, bool) and v >= 1,
                    "a positive integer"),
            "value_column": (lambda v: isinstance(v, str) and v,
                             "a column name"),
            "fit": (lambda v: isinstance(v, bool), "a boolean"),
            "show_mean": (lambda v: isinstance(v, bool), "a boolean"),
            "coordinate": (lambda v: isinstance(v, int)
                           and not isinstance(v, bool) and v >= 0,
                           "a non-negative integer"),
        }
        problems = []
        for key, value in self.style.items():
            if key in checks:
                ok, expected = checks[key]
                if not ok(value):
                    problems.append(
                        f"style.{key} must be {expected}, got {value!r}")
        return problems


def load_spec(path) -> FigureSpec:
    """Parse and validate a JSON spec file."""
    if not os.path.isfile(path):
        raise SpecError(f"no such spec file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(
            f"{path}: invalid JSON at line {exc.lineno}, column "
            f"{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise SpecError(f"{path}: spec must be a JSON object")
    known = {"kind", "inputs", "output", "style"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise SpecError(
            f"{path}: unknown key(s) {unknown}; allowed: {sorted(known)}")
    missing = sorted(k for k in ("kind", "inputs", "output") if k not in raw)
    if missing:
        raise SpecError(f"{path}: missing required key(s) {missing}")
    spec = FigureSpec(kind=raw["kind"], inputs=raw["inputs"],
                      output=raw["output"], style=raw.get("style", {}))
    spec.validate()
    return spec
