"""Flat INI experiment definitions: parsing, defaults and validation.

Every problem found is collected and reported together. Lists are
comma-separated, ranges are ``lo:hi`` and points are ``x y`` with points
separated by ``;``.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields
from typing import Any, Callable

from .errors import ConfigParseError, ConfigValidationError, VarsobError
from .exponents import critical_set, field_from_spec, spec_callable
from .grid import Grid
from .solver import SolverOptions

MODES = ("norm-check", "inequality-fuzz", "solve", "sweep", "localized", "bubble-demo",
         "sufficient-condition")

REQUIRED = object()


def _float_list(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _ranges(text):
    out = []
    for part in text.split(","):
        lo, hi = part.split(":")
        out.append((float(lo), float(hi)))
    return out


def _points(text):
    return [tuple(float(v) for v in part.split()) for part in text.split(";") if part.strip()]


def _triples(text):
    out = []
    for part in text.split(","):
        a, b, c = (float(v) for v in part.split(":"))
        out.append((a, b, c))
    return out


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        if value and isinstance(value[0], tuple):
            if len(value[0]) == 3 and all(isinstance(v, float) for v in value[0]):
                return ", ".join(":".join(repr(v) for v in t) for t in value)
            return "; ".join(" ".join(repr(v) for v in t) for t in value)
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    return str(value)


def _fmt_ranges(value) -> str:
    return ", ".join(f"{lo!r}:{hi!r}" for lo, hi in value)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable, Any]]] = {
    "experiment": {"mode": (str, REQUIRED), "seed": (int, 0), "output_dir": (str, "runs/out"),
                   "name": (str, "experiment")},
    "domain": {"dim": (int, REQUIRED), "cells": (_int_list, REQUIRED), "extents": (_ranges, None)},
    "exponents": {"p": (str, REQUIRED), "q": (str, None), "crit_tol": (float, 1e-6)},
    "solver": {"tol": (float, 1e-9), "patience": (int, 5), "max_iters": (int, 5000),
               "restarts": (int, 4), "eta0": (float, 1.0), "eta_max": (float, 1e8),
               "metric_refresh": (int, 20), "threads": (int, 1)},
    "norm-check": {"function": (str, REQUIRED)},
    "inequality-fuzz": {"hoelder_trials": (int, 10000),
                        "elementary_samples": (int, 100000),
                        "elementary_cases": (_triples, [(1.5, 1.5, 0.75), (2.0, 2.0, 1.0), (1.2, 4.0, 0.5)])},
    "solve": {"eps": (float, 0.0)},
    "sweep": {"eps_schedule": (_float_list, REQUIRED), "radius": (float, 0.0),
              "conc_threshold": (float, 0.9), "compact_threshold": (float, 0.05)},
    "localized": {"centers": (_points, REQUIRED), "radii": (_float_list, REQUIRED), "eps": (float, 0.0)},
    "bubble-demo": {"center": (_points, REQUIRED), "scales": (_float_list, REQUIRED),
                    "target_mass": (float, 1.0), "profile": (str, "smooth"),
                    "test_function": (str, "")},
    "sufficient-condition": {"radii": (_float_list, REQUIRED), "samples": (int, 3),
                             "margin": (float, 0.02), "centers": (_points, [])},
}
BASE_SECTIONS = ("experiment", "domain", "exponents", "solver")


@dataclass
class ExperimentConfig:
    mode: str
    seed: int
    output_dir: str
    name: str
    dim: int
    cells: list
    extents: list
    p_spec: str
    q_spec: str | None
    crit_tol: float
    solver: SolverOptions
    params: dict = field(default_factory=dict)

    def grid(self) -> Grid:
        return Grid(tuple(self.extents), tuple(self.cells))

    @property
    def eps_schedule(self) -> list:
        return list(self.params.get("eps_schedule", []))

    def effective_text(self) -> str:
        """Defaults-expanded config in canonical section and key order.

        The output directory is a run location, not part of the experiment,
        so it is left out and relocated reruns hash identically.
        """
        lines = ["[experiment]", f"mode = {self.mode}", f"seed = {self.seed}",
                 f"name = {self.name}", "",
                 "[domain]", f"dim = {self.dim}", f"cells = {_fmt(self.cells)}",
                 f"extents = {_fmt_ranges(self.extents)}", "",
                 "[exponents]", f"p = {self.p_spec}"]
        if self.q_spec is not None:
            lines.append(f"q = {self.q_spec}")
        lines += [f"crit_tol = {self.crit_tol!r}", "", "[solver]"]
        for f in fields(SolverOptions):
            if f.name in SCHEMA["solver"]:
                lines.append(f"{f.name} = {_fmt(getattr(self.solver, f.name))}")
        lines += ["", f"[{self.mode}]"]
        for key in SCHEMA[self.mode]:
            lines.append(f"{key} = {_fmt(self.params[key])}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.effective_text().encode()).hexdigest()[:16]


def _read(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError("content before the first [section]", exc.lineno) from exc
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigParseError(str(exc), exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigParseError(f"cannot parse {line!r}", lineno) from exc
    return cp


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigParseError or ConfigValidationError."""
    cp = _read(text)
    problems: list[str] = []
    values: dict[str, dict[str, Any]] = {}

    mode = cp.get("experiment", "mode", fallback=None) if cp.has_section("experiment") else None
    if mode is None:
        problems.append("[experiment] mode is required")
    elif mode not in MODES:
        problems.append(f"[experiment] mode '{mode}' is not one of {', '.join(MODES)}")
        mode = None
    wanted = list(BASE_SECTIONS) + ([mode] if mode else [])

    for section in cp.sections():
        if section not in SCHEMA:
            problems.append(f"unknown section [{section}]")
        elif section not in wanted:
            problems.append(f"section [{section}] does not apply to mode '{mode}'")
    for section in wanted:
        values[section] = {}
        present = cp[section] if cp.has_section(section) else {}
        for key in present:
            if key not in SCHEMA[section]:
                problems.append(f"[{section}] unknown key '{key}'")
        for key, (parse, default) in SCHEMA[section].items():
            if key in present:
                try:
                    values[section][key] = parse(present[key])
                except (ValueError, TypeError):
                    problems.append(f"[{section}] {key}: cannot parse {present[key]!r}")
            elif default is REQUIRED:
                problems.append(f"[{section}] {key} is required")
            else:
                values[section][key] = default
    if problems or mode is None:
        raise ConfigValidationError(problems)

    dom, exps, sol, par = values["domain"], values["exponents"], values["solver"], values[mode]
    dim = dom["dim"]
    if dim not in (1, 2):
        problems.append(f"[domain] dim must be 1 or 2, got {dim}")
    if len(dom["cells"]) != dim:
        problems.append(f"[domain] cells lists {len(dom['cells'])} axes for dim = {dim}")
    if any(c < 2 for c in dom["cells"]):
        problems.append("[domain] every axis needs at least 2 cells")
    extents = dom["extents"] or [(0.0, 1.0)] * dim
    if len(extents) != dim:
        problems.append(f"[domain] extents lists {len(extents)} axes for dim = {dim}")
    if any(hi <= lo for lo, hi in extents):
        problems.append("[domain] every extent needs lo < hi")
    if mode not in ("norm-check", "inequality-fuzz") and exps["q"] is None:
        problems.append(f"[exponents] q is required for mode '{mode}'")
    if exps["crit_tol"] <= 0:
        problems.append("[exponents] crit_tol must be positive")

    if sol["tol"] <= 0 or sol["eta0"] <= 0 or sol["eta_max"] < sol["eta0"]:
        problems.append("[solver] need tol > 0 and 0 < eta0 <= eta_max")
    if sol["patience"] < 1 or sol["max_iters"] < 1 or sol["restarts"] < 1 or sol["threads"] < 1:
        problems.append("[solver] patience, max_iters, restarts and threads must be >= 1")
    if sol["metric_refresh"] < 0:
        problems.append("[solver] metric_refresh must be >= 0")

    if mode == "sweep":
        sched = par["eps_schedule"]
        if any(a <= b for a, b in zip(sched, sched[1:])):
            problems.append("[sweep] schedule not decreasing")
        if any(e < 0 for e in sched):
            problems.append("[sweep] schedule entries must be >= 0")
    if mode in ("solve", "localized") and par["eps"] < 0:
        problems.append(f"[{mode}] eps must be >= 0")
    if mode == "bubble-demo":
        if any(s <= 0 for s in par["scales"]):
            problems.append("[bubble-demo] scales must be positive")
        if len(par["center"]) != 1:
            problems.append("[bubble-demo] center takes exactly one point")
        if par["profile"] not in ("smooth", "tent"):
            problems.append("[bubble-demo] profile must be smooth or tent")
    if mode == "sufficient-condition" and par["samples"] < 1:
        problems.append("[sufficient-condition] samples must be >= 1")
    for key in ("centers", "center"):
        for pt in par.get(key, []):
            if len(pt) != dim:
                problems.append(f"[{mode}] point {pt} has {len(pt)} coordinates for dim = {dim}")

    if not problems:
        grid = Grid(tuple(extents), tuple(dom["cells"]))
        problems += _check_fields(grid, dim, exps, mode, par)
    if problems:
        raise ConfigValidationError(problems)

    opts = SolverOptions(tol=sol["tol"], patience=sol["patience"], max_iters=sol["max_iters"],
                         restarts=sol["restarts"], seed=values["experiment"]["seed"],
                         eta0=sol["eta0"], eta_max=sol["eta_max"],
                         metric_refresh=sol["metric_refresh"], threads=sol["threads"])
    exp = values["experiment"]
    return ExperimentConfig(mode, exp["seed"], exp["output_dir"], exp["name"], dim, dom["cells"],
                            extents, exps["p"].strip(), None if exps["q"] is None else exps["q"].strip(),
                            exps["crit_tol"], opts, par)


def _check_fields(grid: Grid, dim: int, exps: dict, mode: str, par: dict) -> list:
    problems = []
    fields_ = {}
    for key in ("p", "q"):
        if exps[key] is None:
            continue
        try:
            fields_[key] = field_from_spec(grid, exps[key])
        except VarsobError as exc:
            problems.append(f"[exponents] {key}: {exc}")
    if "p" in fields_ and "q" in fields_:
        try:
            critical_set(fields_["p"], fields_["q"], dim, exps["crit_tol"])
        except VarsobError as exc:
            problems.append(f"[exponents] {exc}")
    h2 = 2 * max(grid.spacing)
    for key in ("radii",):
        if key in par and any(r < h2 * (1 - 1e-12) for r in par[key]):
            problems.append(f"[{mode}] radii must be at least two grid spacings ({h2!r})")
    if mode == "sweep" and par["radius"] and par["radius"] < h2 * (1 - 1e-12):
        problems.append(f"[sweep] radius must be at least two grid spacings ({h2!r})")
    for key in ("function", "test_function"):
        if par.get(key):
            try:
                spec_callable(grid, par[key])
            except VarsobError as exc:
                problems.append(f"[{mode}] {key}: {exc}")
    return problems


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
