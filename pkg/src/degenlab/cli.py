"""Scenario runner: YAML scenario in, JSON report and CSV samples out.

Exit codes: 0 when every check is consistent or certified, 2 when at least one
check produced a violation witness, 1 on invalid input or execution errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from . import __version__, checkers, eigenops, regions
from . import fields as fieldlib
from .checkers import CheckConfig, CheckReport
from .eigenops import OperatorSpec
from .errors import DegenLabError, ParseError, ValidationError
from .grid import GridSpec

SCHEMA_VERSION = 1
CHECKS = ("viscosity", "g_condition", "c_k", "curvature", "smp", "equivalence", "convexity",
          "roundtrip", "locality")
REQUIRED = {
    "viscosity": ("operator", "field", "forcing", "grid"),
    "g_condition": ("operator", "region"),
    "c_k": ("region", "k"),
    "curvature": ("operator", "region", "grid"),
    "smp": ("operator", "forcing", "omega"),
    "equivalence": ("region", "k"),
    "convexity": ("region", "grid"),
    "roundtrip": ("operator", "field", "grid"),
    "locality": ("operator", "region", "sub_boxes"),
}
TOP_KEYS = ("name", "description", "dim", "seed", "operator", "region", "omega", "field", "forcing",
            "checks", "grid", "k", "tolerances", "sub_boxes", "output", "options")
FIELD_BUILTINS = ("example1", "example2", "distance", "indicator", "constant")
OPTION_KEYS = {"short_circuit": False, "parallel": False}
OUTPUT_KEYS = ("json", "csv_dir")
TUNABLE = tuple(f.name for f in dc_fields(CheckConfig) if f.name != "seed")


@dataclass
class Scenario:
    """A validated scenario with its objects built."""

    raw: dict
    dim: int
    seed: int
    checks: List[str]
    cfg: CheckConfig
    op: Optional[OperatorSpec] = None
    region: Optional[regions.RegionSpec] = None
    omega: Optional[regions.RegionSpec] = None
    u: Optional[fieldlib.ScalarField] = None
    f: Optional[fieldlib.ScalarField] = None
    grid: Optional[GridSpec] = None
    k: Optional[int] = None
    sub_boxes: Optional[list] = None
    output: Dict[str, Any] = field(default_factory=dict)
    options: Dict[str, Any] = field(default_factory=dict)

    def resolved(self) -> dict:
        """The scenario echo with defaults expanded."""
        d = {key: self.raw[key] for key in TOP_KEYS if key in self.raw}
        d["tolerances"] = self.cfg.to_dict()
        d["options"] = dict(self.options)
        if self.grid is not None:
            d["grid"] = self.grid.to_dict()
        if self.op is not None:
            d["operator"] = self.op.to_dict()
        d.pop("output", None)  # paths do not affect results
        return checkers._clean(d)


@dataclass
class RunReport:
    scenario: dict
    reports: List[CheckReport]
    wall_times: List[float]
    version: str = __version__

    @property
    def exit_code(self) -> int:
        return 2 if any(r.verdict == checkers.VIOLATION for r in self.reports) else 0

    def to_dict(self, timings: bool = False) -> dict:
        d = {"schema_version": SCHEMA_VERSION, "version": self.version, "scenario": self.scenario,
             "checks": [r.to_dict() for r in self.reports], "exit_code": self.exit_code}
        if timings:
            d["wall_times"] = [round(t, 3) for t in self.wall_times]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# validation


def _expect_map(value, key):
    if not isinstance(value, dict):
        raise ValidationError(key, f"{key!r} must be a mapping")
    return value


def _only_keys(value: dict, allowed, key):
    for name in value:
        if name not in allowed:
            raise ValidationError(f"{key}.{name}" if key else str(name), f"unknown key {name!r}"
                                  + (f" in {key!r}" if key else ""))


def _int(value, key, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(key, f"{key!r} must be an integer")
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ValidationError(key, f"{key!r} out of range")
    return value


def _vector(value, key, dim):
    if not isinstance(value, (list, tuple)) or len(value) != dim:
        raise ValidationError(key, f"{key!r} must be a list of {dim} numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ValidationError(key, f"{key!r} must be a list of {dim} numbers") from None


def _wrap(key, fn, *args, **kwargs):
    """Run a constructor, turning library and argument errors into ValidationError."""
    try:
        return fn(*args, **kwargs)
    except ValidationError:
        raise
    except (DegenLabError, TypeError, ValueError, KeyError) as e:
        raise ValidationError(key, f"invalid {key!r}: {e}") from e


def _build_operator(spec, dim) -> OperatorSpec:
    spec = _expect_map(spec, "operator")
    _only_keys(spec, ("kind", "k"), "operator")
    for name in ("kind", "k"):
        if name not in spec:
            raise ValidationError(f"operator.{name}")
    if spec["kind"] not in (eigenops.LAMBDA_K, eigenops.PMINUS_K, eigenops.PPLUS_K):
        raise ValidationError("operator.kind", f"unknown operator kind {spec['kind']!r}")
    k = _int(spec["k"], "operator.k", 1, dim)
    return _wrap("operator", OperatorSpec, spec["kind"], k)


def _build_region(spec, dim, key) -> regions.RegionSpec:
    spec = _expect_map(spec, key)
    if "builtin" in spec:
        _only_keys(spec, ("builtin", "params"), key)
        name = spec["builtin"]
        params = dict(_expect_map(spec.get("params", {}) or {}, f"{key}.params"))
        if name not in regions.BUILTIN_REGIONS:
            raise ValidationError(f"{key}.builtin", f"unknown region {name!r}")
        if name in ("ball", "halfspace", "slab", "union_balls", "l_shape", "graph_epigraph"):
            params.setdefault("dim", dim)
        region = _wrap(key, regions.builtin_region, name, **params)
    elif "signed_distance" in spec:
        _only_keys(spec, ("signed_distance", "lo", "hi"), key)
        for name in ("lo", "hi"):
            if name not in spec:
                raise ValidationError(f"{key}.{name}")
        lo = _vector(spec["lo"], f"{key}.lo", dim)
        hi = _vector(spec["hi"], f"{key}.hi", dim)
        from .expr import evaluate, parse_expression

        e = _wrap(f"{key}.signed_distance", parse_expression, spec["signed_distance"], dim)
        region = _wrap(key, regions.from_signed_distance, lambda p: evaluate(e, p), dim, lo, hi,
                       source=e.source)
    else:
        raise ValidationError(f"{key}.builtin", f"{key!r} needs 'builtin' or 'signed_distance'")
    if region.dim != dim:
        raise ValidationError(key, f"{key!r} has dimension {region.dim}, scenario has {dim}")
    return region


def _build_field(spec, dim, key, region, want_forcing) -> fieldlib.ScalarField:
    spec = _expect_map(spec, key)
    if "expression" in spec:
        _only_keys(spec, ("expression", "half_width"), key)
        hw = float(spec.get("half_width", 2.0))
        return _wrap(f"{key}.expression", fieldlib.expression_field, spec["expression"], dim, hw)
    if "constant" in spec:
        _only_keys(spec, ("constant", "half_width"), key)
        return _wrap(key, fieldlib.constant_field, dim, float(spec["constant"]),
                     float(spec.get("half_width", 2.0)))
    if "builtin" not in spec:
        raise ValidationError(f"{key}.builtin", f"{key!r} needs 'builtin', 'expression' or 'constant'")
    _only_keys(spec, ("builtin", "params"), key)
    name = spec["builtin"]
    params = dict(_expect_map(spec.get("params", {}) or {}, f"{key}.params"))
    if name not in FIELD_BUILTINS:
        raise ValidationError(f"{key}.builtin", f"unknown field {name!r}")
    if name in ("example1", "example2"):
        ctor = fieldlib.builtin_example1 if name == "example1" else fieldlib.builtin_example2
        u, f = _wrap(key, ctor, dim, **params)
        return f if want_forcing else u
    if name == "constant":
        return _wrap(key, fieldlib.constant_field, dim, **params)
    if region is None:
        raise ValidationError("region", f"field {name!r} is built from the scenario region", key)
    ctor = fieldlib.distance_field if name == "distance" else fieldlib.indicator_field
    return _wrap(key, ctor, region, **params)


def _build_grid(spec, dim) -> GridSpec:
    spec = _expect_map(spec, "grid")
    _only_keys(spec, ("lo", "hi", "half_width", "center", "resolution", "fd_step"), "grid")
    if "resolution" not in spec:
        raise ValidationError("grid.resolution")
    res = _int(spec["resolution"], "grid.resolution", 3)
    step = float(spec.get("fd_step", 1e-4))
    if "half_width" in spec:
        centre = _vector(spec.get("center", [0.0] * dim), "grid.center", dim)
        return _wrap("grid", GridSpec.cube, dim, float(spec["half_width"]), res, step, centre)
    for name in ("lo", "hi"):
        if name not in spec:
            raise ValidationError(f"grid.{name}", "grid needs 'half_width' or both 'lo' and 'hi'")
    return _wrap("grid", GridSpec, _vector(spec["lo"], "grid.lo", dim),
                 _vector(spec["hi"], "grid.hi", dim), res, step)


def _build_config(seed, spec) -> CheckConfig:
    spec = _expect_map(spec or {}, "tolerances")
    _only_keys(spec, TUNABLE, "tolerances")
    base = CheckConfig(seed=seed)
    values = {}
    for name, value in spec.items():
        default = getattr(base, name)
        try:
            if isinstance(default, tuple):
                value = tuple(float(v) for v in value)
            elif isinstance(default, bool):
                value = bool(value)
            elif isinstance(default, int) and not isinstance(value, bool):
                value = int(value)
            elif value is not None:
                value = float(value)
        except (TypeError, ValueError):
            raise ValidationError(f"tolerances.{name}", f"bad value for {name!r}") from None
        values[name] = value
    return CheckConfig(seed=seed, **values)


def _build_sub_boxes(spec, dim):
    if not isinstance(spec, list) or not spec:
        raise ValidationError("sub_boxes", "'sub_boxes' must be a non-empty list of {lo, hi} maps")
    out = []
    for i, b in enumerate(spec):
        key = f"sub_boxes[{i}]"
        b = _expect_map(b, key)
        _only_keys(b, ("lo", "hi"), key)
        for name in ("lo", "hi"):
            if name not in b:
                raise ValidationError(f"{key}.{name}")
        out.append((_vector(b["lo"], f"{key}.lo", dim), _vector(b["hi"], f"{key}.hi", dim)))
    return out


def build_scenario(raw: dict) -> Scenario:
    """Validate a parsed scenario mapping and construct its objects."""
    raw = _expect_map(raw, "scenario")
    _only_keys(raw, TOP_KEYS, "")
    for name in ("seed", "dim", "checks"):
        if name not in raw:
            raise ValidationError(name)
    seed = _int(raw["seed"], "seed", 0, 2 ** 64 - 1)
    dim = _int(raw["dim"], "dim", 1, 16)
    checks = raw["checks"]
    if not isinstance(checks, list) or not checks:
        raise ValidationError("checks", "'checks' must be a non-empty list")
    for c in checks:
        if c not in CHECKS:
            raise ValidationError("checks", f"unknown check {c!r}")
    for c in checks:
        for need in REQUIRED[c]:
            if raw.get(need) is None:
                raise ValidationError(need, check=c)
    cfg = _build_config(seed, raw.get("tolerances"))
    scn = Scenario(raw, dim, seed, list(checks), cfg)
    if raw.get("operator") is not None:
        scn.op = _build_operator(raw["operator"], dim)
    if raw.get("region") is not None:
        scn.region = _build_region(raw["region"], dim, "region")
    if raw.get("omega") is not None:
        scn.omega = _build_region(raw["omega"], dim, "omega")
    if raw.get("field") is not None:
        scn.u = _build_field(raw["field"], dim, "field", scn.region, False)
    if raw.get("forcing") is not None:
        scn.f = _build_field(raw["forcing"], dim, "forcing", scn.region, True)
    if raw.get("grid") is not None:
        scn.grid = _build_grid(raw["grid"], dim)
    if raw.get("k") is not None:
        scn.k = _int(raw["k"], "k", 1, dim - 1)
    if raw.get("sub_boxes") is not None:
        scn.sub_boxes = _build_sub_boxes(raw["sub_boxes"], dim)
    out = _expect_map(raw.get("output", {}) or {}, "output")
    _only_keys(out, OUTPUT_KEYS, "output")
    scn.output = dict(out)
    opts = _expect_map(raw.get("options", {}) or {}, "options")
    _only_keys(opts, tuple(OPTION_KEYS), "options")
    scn.options = {k: bool(opts.get(k, v)) for k, v in OPTION_KEYS.items()}
    for name in ("name", "description"):
        if name in raw and not isinstance(raw[name], str):
            raise ValidationError(name, f"{name!r} must be a string")
    return scn


def load_scenario(source) -> Scenario:
    """Load from a path or from YAML text (any string containing a newline)."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else None
        raise ParseError(f"scenario is not valid YAML: {getattr(e, 'problem', e)}", location=loc) from e
    return build_scenario(raw)


# ---------------------------------------------------------------------------
# running


def run_check(scn: Scenario, name: str) -> CheckReport:
    cfg = scn.cfg
    if name == "viscosity":
        return checkers.check_viscosity_supersolution(scn.u, scn.op, scn.f, scn.grid, cfg)
    if name == "g_condition":
        return checkers.check_G_condition(scn.op, scn.omega, scn.region, cfg)
    if name == "c_k":
        return checkers.check_C_k(scn.omega, scn.region, scn.k, cfg)
    if name == "curvature":
        return checkers.check_curvature_criterion(scn.region, scn.op, scn.grid, cfg)
    if name == "smp":
        return checkers.check_smp(scn.f, scn.omega, scn.op, cfg)
    if name == "equivalence":
        return checkers.cross_check_equivalence(scn.omega, scn.region, scn.k, cfg)
    if name == "convexity":
        return checkers.check_convexity(scn.region, scn.grid, cfg)
    if name == "roundtrip":
        return checkers.positivity_set_roundtrip(scn.u, scn.op, scn.omega, scn.grid, cfg)
    return checkers.check_locality(scn.omega, scn.sub_boxes, scn.region, scn.op, cfg)


def _timed(scn, name):
    t0 = time.perf_counter()
    rep = run_check(scn, name)
    return rep, time.perf_counter() - t0


def run(scn: Scenario) -> RunReport:
    """Execute the checks in scenario order."""
    reports, times = [], []
    if scn.options.get("parallel"):
        with ThreadPoolExecutor() as pool:
            done = list(pool.map(lambda c: _timed(scn, c), scn.checks))
        reports = [r for r, _ in done]
        times = [t for _, t in done]
    else:
        for name in scn.checks:
            rep, t = _timed(scn, name)
            reports.append(rep)
            times.append(t)
            if scn.options.get("short_circuit") and rep.verdict == checkers.VIOLATION:
                break
    return RunReport(scn.resolved(), reports, times)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_table(rep: CheckReport, dim: int):
    if rep.rows is not None:
        return rep.rows["header"], rep.rows["data"]
    if rep.check == "c_k":
        header = [f"c{i + 1}" for i in range(dim)] + \
            [f"o{i + 1}{j + 1}" for i in range(dim) for j in range(dim)] + ["a", "b", "split_k"]
        if rep.witness is None:
            return header, []
        cyl = rep.witness["cylinder"]
        row = list(cyl["center"]) + list(np.asarray(cyl["frame"]).ravel()) + [cyl["a"], cyl["b"], cyl["split_k"]]
        return header, [row]
    if rep.check == "g_condition":
        header = [f"x{i + 1}" for i in range(dim)] + ["operator_value"]
        if rep.witness is None:
            return header, []
        return header, [list(rep.witness["point"]) + [rep.witness["operator_value"]]]
    return ["check", "verdict"], [[rep.check, rep.verdict]]


def emit_csv(report: RunReport, directory) -> List[Path]:
    """One CSV per check, named by position and check name."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    dim = int(report.scenario["dim"])
    paths = []
    for i, rep in enumerate(report.reports):
        header, data = _csv_table(rep, dim)
        path = out / f"{i:02d}_{rep.check}.csv"
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in data:
                w.writerow([_fmt(v) for v in row])
        paths.append(path)
    return paths


def schema_path() -> Path:
    return Path(__file__).with_name("report.schema.json")


def list_builtins() -> dict:
    return {"regions": sorted(regions.BUILTIN_REGIONS), "fields": list(FIELD_BUILTINS),
            "operators": [eigenops.LAMBDA_K, eigenops.PMINUS_K, eigenops.PPLUS_K],
            "checks": list(CHECKS)}


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="degenlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("scenario")
    r.add_argument("--out", help="JSON report path (overrides output.json)")
    r.add_argument("--csv-dir", help="CSV directory (overrides output.csv_dir)")
    r.add_argument("--verbose", action="store_true", help="per-check timings on stderr")
    v = sub.add_parser("validate", help="validate a scenario without running it")
    v.add_argument("scenario")
    sub.add_parser("list-builtins", help="print builtin regions, fields, operators and checks")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-builtins":
        print(json.dumps(list_builtins(), indent=2))
        return 0
    try:
        scn = load_scenario(Path(args.scenario))
    except (OSError, ValidationError, DegenLabError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if args.command == "validate":
        print(f"ok: {len(scn.checks)} checks ({', '.join(scn.checks)})")
        return 0
    try:
        report = run(scn)
    except Exception as e:  # noqa: BLE001 - any failure maps to exit code 1
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if args.verbose:
        for rep, t in zip(report.reports, report.wall_times):
            print(f"{rep.check:12s} {rep.verdict:24s} {t:8.2f}s", file=sys.stderr)
    out = args.out or scn.output.get("json")
    csv_dir = args.csv_dir or scn.output.get("csv_dir")
    try:
        text = report.to_json()
        if out:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            Path(out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        if csv_dir:
            emit_csv(report, csv_dir)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
