"""Config-driven command line front end.

Usage::

    bsbounds <task> --config run.toml [--out DIR] [--threads N] [--seed K] [--refine]

A config has optional top-level ``task``, ``seed`` and ``output`` keys and
the tables ``grid`` (d, L, n), ``potential`` (family plus its parameters)
and ``params`` (task specific).  JSON files with the same layout are
accepted.  Exit status: 0 ok, 1 bound violated, 2 bad configuration,
3 numerical failure; errors are also printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import scipy.linalg as sla
import tomli
import tomli_w

from . import bounds as bd
from . import probes as pr
from .birman_schwinger import continuum_eigenvalues, region_map
from .errors import (BranchCutError, ConvergenceFailure, DimensionMismatch, EmptyEvidence,
                     InvalidParameter, RangeError, SingularShift)
from .grid import BoxGrid, RadialGrid, default_mc_params, lp_norm, mc_norm_argmax, sample
from .potentials import Potential, make_family, scale

TASKS = ("spectra", "bound-check", "bs-scan", "mc-norm", "probe", "sharpness-d3",
         "hls-check", "empirical-constant")

TOP_KEYS = {"task", "seed", "output", "grid", "potential", "params"}
GRID_KEYS = {"d", "L", "n"}

# allowed params per task, with defaults
PARAMS = {
    "spectra": {"rel_tol": 0.05, "ray_factor": 10.0, "max_outer": 0.05},
    "bound-check": {"bounds": ["davies1d"], "gamma": 0.5, "p": None, "alpha": None,
                    "slack": 0.05},
    "bs-scan": {"rect": [-4.0, 4.0, -4.0, 4.0], "res": [9, 9], "backend": "kernel",
                "distances": True, "warm_start": False},
    "mc-norm": {"alpha": 2.0, "p": 1.0, "stride": 4, "ratio": 2 ** 0.25},
    "probe": {"kind": "keruso", "p": None, "gamma": None, "alpha": None, "theta": None,
              "t_range": [1.0, 64.0], "count": 9, "backend": None, "starts": 8,
              "subcells": None, "check_range": True},
    "sharpness-d3": {"c": 1.0, "lam": -1e-6, "radial_R": 16.0, "radial_n": 16000},
    "hls-check": {"samples": 10000, "per_lambda": 50, "slack": 0.02},
    "empirical-constant": {"gamma": 0.5, "sweep": [], "scales": []},
}

NEEDS_POTENTIAL = {"spectra", "bound-check", "bs-scan", "mc-norm", "empirical-constant"}

PROBE_CSV = ["abs_lambda", "arg_lambda", "norm_estimate", "converged"]
REGION_CSV = ["re_lambda", "im_lambda", "bs_norm", "dist_to_minus1", "flag"]
BOUND_CSV = ["re_lambda", "im_lambda", "bound_id", "gamma", "lhs", "rhs", "ratio", "verdict",
             "n", "L"]
SPECTRA_CSV = ["re_lambda", "im_lambda", "residual", "stable"]


class ConfigError(InvalidParameter):
    pass


@dataclass
class RunConfig:
    task: str
    grid: Optional[dict] = None
    potential: Optional[dict] = None
    params: dict = field(default_factory=dict)
    seed: int = 0
    output: Optional[str] = None

    def canonical(self) -> dict:
        out: dict[str, Any] = {"task": self.task, "seed": self.seed}
        if self.output is not None:
            out["output"] = self.output
        if self.grid is not None:
            out["grid"] = dict(sorted(self.grid.items()))
        if self.potential is not None:
            out["potential"] = dict(sorted(self.potential.items()))
        out["params"] = {k: v for k, v in sorted(self.params.items()) if v is not None}
        return out


def _fail(field_name, msg):
    raise ConfigError(field_name, msg)


def validate(raw: dict, task: Optional[str] = None) -> RunConfig:
    """Check a parsed config against the task schema; unknown keys are rejected."""
    if not isinstance(raw, dict):
        _fail("config", "top level must be a table")
    unknown = sorted(set(raw) - TOP_KEYS)
    if unknown:
        _fail(unknown[0], "unknown top-level key")
    cfg_task = raw.get("task", task)
    if task is not None and cfg_task != task:
        _fail("task", f"config is for {cfg_task!r}, command is {task!r}")
    if cfg_task not in TASKS:
        _fail("task", f"expected one of {TASKS}, got {cfg_task!r}")
    grid = raw.get("grid")
    if grid is not None:
        if not isinstance(grid, dict):
            _fail("grid", "must be a table")
        bad = sorted(set(grid) - GRID_KEYS)
        if bad:
            _fail(f"grid.{bad[0]}", "unknown grid key")
        missing = sorted(GRID_KEYS - set(grid))
        if missing:
            _fail(f"grid.{missing[0]}", "missing")
        BoxGrid(int(grid["d"]), float(grid["L"]), int(grid["n"]))
    elif cfg_task not in ("sharpness-d3", "hls-check"):
        _fail("grid", "missing")
    pot = raw.get("potential")
    if pot is not None and not isinstance(pot, dict):
        _fail("potential", "must be a table")
    if pot is None and cfg_task in NEEDS_POTENTIAL and cfg_task != "empirical-constant":
        _fail("potential", "missing")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        _fail("params", "must be a table")
    allowed = PARAMS[cfg_task]
    bad = sorted(set(params) - set(allowed))
    if bad:
        _fail(f"params.{bad[0]}", f"unknown parameter for task {cfg_task}")
    merged = {k: params.get(k, v) for k, v in allowed.items()}
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        _fail("seed", "must be an integer")
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        _fail("output", "must be a string")
    cfg = RunConfig(cfg_task, grid, pot, merged, seed, output)
    if pot is not None and grid is not None:
        build_potential(pot, int(grid["d"]))
    return cfg


def parse_config(text: str, fmt: str = "toml", task: Optional[str] = None) -> RunConfig:
    try:
        raw = json.loads(text) if fmt == "json" else tomli.loads(text)
    except (ValueError, tomli.TOMLDecodeError) as exc:
        raise ConfigError("config", f"cannot parse {fmt}: {exc}") from None
    return validate(raw, task)


def serialize_config(cfg: RunConfig, fmt: str = "toml") -> str:
    data = cfg.canonical()
    if fmt == "json":
        return json.dumps(data, sort_keys=True, indent=2) + "\n"
    return tomli_w.dumps(data)


def build_potential(spec: dict, dim: int) -> Potential:
    spec = dict(spec)
    tag = spec.pop("family", None)
    if tag is None:
        _fail("potential.family", "missing")
    s = spec.pop("scale", None)
    V = make_family(tag, spec, dim)
    return scale(V, float(s)) if s is not None else V


def _f(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n")


def _grid(cfg: RunConfig) -> BoxGrid:
    g = cfg.grid
    return BoxGrid(int(g["d"]), float(g["L"]), int(g["n"]))


def _verdict(v):
    return "" if v is None else ("pass" if v else "fail")


def _bound_rows(rows):
    return [[_f(r.lam.real), _f(r.lam.imag), r.bound_id, _f(r.gamma), _f(r.lhs), _f(r.rhs),
             _f(r.ratio), _verdict(r.verdict), str(r.n), _f(r.L)] for r in rows]


def _specs(cfg: RunConfig, d: int):
    P = cfg.params
    out = []
    for b in P["bounds"]:
        if b == "davies1d":
            out.append(bd.BoundSpec.davies1d())
        elif b == "main0_d3":
            out.append(bd.BoundSpec.main0_d3())
        elif b == "main_gamma":
            out.append(bd.BoundSpec.main_gamma(P["gamma"], d))
        elif b == "morrey":
            out.append(bd.BoundSpec.morrey(P["gamma"], d, P["p"]))
        elif b == "interpol":
            out.append(bd.BoundSpec.interpol(P["gamma"], d, P["alpha"]))
        else:
            _fail("params.bounds", f"unknown bound id {b!r}")
    return out


def task_spectra(cfg, out, opts):
    g = _grid(cfg)
    V = build_potential(cfg.potential, g.dim)
    P = cfg.params
    spec = continuum_eigenvalues(V, g, P["rel_tol"], P["ray_factor"], P["max_outer"],
                                 keep_unstable=True)
    rows = [[_f(z.real), _f(z.imag), _f(r), str(bool(s)).lower()]
            for z, r, s in zip(spec.eigenvalues, spec.residuals, spec.stable)]
    _write_csv(out / "spectra.csv", SPECTRA_CSV, rows)
    return 0, {"eigenvalues": len(rows), "stable": int(np.sum(spec.stable))}


def task_bound_check(cfg, out, opts):
    g = _grid(cfg)
    V = build_potential(cfg.potential, g.dim)
    specs = _specs(cfg, g.dim)
    spec = continuum_eigenvalues(V, g)
    field_ = sample(V, g)
    refined = None
    if opts.refine:
        g2 = g.refined()
        refined = (continuum_eigenvalues(V, g2), sample(V, g2))
    rep = bd.bound_report(spec, field_, specs, cfg.params["slack"], refined)
    _write_csv(out / "bound_report.csv", BOUND_CSV, _bound_rows(rep.rows))
    nviol = len(rep.violations())
    return (1 if nviol else 0), {"rows": len(rep), "violations": nviol}


def task_bs_scan(cfg, out, opts):
    g = _grid(cfg)
    V = build_potential(cfg.potential, g.dim)
    P = cfg.params
    rows = region_map(V, g, P["rect"], P["res"], P["backend"], P["distances"],
                      P["warm_start"], threads=opts.threads, seed=cfg.seed)
    _write_csv(out / "region_map.csv", REGION_CSV,
               [[_f(r.re_lambda), _f(r.im_lambda), _f(r.bs_norm), _f(r.dist_to_minus1), r.flag]
                for r in rows])
    norms = [r.bs_norm for r in rows if not math.isnan(r.bs_norm)]
    return 0, {"points": len(rows), "max_bs_norm": max(norms) if norms else None}


def task_mc_norm(cfg, out, opts):
    g = _grid(cfg)
    V = build_potential(cfg.potential, g.dim)
    P = cfg.params
    f = sample(V, g)
    mc = default_mc_params(g, P["alpha"], P["p"], P["stride"], P["ratio"])
    val, c, r = mc_norm_argmax(f, mc)
    res = {"mc_norm": val, "center_index": c, "center": [float(x) for x in g.nodes()[c]],
           "radius": r, "alpha": P["alpha"], "p": P["p"], "lp_norm_d_over_alpha":
           lp_norm(f, g.dim / P["alpha"]) if g.dim / P["alpha"] >= 1 else None}
    _write_json(out / "mc_norm.json", res)
    return 0, {"mc_norm": val}


def task_probe(cfg, out, opts):
    g = _grid(cfg)
    P = cfg.params
    kind = P["kind"]
    kw = {"t_range": P["t_range"], "grid": g, "count": P["count"]}
    if P["theta"] is not None:
        kw["theta"] = P["theta"]
    if kind == "keruso":
        fit = pr.keruso_exponent(g.dim, P["p"], backend=P["backend"] or "kernel",
                                 starts=P["starts"], seed=cfg.seed, **kw)
    elif kind == "bs":
        V = build_potential(cfg.potential, g.dim)
        fit = pr.bs_exponent(g.dim, P["gamma"], V, backend=P["backend"] or "lattice",
                             subcells=P["subcells"] or 1, seed=cfg.seed, **kw)
    elif kind in ("agmon", "chsa"):
        w = build_potential(cfg.potential, g.dim) if cfg.potential else None
        fit = pr.weighted_exponent(kind, g.dim, P["alpha"], p=P["p"], weight=w,
                                   backend=P["backend"], subcells=P["subcells"],
                                   check_range=P["check_range"], seed=cfg.seed, **kw)
    else:
        _fail("params.kind", f"expected keruso, bs, agmon or chsa, got {kind!r}")
    rows = [[_f(s.abs_lambda), _f(s.arg_lambda), _f(s.norm), str(s.converged).lower()]
            for s in fit.samples]
    _write_csv(out / "probe.csv", PROBE_CSV, rows)
    summary = {"kind": kind, "slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
               "count": fit.count, "theory": fit.theory, "in_range": fit.in_range,
               "converged": fit.converged}
    _write_json(out / "probe_fit.json", summary)
    return 0, summary


def task_sharpness(cfg, out, opts):
    P = cfg.params
    g = _grid(cfg) if cfg.grid else BoxGrid(3, 8.0, 48)
    if g.dim != 3:
        _fail("grid.d", "sharpness-d3 runs in d = 3")
    rep = bd.sharpness_d3(P["c"], g, RadialGrid(P["radial_R"], P["radial_n"]), P["lam"])
    header = ["c", "integral", "rhs", "expected", "bs_norm", "lam", "n", "L"]
    _write_csv(out / "sharpness.csv", header,
               [[_f(rep.c), _f(rep.integral), _f(rep.rhs), _f(rep.expected), _f(rep.bs_norm),
                 _f(rep.lam), str(rep.n), _f(rep.L)]])
    return 0, {"rhs": rep.rhs, "bs_norm": rep.bs_norm}


def task_hls(cfg, out, opts):
    P = cfg.params
    g = _grid(cfg) if cfg.grid else BoxGrid(3, 2.0, 12)
    if g.dim != 3:
        _fail("grid.d", "hls-check runs in d = 3")
    tr = bd.hls_random_trials(P["samples"], g, cfg.seed, P["per_lambda"])
    v1, v2 = tr.violations(P["slack"])
    _write_csv(out / "hls.csv", ["re_lambda", "im_lambda", "lhs", "mid", "rhs"],
               [[_f(z.real), _f(z.imag), _f(a), _f(b), _f(c)]
                for z, a, b, c in zip(tr.lams, tr.lhs, tr.mid, tr.rhs)])
    return (1 if v1 or v2 else 0), {"samples": P["samples"], "lhs_mid_violations": v1,
                                     "mid_rhs_violations": v2}


def task_empirical(cfg, out, opts):
    g = _grid(cfg)
    P = cfg.params
    sweep = list(P["sweep"])
    if cfg.potential is not None:
        sweep.insert(0, cfg.potential)
    if not sweep:
        _fail("params.sweep", "sweep is empty")
    items = []
    for spec in sweep:
        V = build_potential(spec, g.dim)
        items.append((V, g.rescaled(V.scale_factor)))
    for s in P["scales"]:
        items += [(scale(V, s), gg.rescaled(s)) for V, gg in list(items[:len(sweep)])]
    res = bd.empirical_constant(items, P["gamma"], g.dim)
    _write_csv(out / "empirical.csv", BOUND_CSV, _bound_rows(res.rows))
    return 0, {"empty": res.empty, "value": None if res.empty else res.value}


RUNNERS = {
    "spectra": task_spectra,
    "bound-check": task_bound_check,
    "bs-scan": task_bs_scan,
    "mc-norm": task_mc_norm,
    "probe": task_probe,
    "sharpness-d3": task_sharpness,
    "hls-check": task_hls,
    "empirical-constant": task_empirical,
}

CONFIG_ERRORS = (InvalidParameter, RangeError, DimensionMismatch, KeyError, TypeError)
NUMERIC_ERRORS = (SingularShift, BranchCutError, ConvergenceFailure, EmptyEvidence,
                  ArithmeticError, MemoryError, sla.LinAlgError, RuntimeError)


def _diag(code, exc):
    d = {"status": "error", "exit_code": code, "type": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "field", None):
        d["field"] = exc.field
    print(json.dumps(d, sort_keys=True), file=sys.stderr)
    return code


def run(cfg: RunConfig, out: Path, opts) -> int:
    out.mkdir(parents=True, exist_ok=True)
    code, summary = RUNNERS[cfg.task](cfg, out, opts)
    summary = {"task": cfg.task, "exit_code": code, **summary}
    _write_json(out / "summary.json", summary)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bsbounds", description=__doc__.splitlines()[0])
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path, default=None)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--refine", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        text = args.config.read_text()
        fmt = "json" if args.config.suffix.lower() == ".json" else "toml"
        cfg = parse_config(text, fmt, args.task)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads < 1:
            _fail("--threads", "must be at least 1")
        out = args.out or Path(cfg.output or f"out-{cfg.task}")
    except OSError as exc:
        return _diag(2, exc)
    except CONFIG_ERRORS as exc:
        return _diag(2, exc)
    try:
        return run(cfg, out, args)
    except CONFIG_ERRORS as exc:
        return _diag(2, exc)
    except NUMERIC_ERRORS as exc:
        return _diag(3, exc)


if __name__ == "__main__":
    sys.exit(main())
