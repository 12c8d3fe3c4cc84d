"""Command-line experiment runner.

``gexpect --config exp.json --out results/`` validates the config, runs every
experiment and writes ``results.csv`` plus one JSON record per experiment.
Exit codes: 0 success, 1 library error or failing property suite,
2 invalid config (nothing written), 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import DivergenceError, GExpectError

log = logging.getLogger("gexpect")

CSV_COLUMNS = ["experiment", "command", "inputs_digest", "quantity", "value", "error_estimate", "convention"]
COMMANDS = (
    "gnormal-expect", "barenblatt-solve", "gbm-fdd", "ggaussian-fdd", "compare-fdd",
    "clt-converge", "process-clt", "qprop", "feynman-kac", "property-suite",
)

# ---------------------------------------------------------------------------
# schema

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_SIGMA = {
    "type": "object",
    "properties": {"sigma_lo_sq": {"type": "number", "minimum": 0}, "sigma_hi_sq": {"type": "number", "minimum": 0}},
    "required": ["sigma_lo_sq", "sigma_hi_sq"],
    "additionalProperties": False,
}
_SOLVER = {
    "type": "object",
    "properties": {
        "t_final": _POS,
        "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
        "boundary": {"enum": ["linear-extrapolation", "dirichlet-from-initial"]},
        "domain_radius_multiplier": {"type": "number", "minimum": 4},
        "dx": _POS,
    },
    "additionalProperties": False,
}
_PHI = {"type": "object", "properties": {"name": {"type": "string"}}, "required": ["name"]}
_TIMES = {"type": "array", "items": _POS, "minItems": 1, "maxItems": 4}
_NLIST = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}
_CONV = {"enum": ["pde-canonical", "paper-moment"]}
_WGRID = {
    "type": "object",
    "properties": {"half_width": _POS, "nx": {"type": "integer", "minimum": 64}},
    "additionalProperties": False,
}
_POTENTIAL = {"type": "object", "properties": {"name": {"type": "string"}}, "required": ["name"]}
_LEVELS = {"type": "integer", "minimum": 3, "maximum": 5}


def _params(props: dict, required: list) -> dict:
    return {"type": "object", "properties": props, "required": required, "additionalProperties": False}


PARAM_SCHEMAS = {
    "gnormal-expect": _params({"sigma": _SIGMA, "phi": _PHI, "solver": _SOLVER, "levels": _LEVELS}, ["sigma", "phi"]),
    "barenblatt-solve": _params(
        {"sigma": _SIGMA, "phi": _PHI, "solver": _SOLVER, "radius": _POS, "write_grid": {"type": "boolean"}},
        ["sigma", "phi"],
    ),
    "gbm-fdd": _params({"sigma": _SIGMA, "times": _TIMES, "phi": _PHI, "solver": _SOLVER, "levels": _LEVELS},
                       ["sigma", "times", "phi"]),
    "ggaussian-fdd": _params({"sigma": _SIGMA, "times": {**_TIMES, "maxItems": 2}, "phi": _PHI, "solver": _SOLVER,
                              "levels": _LEVELS}, ["sigma", "times", "phi"]),
    "compare-fdd": _params({"sigma": _SIGMA, "times": {**_TIMES, "minItems": 2, "maxItems": 2}, "phi": _PHI,
                            "solver": _SOLVER}, ["sigma", "phi"]),
    "clt-converge": _params(
        {"sigma": _SIGMA, "choices": {"type": "array", "items": {"type": "number", "minimum": 0}},
         "phi": _PHI, "n": _NLIST, "solver": _SOLVER},
        ["sigma", "phi", "n"],
    ),
    "process-clt": _params({"sigma": _SIGMA, "times": {**_TIMES, "maxItems": 2}, "phi": _PHI, "n": _NLIST,
                            "solver": _SOLVER}, ["sigma", "times", "phi", "n"]),
    "qprop": _params({"phi": _PHI, "t": _POS, "x": _NUM, "convention": _CONV, "grid": _WGRID,
                      "write_grid": {"type": "boolean"}}, ["phi", "t"]),
    "feynman-kac": _params(
        {"phi": _PHI, "potential": _POTENTIAL, "t_final": _POS, "slices": {"type": "integer", "minimum": 1},
         "steps": {"type": "integer", "minimum": 1}, "convention": _CONV, "grid": _WGRID,
         "write_grid": {"type": "boolean"}},
        ["phi", "potential", "t_final", "slices"],
    ),
    "property-suite": _params({"trials": {"type": "integer", "minimum": 1},
                               "inject": {"enum": ["holder", "g-monotonicity", "mean-certain-additivity"]}},
                              ["trials"]),
}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "seed": {"type": "integer", "minimum": 0},
        "params": {"type": "object"},
    },
    "required": ["command", "params"],
    "additionalProperties": False,
}
CONFIG_SCHEMA = {
    "oneOf": [
        EXPERIMENT_SCHEMA,
        {
            "type": "object",
            "properties": {"experiments": {"type": "array", "items": EXPERIMENT_SCHEMA, "minItems": 1}},
            "required": ["experiments"],
            "additionalProperties": False,
        },
    ]
}


class ConfigError(GExpectError):
    pass


def load_config(doc, seed: int = 0) -> list:
    """Validate a config document and return normalised experiment entries."""
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    entries = doc["experiments"] if "experiments" in doc else [doc]
    out = []
    names = set()
    for i, e in enumerate(entries):
        try:
            jsonschema.validate(e["params"], PARAM_SCHEMAS[e["command"]])
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"experiment {i} ({e['command']}): {exc.message}") from exc
        e = copy.deepcopy(e)
        e.setdefault("name", f"{i:03d}-{e['command']}")
        e.setdefault("seed", seed)
        if e["name"] in names:
            raise ConfigError(f"duplicate experiment name {e['name']!r}")
        names.add(e["name"])
        _check_semantics(e)
        out.append(e)
    return out


def _check_semantics(e: dict) -> None:
    """Build every domain object once so bad values fail before anything runs."""
    from .gfunction import SigmaInterval
    from .gheat import SolverConfig
    from .qcalc import Potential
    from .testfunctions import build

    p = e["params"]
    try:
        if "sigma" in p:
            SigmaInterval.from_dict(p["sigma"])
        if "solver" in p:
            SolverConfig.from_dict(p["solver"])
        if "phi" in p:
            build(p["phi"])
        if "potential" in p:
            Potential(p["potential"])
    except (GExpectError, TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"experiment {e['name']}: {exc}") from exc


def digest(entry: dict) -> str:
    canon = json.dumps(entry, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# commands


def _common(p):
    from .gfunction import SigmaInterval
    from .gheat import SolverConfig
    from .testfunctions import build

    sigma = SigmaInterval.from_dict(p["sigma"]) if "sigma" in p else None
    cfg = SolverConfig.from_dict(p.get("solver", {}))
    phi = build(p["phi"]) if "phi" in p else None
    return sigma, cfg, phi


def _est(q, e, prefix=""):
    err = e.error if np.isfinite(e.error) else None
    out = [(prefix + "value", e.value, err)]
    if e.extrapolated is not None:
        out.append((prefix + "extrapolated", e.extrapolated, err))
    return out


def _run_gnormal(p, ctx):
    from .gnormal import GNormal, gnormal_expect

    sigma, cfg, phi = _common(p)
    e = gnormal_expect(GNormal(sigma), phi, cfg, levels=p.get("levels", 3))
    return _est("", e), {"richardson_order": None if e.report is None else e.report.order}


def _run_barenblatt(p, ctx):
    from .gheat import Grid, GridFunction, solve_barenblatt

    sigma, cfg, phi = _common(p)
    radius = p.get("radius", cfg.domain_radius_multiplier * sigma.sigma_hi * cfg.t_final**0.5)
    grid = Grid.symmetric(radius, cfg.dx)
    u = solve_barenblatt(GridFunction.from_function(grid, phi), sigma, cfg)
    if p.get("write_grid", True):
        ctx["artifacts"].append(("grid.csv", u.to_csv))
    return [("u_at_origin", float(u.values[grid.nx[0] // 2]), None)], u.metadata()


def _run_gbm(p, ctx):
    from .process import FDDSpec, gbm_fdd_expect

    sigma, cfg, phi = _common(p)
    e = gbm_fdd_expect(FDDSpec(tuple(p["times"]), phi), sigma, cfg, levels=p.get("levels", 3))
    return _est("", e), {}


def _run_ggaussian(p, ctx):
    from .gfunction import GFamily
    from .process import FDDSpec, ggaussian_fdd_expect

    sigma, cfg, phi = _common(p)
    fam = GFamily.from_gbm(sigma, sorted(p["times"]))
    e = ggaussian_fdd_expect(FDDSpec(tuple(p["times"]), phi), fam, cfg, levels=p.get("levels", 3))
    return _est("", e), {}


def _run_compare(p, ctx):
    from .process import compare_gbm_vs_ggaussian

    sigma, cfg, phi = _common(p)
    if "solver" not in p:
        cfg = cfg.replace(dx=0.05)
    rep = compare_gbm_vs_ggaussian(phi, tuple(p.get("times", (1.0, 2.0))), sigma, cfg)
    ce = rep.combined_error
    rows = [("gbm", rep.gbm, ce), ("ggaussian", rep.ggaussian, ce), ("gap", rep.gap, ce)]
    return rows, {"certified": rep.certified, "separated": rep.separated}


def _run_clt(p, ctx):
    from .clt import IncrementModel, clt_convergence

    sigma, cfg, phi = _common(p)
    model = IncrementModel(sigma.sigma_lo, sigma.sigma_hi, tuple(p.get("choices", ())))
    rep = clt_convergence(phi, p["n"], model, cfg)
    rows = [("reference", rep.reference, rep.reference_error)]
    for n, v, g in zip(rep.n, rep.values, rep.gaps):
        rows.append((f"value[n={n}]", v, "exact"))
        rows.append((f"gap[n={n}]", g, rep.reference_error))
    rows.append(("rate", rep.rate, None))
    return rows, {}


def _run_process_clt(p, ctx):
    from .process import FDDSpec, process_clt_fdd

    sigma, cfg, phi = _common(p)
    if "solver" not in p:
        cfg = cfg.replace(dx=0.05)
    rep = process_clt_fdd(p["n"], FDDSpec(tuple(p["times"]), phi), sigma, cfg)
    rows = [("reference", rep.reference, rep.reference_error)]
    for n, v, g in zip(rep.n, rep.values, rep.gaps):
        rows.append((f"value[n={n}]", v, "exact"))
        rows.append((f"gap[n={n}]", g, rep.reference_error))
    return rows, {}


def _wave_grid(p):
    from .qcalc import WaveGrid

    g = p.get("grid", {})
    return WaveGrid.centred(float(g.get("half_width", 20.0)), int(g.get("nx", 1024)))


def _run_qprop(p, ctx):
    from .qcalc import free_propagate, q_expect
    from .testfunctions import build

    phi = build(p["phi"])
    conv = p.get("convention", "pde-canonical")
    ctx["convention"] = conv
    q = q_expect(phi, float(p.get("x", 0.0)), float(p["t"]), conv)
    rows = [("re", q.value.real, q.error), ("im", q.value.imag, q.error)]
    if phi.decaying and p.get("write_grid", True):
        w = free_propagate(_wave_grid(p).sample(phi), float(p["t"]), conv)
        ctx["artifacts"].append(("wave.csv", w.to_csv))
        ctx["meta"]["wave"] = w.sidecar()
    return rows, {}


def _run_feynman_kac(p, ctx):
    from .qcalc import Potential, feynman_kac_pathsum, split_step_solve
    from .testfunctions import build

    phi = build(p["phi"])
    conv = p.get("convention", "pde-canonical")
    ctx["convention"] = conv
    grid = _wave_grid(p)
    v = Potential(p["potential"])
    w = feynman_kac_pathsum(grid.sample(phi), v, float(p["t_final"]), int(p["slices"]), conv)
    ref = split_step_solve(grid.sample(phi), v, float(p["t_final"]), int(p.get("steps", p["slices"])), conv)
    mid = grid.nx // 2
    gap = float(np.abs(w.values - ref.values).max())
    rows = [
        ("pathsum_re_at_0", float(w.values[mid].real), gap),
        ("pathsum_im_at_0", float(w.values[mid].imag), gap),
        ("splitstep_re_at_0", float(ref.values[mid].real), gap),
        ("splitstep_im_at_0", float(ref.values[mid].imag), gap),
        ("sup_gap", gap, None),
    ]
    if p.get("write_grid", True):
        ctx["artifacts"].append(("wave.csv", w.to_csv))
        ctx["meta"]["wave"] = w.sidecar()
    return rows, {}


def _run_property_suite(p, ctx):
    from .properties import property_suite

    s = property_suite(ctx["seed"], p["trials"], p.get("inject"))
    rows = []
    for r in s.rows:
        rows.append((f"failures[{r.invariant}]", r.failures, "exact"))
        rows.append((f"worst_slack[{r.invariant}]", r.worst_slack, "exact"))
    ctx["failed"] = s.failures > 0
    return rows, {"failed_invariants": s.failed_invariants, "trials": {r.invariant: r.trials for r in s.rows}}


RUNNERS = {
    "gnormal-expect": _run_gnormal,
    "barenblatt-solve": _run_barenblatt,
    "gbm-fdd": _run_gbm,
    "ggaussian-fdd": _run_ggaussian,
    "compare-fdd": _run_compare,
    "clt-converge": _run_clt,
    "process-clt": _run_process_clt,
    "qprop": _run_qprop,
    "feynman-kac": _run_feynman_kac,
    "property-suite": _run_property_suite,
}


def run(entry: dict) -> dict:
    """Run one validated experiment; returns its result record."""
    ctx = {"seed": entry["seed"], "artifacts": [], "meta": {}, "convention": "", "failed": False}
    t0 = time.perf_counter()
    rows, extra = RUNNERS[entry["command"]](entry["params"], ctx)
    runtime = time.perf_counter() - t0
    log.info("%s finished in %.3f s", entry["name"], runtime)
    record = {
        "experiment": entry["name"],
        "command": entry["command"],
        "inputs_digest": digest(entry),
        "config": entry,
        "version": __version__,
        "convention": ctx["convention"],
        "results": [
            {"quantity": q, "value": _num(v), "error_estimate": "exact" if e == "exact" else _num(e)}
            for q, v, e in rows
        ],
        "details": _jsonable({**extra, **ctx["meta"]}),
    }
    # artifact writers are bound methods of picklable results, so records can
    # come back from worker processes
    return {"record": record, "artifacts": ctx["artifacts"], "runtime": runtime, "failed": ctx["failed"]}


def _num(v):
    if v is None:
        return None
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def write_outputs(out: Path, results: list, timing: bool = False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for res in results:
            rec = res["record"]
            for r in rec["results"]:
                w.writerow([rec["experiment"], rec["command"], rec["inputs_digest"], r["quantity"],
                            _fmt(r["value"]), _fmt(r["error_estimate"]), rec["convention"]])
    for res in results:
        rec = res["record"]
        with open(out / f"{rec['experiment']}.json", "w") as fh:
            json.dump(rec, fh, sort_keys=True, indent=2)
            fh.write("\n")
        for fname, writer in res["artifacts"]:
            writer(out / f"{rec['experiment']}.{fname}")
    if timing:
        with open(out / "timing.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["experiment", "runtime_s"])
            for res in results:
                w.writerow([res["record"]["experiment"], f"{res['runtime']:.6f}"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gexpect", description="Run sublinear-expectation experiments from a JSON config.")
    ap.add_argument("--config", required=True, help="path to the experiment JSON")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed", type=int, default=0, help="default seed for entries without one")
    ap.add_argument("--jobs", type=int, default=1, help="run independent experiments in parallel")
    ap.add_argument("--timing", action="store_true", help="also write timing.csv (not deterministic)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("GEXPECT_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
        entries = load_config(doc, args.seed)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"gexpect: {exc}", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("gexpect: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.jobs > 1 and len(entries) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(run, entries))
        else:
            results = [run(e) for e in entries]
    except DivergenceError as exc:
        print(f"gexpect: numerical divergence: {exc}", file=sys.stderr)
        return 3
    except GExpectError as exc:
        print(f"gexpect: {exc}", file=sys.stderr)
        return 1
    write_outputs(Path(args.out), results, args.timing)
    return 1 if any(r["failed"] for r in results) else 0


if __name__ == "__main__":
    sys.exit(main())
