"""Configuration, experiment orchestration, persistence and the command line.

Configs are YAML documents.  Every key has a default except ``scenario`` and
``grid.nx``; unknown keys are rejected.  Outputs are plain text: CSV time
series with 17 significant digits and a self-describing snapshot container.
"""
from __future__ import annotations

import argparse
import copy
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .coupling import (CoupledState, InitialData, SchemeConfig, Trajectory,
                       run)
from .diagnostics import (ENERGY_COLUMNS, EntropyReport, energy,
                          energy_budget, interpolate_state,
                          relative_energy_residual, relative_entropy)
from .errors import FsiError, SchemaError, ValidationError
from .fluid import FluidParams, FluidState, validate_gamma_case
from .geometry_ale import Grid, PlateField, ScalarField, VectorField
from .manufactured import ManufacturedSolution, convergence_study
from .plate import (BergerCoeffs, KirchhoffCoeffs, PlateModel, PlateState,
                    VonKarmanCoeffs)
from .regularity import regularity_scan, threshold_s

log = logging.getLogger("fsiplate")

SCENARIOS = ("equilibrium", "free_decay", "forced_mms", "wsu_refinement",
             "regularity_scan", "invariant_suite")
SCHEMA_VERSION = 1
REQUIRED = object()

DEFAULTS = {
    "scenario": REQUIRED,
    "seed": 0,
    "grid": {"nx": REQUIRED, "nz": None, "lx": 2 * math.pi, "plate_topology": "periodic",
             "ny": None, "ly": None},
    "fluid": {"gamma": 2.0, "mu": 1.0, "lam": 0.0, "rho_ref": None},
    "plate": {"kind": "linear", "alpha": 0.0, "coefficients": {}},
    "scheme": {"dt": 0.01, "t_end": 1.0, "collision_eps": 0.05, "cfl_safety": 0.4,
               "coupling_mode": "monolithic", "output_every": 1, "newton_tol": 1e-10,
               "max_newton": 40, "fixed_dt": False},
    "initial": {"recipe": "plate_wave", "rho0": 1.0, "amplitude": 0.1, "mode": 1,
                "velocity": 0.0},
    "output": {"directory": "out", "snapshot_every": 0, "formats": ["csv", "snapshot"]},
    "wsu": {"levels": [32, 64, 128], "t_end": 0.4, "dt_coarse": 0.02},
    "mms": {"levels": [16, 32, 64], "t_end": 0.5, "dt_coarse": 0.04, "eps": 0.05, "amp": 0.2},
    "regularity": {"s_grid": [0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9],
                   "h_decades": [1, 2, 4, 8, 16], "ratio_bound": 10.0},
    "invariants": {"samples": 20},
}

RECIPES = ("rest", "plate_wave", "manufactured")


@dataclass
class ExperimentConfig:
    scenario: str
    grid: Grid
    params: FluidParams
    model: PlateModel
    scheme: SchemeConfig
    initial: dict
    output: dict
    seed: int = 0
    sections: dict = field(default_factory=dict)  # scenario-specific settings
    resolved: dict = field(default_factory=dict)  # fully defaulted document


# --------------------------------------------------------------------------
# config loading

def _merge(defaults: dict, given: dict, path: str = "") -> dict:
    out = {}
    for key in given:
        if key not in defaults:
            raise ValidationError(f"unknown config key {path + key!r}")
    for key, dv in defaults.items():
        gv = given.get(key, dv)
        if isinstance(dv, dict) and key != "coefficients":
            if gv is None:
                gv = {}
            if not isinstance(gv, dict):
                raise ValidationError(f"config key {path + key!r} must be a mapping")
            out[key] = _merge(dv, gv, f"{path}{key}.")
        else:
            if gv is REQUIRED:
                raise ValidationError(f"missing required config key {path + key!r}")
            out[key] = copy.deepcopy(gv)
    return out


def _coefficients(kind: str, raw: dict):
    raw = dict(raw or {})
    if not raw:
        return None
    records = {"kirchhoff": KirchhoffCoeffs, "berger": BergerCoeffs,
               "von_karman": VonKarmanCoeffs}
    rec = records.get(kind)
    if rec is None:
        raise ValidationError(f"plate model {kind!r} takes no coefficients")
    allowed = {"kirchhoff": {"nu_k", "q_exp", "r_exp", "mu_k"}, "berger": {"nu_b", "G"},
               "von_karman": set()}[kind]
    for key in raw:
        if key not in allowed:
            raise ValidationError(f"unknown config key 'plate.coefficients.{key}'")
    return rec(**{k: float(v) for k, v in raw.items()})


def build_config(doc: dict) -> ExperimentConfig:
    """Validate a parsed document and apply every default."""
    if not isinstance(doc, dict):
        raise ValidationError("config must be a mapping at the top level")
    res = _merge(DEFAULTS, doc)
    if res["scenario"] not in SCENARIOS:
        raise ValidationError(f"unknown scenario {res['scenario']!r}; choose one of {', '.join(SCENARIOS)}")
    g = res["grid"]
    if g["nz"] is None:
        g["nz"] = g["nx"]
    grid = Grid(g["nx"], g["nz"], float(g["lx"]), g["plate_topology"], g["ny"],
                None if g["ly"] is None else float(g["ly"]))
    g["ly"] = grid.ly
    ini = res["initial"]
    if ini["recipe"] not in RECIPES:
        raise ValidationError(f"unknown initial recipe {ini['recipe']!r}; choose one of {', '.join(RECIPES)}")
    fl = res["fluid"]
    if fl["rho_ref"] is None:
        # ambient pressure balancing the initial density keeps the rest state at rest
        fl["rho_ref"] = float(ini["rho0"])
    params = FluidParams(float(fl["gamma"]), float(fl["mu"]), float(fl["lam"]), float(fl["rho_ref"]))
    pl = res["plate"]
    model = PlateModel(pl["kind"], float(pl["alpha"]), _coefficients(pl["kind"], pl["coefficients"]))
    validate_gamma_case(params.gamma, grid.d, model.alpha)
    threshold_s(params.gamma, grid.d, model.alpha > 0)
    sc = dict(res["scheme"])
    sc.pop("fixed_dt")
    scheme = SchemeConfig(**sc)
    out = res["output"]
    if not isinstance(out["formats"], list) or any(f not in ("csv", "snapshot") for f in out["formats"]):
        raise ValidationError("output.formats must be a list drawn from ['csv', 'snapshot']")
    sections = {k: res[k] for k in ("wsu", "mms", "regularity", "invariants")}
    sections["fixed_dt"] = bool(res["scheme"]["fixed_dt"])
    return ExperimentConfig(res["scenario"], grid, params, model, scheme, ini, out,
                            int(res["seed"]), sections, res)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file {str(path)!r} does not exist")
    text = path.read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ValidationError(f"cannot parse {path}{where}: {getattr(exc, 'problem', exc)}") from exc
    return build_config(doc or {})


# --------------------------------------------------------------------------
# initial data recipes

def initial_data(cfg: ExperimentConfig, grid: Grid | None = None) -> InitialData:
    grid = grid or cfg.grid
    ini = cfg.initial
    if ini["recipe"] == "manufactured":
        mms = cfg.sections["mms"]
        return ManufacturedSolution(eps=float(mms["eps"]), amp=float(mms["amp"]),
                                    rho_mean=float(ini["rho0"])).initial_data(grid)
    rho0 = float(ini["rho0"])
    r = np.full(grid.fluid_shape, rho0)
    w = np.zeros(grid.plate_shape)
    v = np.zeros(grid.plate_shape)
    if ini["recipe"] == "plate_wave":
        X = grid.plate_mesh()[0]
        phase = 2 * np.pi * int(ini["mode"]) * X / grid.lx
        w = float(ini["amplitude"]) * np.sin(phase)
        v = float(ini["velocity"]) * np.sin(phase)
    U = np.zeros((grid.d,) + grid.fluid_shape)
    U[-1] = v[..., None] * (grid.z_nodes() + 1.0)
    return InitialData(ScalarField(r, grid), VectorField(rho0 * U, grid),
                       PlateField(w, grid), PlateField(v, grid))


# --------------------------------------------------------------------------
# persistence

def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_timeseries(path, times, columns: dict):
    """CSV with a ``time`` column followed by the given named columns."""
    names = list(columns)
    t = np.asarray(times, dtype=float)
    if t.size > 1 and np.any(np.diff(t) < 0):
        raise ValidationError("time series must have monotone time")
    cols = [np.asarray(columns[n], dtype=float) for n in names]
    for n, c in zip(names, cols):
        if c.shape != t.shape:
            raise ValidationError(f"column {n!r} has {c.size} entries, expected {t.size}")
    lines = [",".join(["time"] + names)]
    for k in range(t.size):
        lines.append(",".join([_fmt(t[k])] + [_fmt(c[k]) for c in cols]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_timeseries(path) -> dict:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise SchemaError(f"{path} is empty")
    names = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:] if ln]
    if any(len(r) != len(names) for r in rows):
        raise SchemaError(f"{path} has rows of the wrong width")
    data = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return {n: data[:, k] for k, n in enumerate(names)}


def _table(path, header: Sequence[str], rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


class Snapshot(dict):
    """``state`` plus the ``params`` and ``model`` stored next to it."""

    @property
    def state(self) -> CoupledState:
        return self["state"]


def write_snapshot(path, state: CoupledState, params: FluidParams, model: PlateModel | None = None):
    grid = state.grid
    model = model or PlateModel()
    head = [
        "fsiplate-snapshot",
        f"schema_version: {SCHEMA_VERSION}",
        f"time: {_fmt(state.time)}",
        f"grid: nx={grid.nx} nz={grid.nz} lx={_fmt(grid.lx)} topology={grid.plate_topology} "
        f"ny={grid.ny if grid.ny is not None else 'none'} "
        f"ly={_fmt(grid.ly) if grid.ly is not None else 'none'}",
        "spacing: " + " ".join(_fmt(h) for h in grid.plate_spacing + (grid.hz,)),
        f"params: gamma={_fmt(params.gamma)} mu={_fmt(params.mu)} lam={_fmt(params.lam)} "
        f"rho_ref={_fmt(params.rho_ref)}",
        f"model: kind={model.kind} alpha={_fmt(model.alpha)}",
    ]
    fields_ = [("r", state.fluid.r.values), ("U", state.fluid.U.values),
               ("w", state.plate.w.values), ("v", state.plate.v.values)]
    if state.plate.theta is not None:
        fields_.append(("theta", state.plate.theta.values))
    head.append("fields: " + " ".join(n for n, _ in fields_))
    body = []
    for name, a in fields_:
        body.append(f"field {name} shape " + " ".join(str(s) for s in a.shape))
        rows = a.reshape(-1, a.shape[-1])
        body.extend(" ".join(_fmt(x) for x in row) for row in rows)
    body.append("end")
    Path(path).write_text("\n".join(head + body) + "\n")


def _kv(text: str) -> dict:
    out = {}
    for item in text.split():
        k, _, v = item.partition("=")
        out[k] = v
    return out


def read_snapshot(path) -> Snapshot:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "fsiplate-snapshot":
        raise SchemaError(f"{path} is not a snapshot file")
    head = {}
    k = 1
    while k < len(lines) and not lines[k].startswith("field "):
        key, _, val = lines[k].partition(": ")
        head[key] = val
        k += 1
    try:
        version = int(head["schema_version"])
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path} has no schema_version") from exc
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{path} has schema_version {version}, expected {SCHEMA_VERSION}")
    try:
        g = _kv(head["grid"])
        grid = Grid(int(g["nx"]), int(g["nz"]), float(g["lx"]), g["topology"],
                    None if g["ny"] == "none" else int(g["ny"]),
                    None if g["ly"] == "none" else float(g["ly"]))
        p = _kv(head["params"])
        params = FluidParams(float(p["gamma"]), float(p["mu"]), float(p["lam"]), float(p["rho_ref"]))
        m = _kv(head["model"])
        model = PlateModel(m["kind"], float(m["alpha"])) if m["kind"] in ("linear", "thermo_quasilinear") \
            else PlateModel("linear", float(m["alpha"]))
        t = float(head["time"])
        names = head["fields"].split()
    except KeyError as exc:
        raise SchemaError(f"{path} header lacks {exc}") from exc
    arrays = {}
    for name in names:
        if k >= len(lines) or not lines[k].startswith(f"field {name} shape"):
            raise SchemaError(f"{path} is truncated before field {name!r}")
        shape = tuple(int(s) for s in lines[k].split()[3:])
        nrows = int(np.prod(shape[:-1])) if len(shape) > 1 else 1
        rows = lines[k + 1:k + 1 + nrows]
        if len(rows) != nrows:
            raise SchemaError(f"{path} is truncated inside field {name!r}")
        try:
            data = np.array([[float(x) for x in row.split()] for row in rows])
        except ValueError as exc:
            raise SchemaError(f"{path} has a malformed row in field {name!r}") from exc
        if data.size != int(np.prod(shape)):
            raise SchemaError(f"{path} has a truncated row in field {name!r}")
        arrays[name] = data.reshape(shape)
        k += 1 + nrows
    if k >= len(lines) or lines[k] != "end":
        raise SchemaError(f"{path} is truncated (no end marker)")
    fluid = FluidState(ScalarField(arrays["r"], grid), VectorField(arrays["U"], grid))
    theta = PlateField(arrays["theta"], grid) if "theta" in arrays else None
    plate = PlateState(PlateField(arrays["w"], grid), PlateField(arrays["v"], grid), theta)
    return Snapshot(state=CoupledState(fluid, plate, t), params=params, model=model)


# --------------------------------------------------------------------------
# scenarios

def _energy_columns(traj: Trajectory, params, model) -> tuple[np.ndarray, dict]:
    reps = [energy(s, params, model, a, b, c) for s, a, b, c in
            zip(traj.states, traj.viscous_cum, traj.plate_cum, traj.thermal_cum)]
    cols = {name: [r.as_dict()[name] for r in reps] for name in ENERGY_COLUMNS}
    if any(r.potential != 0 for r in reps):
        cols["potential"] = [r.potential for r in reps]
    if traj.states[0].plate.theta is not None:
        cols["thermal"] = [r.thermal for r in reps]
        cols["thermal_dissipation_cum"] = [r.thermal_dissipation_cum for r in reps]
    return traj.times, cols


def _simulate(cfg: ExperimentConfig, out: Path) -> Trajectory:
    data = initial_data(cfg)
    traj = run(data, cfg.scheme, cfg.params, cfg.model, fixed_dt=cfg.sections["fixed_dt"],
               raise_on_collision=False)
    if "csv" in cfg.output["formats"]:
        t, cols = _energy_columns(traj, cfg.params, cfg.model)
        write_timeseries(out / "energy.csv", t, cols)
        bud = energy_budget(traj, cfg.params, cfg.model)
        write_timeseries(out / "budget.csv", bud.times, {"total": bud.totals, "gap": bud.gaps})
        ent = [relative_entropy(s, traj.states[0], cfg.params, cfg.model).total for s in traj.states]
        write_timeseries(out / "entropy_from_initial.csv", t, {"total": ent})
    if "snapshot" in cfg.output["formats"]:
        every = int(cfg.output["snapshot_every"])
        idx = range(0, len(traj), every) if every > 0 else sorted({0, len(traj) - 1})
        for k in idx:
            write_snapshot(out / f"snapshot_{k:05d}.txt", traj.states[k], cfg.params, cfg.model)
    return traj


def _scenario_run(cfg, out) -> dict:
    traj = _simulate(cfg, out)
    bud = energy_budget(traj, cfg.params, cfg.model)
    summary = {"steps": len(traj.steps), "snapshots": len(traj), "final_time": float(traj.times[-1]),
               "energy_initial": bud.initial, "max_energy_gap": bud.max_gap,
               "energy_tolerance": bud.tolerance, "energy_passed": bud.passed}
    if traj.terminated:
        summary["terminated"] = traj.terminated
    return summary


def _scenario_mms(cfg, out) -> dict:
    m = cfg.sections["mms"]
    sol = ManufacturedSolution(eps=float(m["eps"]), amp=float(m["amp"]),
                               rho_mean=float(cfg.initial["rho0"]))
    res = convergence_study(sol, m["levels"], cfg.params, cfg.model, t_end=float(m["t_end"]),
                            dt0=float(m["dt_coarse"]), base_grid=cfg.grid)
    rows = []
    for k, n in enumerate(res["levels"]):
        order = res["orders"][k - 1] if k > 0 else float("nan")
        rows.append((str(n), cfg.grid.lx / n, float(m["dt_coarse"]) * res["levels"][0] / n,
                     res["errors"][k], order))
    _table(out / "mms.csv", ("level", "hx", "dt", "error", "order"), rows)
    return {"errors": [float(e) for e in res["errors"]], "orders": [float(o) for o in res["orders"]]}


def wsu_refinement(cfg: ExperimentConfig) -> dict:
    """Same initial data on each level; compare coarse levels with the finest."""
    w = cfg.sections["wsu"]
    levels = [int(n) for n in w["levels"]]
    if len(levels) < 2 or any(b % a for a, b in zip(levels, levels[1:])):
        raise ValidationError("wsu.levels must be at least two nested resolutions")
    trajs = {}
    for n in levels:
        grid = cfg.grid.with_resolution(n, n)
        k = n // levels[0]
        scheme = SchemeConfig(dt=float(w["dt_coarse"]) / k, t_end=float(w["t_end"]),
                              collision_eps=cfg.scheme.collision_eps, cfl_safety=cfg.scheme.cfl_safety,
                              output_every=k, newton_tol=cfg.scheme.newton_tol,
                              max_newton=cfg.scheme.max_newton)
        t0 = time.perf_counter()
        trajs[n] = run(initial_data(cfg, grid), scheme, cfg.params, cfg.model, fixed_dt=True)
        log.info("wsu level %d: %d steps in %.1f s", n, len(trajs[n].steps), time.perf_counter() - t0)
    fine = trajs[levels[-1]]
    gf = fine.states[0].grid
    series, sup, residual = {}, [], []
    for n in levels[:-1]:
        coarse = [interpolate_state(s, gf) for s in trajs[n].states]
        ent = [relative_entropy(a, b, cfg.params, cfg.model).total for a, b in zip(coarse, fine.states)]
        series[f"entropy_{n}"] = ent
        sup.append(max(ent))
        rep = relative_energy_residual(coarse, fine.states, cfg.params, cfg.model)
        series[f"residual_{n}"] = rep.residual
        residual.append((rep.max_residual, rep.tolerance))
    return {"levels": levels, "sup_entropy": sup, "residual": residual,
            "times": fine.times, "series": series}


def _scenario_wsu(cfg, out) -> dict:
    res = wsu_refinement(cfg)
    rows = []
    for k, n in enumerate(res["levels"][:-1]):
        ratio = res["sup_entropy"][k - 1] / res["sup_entropy"][k] if k > 0 else float("nan")
        rows.append((str(n), res["sup_entropy"][k], ratio, res["residual"][k][0], res["residual"][k][1]))
    _table(out / "wsu.csv", ("level", "sup_entropy", "decrease_factor", "max_residual",
                             "residual_tolerance"), rows)
    write_timeseries(out / "wsu_series.csv", res["times"], res["series"])
    return {"levels": res["levels"], "sup_entropy": [float(x) for x in res["sup_entropy"]]}


def _scenario_regularity(cfg, out) -> dict:
    traj = _simulate(cfg, out)
    r = cfg.sections["regularity"]
    rep = regularity_scan(traj.states, traj.times, [float(s) for s in r["s_grid"]],
                          [int(m) for m in r["h_decades"]], float(r["ratio_bound"]))
    header = ["s", "ratio", "passed"] + [f"norm_h{m}" for m in r["h_decades"]]
    rows = [[s, rep.ratios[i], "true" if rep.ratios[i] <= rep.ratio_bound else "false",
             *rep.norms[i]] for i, s in enumerate(rep.s_grid)]
    _table(out / "regularity.csv", header, rows)
    sup = threshold_s(cfg.params.gamma, cfg.grid.d, cfg.model.alpha > 0)
    return {"empirical_threshold": rep.threshold, "theoretical_supremum": float(sup),
            "ratios": {str(s): float(x) for s, x in zip(rep.s_grid, rep.ratios)}}


def _scenario_invariants(cfg, out) -> dict:
    from .invariants import run_invariant_suite
    results = run_invariant_suite(cfg.seed, int(cfg.sections["invariants"]["samples"]))
    _table(out / "invariants.csv", ("name", "value", "tolerance", "passed"),
           [(r.name, r.value, r.tolerance, "true" if r.passed else "false") for r in results])
    failed = [r.name for r in results if not r.passed]
    return {"checks": len(results), "failed": failed}


_RUNNERS = {"equilibrium": _scenario_run, "free_decay": _scenario_run,
            "forced_mms": _scenario_mms, "wsu_refinement": _scenario_wsu,
            "regularity_scan": _scenario_regularity, "invariant_suite": _scenario_invariants}


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def run_scenario(cfg: ExperimentConfig, output_dir=None) -> dict:
    """Execute the scenario and write its artifacts; returns the summary."""
    out = Path(output_dir if output_dir is not None else cfg.output["directory"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.yaml").write_text(yaml.safe_dump(_plain(cfg.resolved), sort_keys=True))
    for stale in ("FAILED", "summary.yaml"):
        (out / stale).unlink(missing_ok=True)
    np.random.seed(cfg.seed % 2 ** 32)
    try:
        summary = _RUNNERS[cfg.scenario](cfg, out)
    except Exception as exc:
        (out / "FAILED").write_text(f"{type(exc).__name__}: {exc}\n")
        raise
    summary = {"scenario": cfg.scenario, **_plain(summary)}
    (out / "summary.yaml").write_text(yaml.safe_dump(summary, sort_keys=True))
    return summary


# --------------------------------------------------------------------------
# command line

def _with_overrides(cfg_path, seed, scenario=None) -> ExperimentConfig:
    cfg = load_config(cfg_path)
    if seed is not None or scenario is not None:
        doc = copy.deepcopy(cfg.resolved)
        if seed is not None:
            doc["seed"] = int(seed)
        if scenario is not None:
            doc["scenario"] = scenario
        cfg = build_config(doc)
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fsiplate",
                                     description="Compressible fluid / elastic plate laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run the configured scenario"),
                           ("check", "validate a config and print it with defaults"),
                           ("scan", "simulate and run the regularity scan")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--output-dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--verbose", action="store_true")
    p = sub.add_parser("compare", help="relative entropy of snapshot A with respect to snapshot B")
    p.add_argument("snap_a")
    p.add_argument("snap_b")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            a, b = read_snapshot(args.snap_a), read_snapshot(args.snap_b)
            rep: EntropyReport = relative_entropy(a.state, b.state, a["params"], a["model"])
            for key, val in rep.as_dict().items():
                print(f"{key} {_fmt(val)}")
            return 0
        cfg = _with_overrides(args.config, args.seed,
                              "regularity_scan" if args.command == "scan" else None)
        if args.command == "check":
            print(yaml.safe_dump(_plain(cfg.resolved), sort_keys=True), end="")
            return 0
        t0 = time.perf_counter()
        summary = run_scenario(cfg, args.output_dir)
        log.info("finished in %.1f s", time.perf_counter() - t0)
        print(yaml.safe_dump(summary, sort_keys=True), end="")
        return 0
    except FsiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
