"""Configuration files, run logs and the ``gasmste`` command line.

A run configuration is one JSON document. Only ``domain``, ``sources`` and
``seed`` are required; every other section falls back to the illustrative
defaults and unknown keys are rejected. Logs are plain CSV plus a
``summary.json`` that echoes the effective configuration, so every
reported metric can be recomputed from the files alone.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from . import belief as bf
from .drive import ControlGains, RobotState
from .gospa import full_gospa, localization_gospa
from .plume import Domain, EnvParams, SensorModel, SourceTerm
from .sim import (TCC, WCC, MissionLog, MonteCarloReport, Scenario, corner_start, monte_carlo,
                  run_mission, run_static_grid, success_ratio, terminal_gospa)
from .wcc import WccParams, build_density, partition

log = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("t", "robot_id", "x", "y", "gamma", "v", "omega")
SAMPLES_COLUMNS = ("k", "t", "robot_id", "x", "y", "z", "detected")
ESTIMATES_COLUMNS = ("k", "label", "P_e", "x", "y", "Q", "sigma_theta")
METRICS_COLUMNS = ("k", "t", "gospa_full", "gospa_loc", "H_V")
DENSITY_COLUMNS = ("x", "y", "phi", "owner")

VERBOSITY = ("debug", "info", "warning", "error")
DEFAULT_N_ROBOTS = 6


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key path."""

    def __init__(self, field: str, constraint: str):
        super().__init__(f"{field}: {constraint}")
        self.field = field
        self.constraint = constraint


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    output_dir: str | None = None
    verbosity: str = "info"
    emit_grid: bool = False


# --------------------------------------------------------------------------
# parsing

_SECTION_DEFAULTS: dict[str, dict[str, Any]] = {
    "env": {"wind_speed": 4.0, "wind_dir": -math.pi / 2, "diffusivity": 1.2, "lifetime": 5.0},
    "sensor": {"noise_std": 0.1, "threshold": 0.5, "detect_prob": 0.95},
    "kernel": {"m_max": 4, "birth_prob": 0.08, "death_prob": 0.08, "merge_dist": 2.0,
               "min_rate": 0.5},
    "noise": {"sigma_x": 0.5, "sigma_y": 0.5, "sigma_q": 0.5},
    "birth": {"gamma_shape": 2.0, "gamma_scale": 5.0},
    "gains": {f.name: f.default for f in fields(ControlGains)},
    "wcc": {"alpha": -0.75, "grid_resolution": 0.5},
    "filter": {"n_particles": 25000, "resample_threshold": None},
    "mission": {"sigma_th": 4.0, "sample_dwell": 5.0, "max_time": 200.0, "gospa_cutoff": 10.0},
    "output": {"dir": None, "verbosity": "info", "emit_grid": False},
}
_TOP_KEYS = {"domain", "sources", "seed", "robots"} | set(_SECTION_DEFAULTS)
_INT_KEYS = {"m_max", "n_particles"}


def _number(value, path: str, integer: bool = False, allow_none: bool = False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, "must be a number")
    if integer:
        if float(value) != int(value):
            raise ConfigError(path, "must be an integer")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    return value


def _object(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, "must be an object")
    return value


def _section(raw: dict, name: str) -> dict[str, Any]:
    given = _object(raw.get(name, {}), name)
    defaults = _SECTION_DEFAULTS[name]
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}", "unknown key")
    out = dict(defaults)
    out.update(given)
    return out


def _numeric_section(raw: dict, name: str) -> dict[str, Any]:
    sec = _section(raw, name)
    for key, val in sec.items():
        sec[key] = _number(val, f"{name}.{key}", integer=key in _INT_KEYS,
                           allow_none=_SECTION_DEFAULTS[name][key] is None)
    return sec


def _build(cls, name: str, **kwargs):
    """Construct ``cls`` and re-raise its invariant failures with a field path."""
    try:
        return cls(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in kwargs if msg.startswith(k) or f" {k} " in f" {msg} "), None)
        raise ConfigError(f"{name}.{key}" if key else name, msg) from None


def _parse_domain(raw) -> Domain:
    if "domain" not in raw:
        raise ConfigError("domain", "required")
    d = _object(raw["domain"], "domain")
    keys = ("x_min", "x_max", "y_min", "y_max")
    unknown = sorted(set(d) - set(keys))
    if unknown:
        raise ConfigError(f"domain.{unknown[0]}", "unknown key")
    vals = {}
    for k in keys:
        if k not in d:
            raise ConfigError(f"domain.{k}", "required")
        vals[k] = _number(d[k], f"domain.{k}")
    return _build(Domain, "domain", **vals)


def _parse_sources(raw, domain: Domain) -> tuple[SourceTerm, ...]:
    if "sources" not in raw:
        raise ConfigError("sources", "required")
    if not isinstance(raw["sources"], list):
        raise ConfigError("sources", "must be a list")
    out = []
    for i, s in enumerate(raw["sources"]):
        path = f"sources[{i}]"
        s = _object(s, path)
        unknown = sorted(set(s) - {"x", "y", "rate"})
        if unknown:
            raise ConfigError(f"{path}.{unknown[0]}", "unknown key")
        for k in ("x", "y", "rate"):
            if k not in s:
                raise ConfigError(f"{path}.{k}", "required")
        src = SourceTerm(*(_number(s[k], f"{path}.{k}") for k in ("x", "y", "rate")))
        if src.rate <= 0:
            raise ConfigError(f"{path}.rate", "rate must be > 0")
        if not domain.contains(src.position):
            raise ConfigError(path, "source must lie inside the domain")
        out.append(src)
    return tuple(out)


def _parse_robots(raw, domain: Domain) -> tuple[RobotState, ...]:
    given = raw.get("robots", DEFAULT_N_ROBOTS)
    if isinstance(given, (int, float)) and not isinstance(given, bool):
        n = _number(given, "robots", integer=True)
        if n < 1:
            raise ConfigError("robots", "robot count must be >= 1")
        return corner_start(n, domain)
    if not isinstance(given, list) or not given:
        raise ConfigError("robots", "must be a positive count or a non-empty list")
    out = []
    for i, r in enumerate(given):
        path = f"robots[{i}]"
        r = _object(r, path)
        unknown = sorted(set(r) - {"x", "y", "heading"})
        if unknown:
            raise ConfigError(f"{path}.{unknown[0]}", "unknown key")
        for k in ("x", "y"):
            if k not in r:
                raise ConfigError(f"{path}.{k}", "required")
        state = RobotState(_number(r["x"], f"{path}.x"), _number(r["y"], f"{path}.y"),
                           _number(r.get("heading", 0.0), f"{path}.heading"))
        if not -math.pi <= state.heading < math.pi:
            raise ConfigError(f"{path}.heading", "heading must lie in [-pi, pi)")
        if not domain.contains(state.position):
            raise ConfigError(path, "robot must start inside the domain")
        out.append(state)
    return tuple(out)


def config_from_dict(raw: dict) -> RunConfig:
    """Validate a decoded JSON document and apply defaults."""
    raw = _object(raw, "config")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    domain = _parse_domain(raw)
    truth = _parse_sources(raw, domain)
    if "seed" not in raw:
        raise ConfigError("seed", "required")
    seed = _number(raw["seed"], "seed", integer=True)
    if seed < 0:
        raise ConfigError("seed", "seed must be >= 0")
    robots = _parse_robots(raw, domain)

    env = _numeric_section(raw, "env")
    if not -math.pi <= env["wind_dir"] < math.pi:
        raise ConfigError("env.wind_dir", "wind_dir must lie in [-pi, pi)")
    env = _build(EnvParams, "env", **env)
    sensor = _build(SensorModel, "sensor", **_numeric_section(raw, "sensor"))
    kernel = _build(bf.CardinalityKernel, "kernel", **_numeric_section(raw, "kernel"))
    noise = _build(bf.DiffusionNoise, "noise", **_numeric_section(raw, "noise"))
    birth = _build(bf.BirthPrior, "birth", region=domain, **_numeric_section(raw, "birth"))
    gains = _build(ControlGains, "gains", **_numeric_section(raw, "gains"))
    wcc = _build(WccParams, "wcc", **_numeric_section(raw, "wcc"))
    filt = _numeric_section(raw, "filter")
    _build(bf.FilterParams, "filter", **filt)
    mission = _numeric_section(raw, "mission")
    for key in ("sample_dwell", "max_time", "gospa_cutoff"):
        if mission[key] <= 0:
            raise ConfigError(f"mission.{key}", f"{key} must be > 0")
    if mission["sigma_th"] < 0:
        raise ConfigError("mission.sigma_th", "sigma_th must be >= 0")
    if len(robots) < kernel.m_max:
        raise ConfigError("robots", "need at least kernel.m_max robots")

    out = _section(raw, "output")
    if out["dir"] is not None and not isinstance(out["dir"], str):
        raise ConfigError("output.dir", "must be a string or null")
    if out["verbosity"] not in VERBOSITY:
        raise ConfigError("output.verbosity", f"must be one of {', '.join(VERBOSITY)}")
    if not isinstance(out["emit_grid"], bool):
        raise ConfigError("output.emit_grid", "must be true or false")

    try:
        scenario = Scenario(
            domain=domain, env=env, truth=truth, robots=robots, sensor=sensor, kernel=kernel,
            noise=noise, birth=birth, gains=gains, wcc=wcc,
            n_particles=filt["n_particles"], resample_threshold=filt["resample_threshold"],
            sigma_th=mission["sigma_th"], sample_dwell=mission["sample_dwell"],
            max_time=mission["max_time"], gospa_cutoff=mission["gospa_cutoff"], seed=seed,
        )
    except ValueError as exc:
        raise ConfigError("robots", str(exc)) from None
    return RunConfig(scenario, out["dir"], out["verbosity"], out["emit_grid"])


def parse_config(path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc.msg} (line {exc.lineno})") from None
    return config_from_dict(raw)


def _plain(obj) -> dict:
    return {k: v for k, v in asdict(obj).items()}


def serialize_config(cfg: RunConfig) -> dict:
    """Full effective configuration as a JSON-ready dict; parses back to an equal config."""
    sc = cfg.scenario
    birth = _plain(sc.birth)
    birth.pop("region")
    return {
        "domain": _plain(sc.domain),
        "sources": [_plain(s) for s in sc.truth],
        "seed": sc.seed,
        "robots": [_plain(r) for r in sc.robots],
        "env": _plain(sc.env),
        "sensor": _plain(sc.sensor),
        "kernel": _plain(sc.kernel),
        "noise": _plain(sc.noise),
        "birth": birth,
        "gains": _plain(sc.gains),
        "wcc": _plain(sc.wcc),
        "filter": {"n_particles": sc.n_particles, "resample_threshold": sc.resample_threshold},
        "mission": {"sigma_th": sc.sigma_th, "sample_dwell": sc.sample_dwell,
                    "max_time": sc.max_time, "gospa_cutoff": sc.gospa_cutoff},
        "output": {"dir": cfg.output_dir, "verbosity": cfg.verbosity, "emit_grid": cfg.emit_grid},
    }


# --------------------------------------------------------------------------
# log files


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _estimate_dict(est) -> dict | None:
    if est is None:
        return None
    return {"count": est.count, "sigma_theta": est.sigma,
            "sources": [_plain(s) for s in est.sources],
            "existence": [lab.existence for lab in est.labels]}


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def write_logs(mission: MissionLog, directory, cfg: RunConfig | None = None) -> Path:
    """Write the four CSV files and ``summary.json`` for one run into ``directory``."""
    out = Path(directory)
    cfg = cfg or RunConfig(mission.scenario)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, mission.trajectory)
        _write_csv(out / "samples.csv", SAMPLES_COLUMNS, mission.samples)
        _write_csv(out / "estimates.csv", ESTIMATES_COLUMNS, mission.estimates)
        _write_csv(out / "metrics.csv", METRICS_COLUMNS, mission.metrics)
        sc = mission.scenario
        summary = {
            "software": {"name": "gasmste", "version": __version__},
            "planner": mission.planner,
            "seeds": {"scenario": sc.seed},
            "termination": mission.termination,
            "end_time": mission.end_time,
            "n_samples": mission.n_samples,
            "sampling_times": mission.sampling_times,
            "gospa_cutoff": sc.gospa_cutoff,
            "q_scale": sc.q_scale,
            "final_estimates": _estimate_dict(mission.final),
            "final_gospa_loc": mission.final_localization_gospa() if mission.final else None,
            "events": mission.events,
            "config": serialize_config(replace(cfg, scenario=sc)),
        }
        (out / "summary.json").write_text(json.dumps(_json_safe(summary), indent=2) + "\n")
        for k, snap in sorted(mission.snapshots.items()):
            np.savez_compressed(out / f"belief_{k:04d}.npz", states=snap.states, card=snap.card,
                                weights=snap.weights, m_max=snap.m_max)
    except OSError as exc:
        raise OSError(f"failed writing logs to {out}: {exc}") from exc
    return out


def read_csv(path) -> list[dict[str, float]]:
    with Path(path).open(newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def load_summary(directory) -> dict:
    return json.loads((Path(directory) / "summary.json").read_text())


def final_estimates_from_files(directory) -> list[SourceTerm]:
    """Confirmed estimates of the last sampling event, read back from ``estimates.csv``."""
    rows = read_csv(Path(directory) / "estimates.csv")
    if not rows:
        return []
    last = max(r["k"] for r in rows)
    return [SourceTerm(r["x"], r["y"], r["Q"]) for r in rows
            if r["k"] == last and r["P_e"] >= 0.5]


# --------------------------------------------------------------------------
# CLI


def _dims(text: str) -> tuple[int, int]:
    try:
        r, c = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RxC, got {text!r}") from None
    if r < 1 or c < 1:
        raise argparse.ArgumentTypeError("grid dimensions must be positive")
    return r, c


def _planner(text: str) -> str:
    t = text.lower()
    if t in (WCC, TCC):
        return t
    if t.startswith("grid"):
        _dims(t[4:])
        return t
    raise argparse.ArgumentTypeError(f"planner must be wcc, tcc or gridRxC, got {text!r}")


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _pos_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gasmste", description="Multi-robot gas source term estimation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one closed-loop mission")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=_nonneg_int)
    s.add_argument("--planner", type=str.lower, choices=(WCC, TCC), default=WCC)
    s.add_argument("--out")

    g = sub.add_parser("grid", help="run a static sensor grid")
    g.add_argument("--config", required=True)
    g.add_argument("--dims", type=_dims, required=True)
    g.add_argument("--seed", type=_nonneg_int)
    g.add_argument("--out")

    m = sub.add_parser("mc", help="repeat a mission over derived seeds")
    m.add_argument("--config", required=True)
    m.add_argument("--runs", type=_pos_int, required=True)
    m.add_argument("--planner", type=_planner, default=WCC)
    m.add_argument("--out")

    e = sub.add_parser("eval", help="recompute GOSPA and success ratio from logs")
    e.add_argument("--log", required=True)
    e.add_argument("--cutoff", type=_pos_float, required=True)

    d = sub.add_parser("density", help="dump density and partition grids of one sampling event")
    d.add_argument("--log", required=True)
    d.add_argument("--step", type=_pos_int, required=True)
    d.add_argument("--out")
    return p


def _load(path) -> RunConfig:
    cfg = parse_config(path)
    logging.getLogger("gasmste").setLevel(cfg.verbosity.upper())
    return cfg


def _out_dir(arg, cfg: RunConfig, fallback: str) -> Path:
    if arg:
        return Path(arg)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(fallback)


def _cmd_simulate(args) -> int:
    cfg = _load(args.config)
    sc = cfg.scenario if args.seed is None else cfg.scenario.with_(seed=args.seed)
    cfg = replace(cfg, scenario=sc)
    mission = run_mission(sc, args.planner, keep_snapshots=cfg.emit_grid)
    out = write_logs(mission, _out_dir(args.out, cfg, f"run_{args.planner}_{sc.seed}"), cfg)
    print(f"{mission.termination} t={mission.end_time:g}s samples={mission.n_samples} "
          f"M={mission.final_count} gospa_loc={mission.final_localization_gospa():.4g} -> {out}")
    return 0


def _cmd_grid(args) -> int:
    cfg = _load(args.config)
    sc = cfg.scenario if args.seed is None else cfg.scenario.with_(seed=args.seed)
    cfg = replace(cfg, scenario=sc)
    mission = run_static_grid(sc, args.dims, keep_snapshots=cfg.emit_grid)
    r, c = args.dims
    out = write_logs(mission, _out_dir(args.out, cfg, f"grid_{r}x{c}_{sc.seed}"), cfg)
    print(f"{mission.termination} t={mission.end_time:g}s samples={mission.n_samples} "
          f"M={mission.final_count} gospa_loc={mission.final_localization_gospa():.4g} -> {out}")
    return 0


def _report_dict(report: MonteCarloReport, cutoff: float, logs) -> dict:
    runs = [{k: v for k, v in asdict(r).items() if k != "curve"} for r in report.runs]
    planners = sorted({r.planner for r in report.runs})
    return {
        "gospa_kind": report.gospa_kind,
        "n_runs": len(report.runs),
        "n_failed": sum(r.error is not None for r in report.runs),
        "success_ratio": success_ratio(logs, cutoff) if logs else None,
        "success_cutoff": cutoff,
        "mean_terminal_gospa": {p: report.mean_terminal(p) for p in planners
                                if report.by_planner(p)},
        "runs": runs,
    }


def _cmd_mc(args) -> int:
    cfg = _load(args.config)
    root = _out_dir(args.out, cfg, "mc")
    logs = []

    def on_run(mission, summary):
        logs.append(mission)
        write_logs(mission, root / f"run_{len(logs) - 1:03d}", cfg)

    report = monte_carlo(cfg.scenario, runs_per_cell=args.runs, planners=(args.planner,),
                         on_run=on_run)
    root.mkdir(parents=True, exist_ok=True)
    cutoff = cfg.scenario.gospa_cutoff
    (root / "report.json").write_text(
        json.dumps(_json_safe(_report_dict(report, cutoff, logs)), indent=2) + "\n")
    planner = args.planner
    curve = report.mean_curve(planner) if report.by_planner(planner) else \
        np.full(len(report.time_grid), math.nan)
    _write_csv(root / "mean_gospa.csv", ("t", "gospa"), zip(report.time_grid, curve))
    print(f"{len(report.runs)} runs -> {root}")
    return 0 if all(r.error is None for r in report.runs) else 1


def _find_logs(root: Path) -> list[Path]:
    if not root.is_dir():
        return []
    return sorted(p.parent for p in root.rglob("summary.json"))


def _cmd_eval(args) -> int:
    dirs = _find_logs(Path(args.log))
    if not dirs:
        print(f"no logs found under {args.log}", file=sys.stderr)
        return 1
    c = args.cutoff
    passed = 0
    print("log,termination,end_time,final_count,gospa_loc,gospa_full,terminal_gospa_full")
    for d in dirs:
        summ = load_summary(d)
        cfg = config_from_dict(summ["config"])
        truth = cfg.scenario.truth
        est = final_estimates_from_files(d)
        g_loc = localization_gospa(est, truth, c)
        g_full = full_gospa(est, truth, c, cfg.scenario.q_scale)
        metrics = read_csv(d / "metrics.csv")
        if metrics:
            times, values, seen = [], [], set()
            for row in metrics:
                if row["k"] not in seen:
                    seen.add(row["k"])
                    times.append(row["t"])
                    values.append(row["gospa_full"])
            term = terminal_gospa(np.array(times), np.array(values), float(summ["end_time"]))
        else:
            term = math.nan
        passed += g_loc < c
        print(f"{d},{summ['termination']},{_fmt(summ['end_time'])},{len(est)},"
              f"{_fmt(g_loc)},{_fmt(g_full)},{_fmt(term)}")
    print(f"success_ratio,{_fmt(passed / len(dirs))},cutoff,{_fmt(c)},runs,{len(dirs)}")
    return 0


def _cmd_density(args) -> int:
    root = Path(args.log)
    if not (root / "summary.json").is_file():
        print(f"no logs found under {root}", file=sys.stderr)
        return 1
    snap = root / f"belief_{args.step:04d}.npz"
    if not snap.is_file():
        print(f"no belief snapshot for step {args.step} in {root} "
              "(run with output.emit_grid = true)", file=sys.stderr)
        return 1
    summ = load_summary(root)
    sc = config_from_dict(summ["config"]).scenario
    with np.load(snap) as z:
        belief = bf.ParticleSet(z["states"], z["card"], z["weights"], int(z["m_max"]))
    field_ = build_density(belief, sc.domain, sc.wcc.grid_resolution)
    rows = [r for r in read_csv(root / "samples.csv") if int(r["k"]) == args.step]
    alpha = 0.0 if summ["planner"] == TCC else sc.wcc.alpha
    if rows and not summ["planner"].startswith("grid"):
        positions = np.array([[r["x"], r["y"]] for r in sorted(rows, key=lambda r: r["robot_id"])])
        owner = partition(positions, field_, alpha, sc.env.wind_dir).ravel()
    else:
        owner = np.full(field_.phi.size, -1)
    pts = field_.lattice.points
    out = Path(args.out) if args.out else root / f"density_{args.step:04d}.csv"
    _write_csv(out, DENSITY_COLUMNS,
               zip(pts[:, 0], pts[:, 1], field_.phi_flat, (int(o) for o in owner)))
    print(out)
    return 0


_COMMANDS = {"simulate": _cmd_simulate, "grid": _cmd_grid, "mc": _cmd_mc,
             "eval": _cmd_eval, "density": _cmd_density}


def cli_main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
