"""Configuration-driven command line entry point.

Commands: gen-env, heat, walk, verify <experiment>, report <dir>.
Exit status: 0 pass/completion, 1 experiment fail, 2 configuration error,
3 runtime error.  All floating output carries 17 significant digits and every
run is reproducible from (config, seed); per-trial CSV output is byte-stable
across re-runs and worker counts.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import _accel
from .environment import EnvironmentLaw, generate, save
from .errors import ConfigurationError, ExperimentAbort, FormatError
from .experiments import (ExperimentReport, run_boundedness_harnack,
                          run_elliptic_harnack, run_heat_bounds,
                          run_local_limit, run_oscillation)
from .lattice import LatticeBox
from .solvers import SolverConfig, heat_kernel
from .walker import empirical_kernel, sample_path

_COMMANDS = ("gen-env", "heat", "walk", "verify", "report")
_EXPERIMENTS = ("oscillation", "boundedness_harnack", "heat_bounds",
                "local_limit", "elliptic_harnack")

# key -> (parser, default); None default means required when listed
_KEY_TYPES = {
    "command": (str, None),
    "experiment": (str, ""),
    "seed": (int, 1),
    "threads": (int, 1),
    "out": (str, ""),
    "force": ("bool", False),
    "law": (str, "pareto_mixture"),
    "c": (float, 1.0),
    "a": (float, 8.0),
    "b": (float, 8.0),
    "trap_n": (int, 1),
    "trap_qprime": (float, 0.8),
    "env_file": (str, ""),
    "d": (int, 2),
    "p": (float, 4.0),
    "q": (float, 4.0),
    "radius": (int, 0),
    "center": ("ints", ()),
    "filename": (str, "environment.env"),
    "t": (float, 1.0),
    "x": ("ints", ()),
    "x0": ("ints", ()),
    "paths": (int, 10000),
    "dump_paths": (int, 0),
    "series_tol": (float, 1e-10),
    "max_leak": (float, 1e-12),
    "mode": (str, "parabolic"),
    "boundary_data": (str, "random"),
    "n": (int, 16),
    "trials": (int, 8),
    "tau": (float, 1.0),
    "c_free": (float, 1.0),
    "t_ladder": ("floats", (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)),
    "n_ladder": ("ints", (8, 16)),
    "heat_seeds": (int, 3),
    "k_half": (float, 1.0),
    "k_points": (int, 3),
    "sigma_paths": (int, 20000),
    "dir": (str, ""),
}

_ALLOWED = {
    "gen-env": {"command", "seed", "threads", "out", "force", "law", "c", "a", "b",
                "trap_n", "trap_qprime", "d", "radius", "center", "filename"},
    "heat": {"command", "seed", "threads", "out", "force", "law", "c", "a", "b",
             "trap_n", "trap_qprime", "env_file", "d", "radius", "center", "t", "x",
             "series_tol", "max_leak"},
    "walk": {"command", "seed", "threads", "out", "force", "law", "c", "a", "b",
             "trap_n", "trap_qprime", "env_file", "d", "radius", "center", "t", "x0",
             "paths", "dump_paths"},
    "verify": {"command", "experiment", "seed", "threads", "out", "force", "law",
               "c", "a", "b", "trap_n", "trap_qprime", "d", "p", "q", "mode",
               "boundary_data", "n", "trials", "tau", "c_free", "t", "t_ladder",
               "n_ladder", "heat_seeds", "k_half", "k_points", "sigma_paths",
               "series_tol", "max_leak", "radius"},
    "report": {"command", "dir", "seed", "threads", "out", "force"},
}

_REQUIRED = {
    "gen-env": {"radius"},
    "heat": set(),
    "walk": set(),
    "verify": {"experiment"},
    "report": {"dir"},
}


@dataclass
class RunConfig:
    command: str
    values: dict = dc_field(default_factory=dict)

    @property
    def experiment(self) -> str:
        return self.values.get("experiment", "")

    def __getitem__(self, key):
        return self.values[key]


def _parse_value(key: str, raw: str, where: str):
    kind = _KEY_TYPES[key][0]
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "ints":
            return tuple(int(v) for v in raw.split(",") if v.strip() != "")
        if kind == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip() != "")
    except ValueError:
        raise ConfigurationError(f"{where}: cannot parse value {raw!r} for key {key!r}") from None
    raise ConfigurationError(f"{where}: unsupported key kind for {key!r}")


def parse_config(text: str) -> RunConfig:
    """Parse `key = value` lines into a validated RunConfig with defaults echoed."""
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEY_TYPES:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = _parse_value(key, value, f"line {lineno}")
    if "command" not in raw:
        raise ConfigurationError("missing required key 'command'")
    return build_config(raw["command"], raw)


def build_config(command: str, overrides: dict) -> RunConfig:
    """Validate keys against the command schema and apply defaults."""
    if command not in _COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}")
    allowed = _ALLOWED[command]
    for key in overrides:
        if key not in allowed:
            raise ConfigurationError(f"key {key!r} is not accepted by command {command!r}")
    values = {}
    for key in sorted(allowed):
        if key in overrides:
            values[key] = overrides[key]
        else:
            default = _KEY_TYPES[key][1]
            values[key] = default
    values["command"] = command
    for key in _REQUIRED[command]:
        if not values.get(key):
            raise ConfigurationError(f"command {command!r} requires key {key!r}")
    if command == "verify" and values["experiment"] not in _EXPERIMENTS:
        raise ConfigurationError(
            f"unknown experiment {values['experiment']!r}; "
            f"choose one of {', '.join(_EXPERIMENTS)}")
    return RunConfig(command, values)


def _law_from(cfg: RunConfig) -> EnvironmentLaw:
    v = cfg.values
    return EnvironmentLaw(kind=v["law"], seed=v["seed"], c=v["c"], a=v["a"], b=v["b"],
                          trap_n=v["trap_n"], trap_qprime=v["trap_qprime"])


def _prepare_out(cfg: RunConfig) -> Path:
    out = cfg.values.get("out", "")
    if not out:
        raise ConfigurationError("an output directory is required (--out or 'out =')")
    path = Path(out)
    if path.exists() and not cfg.values.get("force", False):
        raise ConfigurationError(f"output directory {path} exists; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _environment_for(cfg: RunConfig):
    v = cfg.values
    if v.get("env_file"):
        from .environment import load

        return load(v["env_file"])
    if v["radius"] < 1:
        raise ConfigurationError("a positive 'radius' is required when no env_file is given")
    center = v["center"] or (0,) * v["d"]
    box = LatticeBox(center, v["radius"], v["d"])
    return generate(_law_from(cfg), box)


def _write_kernel_csv(path: Path, col, box) -> None:
    lines = [f"# leak={format(col.leak, '.17g')} series_tol={format(col.series_tol, '.17g')}"]
    d = box.dim
    lines.append("t," + ",".join(f"x{i + 1}" for i in range(d)) + ",value")
    verts = box.vertices()
    for i, val in enumerate(col.values):
        coords = ",".join(str(int(c)) for c in verts[i])
        lines.append(f"{format(col.t, '.17g')},{coords},{format(float(val), '.17g')}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run(cfg: RunConfig) -> int:
    """Dispatch a validated config; returns the exit status."""
    _accel.set_num_threads(cfg.values.get("threads", 1))
    try:
        if cfg.command == "report":
            return _cmd_report(cfg)
        out = _prepare_out(cfg)
        if cfg.command == "gen-env":
            return _cmd_gen_env(cfg, out)
        if cfg.command == "heat":
            return _cmd_heat(cfg, out)
        if cfg.command == "walk":
            return _cmd_walk(cfg, out)
        if cfg.command == "verify":
            return _cmd_verify(cfg, out)
        raise ConfigurationError(f"unknown command {cfg.command!r}")
    except (ConfigurationError, FormatError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ExperimentAbort as exc:
        print(f"experiment aborted: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - runtime failures map to status 3
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def _echo_report(out: Path, report: ExperimentReport) -> None:
    (out / "report.json").write_text(report.to_json_text(), encoding="utf-8")
    (out / "trials.csv").write_text(report.trials_csv_text(), encoding="utf-8")


def _cmd_gen_env(cfg: RunConfig, out: Path) -> int:
    field = _environment_for(cfg)
    save(field, out / cfg.values["filename"])
    report = ExperimentReport(name="gen-env", config=dict(cfg.values),
                              measured={"bonds": len(field.bonds)})
    _echo_report(out, report)
    return 0


def _cmd_heat(cfg: RunConfig, out: Path) -> int:
    field = _environment_for(cfg)
    v = cfg.values
    x = v["x"] or (0,) * field.box.dim
    sc = SolverConfig(series_tol=v["series_tol"], max_mass_leak=v["max_leak"])
    col = heat_kernel(field, x, v["t"], sc)
    _write_kernel_csv(out / "kernel.csv", col, field.box)
    report = ExperimentReport(name="heat", config=dict(cfg.values),
                              measured={"leak": col.leak, "mass": col.total_mass()})
    _echo_report(out, report)
    return 0


def _cmd_walk(cfg: RunConfig, out: Path) -> int:
    field = _environment_for(cfg)
    v = cfg.values
    x0 = v["x0"] or (0,) * field.box.dim
    kern = empirical_kernel(field, x0, v["t"], v["paths"], v["seed"])
    lines = [f"# truncated_fraction={format(kern.truncated_fraction, '.17g')} paths={v['paths']}"]
    d = field.box.dim
    lines.append("t," + ",".join(f"x{i + 1}" for i in range(d)) + ",value")
    verts = field.box.vertices()
    nz = np.nonzero(kern.values)[0]
    for i in nz:
        coords = ",".join(str(int(c)) for c in verts[i])
        lines.append(f"{format(v['t'], '.17g')},{coords},{format(float(kern.values[i]), '.17g')}")
    (out / "histogram.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if v["dump_paths"]:
        plines = ["path_index,jump_time," + ",".join(f"x{i + 1}" for i in range(d))]
        for idx in range(v["dump_paths"]):
            path = sample_path(field, x0, v["t"], v["seed"], idx)
            for k in range(len(path.jump_times)):
                coords = ",".join(str(int(c)) for c in path.visited[k])
                plines.append(f"{idx},{format(float(path.jump_times[k]), '.17g')},{coords}")
        (out / "paths.csv").write_text("\n".join(plines) + "\n", encoding="utf-8")
    report = ExperimentReport(name="walk", config=dict(cfg.values),
                              measured={"truncated_fraction": kern.truncated_fraction,
                                        "warning": kern.warning})
    _echo_report(out, report)
    return 0


def _cmd_verify(cfg: RunConfig, out: Path) -> int:
    v = cfg.values
    law = _law_from(cfg)
    name = v["experiment"]
    if name == "oscillation":
        report = run_oscillation(v["mode"], law, v["d"], v["p"], v["q"], v["n"],
                                 v["trials"], v["seed"], boundary_data=v["boundary_data"])
    elif name == "boundedness_harnack":
        report = run_boundedness_harnack(law, v["d"], v["p"], v["q"], v["n"],
                                         v["tau"], v["trials"], v["seed"], v["c_free"])
    elif name == "heat_bounds":
        report = run_heat_bounds(law, v["d"], v["p"], v["q"], v["t_ladder"],
                                 v["heat_seeds"], v["n_ladder"], v["seed"],
                                 trap_qprime=v["trap_qprime"])
    elif name == "local_limit":
        grid1 = np.linspace(-v["k_half"], v["k_half"], v["k_points"])
        K_grid = [tuple(pt) for pt in itertools.product(grid1, repeat=v["d"])]
        report = run_local_limit(law, v["d"], v["p"], v["q"], v["n_ladder"],
                                 v["t"], K_grid, v["seed"], sigma_paths=v["sigma_paths"])
    elif name == "elliptic_harnack":
        report = run_elliptic_harnack(law, v["d"], v["p"], v["q"], v["n"],
                                      v["trials"], v["seed"], v["c_free"])
    else:
        raise ConfigurationError(f"unknown experiment {name!r}")
    _echo_report(out, report)
    print(f"{report.name}: {report.status} "
          f"({len(report.trials)} trials, {report.skipped} skipped)")
    return 0 if report.status == "pass" else 1


def _cmd_report(cfg: RunConfig) -> int:
    path = Path(cfg.values["dir"]) / "report.json"
    if not path.exists():
        raise ConfigurationError(f"no report.json under {cfg.values['dir']!r}")
    import json

    doc = json.loads(path.read_text(encoding="utf-8"))
    print(f"experiment: {doc.get('experiment')}")
    print(f"status:     {doc.get('status')}")
    print(f"trials:     {doc.get('trial_count')} ({doc.get('skipped_trials')} skipped)")
    for key, val in sorted(doc.get("measured", {}).items()):
        print(f"  {key} = {val}")
    return 0 if doc.get("status") == "pass" else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rcm", description="Random conductance model laboratory")
    parser.add_argument("command", choices=_COMMANDS)
    parser.add_argument("target", nargs="?", default="",
                        help="experiment name (verify) or report directory (report)")
    parser.add_argument("--config", default="", help="path to a key = value config file")
    parser.add_argument("--out", default="")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--force", action="store_true")
    args = parser.parse_args(argv)

    try:
        overrides: dict = {}
        if args.config:
            text = Path(args.config).read_text(encoding="utf-8")
            file_cfg = parse_config(text)
            if file_cfg.command != args.command:
                raise ConfigurationError(
                    f"config file command {file_cfg.command!r} does not match "
                    f"CLI command {args.command!r}")
            overrides.update({k: v for k, v in file_cfg.values.items()})
        if args.command == "verify" and args.target:
            overrides["experiment"] = args.target
        if args.command == "report" and args.target:
            overrides["dir"] = args.target
        if args.out:
            overrides["out"] = args.out
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.force:
            overrides["force"] = True
        overrides.pop("command", None)
        cfg = build_config(args.command, overrides)
    except (ConfigurationError, FormatError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
