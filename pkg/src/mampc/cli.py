"""Experiment driver: PRBS simulation, identification, closed-loop runs, metrics.

Configuration is flat ``key = value`` text with dotted section names.
Every key has a default; the resolved configuration is written next to
every artifact so a run can be repeated from its output directory alone.

Exit codes: 0 success, 1 configuration or input error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .controller import ClosedLoopError, HorizonConfig, closed_loop
from .lti import LtiModel
from .metrics import ClosedLoopLog, fmt, summarize
from .plants import (PlantError, PrbsConfig, QuadrupleTank, SofcParams, SofcStack,
                     TankParams, calibrate_pump_gains, prbs, TANK_NOMINAL_INPUT,
                     TANK_NOMINAL_LEVELS)
from .qpcore import QpInfeasibleError
from .sysid import IdentificationError, IoDataset, detrend, subspace_identify

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2

CONFIG_NAME = "config.txt"
DATASET_NAME = "dataset.csv"
MODEL_NAME = "model.csv"
METRICS_NAME = "metrics.csv"


class ConfigError(ValueError):
    """Invalid or missing configuration or input artifact."""


# ------------------------------------------------------------------ values

def _parse_value(kind: str, text: str):
    text = text.strip()
    if kind.startswith("opt_"):
        if text.lower() == "none":
            return None
        kind = kind[4:]
    if kind == "int":
        return int(text, 0)
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected true/false, got {text!r}")
    if kind == "str":
        return text
    if kind == "floats":
        return tuple(float(v) for v in text.split(","))
    if kind == "ints":
        return tuple(int(v, 0) for v in text.split(","))
    raise AssertionError(kind)


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _kind_of(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, tuple):
        return "ints" if all(isinstance(v, int) for v in value) else "floats"
    return "str"


# ------------------------------------------------------------------ schema

# per-plant experiment defaults; plant constants are added from the
# parameter dataclasses under ``tank.*`` / ``sofc.*``
_PLANT_DEFAULTS = {
    "tank": {
        "sim.dt": ("float", 10.0),
        "sim.dt_int": ("float", 1.0),
        "sim.u_nominal": ("floats", (50.0, 50.0)),
        "prbs.low": ("floats", (37.5, 37.5)),
        "prbs.high": ("floats", (62.5, 62.5)),
        "horizon.u_min": ("floats", (0.0, 0.0)),
        "horizon.u_max": ("floats", (100.0, 100.0)),
        "reference.segments": ("str", "0: 1, 1; 30: 3, 3; 120: 2, 2"),
    },
    "sofc": {
        "sim.dt": ("float", 0.01),
        "sim.dt_int": ("float", 5e-4),
        "sim.u_nominal": ("floats", (100.0, 100.0)),
        "prbs.low": ("floats", (95.0, 90.0)),
        "prbs.high": ("floats", (105.0, 110.0)),
        "horizon.u_min": ("floats", (50.0, 50.0)),
        "horizon.u_max": ("floats", (150.0, 150.0)),
        "reference.segments": ("str", "0: 1; 30: 2; 120: 0"),
    },
}

_COMMON_DEFAULTS = {
    "experiment.plant": ("str", "tank"),
    "prbs.order": ("int", 8),
    "prbs.hold": ("int", 5),
    "prbs.length": ("int", 1275),
    "prbs.seeds": ("ints", (1, 181)),
    "ident.order": ("opt_int", 4),
    "ident.block_rows": ("opt_int", None),
    "ident.detrend": ("bool", True),
    "horizon.n_p": ("int", 10),
    "horizon.n_c": ("int", 5),
    "horizon.n_s": ("int", 1),
    "horizon.s": ("int", 3),
    "horizon.lam": ("float", 1.0),
    "horizon.mu": ("opt_float", None),
    "horizon.y_min": ("opt_float", None),
    "horizon.y_max": ("opt_float", None),
    "horizon.eps1": ("float", 1e-4),
    "horizon.max_alt_iter": ("int", 50),
    "horizon.count_past_differences": ("bool", True),
    "horizon.warm_start": ("bool", False),
    "horizon.qp_tol": ("float", 1e-8),
    "horizon.descent_tol": ("float", 1e-9),
    "reference.relative": ("bool", True),
    "run.N": ("int", 250),
    "run.bootstrap": ("int", 15),
    "run.controller": ("str", "mampc"),
    "run.drop": ("int", 15),
    "run.threshold": ("float", 0.1),
}

_PARAM_CLASSES = {"tank": TankParams, "sofc": SofcParams}
_OPTIONAL_PARAMS = {("tank", "k1"), ("tank", "k2")}


def _schema(plant: str) -> dict:
    if plant not in _PLANT_DEFAULTS:
        raise ConfigError(f"experiment.plant must be one of {sorted(_PLANT_DEFAULTS)}, got {plant!r}")
    schema = dict(_COMMON_DEFAULTS)
    schema.update(_PLANT_DEFAULTS[plant])
    defaults = _PARAM_CLASSES[plant]()
    for f in fields(defaults):
        value = getattr(defaults, f.name)
        kind = "opt_float" if (plant, f.name) in _OPTIONAL_PARAMS else _kind_of(value)
        schema[f"{plant}.{f.name}"] = (kind, value)
    return schema


@dataclass
class ExperimentConfig:
    """Resolved experiment settings as a flat ``{dotted key: value}`` map."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def plant(self) -> str:
        return self.values["experiment.plant"]

    @classmethod
    def defaults(cls, plant: str = "tank") -> "ExperimentConfig":
        schema = _schema(plant)
        values = {k: v for k, (_, v) in schema.items()}
        values["experiment.plant"] = plant
        return cls(values)

    @classmethod
    def from_pairs(cls, pairs, base: Optional["ExperimentConfig"] = None) -> "ExperimentConfig":
        """Apply ``(key, text)`` overrides; ``experiment.plant`` is applied first."""
        pairs = list(pairs)
        plant = base.plant if base is not None else "tank"
        for key, text in pairs:
            if key == "experiment.plant":
                plant = text.strip()
        if base is None or base.plant != plant:
            cfg = cls.defaults(plant)
        else:
            cfg = cls(dict(base.values))
        schema = _schema(plant)
        for key, text in pairs:
            if key not in schema:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                cfg.values[key] = _parse_value(schema[key][0], text)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def parse(cls, text: str, base=None) -> "ExperimentConfig":
        pairs = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            pairs.append((key.strip(), value))
        return cls.from_pairs(pairs, base)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.parse(text)

    def dumps(self) -> str:
        return "".join(f"{k} = {_format_value(self.values[k])}\n" for k in sorted(self.values))

    def validate(self):
        m = 2
        for key in ("sim.u_nominal", "prbs.low", "prbs.high", "prbs.seeds",
                    "horizon.u_min", "horizon.u_max"):
            if len(self.values[key]) != m:
                raise ConfigError(f"{key} needs {m} entries, got {len(self.values[key])}")
        if self["prbs.length"] < 1:
            raise ConfigError("prbs.length must be >= 1 (an empty experiment cannot be identified)")
        if self["run.N"] < 1:
            raise ConfigError("run.N must be >= 1")
        if self["run.controller"] not in ("mpc", "mampc"):
            raise ConfigError(f"run.controller must be mpc or mampc, got {self['run.controller']!r}")
        if self["sim.dt"] <= 0 or self["sim.dt_int"] <= 0:
            raise ConfigError("sim.dt and sim.dt_int must be positive")
        try:
            self.prbs_configs()
            self.horizon()
            self.plant_params()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        reference_segments(self["reference.segments"], self.n_outputs)

    @property
    def n_outputs(self) -> int:
        return 2 if self.plant == "tank" else 1

    # ----------------------------------------------------------- builders

    def prbs_configs(self):
        return [PrbsConfig(self["prbs.order"], seed, self["prbs.hold"], lo, hi)
                for seed, lo, hi in zip(self["prbs.seeds"], self["prbs.low"], self["prbs.high"])]

    def horizon(self) -> HorizonConfig:
        def opt(key):
            v = self[key]
            return (-np.inf if key.endswith("min") else np.inf) if v is None else v
        return HorizonConfig(
            n_p=self["horizon.n_p"], n_c=self["horizon.n_c"], n_s=self["horizon.n_s"],
            s=self["horizon.s"], lam=self["horizon.lam"], mu=self["horizon.mu"],
            u_min=np.array(self["horizon.u_min"]), u_max=np.array(self["horizon.u_max"]),
            y_min=opt("horizon.y_min"), y_max=opt("horizon.y_max"),
            eps1=self["horizon.eps1"], max_alt_iter=self["horizon.max_alt_iter"],
            count_past_differences=self["horizon.count_past_differences"],
            warm_start=self["horizon.warm_start"], qp_tol=self["horizon.qp_tol"],
            descent_tol=self["horizon.descent_tol"])

    def plant_params(self):
        cls = _PARAM_CLASSES[self.plant]
        kw = {f.name: self[f"{self.plant}.{f.name}"] for f in fields(cls)}
        return cls(**kw)

    def build_plant(self):
        """Plant object, its equilibrium state and the nominal input."""
        u0 = np.array(self["sim.u_nominal"])
        params = self.plant_params()
        if self.plant == "tank":
            if params.k1 is None or params.k2 is None:
                k1, k2 = calibrate_pump_gains(params, TANK_NOMINAL_INPUT, TANK_NOMINAL_LEVELS)
                params = replace(params, k1=params.k1 or k1, k2=params.k2 or k2)
            plant = QuadrupleTank(params, dt_int=self["sim.dt_int"])
        else:
            plant = SofcStack(params, dt_int=self["sim.dt_int"])
        return plant, plant.steady_state(u0), u0


def reference_segments(spec: str, l: int):
    """Parse ``"start: level, ...; start: level, ..."`` into sorted segments."""
    segs = []
    for chunk in spec.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        start, sep, levels = chunk.partition(":")
        if not sep:
            raise ConfigError(f"reference segment {chunk!r} needs 'start: levels'")
        try:
            segs.append((int(start), np.array([float(v) for v in levels.split(",")])))
        except ValueError:
            raise ConfigError(f"reference segment {chunk!r} is not numeric") from None
        if segs[-1][1].size != l:
            raise ConfigError(f"reference segment {chunk!r} has {segs[-1][1].size} levels for {l} outputs")
    if not segs or segs[0][0] != 0:
        raise ConfigError("reference.segments must start at step 0")
    if any(b[0] <= a[0] for a, b in zip(segs, segs[1:])):
        raise ConfigError("reference segment starts must increase")
    return segs


def reference_trajectory(cfg: ExperimentConfig, y0, length: int) -> np.ndarray:
    """Piecewise-constant reference rows ``0 .. length-1`` (absolute units)."""
    segs = reference_segments(cfg["reference.segments"], cfg.n_outputs)
    r = np.empty((length, cfg.n_outputs))
    for i, (start, level) in enumerate(segs):
        stop = segs[i + 1][0] if i + 1 < len(segs) else length
        r[start:stop] = level
    if cfg["reference.relative"]:
        r += np.asarray(y0, float)
    return r


# --------------------------------------------------------------- pipeline

def simulate_experiment(cfg: ExperimentConfig):
    """Open-loop PRBS experiment on the nonlinear plant: ``(t, u, y)``."""
    plant, x, _ = cfg.build_plant()
    T = cfg["prbs.length"]
    u = np.column_stack([prbs(pc, T) for pc in cfg.prbs_configs()])
    y = np.empty((T, plant.n_y))
    dt = cfg["sim.dt"]
    for k in range(T):
        y[k] = plant.output(x, u[k])
        x = plant.advance(x, u[k], dt)
    return dt * np.arange(T), u, y


def identify_model(cfg: ExperimentConfig, u, y):
    """Identified model and the deviation dataset it was fitted on."""
    if cfg["ident.detrend"]:
        data = detrend(u, y, cfg["sim.dt"])
    else:
        data = IoDataset(np.asarray(u, float), np.asarray(y, float), cfg["sim.dt"],
                         np.zeros(u.shape[1]), np.zeros(y.shape[1]))
    model = subspace_identify(data, order=cfg["ident.order"], block_rows=cfg["ident.block_rows"])
    return model, data


def run_label(cfg: ExperimentConfig) -> str:
    if cfg["run.controller"] == "mpc":
        return "mpc"
    return f"mampc-ns{cfg['horizon.n_s']}"


def run_experiment(cfg: ExperimentConfig, model: LtiModel, mean_u, mean_y) -> ClosedLoopLog:
    plant, x0, u0 = cfg.build_plant()
    N = cfg["run.N"]
    y0 = plant.output(x0, u0)
    r = reference_trajectory(cfg, y0, N + cfg["horizon.n_p"] + 1)
    header = {"label": run_label(cfg)} | {k: _format_value(v) for k, v in cfg.values.items()}
    return closed_loop(plant, model, cfg.horizon(), r, N, cfg["run.bootstrap"],
                       x0_plant=x0, u_init=u0, u_offset=mean_u, y_offset=mean_y,
                       controller=cfg["run.controller"], header=header)


# ------------------------------------------------------------------- files

def write_dataset(path, t, u, y):
    cols = ["t"] + [f"u{i + 1}" for i in range(u.shape[1])] + [f"y{i + 1}" for i in range(y.shape[1])]
    lines = [",".join(cols)]
    for k in range(len(t)):
        lines.append(",".join(fmt(v) for v in (t[k], *u[k], *y[k])))
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path):
    try:
        text = Path(path).read_text()
    except OSError:
        raise ConfigError(f"dataset {path} not found; run 'simulate' first") from None
    lines = text.splitlines()
    cols = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln]).reshape(-1, len(cols))
    m = sum(c.startswith("u") for c in cols)
    return data[:, 0], data[:, 1:1 + m], data[:, 1 + m:]


def write_model(path, model: LtiModel, mean_u, mean_y):
    """Text round-trip of the identified model (shortest exact float repr)."""
    def row(name, values):
        return ",".join([name] + [repr(float(v)) for v in values])
    lines = [f"dims,{model.n},{model.m},{model.l}", row("dt", [model.dt])]
    for name, M in (("A", model.A), ("B", model.B), ("C", model.C), ("D", model.D)):
        lines += [row(name, r) for r in M]
    lines += [row("mean_u", mean_u), row("mean_y", mean_y)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_model(path):
    try:
        text = Path(path).read_text()
    except OSError:
        raise ConfigError(f"model {path} not found; run 'identify' first") from None
    rows = {}
    for ln in text.splitlines():
        if ln:
            name, *vals = ln.split(",")
            rows.setdefault(name, []).append([float(v) for v in vals])
    try:
        n, m, l = (int(v) for v in rows["dims"][0])
        model = LtiModel(np.array(rows["A"]).reshape(n, n), np.array(rows["B"]).reshape(n, m),
                         np.array(rows["C"]).reshape(l, n), np.array(rows["D"]).reshape(l, m),
                         rows["dt"][0][0])
        return model, np.array(rows["mean_u"][0]), np.array(rows["mean_y"][0])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed model file {path}: {exc}") from None


def metrics_rows(label: str, log: ClosedLoopLog, threshold: float, drop: int):
    rows = []
    for d in sorted({0, drop}):
        s = summarize(log, threshold, d)
        rows.append([label, str(d), fmt(threshold)] + [fmt(s[f"density_u{c + 1}"]) for c in range(log.m)]
                    + [fmt(s["tracking_error"])])
    return rows


def _metrics_header(m):
    return ["label", "drop", "threshold"] + [f"density_u{c + 1}" for c in range(m)] + ["tracking_error"]


def merge_metrics(path, label, rows, m):
    """Replace ``label``'s rows in ``metrics.csv``, keeping rows sorted."""
    path = Path(path)
    kept = []
    if path.exists():
        for ln in path.read_text().splitlines()[1:]:
            if ln and ln.split(",")[0] != label:
                kept.append(ln.split(","))
    allrows = sorted(kept + rows, key=lambda r: (r[0], int(r[1])))
    path.write_text("\n".join(",".join(r) for r in [_metrics_header(m)] + allrows) + "\n")


def plot_log(log: ClosedLoopLog, out_dir, title: str):
    """Inputs and outputs-vs-reference as standalone SVG files."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "mampc", "svg.fonttype": "path"}):
        fig, axes = plt.subplots(log.l, 1, figsize=(7, 2.6 * log.l), squeeze=False)
        for i, ax in enumerate(axes[:, 0]):
            ax.plot(log.k, log.y[:, i], label=f"y{i + 1}")
            ax.step(log.k, log.r[:, i], where="post", ls="--", label=f"r{i + 1}")
            ax.set_ylabel(f"y{i + 1}")
            ax.legend(loc="best")
        axes[-1, 0].set_xlabel("step k")
        axes[0, 0].set_title(f"{title}: outputs")
        fig.tight_layout()
        fig.savefig(Path(out_dir) / "outputs.svg", metadata={"Date": None})
        plt.close(fig)

        fig, axes = plt.subplots(log.m, 1, figsize=(7, 2.6 * log.m), squeeze=False)
        for i, ax in enumerate(axes[:, 0]):
            ax.step(log.k, log.u[:, i], where="post")
            ax.set_ylabel(f"u{i + 1}")
        axes[-1, 0].set_xlabel("step k")
        axes[0, 0].set_title(f"{title}: inputs")
        fig.tight_layout()
        fig.savefig(Path(out_dir) / "inputs.svg", metadata={"Date": None})
        plt.close(fig)


# --------------------------------------------------------------- commands

def _prepare(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def cmd_simulate(cfg: ExperimentConfig, out) -> Path:
    out = _prepare(out)
    t, u, y = simulate_experiment(cfg)
    (out / CONFIG_NAME).write_text(cfg.dumps())
    write_dataset(out / DATASET_NAME, t, u, y)
    return out / DATASET_NAME


def cmd_identify(cfg: ExperimentConfig, out) -> Path:
    out = Path(out)
    _, u, y = read_dataset(out / DATASET_NAME)
    if u.shape[0] == 0:
        raise ConfigError(f"{out / DATASET_NAME} holds no samples")
    model, data = identify_model(cfg, u, y)
    write_model(out / MODEL_NAME, model, data.mean_u, data.mean_y)
    return out / MODEL_NAME


def cmd_run(cfg: ExperimentConfig, out) -> Path:
    out = Path(out)
    model, mean_u, mean_y = read_model(out / MODEL_NAME)
    label = run_label(cfg)
    run_dir = _prepare(out / label)
    (run_dir / CONFIG_NAME).write_text(cfg.dumps())
    try:
        log = run_experiment(cfg, model, mean_u, mean_y)
    except ClosedLoopError as exc:
        if exc.log is not None:
            (run_dir / "log.csv").write_text(exc.log.to_csv())
        raise
    (run_dir / "log.csv").write_text(log.to_csv())
    merge_metrics(out / METRICS_NAME, label,
                  metrics_rows(label, log, cfg["run.threshold"], cfg["run.drop"]), log.m)
    plot_log(log, run_dir, label)
    return run_dir


def cmd_compare(paths, threshold: float, drop: int, out=None) -> str:
    rows = []
    m = None
    for p in paths:
        try:
            log = ClosedLoopLog.from_csv(Path(p).read_text())
        except OSError:
            raise ConfigError(f"log {p} not found") from None
        except ValueError as exc:
            raise ConfigError(f"{p}: {exc}") from None
        if m is not None and log.m != m:
            raise ConfigError("logs have different input counts")
        m = log.m
        label = log.header.get("label", Path(p).parent.name)
        rows += metrics_rows(label, log, threshold, drop)
    text = "\n".join(",".join(r) for r in [_metrics_header(m)] + rows) + "\n"
    if out is not None:
        (_prepare(out) / "compare.csv").write_text(text)
    return text


# -------------------------------------------------------------------- main

def _resolve(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.defaults()
    pairs = []
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        pairs.append((key.strip(), value))
    if getattr(args, "controller", None):
        pairs.append(("run.controller", args.controller))
    if getattr(args, "ns", None) is not None:
        pairs.append(("horizon.n_s", str(args.ns)))
    if getattr(args, "drop", None) is not None:
        pairs.append(("run.drop", str(args.drop)))
    if getattr(args, "threshold", None) is not None:
        pairs.append(("run.threshold", repr(args.threshold)))
    return ExperimentConfig.from_pairs(pairs, cfg) if pairs else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mampc", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file (defaults if omitted)")
        p.add_argument("--out", default="out", help="output directory (default: %(default)s)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key; repeatable")

    common(sub.add_parser("simulate", help="PRBS experiment on the nonlinear plant -> dataset.csv"))
    common(sub.add_parser("identify", help="subspace identification of dataset.csv -> model.csv"))
    p = sub.add_parser("run", help="closed-loop MPC or MAMPC -> <label>/log.csv, metrics.csv, plots")
    common(p)
    p.add_argument("--controller", choices=["mpc", "mampc"])
    p.add_argument("--ns", type=int, help="sparsity horizon n_s")
    p.add_argument("--drop", type=int, help="transient steps dropped in the metrics")
    p.add_argument("--threshold", type=float, help="input-change threshold for sparse density")
    p = sub.add_parser("compare", help="metrics table for several log.csv files")
    p.add_argument("logs", nargs="+")
    p.add_argument("--out", help="also write compare.csv here")
    p.add_argument("--drop", type=int, default=15)
    p.add_argument("--threshold", type=float, default=0.1)
    p = sub.add_parser("config", help="print the resolved configuration")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            sys.stdout.write(cmd_compare(args.logs, args.threshold, args.drop, args.out))
            return EXIT_OK
        cfg = _resolve(args)
        if args.command == "config":
            sys.stdout.write(cfg.dumps())
        elif args.command == "simulate":
            print(cmd_simulate(cfg, args.out))
        elif args.command == "identify":
            print(cmd_identify(cfg, args.out))
        elif args.command == "run":
            print(cmd_run(cfg, args.out))
    except ConfigError as exc:
        print(f"mampc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ClosedLoopError as exc:
        print(f"mampc: closed loop failed at step {exc.step}: {exc} (partial log written)",
              file=sys.stderr)
        return EXIT_NUMERIC
    except (IdentificationError, PlantError, QpInfeasibleError, np.linalg.LinAlgError) as exc:
        print(f"mampc: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
