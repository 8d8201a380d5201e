"""Command-line entry point: ``eulerlab <subcommand> [--config FILE] [flags]``.

Each subcommand owns a parameter block and a resolution block. Values come
from built-in defaults, then the JSON config, then command-line flags.
Results land in an output directory as ``summary.json``, ``series.csv`` and
optionally ``fields/*.csv``; nothing is written unless the run succeeds.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import shutil
import sys
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import function_spaces as fs
from . import inflation_experiment as ie
from . import lagrangian_solver as ls
from . import shear_flow as sf
from .errors import BlowupError, ConfigError, EulerLabError, InvalidInputError, ResolutionError
from .grid import Grid2D, _jsonable, read_field

OUTPUT_ROOT_ENV = "EULERLAB_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "eulerlab-runs"
PAIRS_PER_SECOND = 1.9e8

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_RESOLUTION = 3
EXIT_BLOWUP = 4


# --- option schema ---------------------------------------------------------------


@dataclass(frozen=True)
class Option:
    name: str
    kind: str  # float | int | str | floats | ints | bool
    default: object
    help: str = ""
    choices: tuple | None = None
    nullable: bool = False
    finite: bool = True

    def coerce(self, value):
        if value is None:
            if self.nullable or self.default is None:
                return None
            raise ConfigError(f"{self.name} may not be null")
        try:
            if self.kind == "float":
                out = float(value)
            elif self.kind == "int":
                if isinstance(value, bool) or float(value) != int(value):
                    raise ValueError
                out = int(value)
            elif self.kind == "str":
                if not isinstance(value, str):
                    raise ValueError
                out = value
            elif self.kind == "bool":
                if not isinstance(value, bool):
                    raise ValueError
                out = value
            elif self.kind in ("floats", "ints"):
                if isinstance(value, str):
                    value = [v for v in value.split(",") if v.strip()]
                scalar = Option(self.name, self.kind[:-1], 0)
                out = [scalar.coerce(v) for v in value]
            else:
                raise ConfigError(f"unknown option kind {self.kind!r}")
        except (TypeError, ValueError):
            raise ConfigError(f"{self.name}: cannot read {value!r} as {self.kind}") from None
        if self.kind == "float" and self.finite and not math.isfinite(out):
            raise ConfigError(f"{self.name} must be finite")
        if self.choices is not None and out not in self.choices:
            raise ConfigError(f"{self.name} must be one of {list(self.choices)}, got {out!r}")
        return out

    def parse_flag(self, text: str):
        if self.kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"{self.name}: cannot read {text!r} as bool")
            return low in ("true", "1", "yes")
        if self.nullable and text.lower() in ("none", "null"):
            return None
        return self.coerce(text)


_SOLVER_RESOLUTION = (
    Option("seeds_per_side", "int", 12, "particles per side of each bump lattice"),
    Option("delta_factor", "float", 2.0, "blob radius in units of the seed spacing"),
    Option("probe_half_width", "float", 2.0, "half width of the tracer lattice"),
    Option("probe_spacing", "float", 1.0 / 16.0, "spacing of the tracer lattice"),
    Option("energy_grid_n", "int", 32, "grid size for the kinetic-energy diagnostic (0 disables)"),
)

_BETA_RESOLUTION = (
    Option("beta_points_per_wavelength", "float", 6.0, "perturbation particles per carrier wavelength"),
    Option("beta_reach", "float", 2.0, "perturbation lattice half width in units of 1/lambda"),
)

_FLOW = (
    Option("M", "float", 10.0, "amplitude parameter; the horizon is M^-3"),
    Option("r", "float", 2.05, "integrability exponent (> 2)"),
    Option("q", "float", 1.5, "Besov summability exponent (> 1)"),
    Option("n", "int", 8, "perturbation index; lambda = 3n, k = lambda^2"),
)

COMMANDS: dict[str, dict[str, tuple[Option, ...]]] = {
    "shear-flow": {
        "params": (
            Option("alpha", "float", 0.5, "Hölder exponent in (0, 1)"),
            Option("eps", "float", 1e-3, "size of the initial perturbation"),
            Option("times", "floats", [1e-3, 1e-2, 1e-1, 1.0], "comma-separated times"),
            Option("c", "float", 0.0, "x2 coordinate of the designated pair"),
            Option("a", "float", 1.0, "kink window half width"),
        ),
        "resolution": (
            Option("slice_n", "int", 64, "nodes per side of the measurement slice"),
            Option("gap_n", "int", 4096, "nodes of the 1D initial-gap grid"),
            Option("residual_samples", "int", 1000, "random-free residual samples per branch"),
        ),
    },
    "flow-sim": {
        "params": (
            Option("initial", "str", "omega0", "initial data", choices=("pair", "omega0", "omega0-beta")),
            Option("N", "int", 4, "number of bump scales"),
            *_FLOW,
            Option("x_star", "floats", None, "perturbation centre x1,x2 (omega0-beta)", nullable=True),
            Option("T", "float", None, "final time (default: M^-3, or one period for the pair)", nullable=True),
            Option("dt", "float", None, "time step (default: T / 100)", nullable=True),
            Option("delta", "float", 0.05, "blob radius for the pair"),
            Option("separation", "float", 1.0, "distance between the pair's vortices"),
            Option("circulation", "float", 1.0, "circulation of each pair vortex"),
        ),
        "resolution": _SOLVER_RESOLUTION + _BETA_RESOLUTION,
    },
    "inflate": {
        "params": (
            Option("N", "int", 16, "number of bump scales"),
            *_FLOW,
            Option("x_star", "floats", None, "perturbation centre (default: chosen from the flow)", nullable=True),
            Option("n_steps", "int", 10, "RK4 steps over [0, M^-3]"),
        ),
        "resolution": _SOLVER_RESOLUTION
        + _BETA_RESOLUTION
        + (Option("besov_grid_n", "int", 2048, "nodes per side of the Besov grid"),),
    },
    "deform-scan": {
        "params": (
            Option("N", "ints", [4, 8, 16], "comma-separated bump counts"),
            *_FLOW[:3],
            Option("n_steps", "int", 100, "RK4 steps over [0, M^-3]"),
        ),
        "resolution": _SOLVER_RESOLUTION,
    },
    "lemma51-scan": {
        "params": (
            Option("M", "float", 10.0),
            Option("r", "float", 2.5),
            Option("q", "float", 1.5),
            Option("N", "ints", [4, 8, 16, 32], "comma-separated bump counts"),
        ),
        "resolution": (
            Option("table_n", "int", 2048, "grid size for the single-bump block table"),
            Option("table_half_width", "float", 4.0, "half width of that grid"),
        ),
    },
    "lemma53-scan": {
        "params": (
            Option("r", "float", 2.5),
            Option("q", "float", 1.5),
            Option("p", "float", 4.0),
            Option("sigma", "float", 0.5),
            Option("k_range", "floats", [400.0, 4000.0], "k sweep bounds at fixed lambda"),
            Option("lam_fixed", "float", 8.0),
            Option("lam_range", "floats", [6.0, 60.0], "lambda sweep bounds at fixed k"),
            Option("k_fixed", "float", 10000.0),
            Option("per_decade", "int", 5, "samples per decade"),
            Option("x_star", "floats", [0.5, 0.5]),
        ),
        "resolution": (),
    },
    "norms": {
        "params": (
            Option("field", "str", "", "path to a field file (.csv or binary)"),
            Option("norm", "str", "besov", choices=("lp", "sup", "besov", "sobolev", "holder")),
            Option("s", "float", 1.0, "smoothness index"),
            Option("p", "float", 2.0, "integrability index (inf allowed for lp)", finite=False),
            Option("q", "float", 2.0, "summability index"),
            Option("alpha", "float", 0.5, "Hölder exponent"),
        ),
        "resolution": (Option("pair_resolution", "int", 3, "Hölder pair-sampling level"),),
    },
    "validate": {
        "params": (
            Option("N", "int", 16),
            *_FLOW,
            Option("dt", "float", None, "time step to check against the CFL cap", nullable=True),
            Option("n_steps", "int", 100),
            Option("with_beta", "bool", True, "include the perturbed run in the estimates"),
        ),
        "resolution": (
            Option("grid_n", "int", 2048, "nodes per side of the analysis grid"),
            Option("grid_half_width", "float", 2.0, "half width of the analysis grid"),
        )
        + _SOLVER_RESOLUTION
        + _BETA_RESOLUTION,
    },
}

CHECKPOINTED = {"flow-sim", "inflate", "deform-scan"}
_DEFAULT_CADENCE = {"flow-sim": 10, "inflate": 5, "deform-scan": 10}


def _options(command: str, block: str) -> dict[str, Option]:
    return {o.name: o for o in COMMANDS[command][block]}


# --- configuration -----------------------------------------------------------------


CONFIG_KEYS = ("checkpoint_every", "command", "deterministic", "output", "params", "resolution")


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    params: dict = field(default_factory=dict)
    resolution: dict = field(default_factory=dict)
    checkpoint_every: int | None = None
    output: str | None = None
    deterministic: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        """Validate ``data`` and fill in defaults; unknown keys raise :class:`ConfigError`."""
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(data) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        command = data.get("command")
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}; expected one of {sorted(COMMANDS)}")
        blocks = {}
        for block in ("params", "resolution"):
            given = data.get(block) or {}
            if not isinstance(given, dict):
                raise ConfigError(f"{block} must be an object")
            opts = _options(command, block)
            extra = sorted(set(given) - set(opts))
            if extra:
                raise ConfigError(f"unknown {block} keys for {command}: {extra}")
            blocks[block] = {name: opt.coerce(given.get(name, opt.default)) for name, opt in opts.items()}
        cadence = data.get("checkpoint_every")
        if command in CHECKPOINTED:
            cadence = Option("checkpoint_every", "int", _DEFAULT_CADENCE[command]).coerce(
                _DEFAULT_CADENCE[command] if cadence is None else cadence
            )
            if cadence < 1:
                raise ConfigError("checkpoint_every must be positive")
        elif cadence is not None:
            raise ConfigError(f"{command} has no checkpoints")
        output = data.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output must be a string path")
        if data.get("deterministic", True) is not True:
            raise ConfigError("every experiment is deterministic; 'deterministic' must be true")
        return cls(command, blocks["params"], blocks["resolution"], cadence, output, True)

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "checkpoint_every": self.checkpoint_every,
            "command": self.command,
            "deterministic": self.deterministic,
            "output": self.output,
            "params": dict(self.params),
            "resolution": dict(self.resolution),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def updated(self, **overrides) -> ExperimentConfig:
        data = self.to_dict()
        for key, value in overrides.items():
            if key in ("params", "resolution"):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return ExperimentConfig.from_dict(data)


# --- artifacts ---------------------------------------------------------------------


@dataclass
class RunResult:
    summary: dict
    series: list[dict] = field(default_factory=list)
    fields: dict = field(default_factory=dict)  # file name -> writer(path)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def series_csv(rows: list[dict]) -> str:
    columns: list[str] = []
    for row in rows:
        columns += [c for c in row if c not in columns]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def summary_json(summary: dict) -> str:
    return json.dumps(_jsonable(summary), sort_keys=True, indent=2) + "\n"


def output_dir(config: ExperimentConfig, flag: str | None = None) -> Path:
    if flag:
        return Path(flag)
    if config.output:
        return Path(config.output)
    root = os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)
    return Path(root) / config.command


def write_artifacts(result: RunResult, out: Path) -> list[Path]:
    """Stage every file in a scratch directory, then move them into ``out``."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".eulerlab-", dir=out.parent))
    try:
        (stage / "summary.json").write_text(summary_json(result.summary))
        (stage / "series.csv").write_text(series_csv(result.series))
        if result.fields:
            (stage / "fields").mkdir()
            for name, writer in sorted(result.fields.items()):
                writer(stage / "fields" / name)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for src in sorted(stage.rglob("*")):
            if src.is_dir():
                continue
            dst = out / src.relative_to(stage)
            dst.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src, dst)
            written.append(dst)
        return written
    finally:
        shutil.rmtree(stage, ignore_errors=True)


# --- runners -------------------------------------------------------------------------


def _settings(config: ExperimentConfig, n_steps: int) -> ie.SolverSettings:
    names = set(ie.SolverSettings.__dataclass_fields__)
    res = {k: v for k, v in config.resolution.items() if k in names}
    return ie.SolverSettings(n_steps=n_steps, checkpoint_every=config.checkpoint_every or 10, **res)


def _inflation_params(p: dict, N: int) -> ie.InflationParams:
    x_star = p.get("x_star")
    if x_star is not None and len(x_star) != 2:
        raise ConfigError("x_star needs exactly two coordinates")
    return ie.InflationParams(p["M"], N, p["r"], p["q"], p.get("n", 8), tuple(x_star) if x_star else None)


def _residual_samples(count: int, a: float) -> np.ndarray:
    # a deterministic low-discrepancy set (R2 sequence) over [-2a, 2a]^3
    g = 1.22074408460575947536
    alphas = np.array([1 / g, 1 / g**2, 1 / g**3])
    pts = (0.5 + np.outer(np.arange(1, count + 1), alphas)) % 1.0
    return (2.0 * pts - 1.0) * 2.0 * a


def run_shear_flow(config: ExperimentConfig) -> RunResult:
    p, res = config.params, config.resolution
    spec = sf.make_counterexample(p["alpha"], p["eps"], a=p["a"])
    init = sf.initial_gap(spec, n=res["gap_n"])
    samples = _residual_samples(res["residual_samples"], p["a"])
    rows = []
    for t in p["times"]:
        quotient = sf.discontinuity_quotient(spec, t, p["c"])
        gap = sf.measured_gap(spec, t, n=res["slice_n"], c=p["c"])
        resid = max(sf.euler_residual(spec, b, t, samples).max_residual for b in ("u", "v"))
        rows.append({"t": t, "quotient": quotient, "measured_gap": gap.value, "residual": resid})
    summary = {
        "command": config.command,
        "initial_gap": init.value,
        "quotient_at_points": [r["quotient"] for r in rows],
        "measured_gap": [r["measured_gap"] for r in rows],
        "residual_max": max(r["residual"] for r in rows),
    }
    return RunResult(summary, rows)


def _pair_run(config: ExperimentConfig) -> RunResult:
    p = config.params
    d, gamma = p["separation"], p["circulation"]
    period = 2.0 * math.pi**2 * d**2 / gamma
    T = p["T"] or period
    dt = p["dt"] or T / 100.0
    disc = ls.point_vortices([(-d / 2, 0.0), (d / 2, 0.0)], [gamma, gamma], p["delta"])
    traj = ls.integrate(ls.VortexState.initial(disc), T, dt, checkpoint_every=config.checkpoint_every)
    omega = 2.0 * math.pi / period
    rows = []
    for s in traj.states:
        x = s.positions[1]
        exact = 0.5 * d * np.array([math.cos(omega * s.t), math.sin(omega * s.t)])
        rows.append(
            {
                "t": s.t,
                "x1": float(x[0]),
                "x2": float(x[1]),
                "angle": float(np.unwrap([0.0, math.atan2(x[1], x[0])])[-1]),
                "point_vortex_error": float(np.linalg.norm(x - exact)),
            }
        )
    summary = {
        "point_vortex_period": period,
        "final_time": traj.states[-1].t,
        "max_point_vortex_error": max(r["point_vortex_error"] for r in rows),
        "steps": len(traj.dts),
    }
    return RunResult(summary, rows, _state_fields(traj.states))


def _state_fields(states) -> dict:
    def writer(state):
        return lambda path: ls.write_state_csv(path, state)

    return {f"state_{i:04d}.csv": writer(s) for i, s in enumerate(states)}


def run_flow_sim(config: ExperimentConfig) -> RunResult:
    p = config.params
    if p["initial"] == "pair":
        result = _pair_run(config)
    else:
        params = _inflation_params(p, p["N"])
        T = p["T"] or params.horizon
        dt = p["dt"] or T / 100.0
        settings = _settings(config, max(1, round(T / dt)))
        if p["initial"] == "omega0":
            disc = ie.omega0_discretization(params, settings, ls.ODD_ODD)
        else:
            beta = ie.BetaSpec.from_params(params, params.x_star or (0.5, 0.5))
            base = ie.omega0_discretization(params, settings, ls.ODD_X2)
            disc = ls.merge(base, ie.beta_discretization(beta, settings, ls.ODD_X2))
        traj = ls.integrate(ls.VortexState.initial(disc), T, dt, checkpoint_every=config.checkpoint_every)
        egrid = Grid2D(settings.probe_half_width, settings.energy_grid_n) if settings.energy_grid_n else None
        rows = []
        for s in traj.states:
            entry, op, d22, det, energy = ie._record(s, settings, egrid)
            rows.append({"t": s.t, "max_entry": entry, "max_operator": op, "max_d2_eta2": d22, "det_drift": det, "energy": energy})
        result = RunResult(
            {
                "final_time": traj.states[-1].t,
                "steps": len(traj.dts),
                "n_particles": disc.n_particles,
                "n_sources": disc.n_sources,
                "symmetry": disc.symmetry,
                "max_det_drift": max(r["det_drift"] for r in rows),
                "final_max_entry": rows[-1]["max_entry"],
            },
            rows,
            _state_fields(traj.states),
        )
    result.summary.update({"command": config.command})
    return result


def run_inflate(config: ExperimentConfig) -> RunResult:
    p = config.params
    params = _inflation_params(p, p["N"])
    settings = _settings(config, p["n_steps"])
    grid = Grid2D(settings.probe_half_width, config.resolution["besov_grid_n"])
    report = ie.run_inflation(params, settings, grid)
    rows = [
        {"t": t, "max_entry": d, "besov_perturbed": bp, "besov_unperturbed": bu, "ratio": ra}
        for t, d, bp, bu, ra in zip(
            report.times, report.deformation, report.besov_perturbed, report.besov_unperturbed, report.ratio
        )
    ]
    summary = report.to_dict()
    summary.update({"command": config.command})
    return RunResult(summary, rows)


def run_deform_scan(config: ExperimentConfig) -> RunResult:
    p = config.params
    settings = _settings(config, p["n_steps"])
    rows, finals, increasing = [], {}, {}
    for N in p["N"]:
        params = ie.InflationParams(p["M"], N, p["r"], p["q"])
        run = ie.run_deformation(params, settings)
        for row in run.series():
            rows.append({"N": N, **row})
        finals[str(N)] = run.entrywise[-1]
        increasing[str(N)] = run.strictly_increasing()
    ordered = sorted(p["N"])
    summary = {
        "command": config.command,
        "final_max_entry": finals,
        "strictly_increasing": increasing,
        "ordered_by_N": all(finals[str(a)] < finals[str(b)] for a, b in zip(ordered, ordered[1:])),
    }
    return RunResult(summary, rows)


def run_lemma51_scan(config: ExperimentConfig) -> RunResult:
    p, res = config.params, config.resolution
    if p["q"] > p["r"]:
        raise ConfigError("lemma51-scan needs q <= r")
    table = ie.phi0_block_table(p["r"], res["table_half_width"], res["table_n"])
    rows = [ie.lemma51_norms(ie.InflationParams(p["M"], N, p["r"], p["q"]), table).to_dict() for N in p["N"]]
    doubled = [
        ie.lemma51_norms(ie.InflationParams(2 * p["M"], N, p["r"], p["q"]), table).to_dict() for N in p["N"][:1]
    ]
    summary = {
        "command": config.command,
        "flatness_sobolev": ie.flatness([r["sobolev"] for r in rows]),
        "flatness_besov": ie.flatness([r["besov"] for r in rows]),
        "m_scaling_ratio": rows[0]["besov"] / doubled[0]["besov"],
    }
    return RunResult(summary, rows)


def run_lemma53_scan(config: ExperimentConfig) -> RunResult:
    p = config.params
    for key in ("k_range", "lam_range", "x_star"):
        if len(p[key]) != 2:
            raise ConfigError(f"{key} needs exactly two values")
    table = ie.lemma53_scan(
        p["r"],
        p["q"],
        p["p"],
        p["sigma"],
        tuple(p["k_range"]),
        p["lam_fixed"],
        tuple(p["lam_range"]),
        p["k_fixed"],
        p["per_decade"],
        tuple(p["x_star"]),
    )
    d = table.to_dict()
    rows = d.pop("rows")
    d.update({"command": config.command})
    return RunResult(d, rows)


def run_norms(config: ExperimentConfig) -> RunResult:
    p = config.params
    if not p["field"]:
        raise ConfigError("norms needs --field")
    path = Path(p["field"])
    if not path.exists():
        raise InvalidInputError(f"field file {path} does not exist")
    fld = read_field(path)
    kind = p["norm"]
    if kind == "lp":
        report = {"value": fs.lp_norm(fld, p["p"]), "method": "lp"}
    elif kind == "sup":
        report = {"value": fs.sup_norm(fld), "method": "sup"}
    elif kind == "besov":
        report = fs.besov_norm(fld, fs.BesovParams(p["s"], p["p"], p["q"])).to_dict()
    elif kind == "sobolev":
        report = fs.sobolev_norm(fld, p["s"], p["p"]).to_dict()
    else:
        report = fs.holder_seminorm(fld, p["alpha"], fs.PairSampling(config.resolution["pair_resolution"])).to_dict()
    summary = {"command": config.command, "field": path.name, "norm": report}
    return RunResult(summary, [{"norm": kind, "value": report["value"]}])


# --- validate --------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    check: str
    level: str  # ok | warning
    message: str

    def line(self) -> str:
        return f"[{self.level.upper():7s}] {self.check}: {self.message}"


def _validate_view(config: ExperimentConfig) -> dict:
    """Project any config onto the quantities the static checks need."""
    view = {o.name: o.default for block in ("params", "resolution") for o in COMMANDS["validate"][block]}
    for block in (config.params, config.resolution):
        for key, value in block.items():
            if key in view:
                view[key] = value
    if isinstance(view["N"], list):
        view["N"] = max(view["N"])
    if config.command == "flow-sim":
        view["with_beta"] = config.params["initial"] == "omega0-beta"
        T = config.params["T"] or config.params["M"] ** -3
        view["n_steps"] = round(T / config.params["dt"]) if config.params["dt"] else 100
    if config.command == "deform-scan":
        view["with_beta"] = False
    if config.command == "inflate":
        view["grid_n"] = config.resolution["besov_grid_n"]
        view["grid_half_width"] = config.resolution["probe_half_width"]
    return view


def validate(config: ExperimentConfig) -> list[Diagnostic]:
    """Static resolution, Nyquist and step-size checks plus cost estimates."""
    out: list[Diagnostic] = []
    if config.command in ("shear-flow", "lemma51-scan", "lemma53-scan", "norms"):
        out.append(Diagnostic("scope", "ok", f"{config.command} has no solver or grid constraints to check"))
        return out
    v = _validate_view(config)
    params = ie.InflationParams(v["M"], v["N"], v["r"], v["q"], v["n"])
    grid = Grid2D(v["grid_half_width"], v["grid_n"])

    npr = ie.finest_nodes_per_radius(params, grid)
    if npr >= ie.NODES_PER_RADIUS:
        out.append(Diagnostic("finest-bump", "ok", f"{npr:.3g} nodes per radius (need {ie.NODES_PER_RADIUS})"))
    else:
        need = math.ceil(grid.n * ie.NODES_PER_RADIUS / npr)
        out.append(
            Diagnostic(
                "finest-bump",
                "warning",
                f"finest bump under-resolved: {npr:.3g} nodes per radius (need {ie.NODES_PER_RADIUS}); "
                f"use n >= {need} at half width {grid.half_width}",
            )
        )

    beta = ie.BetaSpec.from_params(params, (0.5, 0.5))
    if v["with_beta"]:
        fmax = beta.max_frequency
        level = "ok" if fmax <= grid.nyquist else "warning"
        out.append(
            Diagnostic("nyquist", level, f"perturbation reaches |xi| = {fmax:.4g} (k = {params.k:g}); grid Nyquist {grid.nyquist:.4g}")
        )

    settings = ie.SolverSettings(
        n_steps=v["n_steps"],
        seeds_per_side=v["seeds_per_side"],
        delta_factor=v["delta_factor"],
        probe_half_width=v["probe_half_width"],
        probe_spacing=v["probe_spacing"],
        beta_points_per_wavelength=v["beta_points_per_wavelength"],
        beta_reach=v["beta_reach"],
    )
    sym = ls.ODD_X2 if v["with_beta"] else ls.ODD_ODD
    disc = ie.omega0_discretization(params, settings, sym)
    gmax = ls.max_velocity_gradient(ls.VortexState.initial(disc))
    dt = v["dt"] if v["dt"] is not None else params.horizon / v["n_steps"]
    suggested = 0.1 / gmax if gmax > 0 else math.inf
    if dt * gmax <= 0.1:
        out.append(Diagnostic("cfl", "ok", f"dt = {dt:.4g}, dt max|grad u| = {dt * gmax:.3g} <= 0.1"))
    else:
        out.append(Diagnostic("cfl", "warning", f"dt = {dt:.4g} violates dt max|grad u| <= 0.1; suggested dt <= {suggested:.4g}"))

    runs = [disc]
    if v["with_beta"]:
        runs.append(ls.merge(disc, ie.beta_discretization(beta, settings, sym)))
    steps = max(1, math.ceil(params.horizon / min(dt, suggested)))
    images = {None: 1, ls.ODD_ODD: 4, ls.ODD_X2: 2}
    pairs = sum(d.n_particles * d.n_sources * images[d.symmetry] for d in runs)
    seconds = pairs * 4 * (steps + math.ceil(steps / 10)) / PAIRS_PER_SECOND
    # particle data per run, plus about a dozen complex/real copies of the analysis grid
    mem = sum(d.n_particles for d in runs) * 8 * 16 + 12 * 16 * grid.n**2
    out.append(
        Diagnostic(
            "estimate",
            "ok",
            f"{pairs:.3g} interactions per evaluation, {steps} steps: about {seconds:.3g} s and {mem / 2**20:.0f} MiB",
        )
    )
    return out


RUNNERS = {
    "shear-flow": run_shear_flow,
    "flow-sim": run_flow_sim,
    "inflate": run_inflate,
    "deform-scan": run_deform_scan,
    "lemma51-scan": run_lemma51_scan,
    "lemma53-scan": run_lemma53_scan,
    "norms": run_norms,
}


def run(config: ExperimentConfig, out: Path | None = None, fields: bool = False) -> RunResult:
    """Execute ``config`` and write its artifacts to ``out`` (if given)."""
    if config.command == "validate":
        raise ConfigError("validate produces diagnostics, not artifacts")
    result = RUNNERS[config.command](config)
    if not fields:
        result.fields = {}
    result.summary["config"] = {k: v for k, v in config.to_dict().items() if k != "output"}
    if out is not None:
        write_artifacts(result, out)
    return result


# --- argument parsing ------------------------------------------------------------------


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eulerlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for command, blocks in COMMANDS.items():
        sp = sub.add_parser(command, help=f"run {command}")
        sp.add_argument("--config", help="JSON experiment config; flags override its values")
        sp.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/{command})")
        sp.add_argument("--threads", type=int, help="cap on numba worker threads")
        if command == "validate":
            sp.add_argument("target", nargs="?", help="validate this config file instead of the flags")
        if command in CHECKPOINTED:
            sp.add_argument("--checkpoint-every", dest="checkpoint_every", help="keep every k-th step")
        if command == "flow-sim":
            sp.add_argument("--fields", action="store_true", help="write particle checkpoints to fields/")
        for block in ("params", "resolution"):
            for opt in blocks[block]:
                sp.add_argument(_flag(opt.name), dest=f"{block}.{opt.name}", help=opt.help or None, metavar=opt.kind.upper())
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = ExperimentConfig.from_json(text)
        if cfg.command != args.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}")
    else:
        cfg = ExperimentConfig.from_dict({"command": args.command})
    overrides: dict = {"params": {}, "resolution": {}}
    for block in ("params", "resolution"):
        opts = _options(args.command, block)
        for name, opt in opts.items():
            raw = getattr(args, f"{block}.{name}", None)
            if raw is not None:
                overrides[block][name] = opt.parse_flag(raw)
    if getattr(args, "checkpoint_every", None) is not None:
        overrides["checkpoint_every"] = Option("checkpoint_every", "int", 1).parse_flag(args.checkpoint_every)
    return cfg.updated(**overrides)


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    import numba

    if n < 1:
        raise ConfigError("--threads must be positive")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    # numba probes for a newer TBB on first use; the OpenMP/workqueue fallback is fine
    warnings.filterwarnings("ignore", message=".*TBB threading layer.*")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _set_threads(args.threads)
        if args.command == "validate" and args.target:
            try:
                cfg = ExperimentConfig.from_json(Path(args.target).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        else:
            cfg = config_from_args(args)
        if args.command == "validate":
            diags = validate(cfg)
            for d in diags:
                print(d.line())
            return EXIT_OK
        out = output_dir(cfg, args.out)
        run(cfg, out, fields=getattr(args, "fields", False))
        print(f"wrote {out}")
        return EXIT_OK
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResolutionError as exc:
        print(f"resolution error: {exc}", file=sys.stderr)
        return EXIT_RESOLUTION
    except BlowupError as exc:
        print(f"solver blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (EulerLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
