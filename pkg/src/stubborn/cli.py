"""Command-line interface: config ingestion, dispatch, run manifests.

Commands: simulate | sweep | optimize | density | validate.  Scenarios are
described by a single JSON config (about twenty parameters); command-line
flags override top-level numerics only (--seed, --dt, --n-paths,
--out-dir).  Every command writes a manifest.json naming each emitted file;
CSV numbers use the shortest round-trip decimal representation so repeated
runs are byte-identical (manifest timing aside).

Exit codes: 0 success, 1 check failure or runtime error, 2 usage/config
error.  STUBBORN_THREADS caps the simulation worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from . import __version__, checks, density, dynamics
from .control import ClosedFormDomainError, optimal_stubbornness
from .model import (
    LagrangeParams,
    ModeFlags,
    ModelParams,
    ParameterError,
    PayoffParams,
    State,
    validate_params,
)
from .payoff import constant_policy, expected_payoff


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


@dataclass(frozen=True)
class GridSpec:
    min: float
    max: float
    n: int


@dataclass(frozen=True)
class Tolerances:
    fd_rel: float = 1e-5
    residual_rel: float = 1e-6
    quad_rel: float = 1e-8


@dataclass(frozen=True)
class DensityRun:
    eps: float = 0.01
    n_steps: int = 20
    snapshot_stride: int = 5
    u: float = 0.2
    step: str = "schrodinger"
    gradient_correction: bool = False


@dataclass(frozen=True)
class Numerics:
    dt: float = 0.01
    n_paths: int = 1000
    seed: int = 42
    x0: float = 1.0
    u_grid_n: int = 21
    x_grid: GridSpec = GridSpec(0.2, 3.0, 65)
    s_grid: GridSpec | None = None
    tolerances: Tolerances = Tolerances()
    density: DensityRun = DensityRun()


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    payoff: PayoffParams
    lagrange: LagrangeParams
    modes: ModeFlags
    numerics: Numerics

    def resolved_s_grid(self) -> GridSpec:
        if self.numerics.s_grid is not None:
            return self.numerics.s_grid
        return GridSpec(0.0, self.payoff.horizon, 3)


def _require(section: dict, section_name: str, field: str) -> float:
    if field not in section:
        raise ConfigError(f"{section_name}.{field} required")
    return section[field]


def _build_grid(raw: dict, name: str) -> GridSpec:
    spec = GridSpec(
        min=float(_require(raw, name, "min")),
        max=float(_require(raw, name, "max")),
        n=int(_require(raw, name, "n")),
    )
    if not spec.min < spec.max:
        raise ConfigError(f"{name}.min must be below {name}.max")
    if spec.n < 2:
        raise ConfigError(f"{name}.n must be at least 2")
    return spec


def parse_config(raw: dict) -> RunConfig:
    """Validated RunConfig from a parsed JSON document."""
    if "model" not in raw:
        raise ConfigError("model section required")
    if "payoff" not in raw:
        raise ConfigError("payoff section required")
    m = raw["model"]
    p = raw["payoff"]
    model = ModelParams(
        a=float(_require(m, "model", "a")),
        sigma1=float(_require(m, "model", "sigma1")),
        sigma2=float(_require(m, "model", "sigma2")),
    )
    payoff = PayoffParams(
        theta=float(_require(p, "payoff", "theta")),
        alpha1=float(_require(p, "payoff", "alpha1")),
        alpha2=float(_require(p, "payoff", "alpha2")),
        alpha3=float(_require(p, "payoff", "alpha3")),
        c=float(_require(p, "payoff", "c")),
        r=float(_require(p, "payoff", "r")),
        mu_bar=float(_require(p, "payoff", "mu_bar")),
        omega=float(_require(p, "payoff", "omega")),
        horizon=float(_require(p, "payoff", "horizon")),
    )
    lag_raw = raw.get("lagrange", {})
    lagrange = LagrangeParams(
        l0=float(lag_raw.get("l0", 0.0)), l1=float(lag_raw.get("l1", 0.0))
    )
    modes_raw = raw.get("modes", {})
    try:
        modes = ModeFlags(
            derivative_mode=modes_raw.get("derivative_mode", "paper"),
            nash_mode=modes_raw.get("nash_mode", "paper"),
            kernel_exponent_mode=modes_raw.get("kernel_exponent_mode", "rederived"),
            closed_form_mode=modes_raw.get("closed_form_mode", "rederived"),
        )
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc

    n_raw = raw.get("numerics", {})
    tol_raw = n_raw.get("tolerances", {})
    dens_raw = n_raw.get("density", {})
    numerics = Numerics(
        dt=float(n_raw.get("dt", 0.01)),
        n_paths=int(n_raw.get("n_paths", 1000)),
        seed=int(n_raw.get("seed", 42)),
        x0=float(n_raw.get("x0", 1.0)),
        u_grid_n=int(n_raw.get("u_grid_n", 21)),
        x_grid=_build_grid(n_raw["x_grid"], "x_grid") if "x_grid" in n_raw else GridSpec(0.2, 3.0, 65),
        s_grid=_build_grid(n_raw["s_grid"], "s_grid") if "s_grid" in n_raw else None,
        tolerances=Tolerances(
            fd_rel=float(tol_raw.get("fd_rel", 1e-5)),
            residual_rel=float(tol_raw.get("residual_rel", 1e-6)),
            quad_rel=float(tol_raw.get("quad_rel", 1e-8)),
        ),
        density=DensityRun(
            eps=float(dens_raw.get("eps", 0.01)),
            n_steps=int(dens_raw.get("n_steps", 20)),
            snapshot_stride=int(dens_raw.get("snapshot_stride", 5)),
            u=float(dens_raw.get("u", 0.2)),
            step=str(dens_raw.get("step", "schrodinger")),
            gradient_correction=bool(dens_raw.get("gradient_correction", False)),
        ),
    )
    if numerics.dt <= 0.0:
        raise ConfigError("numerics.dt must be positive")
    if numerics.n_paths < 1:
        raise ConfigError("numerics.n_paths must be at least 1")
    if numerics.x0 < 0.0:
        raise ConfigError("numerics.x0 must be nonnegative")
    if numerics.u_grid_n < 2:
        raise ConfigError("numerics.u_grid_n must be at least 2")
    if numerics.density.step not in ("schrodinger", "kernel"):
        raise ConfigError("numerics.density.step must be 'schrodinger' or 'kernel'")

    validate_params(model, payoff, lagrange)
    return RunConfig(model=model, payoff=payoff, lagrange=lagrange, modes=modes, numerics=numerics)


def load_config(path: str) -> RunConfig:
    """Parse and validate a JSON config file."""
    try:
        text = FsPath(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(raw)


def _fmt(value: float) -> str:
    """Shortest decimal that round-trips (reproducibility contract for CSV)."""
    return repr(float(value))


def _write_csv(path: FsPath, header: str, rows: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def cmd_simulate(config: RunConfig, out_dir: FsPath) -> tuple[list[str], bool]:
    num = config.numerics
    states, clamped = dynamics.simulate_batch(
        num.x0,
        constant_policy(0.0),
        config.model,
        num.dt,
        config.payoff.horizon,
        num.seed,
        num.n_paths,
    )
    rows = []
    for pid in range(states.shape[0]):
        for k in range(states.shape[1]):
            rows.append(
                f"{pid},{k},{_fmt(k * num.dt)},{_fmt(states[pid, k])},{1 if clamped[pid, k] else 0}"
            )
    out = out_dir / "paths.csv"
    _write_csv(out, "path_id,step,s,x,clamped", rows)
    return [str(out)], True


def cmd_sweep(config: RunConfig, out_dir: FsPath) -> tuple[list[str], bool]:
    num = config.numerics
    rows = []
    for u in np.linspace(0.0, 1.0, num.u_grid_n):
        est = expected_payoff(
            num.x0,
            constant_policy(float(u)),
            config.model,
            config.payoff,
            num.dt,
            num.n_paths,
            num.seed,
        )
        rows.append(
            f"{_fmt(u)},{_fmt(est.mean)},{_fmt(est.std_error)},{_fmt(est.invalid_fraction)}"
        )
    out = out_dir / "sweep.csv"
    _write_csv(out, "u,J_mean,J_stderr,invalid_fraction", rows)
    return [str(out)], True


def cmd_optimize(config: RunConfig, out_dir: FsPath) -> tuple[list[str], bool]:
    num = config.numerics
    sg = config.resolved_s_grid()
    xg = num.x_grid
    mode_cell = config.modes.describe()
    rows = []
    for s in np.linspace(sg.min, sg.max, sg.n):
        for x in np.linspace(xg.min, xg.max, xg.n):
            try:
                res = optimal_stubbornness(
                    State(s=float(s), x=float(x)),
                    config.model,
                    config.payoff,
                    config.lagrange,
                    config.modes,
                    dt=num.dt,
                    seed=num.seed,
                )
                rows.append(
                    f"{_fmt(s)},{_fmt(x)},{_fmt(res.u_star)},{_fmt(res.u_unclamped)},"
                    f"{_fmt(res.residual)},{len(res.u_candidates)},{mode_cell},{res.reason}"
                )
            except ClosedFormDomainError as exc:
                rows.append(f"{_fmt(s)},{_fmt(x)},,,,0,{mode_cell},{exc}")
    out = out_dir / "optimize.csv"
    _write_csv(
        out, "s,x,u_star,u_unclamped,residual,n_candidates,mode_flags,status", rows
    )
    return [str(out)], True


def cmd_density(config: RunConfig, out_dir: FsPath) -> tuple[list[str], bool]:
    num = config.numerics
    dens = num.density
    xg = num.x_grid
    if xg.min <= 0.0:
        raise ConfigError("density requires x_grid.min > 0 (f is singular at x = 0)")
    x = np.linspace(xg.min, xg.max, xg.n)
    grid = density.gaussian_density_grid(
        x, center=0.5 * (xg.min + xg.max), width=(xg.max - xg.min) / 8.0
    )
    fields = density.model_fields(
        dens.u, config.model, config.payoff, config.lagrange, config.modes
    )
    rows = []

    def snapshot(g: density.DensityGrid) -> None:
        for xi, pi in zip(g.x_grid, g.psi):
            rows.append(f"{_fmt(g.s)},{_fmt(xi)},{_fmt(pi)}")

    snapshot(grid)
    for step_idx in range(1, dens.n_steps + 1):
        if dens.step == "kernel":
            grid = density.kernel_step(
                grid,
                dens.eps,
                fields,
                kernel_exponent_mode=config.modes.kernel_exponent_mode,
                gradient_correction=dens.gradient_correction,
            )
        else:
            grid = density.schrodinger_step(
                grid, dens.eps, fields, kernel_exponent_mode=config.modes.kernel_exponent_mode
            )
        if step_idx % dens.snapshot_stride == 0 or step_idx == dens.n_steps:
            snapshot(grid)
    out = out_dir / "density.csv"
    _write_csv(out, "s,x,psi", rows)
    return [str(out)], True


def cmd_validate(config: RunConfig, out_dir: FsPath) -> tuple[list[str], bool]:
    num = config.numerics
    tol = num.tolerances
    report = checks.run_all_checks(
        n_paths=num.n_paths,
        dt=num.dt,
        seed=num.seed,
        fd_rel=tol.fd_rel,
        residual_rel=tol.residual_rel,
        quad_rel=tol.quad_rel,
    )
    out = out_dir / "report.json"
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, suite in sorted(report["suites"].items()):
        print(f"{'PASS' if suite['passed'] else 'FAIL'}: {name}")
    return [str(out)], bool(report["passed"])


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "density": cmd_density,
    "validate": cmd_validate,
}


def run_command(name: str, config: RunConfig, out_dir: str = ".") -> int:
    """Dispatch one command, writing outputs and a manifest under out_dir."""
    if name not in COMMANDS:
        raise ConfigError(f"unknown command '{name}'")
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    files: list[str] = []
    status = "ok"
    checks_passed: bool | None = None
    error_text: str | None = None
    try:
        files, ok = COMMANDS[name](config, out)
        if name == "validate":
            checks_passed = ok
            if not ok:
                status = "check_failure"
    except (ConfigError, ParameterError) as exc:
        status = "config_error"
        error_text = str(exc)
    except Exception as exc:  # noqa: BLE001 - surfaced via manifest + exit code
        status = "error"
        error_text = f"{type(exc).__name__}: {exc}"
    duration = time.perf_counter() - started
    manifest = {
        "artifact_version": __version__,
        "command": name,
        "config": _config_echo(config),
        "seed": config.numerics.seed,
        "duration_seconds": duration,
        "files": files,
        "checks_passed": checks_passed,
        "status": status,
        "error": error_text,
    }
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if status == "ok":
        return 0
    if status == "config_error":
        print(f"error: {error_text}", file=sys.stderr)
        return 2
    if error_text:
        print(f"error: {error_text}", file=sys.stderr)
    return 1


def _config_echo(config: RunConfig) -> dict:
    echo = dataclasses.asdict(config)
    return echo


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="stubborn",
        description="Goal-dynamics SDE simulation, payoff evaluation, and optimal-stubbornness computation.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--out-dir", default=".", help="directory for emitted files")
    parser.add_argument("--seed", type=int, default=None, help="override numerics.seed")
    parser.add_argument("--dt", type=float, default=None, help="override numerics.dt")
    parser.add_argument("--n-paths", type=int, default=None, help="override numerics.n_paths")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        config = load_config(args.config)
        num = config.numerics
        if args.seed is not None:
            num = dataclasses.replace(num, seed=args.seed)
        if args.dt is not None:
            if args.dt <= 0.0:
                raise ConfigError("numerics.dt must be positive")
            num = dataclasses.replace(num, dt=args.dt)
        if args.n_paths is not None:
            if args.n_paths < 1:
                raise ConfigError("numerics.n_paths must be at least 1")
            num = dataclasses.replace(num, n_paths=args.n_paths)
        config = dataclasses.replace(config, numerics=num)
    except (ConfigError, ParameterError) as exc:
        _write_failure_manifest(args.command, args.out_dir, str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run_command(args.command, config, args.out_dir)


def _write_failure_manifest(command: str, out_dir: str, error_text: str) -> None:
    """A manifest is emitted even when the config never parsed."""
    try:
        out = FsPath(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "artifact_version": __version__,
            "command": command,
            "config": None,
            "seed": None,
            "duration_seconds": 0.0,
            "files": [],
            "checks_passed": None,
            "status": "config_error",
            "error": error_text,
        }
        with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
