"""Command-line front end: config-driven solves, sweeps, traces, fold finding.

    sspnp solve          --config experiment.conf [--out DIR] [--svg]
    sspnp sweep          --config experiment.conf [--out DIR] [--svg]
    sspnp trace          --config experiment.conf [--out DIR] [--svg]
    sspnp turning-points --config experiment.conf [--out DIR]
    sspnp phase-diagram  --config experiment.conf [--out DIR] [--threads N]

The config file carries the system and command parameters (see config.py
for the format); the subcommand must match the config's command type.
Exit codes: 0 success, 2 configuration error, 3 no convergence,
4 mesh budget exceeded, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .bvp import SolverSettings
from .config import ExperimentConfig, load_config
from .continuation import (
    StepSettings,
    phase_diagram,
    sigma_ramp,
    sweep_concentration,
    sweep_voltage,
    trace_ic_curve,
    trace_iv_curve,
)
from .errors import (
    ConfigError,
    MeshBudgetExceeded,
    NonConvergence,
    SingularJacobian,
    SspnpError,
)
from .model import (
    C2I,
    I2C,
    I2V,
    PHI,
    V2I,
    c_slot,
    thermal_voltage_mv,
    total_current,
)
from .output import (
    write_curve_csv,
    write_folds_csv,
    write_multiplicity_csv,
    write_phase_csv,
    write_profile_csv,
)
from .svg import write_svg
from .turning import find_all_turning_points, multiplicity_intervals

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_MESH_BUDGET = 4


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if config.command_type != args.command:
            raise ConfigError(
                f"line {config.command_line}: config command type "
                f"'{config.command_type}' does not match subcommand '{args.command}'"
            )
        if args.tol is not None:
            config.solver = dataclasses.replace(config.solver, abs_tol=args.tol)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        handler = _HANDLERS[args.command]
        handler(config, out_dir, args)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MeshBudgetExceeded as exc:
        print(f"mesh budget exceeded: {exc}", file=sys.stderr)
        return EXIT_MESH_BUDGET
    except (NonConvergence, SingularJacobian) as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except SspnpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sspnp",
        description="Steady-state Poisson-Nernst-Planck curves and turning points",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "sweep", "trace", "turning-points", "phase-diagram"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="experiment config file")
        cmd.add_argument("--out", default=".", help="output directory")
        cmd.add_argument("--svg", action="store_true", help="also write SVG plots")
        cmd.add_argument("--threads", type=int, default=1, help="phase-diagram workers")
        cmd.add_argument("--tol", type=float, default=None, help="override abs_tol")
    return parser


def _step_settings(command: dict) -> StepSettings:
    kwargs = {}
    if "dv_target" in command:
        kwargs["dv_target"] = command["dv_target"]
    if "initial_step" in command:
        kwargs["initial_abs"] = command["initial_step"]
    if "min_step" in command:
        kwargs["min_abs"] = command["min_step"]
    if "max_step" in command:
        kwargs["max_abs"] = command["max_step"]
    return StepSettings(**kwargs)


def _require_keys(config: ExperimentConfig, *keys):
    for key in keys:
        if key not in config.command:
            raise ConfigError(
                f"line {config.command_line}: command "
                f"'{config.command_type}' needs '{key}'"
            )


def _pair(config: ExperimentConfig) -> tuple:
    first = config.command.get("pair_first", 1)
    second = config.command.get("pair_second", 2)
    return (first - 1, second - 1)  # config uses 1-based species indices


def _formulation(config: ExperimentConfig):
    family = config.command.get("family", "V2I").upper()
    cmd = config.command
    if family == "V2I":
        _require_keys(config, "v")
        return V2I(cmd["v"])
    if family == "I2V":
        _require_keys(config, "i")
        return I2V(cmd["i"])
    if family == "C2I":
        _require_keys(config, "v", "c_b")
        return C2I(cmd["v"], cmd["c_b"], _pair(config))
    if family == "I2C":
        _require_keys(config, "v", "i")
        return I2C(cmd["v"], cmd["i"], _pair(config))
    raise ConfigError(
        f"line {config.command_line}: unknown formulation family {family!r}"
    )


def cmd_solve(config: ExperimentConfig, out_dir: Path, args):
    formulation = _formulation(config)
    solution = sigma_ramp(config.system, formulation, config.solver)
    path = out_dir / f"{config.prefix}_profile.csv"
    write_profile_csv(path, config.system, solution)
    v = float(solution.values[PHI, -1])
    current = float(total_current(solution.values[:, -1], config.system.valences))
    mv = v * thermal_voltage_mv()
    print(
        f"V = {v:.9g} ({mv:.4g} mV at 300 K), I = {current:.9g}, "
        f"residual = {solution.residual_norm:.3e}, mesh = {solution.mesh.nodes.size} nodes"
    )
    print(f"wrote {path}")
    if args.svg:
        nodes = solution.mesh.nodes
        series = [(nodes, solution.values[PHI], "phi")]
        for i in range(config.system.num_species):
            series.append((nodes, solution.values[c_slot(i)], f"c_{i + 1}"))
        svg_path = out_dir / f"{config.prefix}_profile.svg"
        write_svg(svg_path, series, title="solution profile", xlabel="x", ylabel="value")
        print(f"wrote {svg_path}")


def cmd_sweep(config: ExperimentConfig, out_dir: Path, args):
    cmd = config.command
    family = cmd.get("family", "V").upper()
    direction = cmd.get("direction", "both").lower()
    if direction not in ("up", "down", "both"):
        raise ConfigError(
            f"line {config.command_line}: direction must be up, down, or both"
        )
    steps = _step_settings(cmd)
    runs = []
    if family in ("V", "V2I"):
        _require_keys(config, "v_start", "v_end")
        lo, hi = cmd["v_start"], cmd["v_end"]
        if direction in ("up", "both"):
            runs.append(("up", sweep_voltage(config.system, lo, hi, config.solver, steps)))
        if direction in ("down", "both"):
            runs.append(("down", sweep_voltage(config.system, hi, lo, config.solver, steps)))
    elif family in ("C_B", "CB", "C2I"):
        _require_keys(config, "v", "cb_start", "cb_end")
        lo, hi = cmd["cb_start"], cmd["cb_end"]
        pair = _pair(config)
        if direction in ("up", "both"):
            runs.append(
                ("up", sweep_concentration(config.system, cmd["v"], lo, hi, config.solver, steps, pair))
            )
        if direction in ("down", "both"):
            runs.append(
                ("down", sweep_concentration(config.system, cmd["v"], hi, lo, config.solver, steps, pair))
            )
    else:
        raise ConfigError(
            f"line {config.command_line}: unknown sweep family {family!r}"
        )
    for label, branch in runs:
        path = out_dir / f"{config.prefix}_sweep_{label}.csv"
        write_curve_csv(path, branch)
        jumps = ", ".join(f"{j.parameter:.6g}" for j in branch.jump_events) or "none"
        print(f"{label}: {len(branch.points)} points, jumps at {jumps}; wrote {path}")
    if args.svg and runs:
        series = []
        for label, branch in runs:
            series.append((branch.parameter_values(), branch.currents(), label))
        name = "V" if family in ("V", "V2I") else "c_B"
        svg_path = out_dir / f"{config.prefix}_sweep.svg"
        write_svg(svg_path, series, title="hysteresis sweep", xlabel=name, ylabel="I")
        print(f"wrote {svg_path}")


def _run_trace(config: ExperimentConfig):
    cmd = config.command
    _require_keys(config, "i_min", "i_max")
    family = cmd.get("family", "I2V").upper()
    steps = _step_settings(cmd)
    i_range = (cmd["i_min"], cmd["i_max"])
    if family == "I2V":
        return trace_iv_curve(
            config.system,
            i_range,
            config.solver,
            steps,
            v_seed=cmd.get("v_start", 0.0),
            v_stop=cmd.get("v_stop"),
        )
    if family == "I2C":
        _require_keys(config, "v")
        return trace_ic_curve(
            config.system, cmd["v"], i_range, config.solver, steps, pair=_pair(config)
        )
    raise ConfigError(f"line {config.command_line}: unknown trace family {family!r}")


def cmd_trace(config: ExperimentConfig, out_dir: Path, args):
    branch = _run_trace(config)
    path = out_dir / f"{config.prefix}_trace.csv"
    write_curve_csv(path, branch)
    print(f"trace: {len(branch.points)} points; wrote {path}")
    if args.svg:
        family = config.command.get("family", "I2V").upper()
        if family == "I2C":
            series = [(branch.concentrations(), branch.currents(), "I2C trace")]
            xlabel = "c_B"
        else:
            series = [(branch.voltages(), branch.currents(), "I2V trace")]
            xlabel = "V"
        svg_path = out_dir / f"{config.prefix}_trace.svg"
        write_svg(svg_path, series, title="traced curve", xlabel=xlabel, ylabel="I")
        print(f"wrote {svg_path}")


def cmd_turning_points(config: ExperimentConfig, out_dir: Path, args):
    branch = _run_trace(config)
    folds = find_all_turning_points(config.system, branch, config.solver)
    folds_path = out_dir / f"{config.prefix}_folds.csv"
    write_folds_csv(folds_path, folds)
    multiplicity = multiplicity_intervals(folds, branch)
    multi_path = out_dir / f"{config.prefix}_multiplicity.csv"
    write_multiplicity_csv(multi_path, multiplicity)
    for fold in folds:
        print(f"fold: V* = {fold.V_star:.6g}, I* = {fold.I_star:.6g}")
    print(f"wrote {folds_path} and {multi_path}")


def cmd_phase_diagram(config: ExperimentConfig, out_dir: Path, args):
    cmd = config.command
    _require_keys(config, "sigmas", "kappas", "i_min", "i_max")
    cells = phase_diagram(
        config.system,
        cmd["sigmas"],
        cmd["kappas"],
        (cmd["i_min"], cmd["i_max"]),
        config.solver,
        _step_settings(cmd),
        v_stop=cmd.get("v_stop"),
        threads=args.threads,
    )
    path = out_dir / f"{config.prefix}_phase.csv"
    write_phase_csv(path, cells)
    print(f"phase diagram: {len(cells)} cells; wrote {path}")


_HANDLERS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "trace": cmd_trace,
    "turning-points": cmd_turning_points,
    "phase-diagram": cmd_phase_diagram,
}


if __name__ == "__main__":
    sys.exit(main())
