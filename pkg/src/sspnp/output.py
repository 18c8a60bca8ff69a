"""CSV writers for curves, profiles, folds, and phase diagrams.

Numeric fields are written in full-precision scientific notation (17
significant digits) so CSV output is a lossless, deterministic contract.
"""

from __future__ import annotations

import csv

import numpy as np

from .continuation import Branch
from .model import PHI, c_slot, flux_slot

__all__ = [
    "format_number",
    "write_curve_csv",
    "write_profile_csv",
    "write_folds_csv",
    "write_multiplicity_csv",
    "write_phase_csv",
]

CURVE_COLUMNS = [
    "index",
    "swept_param_name",
    "swept_param_value",
    "V",
    "I",
    "c_B",
    "newton_iters",
    "mesh_size",
    "jump_flag",
]


def format_number(value) -> str:
    return f"{float(value):.16e}"


def write_curve_csv(path, branch: Branch):
    """One row per continuation point; jump_flag marks the first point on a
    new branch after a jump event."""
    jump_params = {j.parameter for j in branch.jump_events}
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CURVE_COLUMNS)
        for k, point in enumerate(branch.points):
            if branch.param_name == "V":
                swept = point.V
            elif branch.param_name == "c_B":
                swept = point.c_B
            else:
                swept = point.I
            mesh_size = point.solution.mesh.nodes.size if point.solution else 0
            writer.writerow(
                [
                    k,
                    branch.param_name,
                    format_number(swept),
                    format_number(point.V),
                    format_number(point.I),
                    "" if point.c_B is None else format_number(point.c_B),
                    point.newton_iters,
                    mesh_size,
                    1 if swept in jump_params else 0,
                ]
            )


def write_profile_csv(path, system, solution):
    """Solution profile on the final mesh: x, phi, mu, c_i..., J_i...."""
    m = system.num_species
    header = (
        ["x", "phi", "mu"]
        + [f"c_{i + 1}" for i in range(m)]
        + [f"J_{i + 1}" for i in range(m)]
    )
    nodes = solution.mesh.nodes
    values = solution.values
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for j, x in enumerate(nodes):
            row = [format_number(x), format_number(values[PHI, j]), format_number(values[1, j])]
            row += [format_number(values[c_slot(i), j]) for i in range(m)]
            row += [format_number(values[flux_slot(i), j]) for i in range(m)]
            writer.writerow(row)


def write_folds_csv(path, folds):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["V_star", "I_star", "seed_index", "residual"])
        for fold in folds:
            writer.writerow(
                [
                    format_number(fold.V_star),
                    format_number(fold.I_star),
                    fold.seed_origin,
                    format_number(fold.solution.residual_norm),
                ]
            )


def write_multiplicity_csv(path, multiplicity):
    voltages = multiplicity.fold_voltages
    bounds = [-np.inf, *voltages, np.inf]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["V_low", "V_high", "count"])
        for k, count in enumerate(multiplicity.counts):
            lo, hi = bounds[k], bounds[k + 1]
            writer.writerow(
                [
                    "-inf" if np.isneginf(lo) else format_number(lo),
                    "inf" if np.isposinf(hi) else format_number(hi),
                    count,
                ]
            )


def write_phase_csv(path, cells):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sigma", "kappa", "shape_class", "turning_count"])
        for cell in cells:
            if cell.shape is None:
                writer.writerow(
                    [format_number(cell.sigma), format_number(cell.kappa), "failed", ""]
                )
            else:
                writer.writerow(
                    [
                        format_number(cell.sigma),
                        format_number(cell.kappa),
                        cell.shape.kind,
                        cell.shape.turning_count,
                    ]
                )
