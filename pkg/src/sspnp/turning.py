"""Turning-point location on I-V curves via the augmented sensitivity system.

A fold of the I-V curve is a point where dV/dI vanishes.  Solving the
augmented BVP (base unknowns with the current I promoted to an unknown,
coupled to their derivatives with respect to I) with the boundary condition
"potential sensitivity at the right end = 0" pins such a point directly.
Seeds come from a traced curve: each sign change of the finite-difference
dV/dI yields one candidate, whose bracketing trace points also provide the
starting values for the sensitivity block.
"""

from __future__ import annotations

import warnings
from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bvp import BvpSolution, SolverSettings, solve_bvp
from .continuation import Branch, crossings_at, sign_change_indices
from .errors import (
    ConvergedToWrongFold,
    NonConvergence,
    OddFoldCount,
    SingularJacobian,
    SspnpError,
    TooFewPoints,
)
from .model import (
    MU,
    PHI,
    ChannelSystem,
    I2V,
    aug_current_slot,
    aug_dimension,
    build_bvp,
    build_ivaug,
    c_slot,
    flux_slot,
    hat_c_slot,
    hat_flux_slot,
    hat_mu_slot,
    hat_phi_slot,
    screen_solution,
)

__all__ = [
    "TurningPoint",
    "MultiplicityMap",
    "estimate_turning_candidates",
    "solve_turning_point",
    "find_all_turning_points",
    "multiplicity_intervals",
    "fold_is_local_extremum",
    "sensitivity_mismatch",
]


@dataclass(frozen=True)
class TurningPoint:
    """A located fold: coordinates, augmented solution, and its seed index."""

    V_star: float
    I_star: float
    solution: BvpSolution
    seed_origin: int


@dataclass(frozen=True)
class MultiplicityMap:
    """Solution counts per voltage interval bounded by the fold voltages."""

    fold_voltages: tuple
    counts: tuple

    def count_at(self, V: float) -> int:
        return self.counts[bisect_right(self.fold_voltages, V)]


def estimate_turning_candidates(branch: Branch) -> list:
    """Indices of trace points adjacent to each dV/dI sign change."""
    if len(branch.points) < 5:
        raise TooFewPoints(
            f"need at least 5 trace points, got {len(branch.points)}"
        )
    return sign_change_indices(branch.voltages())


def _augmented_guess(system: ChannelSystem, branch: Branch, seed_index: int):
    """Initial augmented state on the seed's mesh: base copied from the seed,
    sensitivity block from finite differences of the bracketing points."""
    points = branch.points
    seed = points[seed_index]
    m = system.num_species
    nodes = seed.solution.mesh.nodes
    base = seed.solution.values

    lo = max(seed_index - 1, 0)
    hi = min(seed_index + 1, len(points) - 1)
    d_i = points[hi].I - points[lo].I
    if abs(d_i) < 1e-8 * max(1.0, abs(seed.I)):
        raise NonConvergence(
            f"bracketing trace points at index {seed_index} have equal currents"
        )
    y_hi = points[hi].solution(nodes)
    y_lo = points[lo].solution(nodes)
    diff = (y_hi - y_lo) / d_i

    guess = np.zeros((aug_dimension(m), nodes.size))
    guess[PHI] = base[PHI]
    guess[MU] = base[MU]
    for i in range(m):
        guess[c_slot(i)] = base[c_slot(i)]
        guess[hat_c_slot(m, i)] = diff[c_slot(i)]
    for i in range(m - 1):
        guess[flux_slot(i)] = base[flux_slot(i)]
        guess[hat_flux_slot(m, i)] = diff[flux_slot(i)]
    guess[aug_current_slot(m)] = seed.I
    guess[hat_phi_slot(m)] = diff[PHI]
    guess[hat_mu_slot(m)] = diff[MU]
    return seed.solution.mesh, guess


def solve_turning_point(
    system: ChannelSystem,
    branch: Branch,
    seed_index: int,
    settings: SolverSettings = SolverSettings(),
    *,
    expected_within: Optional[float] = None,
) -> TurningPoint:
    """Solve the augmented system with dV/dI = 0 from one trace seed.

    ``expected_within`` bounds |I* - I_seed|; beyond it the (still valid)
    fold is raised as ConvergedToWrongFold with the point attached.
    """
    mesh, guess = _augmented_guess(system, branch, seed_index)
    spec = build_ivaug(system, 0.0)
    try:
        sol = solve_bvp(spec, (mesh, guess), settings)
    except SingularJacobian as exc:
        raise NonConvergence(f"augmented solve hit a singular Jacobian: {exc}") from exc
    m = system.num_species
    screen_solution(system, sol, c_slots=[c_slot(i) for i in range(m)])
    point = TurningPoint(
        V_star=float(sol.values[PHI, -1]),
        I_star=float(sol.values[aug_current_slot(m), -1]),
        solution=sol,
        seed_origin=seed_index,
    )
    seed_current = branch.points[seed_index].I
    if expected_within is not None and abs(point.I_star - seed_current) > expected_within:
        raise ConvergedToWrongFold(
            f"seed at I = {seed_current:g} converged to fold at I = {point.I_star:g}",
            point,
        )
    return point


def _deduplicate(folds: list) -> list:
    kept = []
    for fold in sorted(folds, key=lambda f: f.V_star):
        duplicate = False
        for other in kept:
            dv = abs(fold.V_star - other.V_star)
            di = abs(fold.I_star - other.I_star)
            if dv <= 1e-4 * max(1.0, abs(other.V_star)) and di <= 1e-4 * max(
                1.0, abs(other.I_star)
            ):
                duplicate = True
                break
        if not duplicate:
            kept.append(fold)
    return kept


def find_all_turning_points(
    system: ChannelSystem,
    branch: Branch,
    settings: SolverSettings = SolverSettings(),
) -> list:
    """All folds reachable from a traced curve, deduplicated and sorted by V.

    Per-seed failures become warnings; a converged-but-distant fold is kept
    (it is a valid fold).  The call fails only if some dV/dI sign change
    ends up with no fold inside its bracketing current interval.
    """
    candidates = estimate_turning_candidates(branch)
    if not candidates:
        return []
    currents = branch.currents()
    seed_currents = currents[candidates]
    spacings = []
    for k, idx in enumerate(candidates):
        gaps = [
            abs(seed_currents[k] - seed_currents[j])
            for j in range(len(candidates))
            if j != k
        ]
        spacings.append(min(gaps) if gaps else abs(currents[-1] - currents[0]))

    folds = []
    for k, idx in enumerate(candidates):
        try:
            folds.append(
                solve_turning_point(
                    system, branch, idx, settings, expected_within=spacings[k]
                )
            )
        except ConvergedToWrongFold as exc:
            folds.append(exc.point)
            warnings.warn(str(exc), stacklevel=2)
        except (NonConvergence, SspnpError) as exc:
            warnings.warn(
                f"turning-point seed at index {idx} failed: {exc}", stacklevel=2
            )

    folds = _deduplicate(folds)

    for idx in candidates:
        lo = currents[max(idx - 1, 0)]
        hi = currents[min(idx + 1, currents.size - 1)]
        lo, hi = min(lo, hi), max(lo, hi)
        margin = hi - lo
        if not any(lo - margin <= f.I_star <= hi + margin for f in folds):
            raise NonConvergence(
                f"no fold found near the dV/dI sign change at trace index {idx} "
                f"(I in [{lo:g}, {hi:g}])"
            )
    return folds


def multiplicity_intervals(folds: list, branch: Optional[Branch] = None) -> MultiplicityMap:
    """Solution counts per V-interval from the fold-crossing rule.

    With a traced branch the count inside each interval is anchored by the
    number of trace crossings at the interval midpoint; without one, the
    counts ramp up by 2 toward the middle interval (nested folds).  Outside
    the outermost folds the count is 1.
    """
    if len(folds) % 2 != 0:
        raise OddFoldCount(f"{len(folds)} folds cannot bound closed intervals")
    if not folds:
        return MultiplicityMap(fold_voltages=(), counts=(1,))
    voltages = tuple(sorted(f.V_star for f in folds))
    k = len(voltages)
    if branch is None:
        counts = tuple(1 + 2 * min(i, k - i) for i in range(k + 1))
        return MultiplicityMap(fold_voltages=voltages, counts=counts)

    counts = [1]
    for i in range(k - 1):
        probe = 0.5 * (voltages[i] + voltages[i + 1])
        counts.append(int(crossings_at(branch, probe).size))
    counts.append(1)
    for i in range(k):
        if abs(counts[i + 1] - counts[i]) != 2:
            raise SspnpError(
                f"crossing counts {counts} violate the fold-crossing rule "
                f"at fold V = {voltages[i]:g}"
            )
    return MultiplicityMap(fold_voltages=voltages, counts=tuple(counts))


def fold_is_local_extremum(
    system: ChannelSystem,
    fold: TurningPoint,
    settings: SolverSettings = SolverSettings(),
    delta_rel: float = 1e-3,
) -> bool:
    """Check that V(I* +/- delta) lies on one side of V* (fold is an extremum)."""
    delta = delta_rel * abs(fold.I_star) if fold.I_star != 0 else delta_rel
    base = _base_solution_values(system, fold)
    sides = []
    for sign in (-1.0, 1.0):
        sol = solve_bvp(
            build_bvp(system, I2V(fold.I_star + sign * delta)),
            (fold.solution.mesh, base),
            settings,
        )
        sides.append(float(sol.values[PHI, -1]) - fold.V_star)
    return sides[0] * sides[1] > 0


def sensitivity_mismatch(
    system: ChannelSystem,
    fold: TurningPoint,
    settings: SolverSettings = SolverSettings(),
    delta_rel: float = 1e-3,
) -> dict:
    """Relative sup-norm gap between the fold's sensitivity block and central
    finite differences of voltage-free solves at I* +/- delta.

    Returns one entry per field family ("phi", "mu", "c_i", "J_i").
    """
    m = system.num_species
    delta = delta_rel * abs(fold.I_star) if fold.I_star != 0 else delta_rel
    nodes = fold.solution.mesh.nodes
    base = _base_solution_values(system, fold)
    plus = solve_bvp(
        build_bvp(system, I2V(fold.I_star + delta)),
        (fold.solution.mesh, base),
        settings,
    )
    minus = solve_bvp(
        build_bvp(system, I2V(fold.I_star - delta)),
        (fold.solution.mesh, base),
        settings,
    )
    diff = (plus(nodes) - minus(nodes)) / (2.0 * delta)
    aug = fold.solution.values

    def rel_gap(fd_row, hat_row):
        scale = max(np.abs(hat_row).max(), 1e-30)
        return float(np.abs(fd_row - hat_row).max() / scale)

    out = {
        "phi": rel_gap(diff[PHI], aug[hat_phi_slot(m)]),
        "mu": rel_gap(diff[MU], aug[hat_mu_slot(m)]),
    }
    for i in range(m):
        out[f"c_{i + 1}"] = rel_gap(diff[c_slot(i)], aug[hat_c_slot(m, i)])
    for i in range(m - 1):
        out[f"J_{i + 1}"] = rel_gap(diff[flux_slot(i)], aug[hat_flux_slot(m, i)])
    return out


def _base_solution_values(system: ChannelSystem, fold: TurningPoint) -> np.ndarray:
    """Base-layout node values reconstructed from an augmented fold solution."""
    from .model import aug_extract_base

    return aug_extract_base(system, fold.solution.values)
