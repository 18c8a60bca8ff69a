"""Steady-state Poisson-Nernst-Planck system on [-1, 1], dimensionless form.

For M ionic species with valences z_i, concentrations c_i and constant
fluxes J_i, the first-order state vector is

    Y = (phi, mu, c_1, J_1, ..., c_M, J_M),        mu = phi'

and the governing system reads

    phi' = mu
    mu'  = -kappa * (sum_i z_i c_i + rho_f(x))
    c_i' = J_i - z_i c_i mu
    J_i' = 0

where rho_f is a piecewise-constant fixed-charge profile scaled by sigma and
kappa = L^2 / (2 lambda_D^2) compares the channel half-length to the Debye
screening length.  The total ionic current is I = sum_i z_i J_i.

Four boundary-value formulations are supported: prescribe the voltage and
read off the current (V2I), prescribe the current and read off the voltage
(I2V), and the analogous pair (C2I, I2C) that varies the boundary
concentration of one species pair at the right end instead.  An augmented
system of 4M+3 equations couples the base unknowns (with I promoted to an
unknown and J_M eliminated) to their derivatives with respect to I; fixing
the boundary value of the potential sensitivity to zero turns it into a
turning-point locator for the I-V curve.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.constants as sc

from .bvp import BvpSolution, BvpSpec
from .errors import (
    DimensionMismatch,
    InvalidFormulation,
    NegativeConcentration,
    NeutralityViolated,
    NonPositiveScale,
    OutOfDomain,
)

__all__ = [
    "PHI",
    "MU",
    "c_slot",
    "flux_slot",
    "state_dimension",
    "Species",
    "FixedChargeProfile",
    "ChannelSystem",
    "PhysicalScales",
    "V2I",
    "I2V",
    "C2I",
    "I2C",
    "nondimensionalize",
    "fixed_charge_at",
    "ode_rhs",
    "ode_jacobian",
    "total_current",
    "check_neutrality",
    "build_bvp",
    "build_ivaug",
    "linear_guess",
    "screen_solution",
    "aug_dimension",
    "aug_current_slot",
    "hat_phi_slot",
    "hat_mu_slot",
    "hat_c_slot",
    "hat_flux_slot",
    "aug_extract_base",
]

# State-vector component slots: Y = (phi, mu, c_1, J_1, ..., c_M, J_M).
PHI = 0
MU = 1


def c_slot(i: int) -> int:
    """Index of the concentration of species i (0-based)."""
    return 2 + 2 * i


def flux_slot(i: int) -> int:
    """Index of the flux of species i (0-based)."""
    return 3 + 2 * i


def state_dimension(num_species: int) -> int:
    return 2 * num_species + 2


@dataclass(frozen=True)
class Species:
    """One ionic species: valence and its reservoir concentrations."""

    z: int
    c_left: float
    c_right: float

    def __post_init__(self):
        if int(self.z) != self.z or self.z == 0:
            raise InvalidFormulation(f"valence must be a nonzero integer, got {self.z}")
        if self.c_left <= 0 or self.c_right <= 0:
            raise InvalidFormulation("boundary concentrations must be positive")


@dataclass(frozen=True)
class FixedChargeProfile:
    """Piecewise-constant fixed charge: sigma * plateau_values[i] on segment i.

    Segment lengths partition [-1, 1]; evaluation is right-continuous at the
    interior segment boundaries.
    """

    segment_lengths: tuple
    plateau_values: tuple
    sigma: float = 1.0

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.segment_lengths)
        plateaus = tuple(float(v) for v in self.plateau_values)
        if len(lengths) != len(plateaus) or not lengths:
            raise DimensionMismatch("one plateau value per segment required")
        if any(v <= 0 for v in lengths):
            raise InvalidFormulation("segment lengths must be positive")
        if abs(sum(lengths) - 2.0) > 1e-12:
            raise InvalidFormulation(
                f"segment lengths must sum to 2, got {sum(lengths)!r}"
            )
        if self.sigma < 0:
            raise InvalidFormulation("sigma must be nonnegative")
        object.__setattr__(self, "segment_lengths", lengths)
        object.__setattr__(self, "plateau_values", plateaus)
        breaks = [-1.0]
        for length in lengths[:-1]:
            breaks.append(breaks[-1] + length)
        breaks.append(1.0)
        object.__setattr__(self, "_breaks", tuple(breaks))

    @property
    def breakpoints(self) -> tuple:
        """Segment boundaries including both endpoints."""
        return self._breaks

    @property
    def interior_breakpoints(self) -> tuple:
        return self._breaks[1:-1]

    def with_sigma(self, sigma: float) -> "FixedChargeProfile":
        return FixedChargeProfile(self.segment_lengths, self.plateau_values, sigma)


@dataclass(frozen=True)
class ChannelSystem:
    """Complete dimensionless ssPNP instance: kappa, species, fixed charges."""

    kappa: float
    species: tuple
    profile: FixedChargeProfile

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        if self.kappa <= 0:
            raise InvalidFormulation("kappa must be positive")
        if len(self.species) < 2:
            raise InvalidFormulation("at least two ionic species required")
        check_neutrality(self.species)

    @property
    def num_species(self) -> int:
        return len(self.species)

    @property
    def dimension(self) -> int:
        return state_dimension(self.num_species)

    @cached_property
    def valences(self) -> np.ndarray:
        return np.array([s.z for s in self.species], dtype=float)

    @cached_property
    def c_left(self) -> np.ndarray:
        return np.array([s.c_left for s in self.species])

    @cached_property
    def c_right(self) -> np.ndarray:
        return np.array([s.c_right for s in self.species])

    def with_sigma(self, sigma: float) -> "ChannelSystem":
        return ChannelSystem(self.kappa, self.species, self.profile.with_sigma(sigma))

    def with_kappa(self, kappa: float) -> "ChannelSystem":
        return ChannelSystem(kappa, self.species, self.profile)


@dataclass(frozen=True)
class PhysicalScales:
    """Dimensional reference scales used only for nondimensionalization.

    The per-species diffusion constants cancel from the steady-state 1D
    system and are kept for bookkeeping only.
    """

    half_length: float  # L, half channel length [m]
    diffusion_ref: float  # D_0 [m^2/s]
    concentration_ref: float  # c_0 [mol/L]
    relative_permittivity: float  # eps_r
    temperature: float  # T [K]
    diffusion: tuple = ()  # per-species D_i [m^2/s]

    def __post_init__(self):
        values = [
            self.half_length,
            self.diffusion_ref,
            self.concentration_ref,
            self.relative_permittivity,
            self.temperature,
            *self.diffusion,
        ]
        if any(v <= 0 for v in values):
            raise NonPositiveScale("all physical scales must be positive")


def nondimensionalize(scales: PhysicalScales) -> tuple:
    """Return (kappa, lambda_D) with the Debye length lambda_D in meters.

    lambda_D = sqrt(eps_0 eps_r / (2 beta e^2 c_0)) with c_0 as a number
    density, and kappa = L^2 / (2 lambda_D^2).
    """
    beta = 1.0 / (sc.Boltzmann * scales.temperature)
    number_density = scales.concentration_ref * 1000.0 * sc.Avogadro
    lambda_d = np.sqrt(
        sc.epsilon_0
        * scales.relative_permittivity
        / (2.0 * beta * sc.elementary_charge**2 * number_density)
    )
    kappa = scales.half_length**2 / (2.0 * lambda_d**2)
    return float(kappa), float(lambda_d)


def thermal_voltage_mv(temperature: float = 300.0) -> float:
    """k_B T / e in millivolts (~25.85 mV at 300 K); used for CLI reporting."""
    return sc.Boltzmann * temperature / sc.elementary_charge * 1000.0


def fixed_charge_at(profile: FixedChargeProfile, x):
    """sigma * plateau of the segment containing x; right-continuous at breaks."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if x_arr.size and (x_arr.min() < -1.0 or x_arr.max() > 1.0):
        raise OutOfDomain("fixed-charge abscissa outside [-1, 1]")
    interior = np.asarray(profile.interior_breakpoints)
    idx = np.searchsorted(interior, x_arr, side="right")
    values = profile.sigma * np.asarray(profile.plateau_values)[idx]
    return float(values[0]) if np.isscalar(x) or np.asarray(x).ndim == 0 else values


def _as_columns(Y, dim: int):
    arr = np.asarray(Y, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise DimensionMismatch(f"state has length {arr.shape[0]}, expected {dim}")
        return arr[:, None], True
    if arr.ndim != 2 or arr.shape[0] != dim:
        raise DimensionMismatch(f"state has shape {arr.shape}, expected ({dim}, k)")
    return arr, False


def ode_rhs(system: ChannelSystem, x, Y):
    """Right-hand side F(x, Y) of the first-order ssPNP system."""
    dim = system.dimension
    arr, squeeze = _as_columns(Y, dim)
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    z = system.valences
    m = system.num_species
    out = np.zeros_like(arr)
    mu = arr[MU]
    charge = fixed_charge_at(system.profile, x_arr)
    for i in range(m):
        charge = charge + z[i] * arr[c_slot(i)]
    out[PHI] = mu
    out[MU] = -system.kappa * charge
    for i in range(m):
        out[c_slot(i)] = arr[flux_slot(i)] - z[i] * arr[c_slot(i)] * mu
    return out[:, 0] if squeeze else out


def ode_jacobian(system: ChannelSystem, x, Y):
    """Analytic Jacobian dF/dY, shape (k, n, n) for column-stacked states."""
    dim = system.dimension
    arr, squeeze = _as_columns(Y, dim)
    k = arr.shape[1]
    z = system.valences
    jac = np.zeros((k, dim, dim))
    jac[:, PHI, MU] = 1.0
    mu = arr[MU]
    for i in range(system.num_species):
        ci, ji = c_slot(i), flux_slot(i)
        jac[:, MU, ci] = -system.kappa * z[i]
        jac[:, ci, MU] = -z[i] * arr[ci]
        jac[:, ci, ci] = -z[i] * mu
        jac[:, ci, ji] = 1.0
    return jac[0] if squeeze else jac


def total_current(Y, valences):
    """Total ionic current I = sum_i z_i J_i of a base-layout state."""
    z = np.asarray(valences, dtype=float)
    arr = np.asarray(Y, dtype=float)
    slots = [flux_slot(i) for i in range(z.size)]
    return np.tensordot(z, arr[slots], axes=(0, 0))


def check_neutrality(species: Sequence[Species], tol: float = 1e-12):
    """Verify both reservoirs are charge neutral; raise NeutralityViolated if not.

    Returns the (left, right) charge imbalances for inspection.
    """
    left = float(sum(s.z * s.c_left for s in species))
    right = float(sum(s.z * s.c_right for s in species))
    if abs(left) > tol:
        raise NeutralityViolated("left", left)
    if abs(right) > tol:
        raise NeutralityViolated("right", right)
    return left, right


# ---------------------------------------------------------------------------
# Boundary-value formulations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class V2I:
    """Prescribe the voltage phi(1) = V; the current is an output."""

    V: float


@dataclass(frozen=True)
class I2V:
    """Prescribe the total current sum z_i J_i(1) = I; V = phi(1) is an output."""

    I: float


@dataclass(frozen=True)
class C2I:
    """Prescribe V and the right-boundary concentration c_B of species pair[0].

    The paired species pair[1] takes the neutrality-completing value
    -(z_p c_B + sum_others z_i c_i^R) / z_q; the pair must have valences of
    opposite sign.
    """

    V: float
    c_B: float
    pair: tuple = (0, 1)


@dataclass(frozen=True)
class I2C:
    """Prescribe V and I; the pair's right concentrations float, constrained
    only by joint neutrality.  c_B = c_pair0(1) is an output."""

    V: float
    I: float
    pair: tuple = (0, 1)


def _check_pair(system: ChannelSystem, pair) -> tuple:
    p, q = pair
    m = system.num_species
    if p == q or not (0 <= p < m and 0 <= q < m):
        raise InvalidFormulation(f"species pair {pair} invalid for {m} species")
    if system.valences[p] * system.valences[q] >= 0:
        raise InvalidFormulation(
            "the varied species pair must have valences of opposite sign"
        )
    return p, q


def _linear_bc(dim: int, left_rows, left_targets, right_rows, right_targets):
    la = np.asarray(left_rows, dtype=float)
    ra = np.asarray(right_rows, dtype=float)
    tl = np.asarray(left_targets, dtype=float)
    tr = np.asarray(right_targets, dtype=float)
    ba = np.vstack([la, np.zeros((ra.shape[0], dim))])
    bb = np.vstack([np.zeros((la.shape[0], dim)), ra])

    def bc_residual(ya, yb):
        return np.concatenate([la @ ya - tl, ra @ yb - tr])

    def bc_jacobians(ya, yb):
        return ba, bb

    return bc_residual, bc_jacobians, la.shape[0]


def _unit_row(dim: int, slot: int) -> np.ndarray:
    row = np.zeros(dim)
    row[slot] = 1.0
    return row


def _current_row(dim: int, valences) -> np.ndarray:
    row = np.zeros(dim)
    for i, z in enumerate(valences):
        row[flux_slot(i)] = z
    return row


def build_bvp(system: ChannelSystem, formulation) -> BvpSpec:
    """Assemble the BvpSpec for one of the four formulations."""
    dim = system.dimension
    m = system.num_species
    z = system.valences

    left_rows = [_unit_row(dim, PHI)] + [_unit_row(dim, c_slot(i)) for i in range(m)]
    left_targets = [0.0] + list(system.c_left)

    if isinstance(formulation, V2I):
        right_rows = [_unit_row(dim, PHI)] + [
            _unit_row(dim, c_slot(i)) for i in range(m)
        ]
        right_targets = [formulation.V] + list(system.c_right)
    elif isinstance(formulation, I2V):
        right_rows = [_current_row(dim, z)] + [
            _unit_row(dim, c_slot(i)) for i in range(m)
        ]
        right_targets = [formulation.I] + list(system.c_right)
    elif isinstance(formulation, C2I):
        p, q = _check_pair(system, formulation.pair)
        others = [i for i in range(m) if i not in (p, q)]
        c_q = -(
            z[p] * formulation.c_B + sum(z[i] * system.c_right[i] for i in others)
        ) / z[q]
        if formulation.c_B <= 0 or c_q <= 0:
            raise InvalidFormulation(
                f"c_B = {formulation.c_B} forces a non-positive boundary "
                f"concentration (paired value {c_q:.3e})"
            )
        targets = dict.fromkeys(range(m))
        targets[p] = formulation.c_B
        targets[q] = c_q
        for i in others:
            targets[i] = system.c_right[i]
        right_rows = [_unit_row(dim, PHI)] + [
            _unit_row(dim, c_slot(i)) for i in range(m)
        ]
        right_targets = [formulation.V] + [targets[i] for i in range(m)]
    elif isinstance(formulation, I2C):
        p, q = _check_pair(system, formulation.pair)
        others = [i for i in range(m) if i not in (p, q)]
        pair_row = np.zeros(dim)
        pair_row[c_slot(p)] = z[p]
        pair_row[c_slot(q)] = z[q]
        pair_target = -sum(z[i] * system.c_right[i] for i in others)
        right_rows = (
            [_unit_row(dim, PHI), _current_row(dim, z), pair_row]
            + [_unit_row(dim, c_slot(i)) for i in others]
        )
        right_targets = (
            [formulation.V, formulation.I, pair_target]
            + [system.c_right[i] for i in others]
        )
    else:
        raise InvalidFormulation(f"unknown formulation {formulation!r}")

    bc_residual, bc_jacobians, split = _linear_bc(
        dim, left_rows, left_targets, right_rows, right_targets
    )
    return BvpSpec(
        n=dim,
        rhs=lambda x, Y: ode_rhs(system, x, Y),
        rhs_jacobian=lambda x, Y: ode_jacobian(system, x, Y),
        bc_residual=bc_residual,
        bc_jacobians=bc_jacobians,
        interface_points=system.profile.interior_breakpoints,
        bc_split=split,
    )


def linear_guess(system: ChannelSystem, formulation):
    """Straight-line starting profile: boundary-imposed components interpolate
    linearly across the channel, fluxes start at zero."""
    v_end = 0.0 if isinstance(formulation, I2V) else formulation.V
    c_l = system.c_left
    c_r = np.array(system.c_right)
    if isinstance(formulation, C2I):
        p, q = _check_pair(system, formulation.pair)
        others = [i for i in range(system.num_species) if i not in (p, q)]
        c_r[p] = formulation.c_B
        c_r[q] = -(
            system.valences[p] * formulation.c_B
            + sum(system.valences[i] * system.c_right[i] for i in others)
        ) / system.valences[q]

    def guess(x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((system.dimension, x_arr.size))
        s = 0.5 * (x_arr + 1.0)
        out[PHI] = v_end * s
        out[MU] = 0.5 * v_end
        for i in range(system.num_species):
            out[c_slot(i)] = c_l[i] + (c_r[i] - c_l[i]) * s
        return out

    return guess


def screen_solution(system: ChannelSystem, solution: BvpSolution, c_slots=None):
    """Reject converged solutions with non-positive concentrations.

    Checks the mesh nodes and the collocation midpoints.  Newton iterates are
    allowed to go negative transiently; this screen applies to converged
    solutions only.
    """
    if c_slots is None:
        c_slots = [c_slot(i) for i in range(system.num_species)]
    vals = solution.values
    h = solution.mesh.widths
    mids = (
        0.5 * (vals[:, :-1] + vals[:, 1:])
        - (h / 8.0) * (solution.f_right - solution.f_left)
    )
    for i, slot in enumerate(c_slots):
        worst = min(vals[slot].min(), mids[slot].min())
        if worst <= 0.0:
            raise NegativeConcentration(
                f"species {i} reaches c = {worst:.3e} in a converged solution"
            )
    return solution


# ---------------------------------------------------------------------------
# Augmented system for dV/dI sensitivity and turning points
# ---------------------------------------------------------------------------
#
# Augmented layout (4M+3 components):
#   base: (phi, mu, c_1, J_1, ..., c_{M-1}, J_{M-1}, c_M, I)
#   hat:  (phi^, mu^, c_1^, J_1^, ..., c_{M-1}^, J_{M-1}^, c_M^)
# J_M is eliminated via I; the hat block solves the linearization of the base
# system with respect to I, so phi^(1) equals dV/dI.


def aug_dimension(num_species: int) -> int:
    return 4 * num_species + 3


def aug_current_slot(num_species: int) -> int:
    return 2 * num_species + 1


def hat_phi_slot(num_species: int) -> int:
    return 2 * num_species + 2


def hat_mu_slot(num_species: int) -> int:
    return 2 * num_species + 3


def hat_c_slot(num_species: int, i: int) -> int:
    return 2 * num_species + 4 + 2 * i


def hat_flux_slot(num_species: int, i: int) -> int:
    return 2 * num_species + 5 + 2 * i


def _aug_rhs(system: ChannelSystem, x, Y):
    m = system.num_species
    dim = aug_dimension(m)
    arr, squeeze = _as_columns(Y, dim)
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    z = system.valences
    zm = z[m - 1]
    out = np.zeros_like(arr)
    mu = arr[MU]
    hmu = arr[hat_mu_slot(m)]
    c_last = arr[c_slot(m - 1)]
    hc_last = arr[hat_c_slot(m, m - 1)]

    charge = fixed_charge_at(system.profile, x_arr)
    hat_charge = 0.0
    for i in range(m):
        charge = charge + z[i] * arr[c_slot(i)]
        hat_charge = hat_charge + z[i] * arr[hat_c_slot(m, i)]

    out[PHI] = mu
    out[MU] = -system.kappa * charge
    flux_sum = 0.0
    hat_flux_sum = 0.0
    for i in range(m - 1):
        out[c_slot(i)] = arr[flux_slot(i)] - z[i] * arr[c_slot(i)] * mu
        out[hat_c_slot(m, i)] = (
            arr[hat_flux_slot(m, i)]
            - z[i] * mu * arr[hat_c_slot(m, i)]
            - z[i] * arr[c_slot(i)] * hmu
        )
        flux_sum = flux_sum + z[i] * arr[flux_slot(i)]
        hat_flux_sum = hat_flux_sum + z[i] * arr[hat_flux_slot(m, i)]
    out[c_slot(m - 1)] = (arr[aug_current_slot(m)] - flux_sum) / zm - zm * c_last * mu
    out[hat_phi_slot(m)] = hmu
    out[hat_mu_slot(m)] = -system.kappa * hat_charge
    out[hat_c_slot(m, m - 1)] = (
        (1.0 - hat_flux_sum) / zm - zm * mu * hc_last - zm * c_last * hmu
    )
    return out[:, 0] if squeeze else out


def _aug_jacobian(system: ChannelSystem, x, Y):
    m = system.num_species
    dim = aug_dimension(m)
    arr, squeeze = _as_columns(Y, dim)
    k = arr.shape[1]
    z = system.valences
    zm = z[m - 1]
    jac = np.zeros((k, dim, dim))
    mu = arr[MU]
    hmu = arr[hat_mu_slot(m)]

    jac[:, PHI, MU] = 1.0
    jac[:, hat_phi_slot(m), hat_mu_slot(m)] = 1.0
    for i in range(m):
        jac[:, MU, c_slot(i)] = -system.kappa * z[i]
        jac[:, hat_mu_slot(m), hat_c_slot(m, i)] = -system.kappa * z[i]
    for i in range(m - 1):
        ci, ji = c_slot(i), flux_slot(i)
        hci, hji = hat_c_slot(m, i), hat_flux_slot(m, i)
        jac[:, ci, MU] = -z[i] * arr[ci]
        jac[:, ci, ci] = -z[i] * mu
        jac[:, ci, ji] = 1.0
        jac[:, hci, MU] = -z[i] * arr[hci]
        jac[:, hci, ci] = -z[i] * hmu
        jac[:, hci, hat_mu_slot(m)] = -z[i] * arr[ci]
        jac[:, hci, hci] = -z[i] * mu
        jac[:, hci, hji] = 1.0
    c_last_slot = c_slot(m - 1)
    hc_last_slot = hat_c_slot(m, m - 1)
    jac[:, c_last_slot, MU] = -zm * arr[c_last_slot]
    jac[:, c_last_slot, c_last_slot] = -zm * mu
    jac[:, c_last_slot, aug_current_slot(m)] = 1.0 / zm
    jac[:, hc_last_slot, MU] = -zm * arr[hc_last_slot]
    jac[:, hc_last_slot, c_last_slot] = -zm * hmu
    jac[:, hc_last_slot, hat_mu_slot(m)] = -zm * arr[c_last_slot]
    jac[:, hc_last_slot, hc_last_slot] = -zm * mu
    for j in range(m - 1):
        jac[:, c_last_slot, flux_slot(j)] = -z[j] / zm
        jac[:, hc_last_slot, hat_flux_slot(m, j)] = -z[j] / zm
    return jac[0] if squeeze else jac


def build_ivaug(system: ChannelSystem, dvdi_target: float) -> BvpSpec:
    """Augmented sensitivity BVP; dvdi_target = 0 selects turning points.

    The 4M+3 boundary conditions pin phi(-1), both concentration reservoirs,
    homogeneous hat concentrations, and phi^(1) = dvdi_target; phi(1) is
    free, so the applied voltage is read off the solution.
    """
    if not np.isfinite(dvdi_target):
        raise InvalidFormulation("dV/dI target must be finite")
    m = system.num_species
    dim = aug_dimension(m)

    left_rows = (
        [_unit_row(dim, PHI)]
        + [_unit_row(dim, c_slot(i)) for i in range(m)]
        + [_unit_row(dim, hat_phi_slot(m))]
        + [_unit_row(dim, hat_c_slot(m, i)) for i in range(m)]
    )
    left_targets = [0.0] + list(system.c_left) + [0.0] + [0.0] * m
    right_rows = (
        [_unit_row(dim, c_slot(i)) for i in range(m)]
        + [_unit_row(dim, hat_phi_slot(m))]
        + [_unit_row(dim, hat_c_slot(m, i)) for i in range(m)]
    )
    right_targets = list(system.c_right) + [float(dvdi_target)] + [0.0] * m

    bc_residual, bc_jacobians, split = _linear_bc(
        dim, left_rows, left_targets, right_rows, right_targets
    )
    return BvpSpec(
        n=dim,
        rhs=lambda x, Y: _aug_rhs(system, x, Y),
        rhs_jacobian=lambda x, Y: _aug_jacobian(system, x, Y),
        bc_residual=bc_residual,
        bc_jacobians=bc_jacobians,
        interface_points=system.profile.interior_breakpoints,
        bc_split=split,
    )


def aug_extract_base(system: ChannelSystem, Y_aug):
    """Base-layout state (J_M reconstructed from I) from an augmented state."""
    m = system.num_species
    arr, squeeze = _as_columns(Y_aug, aug_dimension(m))
    z = system.valences
    out = np.zeros((system.dimension, arr.shape[1]))
    out[PHI] = arr[PHI]
    out[MU] = arr[MU]
    flux_sum = 0.0
    for i in range(m - 1):
        out[c_slot(i)] = arr[c_slot(i)]
        out[flux_slot(i)] = arr[flux_slot(i)]
        flux_sum = flux_sum + z[i] * arr[flux_slot(i)]
    out[c_slot(m - 1)] = arr[c_slot(m - 1)]
    out[flux_slot(m - 1)] = (arr[aug_current_slot(m)] - flux_sum) / z[m - 1]
    return out[:, 0] if squeeze else out
