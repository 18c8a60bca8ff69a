"""Collocation solver for nonlinear first-order two-point BVPs on [-1, 1].

The discretization is 3-stage Lobatto IIIA collocation in its Simpson form:
the unknowns are the state values at the mesh nodes, and every interval
[x_l, x_r] of width h contributes the residual

    y_r - y_l - h/6 * (f_l + 4 f_m + f_r) = 0,
    y_m = (y_l + y_r)/2 - h/8 * (f_r - f_l),

which is equivalent to requiring the C^1 piecewise-cubic Hermite interpolant
to satisfy the ODE at both endpoints and the midpoint of every interval.
Nodal accuracy is fourth order; the interior residual of the interpolant
decays like h^3 (cubic collocation space).

The nonlinear system is solved by damped Newton iteration with a
residual-monotone acceptance rule.  The linearized system is assembled as a
sparse almost-block-diagonal matrix (one n-by-2n block row per interval plus
boundary blocks) and factorized with SuperLU; no dense factorization of the
full system is ever formed.  Meshes refine where a scaled interior residual
estimate exceeds the tolerance, and abscissae where the right-hand side is
discontinuous in x ("interface points") are pinned as mesh nodes throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, solve_banded
from scipy.sparse.linalg import splu

from .errors import (
    DimensionMismatch,
    MeshBudgetExceeded,
    NonConvergence,
    OutOfDomain,
    SingularJacobian,
)

__all__ = [
    "Mesh",
    "BvpSpec",
    "SolverSettings",
    "BvpSolution",
    "uniform_mesh",
    "initial_mesh",
    "solve_bvp",
    "solve_on_mesh",
    "estimate_residual",
    "refine_mesh",
    "evaluate",
]

# Number of nodes of the default starting mesh (before interface insertion).
INITIAL_MESH_NODES = 101

# Newton must reach this fraction of abs_tol (discrete equations are solved
# well below the mesh-residual tolerance they feed).
_NEWTON_TOL_FACTOR = 1e-2

# On damping/iteration exhaustion a solve is still accepted if the scaled
# residual is already below this fraction of abs_tol.
_ACCEPT_ON_EXHAUST_FACTOR = 0.5

# Interior sample offsets for the residual estimate: the two inner abscissae
# of the 5-point Lobatto rule, away from the collocation points {0, 1/2, 1}.
_RESIDUAL_OFFSETS = (0.5 - np.sqrt(21.0) / 14.0, 0.5 + np.sqrt(21.0) / 14.0)


@dataclass(frozen=True)
class Mesh:
    """Ordered abscissae spanning [-1, 1], both endpoints included."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise DimensionMismatch("mesh needs at least the two endpoints")
        if nodes[0] != -1.0 or nodes[-1] != 1.0:
            raise OutOfDomain("mesh must start at -1 and end at +1")
        if np.any(np.diff(nodes) <= 0):
            raise DimensionMismatch("mesh nodes must be strictly increasing")
        nodes = nodes.copy()
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def num_intervals(self) -> int:
        return self.nodes.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def contains(self, points: Sequence[float]) -> bool:
        """True if every abscissa in ``points`` is a node (exact match)."""
        return bool(np.isin(np.asarray(points, dtype=float), self.nodes).all())


@dataclass(frozen=True)
class BvpSpec:
    """First-order system y' = f(x, y) on [-1, 1] with n boundary conditions.

    ``rhs`` and ``rhs_jacobian`` must be vectorized over a trailing sample
    axis: rhs(x, Y) maps x of shape (k,) and Y of shape (n, k) to (n, k),
    and rhs_jacobian returns the stacked matrices df/dy with shape (k, n, n).
    ``bc_residual(ya, yb)`` returns the n boundary residuals and
    ``bc_jacobians(ya, yb)`` their derivative matrices w.r.t. ya and yb.
    ``interface_points`` lists interior abscissae where f may jump in x;
    they are kept as mesh nodes so every interval sees smooth data.
    """

    n: int
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]
    rhs_jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bc_residual: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bc_jacobians: Callable[[np.ndarray, np.ndarray], tuple]
    interface_points: tuple = ()
    # When set to nl, promises bc_residual[:nl] depends only on Y(-1) and
    # bc_residual[nl:] only on Y(1); enables the banded linear solver.
    bc_split: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise DimensionMismatch("system dimension must be positive")
        pts = tuple(sorted(float(p) for p in self.interface_points))
        if any(not -1.0 < p < 1.0 for p in pts):
            raise OutOfDomain("interface points must lie strictly inside (-1, 1)")
        object.__setattr__(self, "interface_points", pts)
        if self.bc_split is not None and not 0 <= self.bc_split <= self.n:
            raise DimensionMismatch("bc_split must lie in [0, n]")


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and budgets for :func:`solve_bvp`."""

    abs_tol: float = 1e-6
    max_newton_iters: int = 40
    max_mesh_points: int = 10_000
    damping_min: float = 1.0 / 64.0

    def __post_init__(self):
        if self.abs_tol <= 0:
            raise ValueError("abs_tol must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")
        if not 0 < self.damping_min <= 1:
            raise ValueError("damping_min must lie in (0, 1]")


@dataclass
class BvpSolution:
    """Converged collocation solution with its C^1 piecewise-cubic interpolant.

    ``values[:, j]`` is the state at node j.  ``f_left[:, j]`` / ``f_right[:, j]``
    hold the one-sided rhs values at the ends of interval j (they differ from
    the neighbouring interval's values only across interface points).  The
    interpolant reproduces ``values`` exactly at the nodes.
    """

    mesh: Mesh
    values: np.ndarray
    f_left: np.ndarray
    f_right: np.ndarray
    residual_norm: float
    bc_residual_norm: float
    newton_iters: int
    interval_residuals: np.ndarray | None = None
    newton_history: list = field(default_factory=list, repr=False)

    def __call__(self, x):
        return self._eval(x, derivative=False)

    def derivative(self, x):
        """Interpolant derivative; one-sided at interface nodes."""
        return self._eval(x, derivative=True)

    def _eval(self, x, derivative: bool):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        scalar = np.isscalar(x) or np.asarray(x).ndim == 0
        nodes = self.mesh.nodes
        if x_arr.size and (x_arr.min() < -1.0 or x_arr.max() > 1.0):
            raise OutOfDomain("evaluation abscissa outside [-1, 1]")
        j = np.clip(np.searchsorted(nodes, x_arr, side="right") - 1, 0, nodes.size - 2)
        h = nodes[j + 1] - nodes[j]
        t = (x_arr - nodes[j]) / h
        yl = self.values[:, j]
        yr = self.values[:, j + 1]
        fl = self.f_left[:, j]
        fr = self.f_right[:, j]
        if derivative:
            out = (
                (6.0 * t * t - 6.0 * t) * (yl - yr) / h
                + (1.0 - 4.0 * t + 3.0 * t * t) * fl
                + (3.0 * t * t - 2.0 * t) * fr
            )
        else:
            t2 = t * t
            t3 = t2 * t
            out = (
                (1.0 - 3.0 * t2 + 2.0 * t3) * yl
                + (h * (t - 2.0 * t2 + t3)) * fl
                + (3.0 * t2 - 2.0 * t3) * yr
                + (h * (t3 - t2)) * fr
            )
        return out[:, 0] if scalar else out


def uniform_mesh(num_intervals: int) -> Mesh:
    return Mesh(np.linspace(-1.0, 1.0, num_intervals + 1))


def initial_mesh(interface_points=(), num_nodes: int = INITIAL_MESH_NODES) -> Mesh:
    """Uniform mesh with the interface abscissae inserted as exact nodes."""
    base = np.linspace(-1.0, 1.0, num_nodes)
    pts = np.asarray(sorted(interface_points), dtype=float)
    if pts.size:
        # Drop uniform nodes that nearly coincide with an interface, then
        # insert the exact interface values.
        keep = np.all(np.abs(base[:, None] - pts[None, :]) > 1e-9, axis=1)
        keep[0] = keep[-1] = True
        base = np.sort(np.concatenate([base[keep], pts]))
    return Mesh(base)


def evaluate(solution: BvpSolution, x):
    """Interpolant value at ``x``; exact at mesh nodes."""
    return solution(x)


def _merge_guess_mesh(nodes: np.ndarray, interface_points) -> np.ndarray:
    pts = np.asarray(interface_points, dtype=float)
    if pts.size == 0:
        return nodes
    missing = pts[~np.isin(pts, nodes)]
    if missing.size == 0:
        return nodes
    return np.sort(np.concatenate([nodes, missing]))


def _interval_eval(spec: BvpSpec, nodes: np.ndarray, y: np.ndarray):
    """Residuals of the Simpson-form collocation equations on every interval."""
    h = np.diff(nodes)
    xl = nodes[:-1]
    # Right endpoints are nudged one ulp into the interval so that an rhs
    # which jumps at an interface node is sampled with its in-interval value.
    xr = np.nextafter(nodes[1:], -np.inf)
    xm = 0.5 * (nodes[:-1] + nodes[1:])
    yl = y[:, :-1]
    yr = y[:, 1:]
    fl = spec.rhs(xl, yl)
    fr = spec.rhs(xr, yr)
    ym = 0.5 * (yl + yr) - (h / 8.0) * (fr - fl)
    fm = spec.rhs(xm, ym)
    phi = yr - yl - (h / 6.0) * (fl + 4.0 * fm + fr)
    g = spec.bc_residual(y[:, 0].copy(), y[:, -1].copy())
    g = np.asarray(g, dtype=float)
    if g.shape != (spec.n,):
        raise DimensionMismatch(
            f"bc_residual returned shape {g.shape}, expected ({spec.n},)"
        )
    return h, xl, xr, xm, yl, yr, fl, fr, ym, fm, phi, g


def _scaled_norm(phi: np.ndarray, g: np.ndarray, h: np.ndarray, fm: np.ndarray) -> float:
    """Max of boundary residuals and interval residuals scaled by h*(1+|f|)."""
    interior = np.abs(phi) / (h * (1.0 + np.abs(fm)))
    n_int = float(interior.max()) if interior.size else 0.0
    n_bc = float(np.abs(g).max()) if g.size else 0.0
    return max(n_int, n_bc)


class _SparseAssembler:
    """Sparse almost-block-diagonal Newton system for general (coupled) BCs."""

    def __init__(self, n: int, num_intervals: int, bc_split=None):
        self.n = n
        self.N = num_intervals
        size = n * (num_intervals + 1)
        self.shape = (size, size)
        rng = np.arange(n)
        rows_bc = np.repeat(rng, n)
        cols_bc = np.tile(rng, n)
        blk_rows = (n * (np.arange(num_intervals) + 1))[:, None, None] + rng[None, :, None]
        blk_rows = np.broadcast_to(blk_rows, (num_intervals, n, n))
        cols_l = (n * np.arange(num_intervals))[:, None, None] + rng[None, None, :]
        cols_l = np.broadcast_to(cols_l, (num_intervals, n, n))
        self.rows = np.concatenate(
            [rows_bc, rows_bc, blk_rows.ravel(), blk_rows.ravel()]
        )
        self.cols = np.concatenate(
            [cols_bc, cols_bc + n * num_intervals, cols_l.ravel(), (cols_l + n).ravel()]
        )

    def solve(self, ba, bb, left_blocks, right_blocks, g, phi):
        vals = np.concatenate(
            [
                np.asarray(ba, dtype=float).ravel(),
                np.asarray(bb, dtype=float).ravel(),
                left_blocks.ravel(),
                right_blocks.ravel(),
            ]
        )
        matrix = sp.coo_matrix(
            (vals, (self.rows, self.cols)), shape=self.shape
        ).tocsc()
        rhs_vec = -np.concatenate([g, phi.T.ravel()])
        try:
            lu = splu(matrix)
        except RuntimeError as exc:
            raise SingularJacobian(str(exc)) from exc
        delta = lu.solve(rhs_vec)
        return delta.reshape(self.N + 1, self.n).T


class _BandedAssembler:
    """Banded Newton system for separated BCs (bc_split set).

    Equations ordered [left BCs, interval blocks, right BCs] against
    node-major unknowns give bandwidth 3n-1 independent of the split, so one
    LAPACK banded solve replaces the sparse factorization.
    """

    def __init__(self, n: int, num_intervals: int, bc_split: int):
        self.n = n
        self.N = num_intervals
        self.nl = bc_split
        self.size = n * (num_intervals + 1)
        self.lower = bc_split + n - 1
        self.upper = 2 * n - 1 - bc_split
        rng = np.arange(n)
        nl = bc_split
        rows_left = np.repeat(np.arange(nl), n)
        cols_left = np.tile(rng, nl)
        blk_rows = (nl + n * np.arange(num_intervals))[:, None, None] + rng[None, :, None]
        blk_rows = np.broadcast_to(blk_rows, (num_intervals, n, n)).ravel()
        cols_l = (n * np.arange(num_intervals))[:, None, None] + rng[None, None, :]
        cols_l = np.broadcast_to(cols_l, (num_intervals, n, n)).ravel()
        nr = n - nl
        rows_right = nl + n * num_intervals + np.repeat(np.arange(nr), n)
        cols_right = n * num_intervals + np.tile(rng, nr)
        rows = np.concatenate([rows_left, blk_rows, blk_rows, rows_right])
        cols = np.concatenate([cols_left, cols_l, cols_l + n, cols_right])
        self.band_rows = self.upper + rows - cols
        self.band_cols = cols

    def solve(self, ba, bb, left_blocks, right_blocks, g, phi):
        nl = self.nl
        vals = np.concatenate(
            [
                np.asarray(ba, dtype=float)[:nl].ravel(),
                left_blocks.ravel(),
                right_blocks.ravel(),
                np.asarray(bb, dtype=float)[nl:].ravel(),
            ]
        )
        ab = np.zeros((self.lower + self.upper + 1, self.size))
        ab[self.band_rows, self.band_cols] = vals
        rhs_vec = -np.concatenate([g[:nl], phi.T.ravel(), g[nl:]])
        try:
            delta = solve_banded(
                (self.lower, self.upper),
                ab,
                rhs_vec,
                overwrite_ab=True,
                overwrite_b=True,
                check_finite=False,
            )
        except LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        return delta.reshape(self.N + 1, self.n).T


def _newton_blocks(spec, h, xl, xr, xm, yl, yr, fl, fr, ym, fm):
    """Jacobian blocks d(phi)/d(y_left), d(phi)/d(y_right) per interval."""
    n = spec.n
    jl = np.asarray(spec.rhs_jacobian(xl, yl), dtype=float)
    jr = np.asarray(spec.rhs_jacobian(xr, yr), dtype=float)
    jm = np.asarray(spec.rhs_jacobian(xm, ym), dtype=float)
    eye = np.eye(n)
    hc = h[:, None, None]
    jm_jl = jm @ jl
    jm_jr = jm @ jr
    left = -eye - (hc / 6.0) * jl - (hc / 3.0) * jm - (hc * hc / 12.0) * jm_jl
    right = eye - (hc / 6.0) * jr - (hc / 3.0) * jm + (hc * hc / 12.0) * jm_jr
    return left, right


def solve_on_mesh(
    spec: BvpSpec,
    mesh: Mesh,
    y0: np.ndarray,
    settings: SolverSettings = SolverSettings(),
) -> BvpSolution:
    """Damped Newton solve of the collocation equations on a fixed mesh.

    Unlike :func:`solve_bvp` this performs no mesh adaptation, so the
    returned ``residual_norm`` may exceed ``settings.abs_tol``.
    """
    n = spec.n
    nodes = mesh.nodes
    num_int = mesh.num_intervals
    y = np.array(y0, dtype=float)
    if y.shape != (n, nodes.size):
        raise DimensionMismatch(
            f"initial values have shape {y.shape}, expected ({n}, {nodes.size})"
        )
    if not np.all(np.isfinite(y)):
        raise NonConvergence("initial guess contains non-finite values")

    newton_tol = settings.abs_tol * _NEWTON_TOL_FACTOR
    accept_tol = settings.abs_tol * _ACCEPT_ON_EXHAUST_FACTOR
    if spec.bc_split is not None:
        assembler = _BandedAssembler(n, num_int, spec.bc_split)
    else:
        assembler = _SparseAssembler(n, num_int)

    state = _interval_eval(spec, nodes, y)
    h, xl, xr, xm, yl, yr, fl, fr, ym, fm, phi, g = state
    norm = _scaled_norm(phi, g, h, fm)
    history = [(None, norm)]
    iters = 0

    while norm > newton_tol:
        if iters >= settings.max_newton_iters:
            if norm <= accept_tol:
                break
            raise NonConvergence(
                f"no convergence in {settings.max_newton_iters} Newton iterations "
                f"(scaled residual {norm:.3e})"
            )
        left, right = _newton_blocks(spec, h, xl, xr, xm, yl, yr, fl, fr, ym, fm)
        ba, bb = spec.bc_jacobians(y[:, 0].copy(), y[:, -1].copy())
        dy = assembler.solve(ba, bb, left, right, g, phi)
        if not np.all(np.isfinite(dy)):
            raise SingularJacobian("linear solve produced non-finite correction")

        lam = 1.0
        accepted = False
        while lam >= settings.damping_min:
            trial = y + lam * dy
            trial_state = _interval_eval(spec, nodes, trial)
            t_phi, t_g, t_h, t_fm = trial_state[10], trial_state[11], trial_state[0], trial_state[9]
            if np.all(np.isfinite(t_phi)) and np.all(np.isfinite(t_g)):
                trial_norm = _scaled_norm(t_phi, t_g, t_h, t_fm)
                if trial_norm <= (1.0 - lam / 4.0) * norm:
                    y = trial
                    state = trial_state
                    h, xl, xr, xm, yl, yr, fl, fr, ym, fm, phi, g = state
                    norm = trial_norm
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            if norm <= accept_tol:
                break
            raise NonConvergence(
                f"damping floor {settings.damping_min:g} reached "
                f"(scaled residual {norm:.3e})"
            )
        iters += 1
        history.append((lam, norm))

    sol = BvpSolution(
        mesh=mesh,
        values=y,
        f_left=fl,
        f_right=fr,
        residual_norm=np.nan,
        bc_residual_norm=float(np.abs(g).max()) if g.size else 0.0,
        newton_iters=iters,
        newton_history=history,
    )
    res = estimate_residual(sol, spec)
    sol.interval_residuals = res
    sol.residual_norm = max(float(res.max()), sol.bc_residual_norm)
    return sol


def estimate_residual(solution: BvpSolution, spec: BvpSpec) -> np.ndarray:
    """Scaled ODE residual of the interpolant, one value per mesh interval.

    Samples |S'(x) - f(x, S(x))| / (1 + |f|) at two interior points per
    interval (collocation makes the residual vanish at endpoints/midpoint).
    """
    nodes = solution.mesh.nodes
    h = np.diff(nodes)
    yl = solution.values[:, :-1]
    yr = solution.values[:, 1:]
    fl = solution.f_left
    fr = solution.f_right
    res = np.zeros(h.size)
    for t in _RESIDUAL_OFFSETS:
        t2 = t * t
        t3 = t2 * t
        s_val = (
            (1.0 - 3.0 * t2 + 2.0 * t3) * yl
            + (h * (t - 2.0 * t2 + t3)) * fl
            + (3.0 * t2 - 2.0 * t3) * yr
            + (h * (t3 - t2)) * fr
        )
        s_der = (
            (6.0 * t2 - 6.0 * t) * (yl - yr) / h
            + (1.0 - 4.0 * t + 3.0 * t2) * fl
            + (3.0 * t2 - 2.0 * t) * fr
        )
        xs = nodes[:-1] + t * h
        f = spec.rhs(xs, s_val)
        scaled = np.abs(s_der - f) / (1.0 + np.abs(f))
        np.maximum(res, scaled.max(axis=0), out=res)
    return res


def refine_mesh(
    mesh: Mesh,
    residuals: np.ndarray,
    tol: float,
    *,
    interfaces: Sequence[float] = (),
    max_points: int = 10_000,
) -> Mesh:
    """Subdivide intervals whose residual exceeds ``tol``.

    Intervals with residual above 100*tol are split in three, above tol in
    two, the rest are kept; interface nodes and endpoints always survive.
    A mesh whose residuals are all within tolerance is returned unchanged.
    (Coarsening of over-resolved regions happens separately, after a
    converged solve, where the merged mesh can be validated.)
    """
    nodes = mesh.nodes
    res = np.asarray(residuals, dtype=float)
    if res.shape != (mesh.num_intervals,):
        raise DimensionMismatch("one residual per mesh interval required")
    if res.size == 0 or res.max() <= tol:
        return mesh
    out = [nodes[0]]
    for i in range(res.size):
        x_l, x_r = nodes[i], nodes[i + 1]
        r = res[i]
        if r > 100.0 * tol:
            out.extend([x_l + (x_r - x_l) / 3.0, x_l + 2.0 * (x_r - x_l) / 3.0, x_r])
        elif r > tol:
            out.extend([0.5 * (x_l + x_r), x_r])
        else:
            out.append(x_r)
    if len(out) > max_points:
        raise MeshBudgetExceeded(
            f"refinement needs {len(out)} nodes, budget is {max_points}"
        )
    return Mesh(np.asarray(out))


def _guess_values(spec: BvpSpec, nodes: np.ndarray, guess) -> np.ndarray:
    if isinstance(guess, BvpSolution):
        return guess(nodes)
    if isinstance(guess, tuple) and len(guess) == 2:
        g_nodes, g_values = guess
        g_nodes = g_nodes.nodes if isinstance(g_nodes, Mesh) else np.asarray(g_nodes, float)
        g_values = np.asarray(g_values, dtype=float)
        out = np.empty((spec.n, nodes.size))
        for comp in range(spec.n):
            out[comp] = np.interp(nodes, g_nodes, g_values[comp])
        return out
    if callable(guess):
        vals = np.asarray(guess(nodes), dtype=float)
        if vals.shape != (spec.n, nodes.size):
            raise DimensionMismatch(
                f"guess callable returned shape {vals.shape}, "
                f"expected ({spec.n}, {nodes.size})"
            )
        return vals
    raise TypeError("guess must be a BvpSolution, (nodes, values) pair, or callable")


def solve_bvp(
    spec: BvpSpec,
    guess,
    settings: SolverSettings = SolverSettings(),
    *,
    mesh: Mesh | None = None,
) -> BvpSolution:
    """Solve the BVP with adaptive mesh refinement.

    ``guess`` supplies starting values: a previous :class:`BvpSolution`
    (typical during continuation; its mesh is reused), a ``(nodes, values)``
    pair, or a callable mapping an abscissa array of shape (k,) to values of
    shape (n, k).  The returned solution satisfies the scaled interior and
    boundary residual bound ``residual_norm <= settings.abs_tol``.

    Raises NonConvergence, SingularJacobian, or MeshBudgetExceeded.
    """
    if mesh is not None:
        nodes = _merge_guess_mesh(mesh.nodes, spec.interface_points)
    elif isinstance(guess, BvpSolution):
        nodes = _merge_guess_mesh(guess.mesh.nodes, spec.interface_points)
    elif isinstance(guess, tuple) and len(guess) == 2:
        g_nodes = guess[0].nodes if isinstance(guess[0], Mesh) else np.asarray(guess[0], float)
        nodes = _merge_guess_mesh(g_nodes, spec.interface_points)
    else:
        nodes = initial_mesh(spec.interface_points).nodes
    if nodes.size > settings.max_mesh_points:
        raise MeshBudgetExceeded(
            f"initial mesh has {nodes.size} nodes, budget is {settings.max_mesh_points}"
        )

    current = Mesh(nodes)
    values = _guess_values(spec, current.nodes, guess)
    escalations = 0
    coarsen_rounds = 0
    iters_spent = 0
    last_good = None
    for _ in range(60):
        try:
            sol = solve_on_mesh(spec, current, values, settings)
        except NonConvergence:
            if last_good is not None:
                return last_good  # a coarsening gamble failed; keep the valid solve
            # A coarse mesh can leave Newton stranded before any residual
            # information exists; refine globally a few times before giving
            # up.  Well-adapted (dense) meshes fail for real reasons, e.g.
            # continuation past a fold, and propagate immediately.
            if escalations >= 3 or current.nodes.size > 301:
                raise
            escalations += 1
            halved = np.sort(
                np.concatenate(
                    [current.nodes, 0.5 * (current.nodes[:-1] + current.nodes[1:])]
                )
            )
            if halved.size > settings.max_mesh_points:
                raise
            current = Mesh(halved)
            values = _guess_values(spec, current.nodes, guess)
            continue
        sol.newton_iters += iters_spent
        iters_spent = sol.newton_iters
        if sol.residual_norm <= settings.abs_tol:
            slim = None
            if coarsen_rounds < 2:
                slim = _coarsen_trial(
                    sol.mesh,
                    sol.interval_residuals,
                    settings.abs_tol,
                    spec.interface_points,
                )
            if slim is None:
                return sol
            # Re-solve on the merged mesh; intervals that were merged too
            # optimistically are re-split by this same loop.
            coarsen_rounds += 1
            last_good = sol
            current = slim
            values = sol(current.nodes)
            continue
        current = refine_mesh(
            current,
            sol.interval_residuals,
            settings.abs_tol,
            interfaces=spec.interface_points,
            max_points=settings.max_mesh_points,
        )
        values = sol(current.nodes)
    raise NonConvergence("mesh refinement failed to reach the residual tolerance")


_COARSEN_NODE_FLOOR = INITIAL_MESH_NODES


def _coarsen_trial(mesh: Mesh, residuals, tol, interfaces):
    """Merge interval pairs whose residuals sit comfortably below tolerance.

    The cubic interior residual grows roughly 8x on merging, so candidates
    below 0.1*tol stay within tolerance; the follow-up re-solve in the
    adaptive loop validates the merge and re-splits any stragglers.
    """
    nodes = mesh.nodes
    if nodes.size <= _COARSEN_NODE_FLOOR:
        return None
    protected = set(float(p) for p in interfaces)
    out = [nodes[0]]
    i = 0
    num = residuals.size
    merged = 0
    while i < num:
        if (
            i + 1 < num
            and residuals[i] < 0.1 * tol
            and residuals[i + 1] < 0.1 * tol
            and float(nodes[i + 1]) not in protected
            and nodes[i + 2] - nodes[i] < 0.25
            and num + 1 - merged > _COARSEN_NODE_FLOOR
        ):
            out.append(nodes[i + 2])
            merged += 1
            i += 2
        else:
            out.append(nodes[i + 1])
            i += 1
    if merged < 0.1 * num:
        return None
    return Mesh(np.asarray(out))
