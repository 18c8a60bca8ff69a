"""Parameter continuation: sigma ramps, hysteresis sweeps, and curve tracing.

Every family of solves reuses the previous converged solution (values and
adapted mesh) as the starting guess for the next parameter value.  Sweeps in
the applied voltage V or the boundary concentration c_B advance with adaptive
steps; when Newton keeps failing down to the step floor the sweep has run off
the end of a branch, a jump event is recorded, and the run restarts from a
cold solve at the same parameter (landing on the surviving branch).  Traces
parameterize the curve by the total current I instead, which stays regular
through the folds, so a single pass covers low, intermediate, and high
branches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bvp import BvpSolution, Mesh, SolverSettings, initial_mesh, solve_bvp
from .errors import (
    NegativeConcentration,
    NonConvergence,
    SingularJacobian,
    TooFewPoints,
)
from .model import (
    C2I,
    I2C,
    I2V,
    PHI,
    V2I,
    ChannelSystem,
    build_bvp,
    c_slot,
    linear_guess,
    screen_solution,
    total_current,
)

__all__ = [
    "CurvePoint",
    "JumpEvent",
    "Branch",
    "ShapeClass",
    "StepSettings",
    "sigma_ramp",
    "sweep_voltage",
    "sweep_concentration",
    "trace_iv_curve",
    "trace_ic_curve",
    "classify_shape",
    "crossings_at",
    "phase_diagram",
    "PhaseCell",
]

_SOLVE_FAILURES = (NonConvergence, SingularJacobian, NegativeConcentration)


@dataclass(frozen=True)
class CurvePoint:
    """One converged point of a traced or swept curve."""

    V: float
    I: float
    c_B: Optional[float]
    solution: Optional[BvpSolution]
    step_size: float
    newton_iters: int

    @property
    def step_meta(self) -> tuple:
        return (self.step_size, self.newton_iters)


@dataclass(frozen=True)
class JumpEvent:
    """Branch jump: the sweep lost its branch at ``parameter``."""

    parameter: float
    from_current: float
    to_current: float


@dataclass
class Branch:
    """Ordered points of one continuation run plus any jump events."""

    points: list
    jump_events: list
    param_name: str  # "V", "c_B", or "I"

    def parameter_values(self) -> np.ndarray:
        if self.param_name == "V":
            return np.array([p.V for p in self.points])
        if self.param_name == "c_B":
            return np.array([p.c_B for p in self.points])
        return np.array([p.I for p in self.points])

    def voltages(self) -> np.ndarray:
        return np.array([p.V for p in self.points])

    def currents(self) -> np.ndarray:
        return np.array([p.I for p in self.points])

    def concentrations(self) -> np.ndarray:
        return np.array([np.nan if p.c_B is None else p.c_B for p in self.points])


@dataclass(frozen=True)
class ShapeClass:
    """I-V curve shape from the number of dV/dI sign changes along the trace."""

    kind: str  # "monotonic" | "s_shaped" | "double_s_shaped" | "other"
    turning_count: int

    MONOTONIC = "monotonic"
    S_SHAPED = "s_shaped"
    DOUBLE_S_SHAPED = "double_s_shaped"
    OTHER = "other"


@dataclass(frozen=True)
class StepSettings:
    """Adaptive step control for sweeps and traces.

    ``initial_frac``/``min_frac``/``max_frac`` are fractions of the swept
    range width.  The step grows by ``growth`` (at most) after
    ``fast_streak`` consecutive solves that needed at most ``fast_iters``
    Newton iterations, halves on failure, and for traces is additionally
    capped so one step moves V by roughly ``dv_target`` at most.
    """

    initial_frac: float = 0.01
    min_frac: float = 1e-4
    max_frac: float = 0.05
    growth: float = 1.5
    fast_iters: int = 4
    fast_streak: int = 3
    dv_target: Optional[float] = None
    initial_abs: Optional[float] = None  # absolute overrides of the *_frac sizes
    min_abs: Optional[float] = None
    max_abs: Optional[float] = None

    def sized(self, width: float) -> tuple:
        initial = self.initial_abs if self.initial_abs is not None else self.initial_frac * width
        floor = self.min_abs if self.min_abs is not None else self.min_frac * width
        cap = self.max_abs if self.max_abs is not None else self.max_frac * width
        return initial, floor, cap


def sigma_ramp(
    system: ChannelSystem,
    formulation=None,
    settings: SolverSettings = SolverSettings(),
    *,
    initial_frac: float = 0.1,
    min_frac: float = 1e-6,
) -> BvpSolution:
    """Bootstrap a solve at the system's sigma by ramping sigma up from zero.

    Solves at sigma = 0 from a straight-line guess, then advances sigma in
    adaptive increments (halving on failure, growing after repeated fast
    convergence), seeding every stage with the previous stage's solution.
    """
    if formulation is None:
        formulation = V2I(0.0)
    target = system.profile.sigma
    base = system.with_sigma(0.0)
    sol = solve_bvp(build_bvp(base, formulation), linear_guess(base, formulation), settings)
    screen_solution(base, sol)
    if target == 0.0:
        return sol

    # The sigma = 0 solution is smooth and its mesh carries no layer
    # structure; start the first stage on its union with the default mesh.
    stage_mesh = Mesh(
        np.union1d(sol.mesh.nodes, initial_mesh(system.profile.interior_breakpoints).nodes)
    )
    step = initial_frac * target
    floor = min_frac * target
    sigma = 0.0
    streak = 0
    while sigma < target:
        attempt = min(sigma + step, target)
        stage = system.with_sigma(attempt)
        try:
            nxt = solve_bvp(build_bvp(stage, formulation), sol, settings, mesh=stage_mesh)
            screen_solution(stage, nxt)
        except _SOLVE_FAILURES:
            step *= 0.5
            streak = 0
            if step < floor:
                raise NonConvergence(
                    f"sigma ramp stalled at sigma = {sigma:g} (target {target:g})"
                )
            continue
        sigma = attempt
        sol = nxt
        stage_mesh = None
        streak = streak + 1 if nxt.newton_iters <= 4 else 0
        if streak >= 3:
            step = min(step * 1.5, 0.5 * target)
            streak = 0
    return sol


def _make_point(system, solution, param_step, record_cb=None):
    values = solution.values
    v = float(values[PHI, -1])
    current = float(total_current(values[:, -1], system.valences))
    cb = float(values[c_slot(record_cb), -1]) if record_cb is not None else None
    return CurvePoint(
        V=v,
        I=current,
        c_B=cb,
        solution=solution,
        step_size=param_step,
        newton_iters=solution.newton_iters,
    )


def _cold_solve(system, formulation, settings):
    """Fresh solve at one parameter value: straight-line guess, then a sigma
    ramp if the cold Newton run fails."""
    try:
        sol = solve_bvp(build_bvp(system, formulation), linear_guess(system, formulation), settings)
        return screen_solution(system, sol)
    except _SOLVE_FAILURES:
        return sigma_ramp(system, formulation, settings)


def _restart_past_jump(system, make_form, jump_param, p_end, settings):
    """Find the surviving branch just past a fold.

    A cold solve at the jump parameter itself sits so close to the fold that
    both the straight-line guess and the sigma ramp may fail; the surviving
    branch, however, always connects continuously to the sweep's destination
    end, so the fallback bootstraps there and marches back.
    """
    try:
        return _cold_solve(system, make_form(jump_param), settings)
    except _SOLVE_FAILURES:
        pass
    sol = _cold_solve(system, make_form(p_end), settings)
    span = abs(p_end - jump_param)
    if span == 0:
        return sol
    back = -1.0 if p_end > jump_param else 1.0
    param = p_end
    step = span / 20.0
    floor = 1e-8 * span
    while param != jump_param:
        target = param + back * step
        if back * (target - jump_param) > 0:
            target = jump_param
        try:
            nxt = solve_bvp(build_bvp(system, make_form(target)), sol, settings)
            screen_solution(system, nxt)
        except _SOLVE_FAILURES:
            step *= 0.5
            if step < floor:
                raise NonConvergence(
                    f"no branch found past the jump at parameter {jump_param:g}"
                )
            continue
        sol = nxt
        param = target
        step = min(step * 1.3, span / 10.0)
    return sol


def _sweep(
    system: ChannelSystem,
    make_form: Callable[[float], object],
    p_start: float,
    p_end: float,
    settings: SolverSettings,
    steps: StepSettings,
    param_name: str,
    record_cb=None,
) -> Branch:
    width = abs(p_end - p_start)
    if width == 0:
        raise ValueError("sweep range is empty")
    direction = 1.0 if p_end > p_start else -1.0
    step0, floor, max_step = steps.sized(width)

    sol = sigma_ramp(system, make_form(p_start), settings)
    points = [_make_point(system, sol, 0.0, record_cb)]
    jumps = []
    param = p_start
    step = step0
    streak = 0
    budget = 100_000

    while param != p_end:
        budget -= 1
        if budget < 0:
            raise NonConvergence("sweep exceeded its solve budget")
        target = param + direction * step
        if direction * (target - p_end) > 0:
            target = p_end
        form = make_form(target)
        try:
            nxt = solve_bvp(build_bvp(system, form), sol, settings)
            screen_solution(system, nxt)
        except _SOLVE_FAILURES:
            step *= 0.5
            streak = 0
            if step >= floor:
                continue
            # Step floor reached: the branch ends here.  Restart cold on the
            # surviving branch at the same parameter value; if the cold solve
            # fails that close to the fold, back off a little further.
            jump_param = param + direction * floor
            if direction * (jump_param - p_end) > 0:
                jump_param = p_end
            nxt = _restart_past_jump(system, make_form, jump_param, p_end, settings)
            jumped = _make_point(system, nxt, floor, record_cb)
            from_i, to_i = points[-1].I, jumped.I
            if abs(to_i - from_i) > 0.25 * max(abs(from_i), abs(to_i), 1e-12):
                jumps.append(
                    JumpEvent(parameter=jump_param, from_current=from_i, to_current=to_i)
                )
                step = step0
            else:
                # The restart landed back on the same branch: the floor was
                # hit by Newton sluggishness just before the fold, not by the
                # branch ending.  March on in small steps, recording nothing.
                step = 8.0 * floor
            points.append(jumped)
            sol = nxt
            param = jump_param
            streak = 0
            continue

        actual = abs(target - param)
        point = _make_point(system, nxt, actual, record_cb)
        prev = points[-1]
        if _is_discontinuity(points, point):
            # Newton hopped branches without failing; record it as a jump.
            jumps.append(
                JumpEvent(parameter=target, from_current=prev.I, to_current=point.I)
            )
            step = step0
            streak = 0
        points.append(point)
        sol = nxt
        param = target
        streak = streak + 1 if nxt.newton_iters <= steps.fast_iters else 0
        if streak >= steps.fast_streak:
            step = min(step * steps.growth, max_step)
            streak = 0
    return Branch(points=points, jump_events=jumps, param_name=param_name)


def _is_discontinuity(points, point) -> bool:
    """Detect a silent branch hop from a large break in the current."""
    if len(points) < 4:
        return False
    recent = np.abs(np.diff([p.I for p in points[-6:]]))
    typical = float(np.median(recent))
    jump = abs(point.I - points[-1].I)
    return jump > 10.0 * max(typical, 1e-12) and jump > 0.3 * max(1.0, abs(points[-1].I))


def sweep_voltage(
    system: ChannelSystem,
    v_start: float,
    v_end: float,
    settings: SolverSettings = SolverSettings(),
    steps: StepSettings = StepSettings(),
) -> Branch:
    """Sweep the applied voltage (V2I family), detecting hysteresis jumps."""
    return _sweep(system, V2I, v_start, v_end, settings, steps, "V")


def sweep_concentration(
    system: ChannelSystem,
    V: float,
    cb_start: float,
    cb_end: float,
    settings: SolverSettings = SolverSettings(),
    steps: StepSettings = StepSettings(),
    pair: tuple = (0, 1),
) -> Branch:
    """Sweep the right-boundary concentration c_B at fixed V (C2I family)."""
    def make_form(cb):
        return C2I(V=V, c_B=cb, pair=pair)

    return _sweep(
        system, make_form, cb_start, cb_end, settings, steps, "c_B", record_cb=pair[0]
    )


def _advance_trace(
    system,
    make_form,
    sol0,
    i_from,
    i_to,
    settings,
    steps,
    record_cb,
    v_stop=None,
):
    """March the current from i_from toward i_to, collecting points."""
    width = abs(i_to - i_from)
    points = []
    if width == 0:
        return points
    direction = 1.0 if i_to > i_from else -1.0
    step0, _, max_step = steps.sized(width)
    # Traces pass through folds instead of detecting them, so the failure
    # floor sits far below the sweep floor.
    floor = steps.min_abs if steps.min_abs is not None else 1e-9 * width
    sol = sol0
    current = i_from
    step = step0
    streak = 0
    last_v = float(sol0.values[PHI, -1])
    budget = 200_000
    while current != i_to:
        budget -= 1
        if budget < 0:
            raise NonConvergence("trace exceeded its solve budget")
        target = current + direction * step
        if direction * (target - i_to) > 0:
            target = i_to
        try:
            nxt = solve_bvp(build_bvp(system, make_form(target)), sol, settings)
            screen_solution(system, nxt)
        except _SOLVE_FAILURES:
            step *= 0.5
            streak = 0
            if step < floor:
                raise NonConvergence(
                    f"trace stalled at I = {current:g} (step floor {floor:g})"
                )
            continue
        point = _make_point(system, nxt, abs(target - current), record_cb)
        points.append(point)
        sol = nxt
        current = target
        dv = abs(point.V - last_v)
        last_v = point.V
        streak = streak + 1 if nxt.newton_iters <= steps.fast_iters else 0
        grow = 1.0
        if streak >= steps.fast_streak:
            grow = steps.growth
            streak = 0
        if steps.dv_target is not None and dv > 0:
            grow = min(grow, steps.dv_target / dv)
        step = float(np.clip(step * grow, floor, max_step))
        if (
            v_stop is not None
            and point.V > v_stop
            and len(points) >= 2
            and point.V > points[-2].V
        ):
            break
    return points


def _trace(
    system,
    make_form,
    i_range,
    settings,
    steps,
    seed_formulation,
    param_name,
    record_cb=None,
    v_stop=None,
) -> Branch:
    i_lo, i_hi = float(min(i_range)), float(max(i_range))
    sol0 = sigma_ramp(system, seed_formulation, settings)
    seed_point = _make_point(system, sol0, 0.0, record_cb)
    i_seed = seed_point.I
    down = (
        _advance_trace(system, make_form, sol0, i_seed, i_lo, settings, steps, record_cb)
        if i_seed > i_lo
        else []
    )
    up = (
        _advance_trace(
            system, make_form, sol0, i_seed, i_hi, settings, steps, record_cb, v_stop
        )
        if i_seed < i_hi
        else []
    )
    points = list(reversed(down)) + [seed_point] + up
    return Branch(points=points, jump_events=[], param_name=param_name)


def trace_iv_curve(
    system: ChannelSystem,
    i_range: tuple,
    settings: SolverSettings = SolverSettings(),
    steps: StepSettings = StepSettings(),
    *,
    v_seed: float = 0.0,
    v_stop: Optional[float] = None,
) -> Branch:
    """Trace the complete I-V curve by continuation on I (I2V family).

    The run starts from a sigma-ramped voltage-driven solve at ``v_seed`` and
    marches I across ``i_range``; V = phi(1) is single valued along the way,
    so folds are passed without losing the intermediate branches.  With
    ``v_stop`` set, the upward march stops once V exceeds it on a rising
    segment.
    """
    return _trace(
        system,
        lambda cur: I2V(I=cur),
        i_range,
        settings,
        steps,
        V2I(v_seed),
        "I",
        v_stop=v_stop,
    )


def trace_ic_curve(
    system: ChannelSystem,
    V: float,
    i_range: tuple,
    settings: SolverSettings = SolverSettings(),
    steps: StepSettings = StepSettings(),
    *,
    pair: tuple = (0, 1),
) -> Branch:
    """Trace the current-concentration curve at fixed V (I2C family)."""
    return _trace(
        system,
        lambda cur: I2C(V=V, I=cur, pair=pair),
        i_range,
        settings,
        steps,
        V2I(V),
        "I",
        record_cb=pair[0],
    )


def sign_change_indices(values: np.ndarray, atol: float = 0.0) -> list:
    """Indices of local extrema (increment sign flips) along ``values``.

    With ``atol > 0`` an extremum only counts once the series has moved away
    from it by more than ``atol`` in the opposite direction (a prominence
    filter), so solver-level wiggles on near-flat stretches are ignored.
    With ``atol = 0`` every raw sign flip counts; exact plateaus carry the
    previous direction either way.
    """
    values = np.asarray(values, dtype=float)
    if atol > 0.0:
        return _prominent_extrema(values, atol)
    diffs = np.diff(values)
    signs = np.sign(diffs)
    # carry the previous sign through flat segments
    for k in range(1, signs.size):
        if signs[k] == 0:
            signs[k] = signs[k - 1]
    out = []
    prev = signs[0] if signs.size else 0.0
    for k in range(1, signs.size):
        if signs[k] != 0 and prev != 0 and signs[k] != prev:
            out.append(k)
        if signs[k] != 0:
            prev = signs[k]
    return out


def _prominent_extrema(values: np.ndarray, atol: float) -> list:
    out = []
    if values.size < 3:
        return out
    direction = 0  # unknown until the series moves by more than atol
    hi_idx = lo_idx = 0
    hi = lo = values[0]
    for k in range(1, values.size):
        v = values[k]
        if direction == 0:
            if v > hi:
                hi, hi_idx = v, k
            if v < lo:
                lo, lo_idx = v, k
            if hi - v > atol:
                if hi_idx > 0:
                    out.append(hi_idx)
                direction = -1
                lo, lo_idx = v, k
            elif v - lo > atol:
                if lo_idx > 0:
                    out.append(lo_idx)
                direction = 1
                hi, hi_idx = v, k
        elif direction > 0:
            if v > hi:
                hi, hi_idx = v, k
            elif hi - v > atol:
                out.append(hi_idx)
                direction = -1
                lo, lo_idx = v, k
        else:
            if v < lo:
                lo, lo_idx = v, k
            elif v - lo > atol:
                out.append(lo_idx)
                direction = 1
                hi, hi_idx = v, k
    return out


def trace_extremum_tolerance(values: np.ndarray, rel_atol: float = 1e-4) -> float:
    """Prominence floor for extremum detection: a fraction of the V span."""
    span = float(values.max() - values.min()) if values.size else 0.0
    return max(1e-9, rel_atol * span)


def classify_shape(branch: Branch, rel_atol: float = 1e-4) -> ShapeClass:
    """Monotonic / S / double-S from dV sign changes along an I-ordered trace.

    Extrema must stand out from the curve by ``rel_atol`` times the total V
    span, which keeps solver-level wiggles on flat stretches from counting.
    """
    if len(branch.points) < 5:
        raise TooFewPoints(
            f"need at least 5 trace points to classify, got {len(branch.points)}"
        )
    field_values = (
        branch.concentrations() if branch.param_name == "c_B" else branch.voltages()
    )
    atol = trace_extremum_tolerance(field_values, rel_atol)
    changes = len(sign_change_indices(field_values, atol))
    kind = {
        0: ShapeClass.MONOTONIC,
        2: ShapeClass.S_SHAPED,
        4: ShapeClass.DOUBLE_S_SHAPED,
    }.get(changes, ShapeClass.OTHER)
    return ShapeClass(kind=kind, turning_count=changes)


def crossings_at(branch: Branch, level: float, field: str = "V") -> np.ndarray:
    """Currents at which the traced curve crosses ``field == level``.

    Linear interpolation between adjacent trace points; exact hits count
    once.  Returns the crossing currents in trace order.
    """
    if field == "V":
        vals = branch.voltages()
    elif field == "c_B":
        vals = branch.concentrations()
    else:
        raise ValueError(f"unknown crossing field {field!r}")
    currents = branch.currents()
    rel = vals - level
    out = []
    for k in range(rel.size - 1):
        a, b = rel[k], rel[k + 1]
        if a == 0.0:
            if k == 0 or rel[k - 1] != 0.0:
                out.append(currents[k])
        elif a * b < 0.0:
            frac = a / (a - b)
            out.append(currents[k] + frac * (currents[k + 1] - currents[k]))
    if rel[-1] == 0.0:
        out.append(currents[-1])
    return np.array(out)


@dataclass(frozen=True)
class PhaseCell:
    """One (sigma, kappa) cell of the phase diagram."""

    sigma: float
    kappa: float
    shape: Optional[ShapeClass]
    error: Optional[str] = None


def _phase_cell(args):
    (system, sigma, kappa, i_range, settings, steps, v_stop) = args
    cell_system = system.with_sigma(sigma).with_kappa(kappa)
    try:
        branch = trace_iv_curve(
            cell_system, i_range, settings, steps, v_stop=v_stop
        )
        shape = classify_shape(branch)
        return PhaseCell(sigma=sigma, kappa=kappa, shape=shape)
    except Exception as exc:  # per-cell failures are recorded, not fatal
        return PhaseCell(sigma=sigma, kappa=kappa, shape=None, error=str(exc))


def phase_diagram(
    system: ChannelSystem,
    sigmas,
    kappas,
    i_range: tuple,
    settings: SolverSettings = SolverSettings(),
    steps: StepSettings = StepSettings(),
    *,
    v_stop: Optional[float] = None,
    threads: int = 1,
) -> list:
    """Classify the I-V curve shape over a sigma x kappa grid.

    Cells are independent solves over immutable system descriptions; with
    ``threads > 1`` they run in a process pool.  Results are returned in
    deterministic sigma-major order regardless of completion order.
    """
    jobs = [
        (system, float(s), float(k), i_range, settings, steps, v_stop)
        for s in sigmas
        for k in kappas
    ]
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_phase_cell, jobs))
    return [_phase_cell(job) for job in jobs]
