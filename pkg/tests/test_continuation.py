"""Continuation machinery: ramps, sweeps, traces, classification, phases."""

import numpy as np
import pytest

from sspnp import (
    I2V,
    V2I,
    NonConvergence,
    SolverSettings,
    TooFewPoints,
    build_bvp,
    solve_bvp,
    total_current,
)
from sspnp.continuation import (
    Branch,
    CurvePoint,
    StepSettings,
    classify_shape,
    crossings_at,
    phase_diagram,
    sigma_ramp,
    sign_change_indices,
    sweep_voltage,
    trace_iv_curve,
)
from sspnp.model import PHI, linear_guess

from conftest import make_five_ion, make_two_ion


def synthetic_branch(v_values, i_values=None, param="I"):
    if i_values is None:
        i_values = np.arange(len(v_values), dtype=float)
    points = [
        CurvePoint(V=float(v), I=float(i), c_B=None, solution=None,
                   step_size=0.1, newton_iters=2)
        for v, i in zip(v_values, i_values)
    ]
    return Branch(points=points, jump_events=[], param_name=param)


class TestSigmaRamp:
    def test_zero_target_is_single_cold_solve(self, two_ion_flat):
        ramped = sigma_ramp(two_ion_flat, V2I(16.0))
        direct = solve_bvp(
            build_bvp(two_ion_flat, V2I(16.0)),
            linear_guess(two_ion_flat, V2I(16.0)),
        )
        np.testing.assert_array_equal(ramped.values, direct.values)

    def test_deterministic(self, two_ion):
        a = sigma_ramp(two_ion, V2I(16.0))
        b = sigma_ramp(two_ion, V2I(16.0))
        np.testing.assert_array_equal(a.values, b.values)

    def test_five_ion_one_shot_fails_then_ramp_succeeds(self, five_ion):
        # Jumping sigma 0 -> 1 in one step is hopeless for the five-ion
        # plateaus; the adaptive ramp covers the same ground.
        base = five_ion.with_sigma(0.0)
        sol0 = solve_bvp(build_bvp(base, V2I(0.0)), linear_guess(base, V2I(0.0)))
        with pytest.raises(NonConvergence):
            solve_bvp(build_bvp(five_ion, V2I(0.0)), sol0)
        ramped = sigma_ramp(five_ion, V2I(0.0))
        assert ramped.residual_norm <= 1e-6


class TestSweep:
    @pytest.fixture(scope="class")
    def flat_up(self):
        system = make_two_ion(sigma=0.0)
        return system, sweep_voltage(system, 0.0, 5.0)

    def test_no_jumps_on_monotone_system(self, flat_up):
        _, branch = flat_up
        assert branch.jump_events == []

    def test_points_monotone_in_parameter(self, flat_up):
        _, branch = flat_up
        params = branch.parameter_values()
        assert np.all(np.diff(params) > 0)

    def test_curve_point_invariants(self, flat_up):
        system, branch = flat_up
        for point in branch.points:
            values = point.solution.values
            assert abs(point.V - values[PHI, -1]) <= 1e-9
            assert abs(point.I - total_current(values[:, -1], system.valences)) <= 1e-9

    def test_step_growth_bounded(self, flat_up):
        _, branch = flat_up
        steps = [p.step_size for p in branch.points[1:]]
        for prev, cur in zip(steps, steps[1:]):
            if prev > 0:
                assert cur <= 1.5 * prev + 1e-12


class TestTrace:
    @pytest.fixture(scope="class")
    def flat_trace(self):
        system = make_two_ion(sigma=0.0)
        return system, trace_iv_curve(system, (0.2, 6.0), v_seed=0.0)

    def test_points_ordered_in_current(self, flat_trace):
        _, branch = flat_trace
        assert np.all(np.diff(branch.currents()) > 0)

    def test_monotone_classification(self, flat_trace):
        _, branch = flat_trace
        shape = classify_shape(branch)
        assert shape.kind == "monotonic"
        assert shape.turning_count == 0

    def test_single_crossing_per_level(self, flat_trace):
        _, branch = flat_trace
        voltages = branch.voltages()
        for level in np.linspace(voltages.min() + 0.1, voltages.max() - 0.1, 7):
            assert crossings_at(branch, level).size == 1

    def test_dv_target_bounds_voltage_increments(self):
        system = make_two_ion(sigma=0.0)
        branch = trace_iv_curve(
            system, (0.2, 6.0), steps=StepSettings(dv_target=0.25), v_seed=0.0
        )
        dv = np.abs(np.diff(branch.voltages()))
        # reactive cap: occasional overshoot is allowed, gross ones are not
        assert np.quantile(dv, 0.9) <= 0.5


class TestClassifyShape:
    def test_monotonic(self):
        assert classify_shape(synthetic_branch([0, 1, 2, 3, 4, 5])).kind == "monotonic"

    def test_s_shape(self):
        shape = classify_shape(synthetic_branch([0, 2, 4, 3, 2, 4, 6]))
        assert shape.kind == "s_shaped"
        assert shape.turning_count == 2

    def test_double_s_shape(self):
        vals = [0, 2, 4, 3, 2, 4, 6, 5, 4, 6, 8]
        shape = classify_shape(synthetic_branch(vals))
        assert shape.kind == "double_s_shaped"
        assert shape.turning_count == 4

    def test_other(self):
        vals = [0, 2, 1, 2, 1, 2, 1, 2, 1]
        shape = classify_shape(synthetic_branch(vals))
        assert shape.kind == "other"
        assert shape.turning_count == 7

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            classify_shape(synthetic_branch([0, 1, 2]))

    def test_flat_segments_do_not_flip_sign(self):
        shape = classify_shape(synthetic_branch([0, 1, 1, 1, 2, 3]))
        assert shape.kind == "monotonic"


class TestCrossings:
    def test_interpolated_crossings(self):
        branch = synthetic_branch([0, 10, 5, 15], i_values=[0, 1, 2, 3])
        crossings = crossings_at(branch, 7.5)
        np.testing.assert_allclose(crossings, [0.75, 1.5, 2.25])

    def test_exact_hit_counts_once(self):
        branch = synthetic_branch([0, 7.5, 15, 20, 25], i_values=[0, 1, 2, 3, 4])
        assert crossings_at(branch, 7.5).size == 1

    def test_sign_change_indices_skip_plateaus(self):
        assert sign_change_indices(np.array([0.0, 1.0, 1.0, 2.0, 1.0])) == [3]


class TestPhaseDiagram:
    def test_single_cell_grid(self):
        system = make_two_ion()
        cells = phase_diagram(
            system.with_sigma(0.0), [0.0], [10.0], (0.2, 4.0),
        )
        assert len(cells) == 1
        assert cells[0].shape is not None
        assert cells[0].shape.kind == "monotonic"
        assert cells[0].error is None

    def test_cell_failure_recorded_not_fatal(self):
        system = make_two_ion()
        cells = phase_diagram(
            system,
            [1.0],
            [80.0],
            (0.5, 10.0),
            SolverSettings(max_mesh_points=12),
        )
        assert len(cells) == 1
        assert cells[0].shape is None
        assert cells[0].error
