"""Physics layer: state layout, rhs/Jacobian, formulations, augmented system."""

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from sspnp import (
    C2I,
    I2C,
    I2V,
    V2I,
    ChannelSystem,
    FixedChargeProfile,
    InvalidFormulation,
    NegativeConcentration,
    NeutralityViolated,
    NonPositiveScale,
    OutOfDomain,
    PhysicalScales,
    Species,
    SolverSettings,
    build_bvp,
    build_ivaug,
    check_neutrality,
    fixed_charge_at,
    nondimensionalize,
    ode_jacobian,
    ode_rhs,
    screen_solution,
    solve_bvp,
    total_current,
)
from sspnp.model import (
    MU,
    PHI,
    aug_current_slot,
    aug_dimension,
    aug_extract_base,
    c_slot,
    flux_slot,
    hat_c_slot,
    hat_flux_slot,
    hat_mu_slot,
    hat_phi_slot,
    linear_guess,
)

from conftest import make_two_ion, make_five_ion


def reference_rhs(system, x, Y):
    """Independent reconstruction of the first-order system, species by
    species, straight from the second-order equations."""
    out = np.zeros_like(Y)
    out[PHI] = Y[MU]
    charge = fixed_charge_at(system.profile, x)
    for i, spec in enumerate(system.species):
        charge += spec.z * Y[c_slot(i)]
    out[MU] = -system.kappa * charge
    for i, spec in enumerate(system.species):
        # J_i = c_i' + z_i c_i phi'  =>  c_i' = J_i - z_i c_i mu,  J_i' = 0
        out[c_slot(i)] = Y[flux_slot(i)] - spec.z * Y[c_slot(i)] * Y[MU]
        out[flux_slot(i)] = 0.0
    return out


def random_state(rng, m):
    Y = np.zeros(2 * m + 2)
    Y[PHI] = rng.uniform(-20, 20)
    Y[MU] = rng.uniform(-30, 30)
    for i in range(m):
        Y[c_slot(i)] = rng.uniform(0.05, 5.0)
        Y[flux_slot(i)] = rng.uniform(-40, 40)
    return Y


class TestRhs:
    def test_neutral_uniform_rest_state(self):
        system = ChannelSystem(
            60.0,
            (Species(1, 1.0, 1.0), Species(-1, 1.0, 1.0)),
            FixedChargeProfile((2.0,), (0.0,), 0.0),
        )
        Y = np.array([0.0, 0.0, 1.0, 0.0, 1.0, 0.0])
        np.testing.assert_array_equal(ode_rhs(system, 0.3, Y), np.zeros(6))

    def test_hand_evaluated_poisson_row(self):
        # z = (1, -1), kappa = 60, c = (1, 0.5), rho = 1:
        # mu' = -60 * (1 - 0.5 + 1) = -90
        system = make_two_ion(kappa=60.0)
        Y = np.array([0.0, 0.0, 1.0, 0.0, 0.5, 0.0])
        assert ode_rhs(system, -0.75, Y)[MU] == pytest.approx(-90.0)

    def test_matches_independent_rederivation(self, rng):
        system = make_five_ion()
        for _ in range(25):
            Y = random_state(rng, 5)
            x = rng.uniform(-1, 1)
            np.testing.assert_allclose(
                ode_rhs(system, x, Y), reference_rhs(system, x, Y), rtol=1e-13
            )

    def test_vectorized_matches_pointwise(self, rng, two_ion):
        xs = rng.uniform(-1, 1, 7)
        Ys = np.stack([random_state(rng, 2) for _ in range(7)], axis=1)
        batch = ode_rhs(two_ion, xs, Ys)
        for k in range(7):
            np.testing.assert_array_equal(batch[:, k], ode_rhs(two_ion, xs[k], Ys[:, k]))


class TestJacobian:
    def test_constant_entries(self, two_ion):
        Y = np.array([0.0, 0.0, 1.0, 0.0, 0.5, 0.0])
        jac = ode_jacobian(two_ion, 0.1, Y)
        assert jac[PHI, MU] == 1.0
        assert jac[MU, c_slot(0)] == -two_ion.kappa * 1
        assert jac[MU, c_slot(1)] == +two_ion.kappa * 1
        assert jac[c_slot(0), flux_slot(0)] == 1.0
        np.testing.assert_array_equal(jac[flux_slot(0)], np.zeros(6))

    def test_state_dependent_entries_vanish_at_zero_state(self, two_ion):
        Y = np.zeros(6)
        jac = ode_jacobian(two_ion, 0.0, Y)
        nonzero = {(PHI, MU), (MU, c_slot(0)), (MU, c_slot(1)),
                   (c_slot(0), flux_slot(0)), (c_slot(1), flux_slot(1))}
        for r in range(6):
            for c in range(6):
                if (r, c) in nonzero:
                    assert jac[r, c] != 0.0
                else:
                    assert jac[r, c] == 0.0

    # The rhs is bilinear in the state, so central differences carry no
    # truncation error; the five-ion case uses a larger step to keep the
    # rounding of its ~1e6-sized entries below the comparison tolerance.
    @pytest.mark.parametrize(
        "make_system,m,step_scale",
        [(make_two_ion, 2, 1e-7), (make_five_ion, 5, 1e-4)],
    )
    def test_agrees_with_finite_differences(self, rng, make_system, m, step_scale):
        system = make_system()
        worst = 0.0
        for _ in range(100):
            Y = random_state(rng, m)
            x = rng.uniform(-1, 1)
            analytic = ode_jacobian(system, x, Y)
            fd = np.zeros_like(analytic)
            for j in range(Y.size):
                step = step_scale * max(1.0, abs(Y[j]))
                up, dn = Y.copy(), Y.copy()
                up[j] += step
                dn[j] -= step
                fd[:, j] = (ode_rhs(system, x, up) - ode_rhs(system, x, dn)) / (2 * step)
            worst = max(worst, (np.abs(analytic - fd) / (1.0 + np.abs(analytic))).max())
        assert worst <= 1e-6


class TestTotalCurrent:
    def test_zero_fluxes(self):
        assert total_current(np.zeros(6), [1, -1]) == 0.0

    def test_direct_formula(self):
        Y = np.zeros(6)
        Y[flux_slot(0)] = 2.0
        Y[flux_slot(1)] = -3.0
        assert total_current(Y, [1, -1]) == pytest.approx(5.0)


class TestNeutrality:
    def test_two_ion_benchmark_ok(self):
        check_neutrality((Species(1, 1.0, 0.5), Species(-1, 1.0, 0.5)))

    def test_five_ion_benchmark_ok(self):
        species = make_five_ion().species
        left, right = check_neutrality(species)
        assert left == 0.0 and right == 0.0

    def test_violation_reported_with_side_and_magnitude(self):
        with pytest.raises(NeutralityViolated) as err:
            check_neutrality((Species(1, 1.0, 0.5), Species(-1, 2.0, 0.5)))
        assert err.value.side == "left"
        assert err.value.imbalance == pytest.approx(-1.0)

    def test_system_constructor_enforces_neutrality(self):
        with pytest.raises(NeutralityViolated):
            ChannelSystem(
                10.0,
                (Species(1, 1.0, 0.5), Species(-1, 1.0, 0.75)),
                FixedChargeProfile((2.0,), (1.0,)),
            )


class TestFixedCharge:
    def test_benchmark_profile_values(self, two_ion):
        assert fixed_charge_at(two_ion.profile, -0.75) == 1.0
        assert fixed_charge_at(two_ion.profile, 0.9) == -60.0

    def test_right_continuous_at_breaks(self, two_ion):
        assert fixed_charge_at(two_ion.profile, -0.5) == -10.0
        assert fixed_charge_at(two_ion.profile, 0.0) == 20.0
        assert fixed_charge_at(two_ion.profile, 0.5) == -60.0

    def test_zero_scale(self, two_ion):
        profile = two_ion.profile.with_sigma(0.0)
        xs = np.linspace(-1, 1, 17)
        np.testing.assert_array_equal(fixed_charge_at(profile, xs), np.zeros(17))

    def test_out_of_domain(self, two_ion):
        with pytest.raises(OutOfDomain):
            fixed_charge_at(two_ion.profile, 1.5)

    def test_segment_sum_validated(self):
        with pytest.raises(InvalidFormulation):
            FixedChargeProfile((0.5, 0.5), (1.0, -1.0))

    @given(
        lengths=st.lists(st.floats(0.05, 1.0), min_size=1, max_size=6),
        sigma=st.floats(0.0, 10.0),
        t=st.floats(0.0, 1.0),
    )
    @hyp_settings(max_examples=60, deadline=None)
    def test_evaluation_lands_in_owning_segment(self, lengths, sigma, t):
        total = sum(lengths)
        lengths = tuple(2.0 * v / total for v in lengths)
        lengths = lengths[:-1] + (2.0 - sum(lengths[:-1]),)
        if lengths[-1] <= 0:
            return
        plateaus = tuple(float(k + 1) for k in range(len(lengths)))
        profile = FixedChargeProfile(lengths, plateaus, sigma)
        x = -1.0 + 2.0 * t
        value = fixed_charge_at(profile, x)
        breaks = profile.breakpoints
        owners = [
            k
            for k in range(len(lengths))
            if breaks[k] <= x <= breaks[k + 1]
        ]
        assert any(value == pytest.approx(sigma * plateaus[k]) for k in owners)


class TestNondimensionalize:
    def test_published_debye_length(self):
        scales = PhysicalScales(
            half_length=7.5e-9,
            diffusion_ref=1e-9,
            concentration_ref=0.2,
            relative_permittivity=80.0,
            temperature=300.0,
        )
        _, lambda_d = nondimensionalize(scales)
        assert lambda_d * 1e9 == pytest.approx(0.687, abs=5e-3)

    def test_kappa_half_when_length_equals_debye(self):
        scales = PhysicalScales(1e-9, 1e-9, 0.2, 80.0, 300.0)
        _, lambda_d = nondimensionalize(scales)
        scales2 = PhysicalScales(lambda_d, 1e-9, 0.2, 80.0, 300.0)
        kappa, _ = nondimensionalize(scales2)
        assert kappa == pytest.approx(0.5, rel=1e-12)

    def test_inverse_square_root_concentration_scaling(self):
        base = PhysicalScales(1e-9, 1e-9, 0.2, 80.0, 300.0)
        quad = PhysicalScales(1e-9, 1e-9, 0.8, 80.0, 300.0)
        _, lam1 = nondimensionalize(base)
        _, lam4 = nondimensionalize(quad)
        assert lam4 == pytest.approx(lam1 / 2.0, rel=1e-12)

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(NonPositiveScale):
            PhysicalScales(0.0, 1e-9, 0.2, 80.0, 300.0)


class TestFormulations:
    def test_bc_counts(self, two_ion, five_ion):
        for system, m in ((two_ion, 2), (five_ion, 5)):
            for form in (V2I(16.0), I2V(5.0), C2I(16.0, 0.5), I2C(16.0, 5.0)):
                spec = build_bvp(system, form)
                assert spec.n == 2 * m + 2
                ya = np.ones(spec.n)
                yb = np.ones(spec.n)
                assert spec.bc_residual(ya, yb).shape == (spec.n,)

    def test_c2i_imposes_derived_concentration(self, two_ion):
        # z = (1, -1): the paired species must take c_2(1) = c_B.
        spec = build_bvp(two_ion, C2I(16.0, 0.5))
        yb = np.zeros(6)
        yb[PHI] = 16.0
        yb[c_slot(0)] = 0.5
        yb[c_slot(1)] = 0.5
        ya = np.zeros(6)
        ya[c_slot(0)] = 1.0
        ya[c_slot(1)] = 1.0
        np.testing.assert_allclose(spec.bc_residual(ya, yb), np.zeros(6), atol=1e-14)

    def test_i2v_current_row(self, two_ion):
        spec = build_bvp(two_ion, I2V(7.0))
        yb = np.zeros(6)
        yb[flux_slot(0)] = 3.0
        yb[flux_slot(1)] = -2.0
        ya = np.zeros(6)
        ya[c_slot(0)] = 1.0
        ya[c_slot(1)] = 1.0
        residual = spec.bc_residual(ya, yb)
        # left block: phi, c_1, c_2; the current row leads the right block
        assert residual[3] == pytest.approx(1 * 3.0 + (-1) * (-2.0) - 7.0)

    def test_same_sign_pair_rejected(self):
        system = ChannelSystem(
            10.0,
            (Species(1, 1.0, 0.5), Species(1, 1.0, 0.5), Species(-2, 1.0, 0.5)),
            FixedChargeProfile((2.0,), (0.0,), 0.0),
        )
        with pytest.raises(InvalidFormulation):
            build_bvp(system, C2I(1.0, 0.5, pair=(0, 1)))

    def test_bc_jacobians_match_residual(self, two_ion, rng):
        for form in (V2I(16.0), I2V(5.0), C2I(16.0, 0.5), I2C(16.0, 5.0)):
            spec = build_bvp(two_ion, form)
            ya = rng.uniform(-1, 2, 6)
            yb = rng.uniform(-1, 2, 6)
            ba, bb = spec.bc_jacobians(ya, yb)
            base = spec.bc_residual(ya, yb)
            for j in range(6):
                e = np.zeros(6)
                e[j] = 1e-7
                np.testing.assert_allclose(
                    (spec.bc_residual(ya + e, yb) - base) / 1e-7, ba[:, j], atol=1e-6
                )
                np.testing.assert_allclose(
                    (spec.bc_residual(ya, yb + e) - base) / 1e-7, bb[:, j], atol=1e-6
                )


class TestAugmentedSystem:
    def test_dimensions(self, two_ion, five_ion):
        assert build_ivaug(two_ion, 0.0).n == 11
        assert build_ivaug(five_ion, 0.0).n == 23
        assert aug_dimension(2) == 11 and aug_dimension(5) == 23

    def test_zero_hat_block_is_never_a_solution(self, two_ion):
        # With every hat variable zero the hat mass-balance row reduces to
        # the inhomogeneous term 1/z_M, so the zero block cannot solve it.
        spec = build_ivaug(two_ion, 0.0)
        Y = np.zeros(11)
        Y[c_slot(0)] = 1.0
        Y[c_slot(1)] = 1.0
        rhs = spec.rhs(np.array([0.3]), Y[:, None])[:, 0]
        z_last = two_ion.species[-1].z
        assert rhs[hat_c_slot(2, 1)] == pytest.approx(1.0 / z_last)

    def test_aug_jacobian_agrees_with_finite_differences(self, rng, five_ion):
        spec = build_ivaug(five_ion, 0.0)
        dim = spec.n
        for _ in range(20):
            Y = rng.uniform(-2.0, 2.0, dim)
            x = np.array([rng.uniform(-1, 1)])
            analytic = spec.rhs_jacobian(x, Y[:, None])[0]
            fd = np.zeros_like(analytic)
            base = spec.rhs(x, Y[:, None])[:, 0]
            for j in range(dim):
                e = np.zeros(dim)
                e[j] = 1e-7 * max(1.0, abs(Y[j]))
                up = spec.rhs(x, (Y + e)[:, None])[:, 0]
                fd[:, j] = (up - base) / e[j]
            assert (np.abs(analytic - fd) / (1.0 + np.abs(analytic))).max() <= 1e-5

    def test_base_extraction_reconstructs_flux(self, two_ion, rng):
        Y = rng.uniform(0.1, 2.0, 11)
        base = aug_extract_base(two_ion, Y)
        z = two_ion.valences
        current = Y[aug_current_slot(2)]
        expected_jm = (current - z[0] * Y[flux_slot(0)]) / z[1]
        assert base[flux_slot(1)] == pytest.approx(expected_jm)
        assert total_current(base, z) == pytest.approx(current)


class TestConvergedSolutions:
    @pytest.fixture(scope="class")
    def flat_solution(self):
        system = make_two_ion(sigma=0.0)
        spec = build_bvp(system, V2I(16.0))
        return system, solve_bvp(spec, linear_guess(system, V2I(16.0)))

    def test_flux_constancy(self, flat_solution):
        _, sol = flat_solution
        for slot in (flux_slot(0), flux_slot(1)):
            row = sol.values[slot]
            assert np.abs(row - row[0]).max() <= 1e-6

    def test_current_consistency_across_nodes(self, flat_solution):
        system, sol = flat_solution
        currents = total_current(sol.values, system.valences)
        assert np.abs(currents - currents[-1]).max() <= 1e-6

    def test_positivity_screen_passes(self, flat_solution):
        system, sol = flat_solution
        screen_solution(system, sol)

    def test_positivity_screen_rejects_doctored_solution(self, flat_solution):
        system, sol = flat_solution
        doctored = sol.values.copy()
        doctored[c_slot(0), doctored.shape[1] // 2] = -1e-3
        bad = type(sol)(
            mesh=sol.mesh,
            values=doctored,
            f_left=sol.f_left,
            f_right=sol.f_right,
            residual_norm=sol.residual_norm,
            bc_residual_norm=sol.bc_residual_norm,
            newton_iters=sol.newton_iters,
            interval_residuals=sol.interval_residuals,
        )
        with pytest.raises(NegativeConcentration):
            screen_solution(system, bad)

    def test_round_trip_v2i_i2v(self, flat_solution):
        system, sol = flat_solution
        current = float(total_current(sol.values[:, -1], system.valences))
        back = solve_bvp(build_bvp(system, I2V(current)), sol)
        assert back.values[PHI, -1] == pytest.approx(16.0, abs=1e-6)

    def test_linear_guess_respects_imposed_boundaries(self, two_ion):
        guess = linear_guess(two_ion, V2I(16.0))
        Y = guess(np.array([-1.0, 1.0]))
        assert Y[PHI, 0] == 0.0 and Y[PHI, 1] == 16.0
        assert Y[c_slot(0), 0] == 1.0 and Y[c_slot(0), 1] == 0.5
        assert np.all(Y[flux_slot(0)] == 0.0)
