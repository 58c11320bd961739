import numpy as np
from django.test import SimpleTestCase, tag

from ..boltzmann import solve
from ..exceptions import InvalidArgument, SingularOpacity
from ..grid import MomentField, PhaseGrid
from ..idsa import (LimiterVariant, Regime, SourceField, TrappedDiffusion, compute_sigma_ids, diffusion_apply,
                    diffusion_couplings, flux_factor, flux_factor_field, idsa_run, limit_sigma,
                    limiter_bounds_check, streaming_solve, trapped_step)
from ..matter import MaterialState, MatterModel, RadialProfile, evaluate_on_grid


def two_zone_model(core=0.3, core_rate=1e3, envelope_rate=1e-3, radius=1.0):
    """Opaque core with j / chi_tilde = 1/2 inside a nearly transparent envelope."""
    edge = core * radius
    radii = [0.0, edge, edge * 1.0001, radius]
    j = RadialProfile(radii=radii, values=[0.5 * core_rate] * 2 + [1e-6 * envelope_rate] * 2)
    chi = RadialProfile(radii=radii, values=[0.5 * core_rate] * 2 + [(1 - 1e-6) * envelope_rate] * 2)
    zero = RadialProfile.constant(0.0)
    return MatterModel(radius=radius, rho=RadialProfile.constant(1.0), v=zero, j=j, chi=chi,
                       phi0=zero, phi1=zero, c=1.0)


class TestFluxFactor(SimpleTestCase):

    def test_half_inside_the_sphere(self):
        actual = flux_factor(np.linspace(0.0, 2.0, 9), 1.0, 2.0)

        np.testing.assert_array_equal(actual, 0.5)

    def test_monotone(self):
        actual = flux_factor(np.linspace(0.0, 50.0, 2001), 1.0, 1.0)

        self.assertTrue(np.all(np.diff(actual) >= 0))

    def test_forward_peaked_far_away(self):
        actual = flux_factor(np.linspace(7.1, 100.0, 50), 1.0, 1.0)

        self.assertTrue(np.all(actual > 0.99))

    def test_point_source(self):
        self.assertEqual(flux_factor(0.5, 1.0, 0.0), 1.0)

    def test_field_uses_outer_faces(self):
        grid = PhaseGrid.build(n_r=4, radius=2.0, n_ordinates=2, n_groups=2, c=1.0)

        actual = flux_factor_field(grid, [0.0, 1.0])

        self.assertEqual(actual.shape, (4, 2))
        np.testing.assert_allclose(actual[:, 0], 1.0)
        np.testing.assert_allclose(actual[:2, 1], 0.5)


class TestLimiter(SimpleTestCase):

    def setUp(self):
        self.grid = PhaseGrid.build(n_r=3, radius=1.0, n_ordinates=2, c=1.0)
        self.state = evaluate_on_grid(MatterModel.uniform(radius=1.0, j=1.0, chi=1.0, c=1.0), self.grid)

    def test_branches(self):
        raw = np.array([[-1.0], [0.5], [2.0]])

        actual = limit_sigma(raw, self.state)

        np.testing.assert_allclose(actual.sigma.values[:, 0], [0.0, 0.5, 1.0])
        self.assertEqual(list(actual.regime[:, 0]), ['reaction', 'diffusion', 'free_streaming'])

    def test_bounds_are_diffusion(self):
        actual = limit_sigma(np.array([[0.0], [1.0], [0.0]]), self.state)

        self.assertTrue(np.all(actual.mask(Regime.DIFFUSION)))

    def test_global_lower_bound(self):
        beta_s = np.full((3, 1), 0.25)

        actual = limit_sigma(np.array([[0.1], [0.6], [3.0]]), self.state, beta_s, 'global')

        np.testing.assert_allclose(actual.sigma.values[:, 0], [0.5, 0.6, 1.0])
        self.assertEqual(actual.limiter_variant, LimiterVariant.GLOBAL)
        self.assertEqual(list(actual.regime[:, 0]), ['reaction', 'diffusion', 'free_streaming'])

    def test_global_limiter_needs_streaming_density(self):
        with self.assertRaises(InvalidArgument):
            limit_sigma(np.zeros((3, 1)), self.state, variant='global')

    def test_occupancy(self):
        source = limit_sigma(np.array([[-1.0], [0.5], [2.0]]), self.state)

        actual = source.occupancy()

        self.assertAlmostEqual(actual['reaction'], 1.0 / 3.0)
        self.assertAlmostEqual(sum(actual.values()), 1.0)


class TestLimiterBounds(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(2024)
        self.j = rng.uniform(0.25, 0.5, 1000)
        self.chi = rng.uniform(0.25, 0.5, 1000)
        self.sigma = rng.uniform(-self.chi, self.j)

    def test_stationary_trapped_density_is_admissible(self):
        state = MaterialState(rho=1.0, v=0.0, dlnrho_cdt=0.0, j=self.j, chi=self.chi, phi0=0.0, phi1=0.0)

        stationary, verdict = limiter_bounds_check(state, self.sigma)

        self.assertTrue(np.all(verdict))
        self.assertTrue(np.all((stationary >= 0.0) & (stationary <= 1.0)))

    def test_endpoints(self):
        state = MaterialState(rho=1.0, v=0.0, dlnrho_cdt=0.0, j=0.3, chi=0.7, phi0=0.0, phi1=0.0)

        self.assertEqual(limiter_bounds_check(state, -0.7), (1.0, True))
        self.assertEqual(limiter_bounds_check(state, 0.3), (0.0, True))

    def test_outside_the_interval(self):
        state = MaterialState(rho=1.0, v=0.0, dlnrho_cdt=0.0, j=self.j, chi=self.chi, phi0=0.0, phi1=0.0)

        _, above = limiter_bounds_check(state, self.j + 0.01)
        _, below = limiter_bounds_check(state, -self.chi - 0.01)

        self.assertFalse(np.any(above))
        self.assertFalse(np.any(below))

    def test_vacuum(self):
        state = MaterialState(rho=1.0, v=0.0, dlnrho_cdt=0.0, j=0.0, chi=0.0, phi0=0.0, phi1=0.0)

        with self.assertRaises(SingularOpacity):
            limiter_bounds_check(state, 0.0)

    def test_trapped_density_relaxes_to_stationary_value(self):
        grid = PhaseGrid.build(n_r=1000, radius=1.0, n_ordinates=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=0.5, chi=0.5, c=1.0)
        state = MaterialState(rho=1.0, v=0.0, dlnrho_cdt=np.zeros((1000, 1)), j=self.j[:, None],
                              chi=self.chi[:, None], phi0=0.0, phi1=0.0)
        stationary, _ = limiter_bounds_check(state, self.sigma[:, None])
        sigma = MomentField(self.sigma[:, None])
        beta_t = MomentField(np.zeros((1000, 1)))

        # 20 e-folding times of the slowest point
        dt = 0.02
        for _ in range(int(round(20.0 / (0.5 * dt)))):
            beta_t = trapped_step(beta_t, sigma, model, grid, dt, state=state)

        np.testing.assert_allclose(beta_t.values, stationary, atol=1e-8)


class TestDiffusionSource(SimpleTestCase):

    def setUp(self):
        self.grid = PhaseGrid.build(n_r=10, radius=1.0, n_ordinates=4, c=1.0)
        self.model = MatterModel.uniform(radius=1.0, j=1.0, chi=2.0, c=1.0)
        self.state = evaluate_on_grid(self.model, self.grid)

    def test_uniform_trapped_density_has_no_source(self):
        actual = compute_sigma_ids(np.full((10, 1), 0.3), np.zeros((10, 1)), self.model, self.grid)

        np.testing.assert_allclose(actual.values, 0.0, atol=1e-13)

    def test_streaming_density_adds_absorption(self):
        actual = compute_sigma_ids(np.full((10, 1), 0.3), np.full((10, 1), 0.1), self.model, self.grid)

        np.testing.assert_allclose(actual.values, 0.3, atol=1e-13)

    def test_diffusion_conserves_particles(self):
        beta = np.random.default_rng(3).random((10, 1))

        divergence = diffusion_apply(beta, diffusion_couplings(self.state, self.grid), self.grid)

        self.assertAlmostEqual(float(np.sum(self.grid.volumes[:, None] * divergence)), 0.0, places=13)

    def test_mismatched_fields(self):
        with self.assertRaises(InvalidArgument):
            compute_sigma_ids(np.zeros((10, 1)), np.zeros((9, 1)), self.model, self.grid)


class TestTrappedDiffusion(SimpleTestCase):

    def setUp(self):
        self.grid = PhaseGrid.build(n_r=10, radius=1.0, n_ordinates=4, c=1.0)
        self.model = MatterModel.uniform(radius=1.0, j=1.0, chi=2.0, c=1.0)
        self.state = evaluate_on_grid(self.model, self.grid)

    def test_without_spheres_matches_zero_flux_operator(self):
        beta = np.random.default_rng(5).random((10, 1))

        actual = TrappedDiffusion.build(self.state, self.grid).apply(beta, self.grid)

        expected = diffusion_apply(beta, diffusion_couplings(self.state, self.grid), self.grid)
        np.testing.assert_allclose(actual, expected, rtol=1e-14)

    def test_escape_only_at_the_surface_cell(self):
        diffusion = TrappedDiffusion.build(self.state, self.grid, radii=[0.5])

        expected = np.zeros((10, 1))
        expected[4] = 0.25 * self.grid.face_areas[5]
        np.testing.assert_allclose(diffusion.escape, expected, rtol=1e-14)
        np.testing.assert_array_equal(diffusion.couplings[4:], 0.0)
        np.testing.assert_allclose(diffusion.couplings[:4], diffusion_couplings(self.state, self.grid)[:4])

    def test_sphere_beyond_the_grid_escapes_through_the_surface(self):
        diffusion = TrappedDiffusion.build(self.state, self.grid, radii=[2.0])

        np.testing.assert_array_equal(diffusion.escape[:-1], 0.0)
        self.assertAlmostEqual(float(diffusion.escape[-1, 0]), 0.25 * self.grid.face_areas[-1], places=14)
        np.testing.assert_allclose(diffusion.couplings, diffusion_couplings(self.state, self.grid))

    def test_outer_cells_see_only_absorption(self):
        chi_tilde = np.broadcast_to(self.state.chi_tilde, (10, 1))

        actual = compute_sigma_ids(np.full((10, 1), 0.3), np.full((10, 1), 0.1), self.model, self.grid,
                                   radii=[0.5]).values

        np.testing.assert_allclose(actual[5:], chi_tilde[5:] * 0.1, rtol=1e-13)
        np.testing.assert_allclose(actual[:4], chi_tilde[:4] * 0.1, rtol=1e-13)
        escape = 0.25 * self.grid.face_areas[5] * 0.3 / self.grid.volumes[4]
        self.assertAlmostEqual(float(actual[4, 0]), float(chi_tilde[4, 0]) * 0.1 + escape, places=12)

    def test_particles_leave_only_through_the_surface(self):
        beta = np.random.default_rng(6).random((10, 1))

        divergence = TrappedDiffusion.build(self.state, self.grid, radii=[0.5]).apply(beta, self.grid)

        lost = float(np.sum(self.grid.volumes[:, None] * divergence))
        self.assertAlmostEqual(lost, 0.25 * self.grid.face_areas[5] * beta[4, 0], places=12)

    def test_implicit_step_uses_the_same_operator(self):
        beta = np.random.default_rng(7).random((10, 1))
        regime = np.full((10, 1), Regime.DIFFUSION.value, dtype='<U14')
        source = SourceField(sigma_ids=MomentField(np.zeros((10, 1))), sigma=MomentField(np.zeros((10, 1))),
                             regime=regime)
        dt = 0.05

        actual = trapped_step(beta, source, self.model, self.grid, dt, beta_s=np.zeros((10, 1)),
                              radii=[0.5]).values

        h = self.grid.c * dt / self.model.time_weight
        j = np.broadcast_to(self.state.j, (10, 1))
        chi_tilde = np.broadcast_to(self.state.chi_tilde, (10, 1))
        operator = TrappedDiffusion.build(self.state, self.grid, radii=[0.5]).apply(actual, self.grid)
        np.testing.assert_allclose(actual - beta, h * (j - chi_tilde * actual - operator), atol=1e-12)


class TestStreamingSolve(SimpleTestCase):

    def test_free_streaming_from_uniform_source(self):
        grid = PhaseGrid.build(n_r=25, radius=1.0, n_ordinates=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=0.0, chi=0.0, c=1.0)

        actual = streaming_solve(np.full((25, 1), 0.6), model, grid, flux_factors=np.ones((25, 1)))

        np.testing.assert_allclose(actual.beta_s.values[:, 0], 0.2 * grid.r_edges[1:], rtol=1e-12)
        self.assertEqual(actual.clipped, 0)

    def test_superposition_of_sources(self):
        grid = PhaseGrid.build(n_r=20, radius=1.0, n_ordinates=2, n_groups=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=1.0, chi=1.0, c=1.0)
        factors = flux_factor_field(grid, [0.4, 0.6])
        rng = np.random.default_rng(9)
        first, second = rng.random((20, 2)), rng.random((20, 2))

        def beta_s(sigma):
            return streaming_solve(sigma, model, grid, flux_factors=factors).beta_s.values

        combined = beta_s(2.0 * first + 0.5 * second)

        np.testing.assert_allclose(combined, 2.0 * beta_s(first) + 0.5 * beta_s(second), rtol=1e-12, atol=1e-15)

    def test_negative_density_is_clipped(self):
        grid = PhaseGrid.build(n_r=5, radius=1.0, n_ordinates=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=0.0, chi=1.0, c=1.0)

        with self.assertLogs('transport.idsa', level='WARNING'):
            actual = streaming_solve(np.full((5, 1), -1.0), model, grid, flux_factors=np.ones((5, 1)))

        self.assertEqual(actual.clipped, 5)
        np.testing.assert_array_equal(actual.beta_s.values, 0.0)

    def test_explicit_and_implicit_source(self):
        grid = PhaseGrid.build(n_r=5, radius=1.0, n_ordinates=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=1.0, chi=1.0, c=1.0)
        source = SourceField(sigma_ids=MomentField(np.zeros((5, 1))), sigma=MomentField(np.zeros((5, 1))),
                             regime=np.full((5, 1), 'diffusion'))

        actual = trapped_step(np.full((5, 1), 0.5), source, model, grid, 0.1, beta_s=np.zeros((5, 1)))

        np.testing.assert_allclose(actual.values, 0.5, atol=1e-14)


class TestRun(SimpleTestCase):

    def test_equilibrium_core_stays_put(self):
        grid = PhaseGrid.build(n_r=20, radius=1.0, n_ordinates=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=100.0, chi=100.0, c=1.0)

        solution = idsa_run(model, grid, np.full((20, 1), 0.5), 0.5, dt=0.05)

        np.testing.assert_allclose(solution.final.beta_t.values[:10], 0.5, atol=1e-6)
        self.assertEqual(solution.steps, 10)

    def test_accepts_moment_field_initial_state(self):
        grid = PhaseGrid.build(n_r=20, radius=1.0, n_ordinates=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=100.0, chi=100.0, c=1.0)

        solution = idsa_run(model, grid, MomentField(np.full((20, 1), 0.5)), 0.5, dt=0.05)

        self.assertEqual(solution.steps, 10)
        self.assertGreater(len(solution.snapshots), 1)
        np.testing.assert_allclose(solution.final.beta_t.values[:10], 0.5, atol=1e-6)

    def test_step_accepts_moment_field(self):
        grid = PhaseGrid.build(n_r=5, radius=1.0, n_ordinates=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=1.0, chi=1.0, c=1.0)

        actual = trapped_step(MomentField(np.full((5, 1), 0.5)), np.zeros((5, 1)), model, grid, 0.1)

        self.assertEqual(actual.values.shape, (5, 1))

    def test_snapshots_follow_cadence(self):
        grid = PhaseGrid.build(n_r=10, radius=1.0, n_ordinates=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=1.0, chi=1.0, c=1.0)

        solution = idsa_run(model, grid, np.zeros((10, 1)), 1.0, dt=0.1, cadence=5)

        self.assertEqual(len(solution.snapshots), 3)
        self.assertEqual(len(solution.sources), 3)

    def test_trapped_density_fills_towards_equilibrium(self):
        grid = PhaseGrid.build(n_r=30, radius=1.0, n_ordinates=2, n_groups=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=10.0, chi=10.0, c=1.0)

        solution = idsa_run(model, grid, np.zeros((30, 2)), 1.0, dt=0.01)

        np.testing.assert_allclose(solution.final.beta_t.values[:10], 0.5, atol=1e-6)

        for beta_t in solution.beta_t:
            self.assertGreaterEqual(beta_t.values.min(), -1e-10)
            self.assertLessEqual(beta_t.values.max(), 1.0 + 1e-10)

    def test_wrong_initial_shape(self):
        grid = PhaseGrid.build(n_r=10, radius=1.0, n_ordinates=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=1.0, chi=1.0, c=1.0)

        with self.assertRaises(InvalidArgument):
            idsa_run(model, grid, np.zeros((9, 1)), 1.0)


@tag('slow')
class TestRegimeMap(SimpleTestCase):

    def run_two_zone(self, core_rate, envelope_rate):
        grid = PhaseGrid.build(n_r=60, radius=1.0, n_ordinates=8, c=1.0)
        model = two_zone_model(core_rate=core_rate, envelope_rate=envelope_rate)
        equilibrium = np.broadcast_to(evaluate_on_grid(model, grid).j / evaluate_on_grid(model, grid).chi_tilde,
                                      (60, 1))
        idsa_solution = idsa_run(model, grid, equilibrium, 2.0)
        boltzmann_solution = solve(model, grid, grid.isotropic(equilibrium), 2.0, scheme='implicit',
                                   discretization='upwind')
        return grid, idsa_solution, boltzmann_solution

    def test_core_traps_and_envelope_streams(self):
        grid, solution, _ = self.run_two_zone(1e3, 1e-3)

        source = solution.final.source
        core = grid.r_centers < 0.3
        envelope = grid.r_centers > 0.3
        core_occupancy = source.occupancy(core)
        self.assertGreaterEqual(core_occupancy['diffusion'] + core_occupancy['reaction'], 0.9)
        self.assertGreaterEqual(source.occupancy(envelope)['free_streaming'], 0.9)

    def test_difference_shrinks_as_zones_separate(self):
        differences = []
        for core_rate, envelope_rate in ((1e2, 1e-2), (1e3, 1e-3)):
            grid, idsa_solution, boltzmann_solution = self.run_two_zone(core_rate, envelope_rate)
            beta = boltzmann_solution.snapshots[-1].beta.values
            snap = idsa_solution.final
            combined = snap.beta_t.values + snap.beta_s.values
            differences.append(grid.weighted_norm(beta - combined) / grid.weighted_norm(beta))

        self.assertLess(differences[1], differences[0])


@tag('slow')
class TestTrappedBounds(SimpleTestCase):

    def test_trapped_density_stays_in_unit_interval(self):
        grid = PhaseGrid.build(n_r=40, radius=1.0, n_ordinates=2, n_groups=2, c=1.0)
        model = MatterModel.uniform(radius=1.0, j=3.0, chi=1.0, c=1.0)
        extremes = []

        idsa_run(model, grid, np.random.default_rng(8).random((40, 2)), 1.0, dt=1e-3,
                 on_step=lambda count, t, beta_t: extremes.append((beta_t.values.min(), beta_t.values.max())))

        self.assertEqual(len(extremes), 1000)
        self.assertGreaterEqual(min(low for low, _ in extremes), -1e-10)
        self.assertLessEqual(max(high for _, high in extremes), 1.0 + 1e-10)
