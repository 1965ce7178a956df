"""Graded-mesh RK4 integration and the first-order system machinery."""

import numpy as np
import pytest

from singhyp.quantize import GridSpec, apply_multiplier, l2_norm
from singhyp.solver import (CauchyProblem, SolverError, SupportError, SystemOperators,
                            assemble_rhs, graded_mesh, integrate, reduce_to_system,
                            system_residual)
from singhyp.structure import bracket, poly_pair
from singhyp.symbols import free_wave, reference_wave, theorem_coefficient
from singhyp.analysis import GaussianBump, closed_form, counterexample_family, \
    random_trig_poly

U0 = random_trig_poly(8, seed=42)


def _band_field(grid, order=0):
    return np.asarray(U0(grid.x, order), dtype=complex)


class TestMesh:
    def test_endpoints_and_monotonicity(self):
        fam = free_wave()
        mesh = graded_mesh(fam, 0.0, 1.0, 128)
        assert mesh.nodes[0] == 0.0 and mesh.nodes[-1] == 1.0
        assert np.all(np.diff(mesh.nodes) > 0)

    def test_grading_exponent_invariant(self):
        # kappa >= 1/(1 - max(p, r)) for singular starts
        fam = counterexample_family("7.3")  # p = 0, r = 1/2
        mesh = graded_mesh(fam, 0.0, 1.0, 64)
        assert mesh.kappa >= 1.0 / (1.0 - max(fam.p, fam.r))
        assert mesh.kappa == 4.0

    def test_positive_start_uses_quadratic(self):
        fam = counterexample_family("7.1", 2)  # r = 1, excluded singularity
        mesh = graded_mesh(fam, 1e-3, 1.0, 64)
        assert mesh.kappa == 2.0

    def test_rejects_bad_interval(self):
        with pytest.raises(ValueError):
            graded_mesh(free_wave(), 1.0, 1.0, 16)


class TestAssembleRhs:
    def test_fourier_eigenmode(self):
        grid = GridSpec(L=np.pi, N=64, k=1.0)
        fam = free_wave(1.0, k=1.0)
        u = np.exp(1j * 5 * grid.x)
        prob = CauchyProblem(family=fam, f1=u, f2=np.zeros_like(u), t_start=0.0, T=1.0)
        du, dv = assemble_rhs(0.5, u, np.zeros_like(u), prob, grid)
        assert np.max(np.abs(du)) == 0.0
        assert np.allclose(dv, -25.0 * u, rtol=1e-12)

    def test_zero_state(self):
        grid = GridSpec(L=np.pi, N=64, k=1.0)
        fam = counterexample_family("7.2")
        z = np.zeros(grid.N, dtype=complex)
        prob = CauchyProblem(family=fam, f1=z, f2=z, t_start=0.0, T=1.0)
        du, dv = assemble_rhs(0.5, z, z, prob, grid)
        assert np.max(np.abs(du)) == 0.0 and np.max(np.abs(dv)) == 0.0

    def test_no_loss_drift_operator_form(self):
        # dv = dxx u + 2 dx u at t = 1 for the v-independent part
        grid = GridSpec(L=np.pi, N=128, k=1.0)
        fam = counterexample_family("7.2")
        u = _band_field(grid)
        prob = CauchyProblem(family=fam, f1=u, f2=np.zeros_like(u), t_start=0.0, T=1.0)
        _, dv = assemble_rhs(1.0, u, np.zeros_like(u), prob, grid)
        expect = apply_multiplier(grid, -grid.xi ** 2 + 2j * grid.xi, u)
        assert np.max(np.abs(dv - expect)) <= 1e-11 * np.max(np.abs(expect))


class TestIntegrate:
    def test_wave_returns_after_one_period(self):
        grid = GridSpec(L=np.pi, N=128, k=1.0)
        fam = free_wave(1.0, T=2 * np.pi + 0.1, k=1.0)
        f1 = _band_field(grid)
        prob = CauchyProblem(family=fam, f1=f1, f2=np.zeros_like(f1), t_start=0.0,
                             T=2 * np.pi + 0.1)
        mesh = graded_mesh(fam, 0.0, 2 * np.pi, 4096, kappa=1.0000001)
        traj = integrate(prob, grid, mesh, [2 * np.pi])
        t, u, v = traj.snapshots[-1]
        assert l2_norm(grid, u - f1) / l2_norm(grid, f1) <= 1e-8

    def test_zero_data_zero_trajectory(self):
        grid = GridSpec(L=np.pi, N=64, k=1.0)
        fam = counterexample_family("7.3")
        z = np.zeros(grid.N, dtype=complex)
        prob = CauchyProblem(family=fam, f1=z, f2=z, t_start=0.0, T=1.0)
        traj = integrate(prob, grid, graded_mesh(fam, 0.0, 1.0, 128), [0.5, 1.0])
        for _, u, v in traj.snapshots:
            assert np.max(np.abs(u)) == 0.0 and np.max(np.abs(v)) == 0.0

    def test_oscillating_speed_matches_closed_form(self):
        grid = GridSpec(L=np.pi, N=256, k=1.0)
        fam = counterexample_family("7.3", k=1.0)
        sol = closed_form("7.3", 0, U0)
        f1, f2 = sol.initial_data(grid, 0.0)
        prob = CauchyProblem(family=fam, f1=f1, f2=f2, t_start=0.0, T=1.0)
        traj = integrate(prob, grid, graded_mesh(fam, 0.0, 1.0, 2048), [1.0])
        t, u, _ = traj.snapshots[-1]
        exact = np.asarray(sol.u(t, grid.x), dtype=complex)
        assert l2_norm(grid, u - exact) / l2_norm(grid, exact) <= 1e-5

    def test_forced_manufactured_solution(self):
        # u = sin(t) e^{i3x} for the shifted wave: f = (mu^2 - 1) sin(t) e^{i3x}
        grid = GridSpec(L=np.pi, N=64, k=2.0)
        fam = reference_wave(T=1.0, k=2.0)
        mu2 = 4.0 + 9.0
        mode = np.exp(1j * 3 * grid.x)

        def forcing(t, x):
            return (mu2 - 1.0) * np.sin(t) * mode

        z = np.zeros(grid.N, dtype=complex)
        prob = CauchyProblem(family=fam, f1=z, f2=mode.copy(), t_start=0.0, T=1.0,
                             forcing=forcing)
        traj = integrate(prob, grid, graded_mesh(fam, 0.0, 1.0, 1024), [1.0])
        t, u, v = traj.snapshots[-1]
        assert l2_norm(grid, u - np.sin(t) * mode) / l2_norm(grid, mode) <= 1e-9

    def test_spectral_accuracy_doubling_n(self):
        fam = counterexample_family("7.3", k=1.0)
        sol = closed_form("7.3", 0, U0)
        results = {}
        for N in (128, 256):
            grid = GridSpec(L=np.pi, N=N, k=1.0)
            f1, f2 = sol.initial_data(grid, 0.0)
            prob = CauchyProblem(family=fam, f1=f1, f2=f2, t_start=0.0, T=1.0)
            traj = integrate(prob, grid, graded_mesh(fam, 0.0, 1.0, 1024), [1.0])
            _, u, _ = traj.snapshots[-1]
            results[N] = u
        coarse = results[128]
        fine = results[256][::2]  # same physical points
        assert np.max(np.abs(fine - coarse)) <= 1e-9 * np.max(np.abs(coarse))

    def test_rk4_order(self):
        grid = GridSpec(L=np.pi, N=64, k=1.0)
        fam = counterexample_family("7.3", k=1.0)
        sol = closed_form("7.3", 0, U0)
        errs = {}
        for M in (128, 256):
            f1, f2 = sol.initial_data(grid, 0.25)
            prob = CauchyProblem(family=fam, f1=f1, f2=f2, t_start=0.25, T=1.0)
            traj = integrate(prob, grid, graded_mesh(fam, 0.25, 1.0, M, kappa=1.0000001),
                             [1.0])
            t, u, _ = traj.snapshots[-1]
            errs[M] = l2_norm(grid, u - np.asarray(sol.u(t, grid.x), dtype=complex))
        ratio = errs[128] / errs[256]
        assert 10.0 <= ratio <= 25.0

    def test_time_reversibility(self):
        # b0 = b = 0, time-independent a: flip v and integrate forward again
        grid = GridSpec(L=np.pi, N=128, k=1.0)
        fam = free_wave(1.0, T=1.5, k=1.0)
        f1 = _band_field(grid)
        f2 = _band_field(grid, 1)
        prob = CauchyProblem(family=fam, f1=f1, f2=f2, t_start=0.0, T=1.5)
        traj = integrate(prob, grid, graded_mesh(fam, 0.0, 1.0, 512, kappa=1.0000001),
                         [1.0])
        _, u1, v1 = traj.snapshots[-1]
        back = CauchyProblem(family=fam, f1=u1, f2=-v1, t_start=0.0, T=1.5)
        traj2 = integrate(back, grid, graded_mesh(fam, 0.0, 1.0, 512, kappa=1.0000001),
                          [1.0])
        _, u2, v2 = traj2.snapshots[-1]
        assert l2_norm(grid, u2 - f1) / l2_norm(grid, f1) <= 1e-7
        assert l2_norm(grid, v2 + f2) / max(l2_norm(grid, f2), 1.0) <= 1e-7

    def test_finite_propagation_bound(self):
        from singhyp.analysis import support_radius

        grid = GridSpec(L=12.0, N=512, k=1.0)
        fam = free_wave(1.0, T=2.5, k=1.0)
        bump = GaussianBump(0.0, 0.3)
        f1 = np.asarray(bump(grid.x), dtype=complex)
        prob = CauchyProblem(family=fam, f1=f1, f2=np.zeros_like(f1), t_start=0.0, T=2.5)
        traj = integrate(prob, grid, graded_mesh(fam, 0.0, 2.0, 512),
                         np.linspace(0.0, 2.0, 5))
        r0 = support_radius(grid, f1)
        for t, u, _ in traj.snapshots:
            assert support_radius(grid, u) <= r0 + t + 3.0 * grid.dx

    def test_cfl_halving_and_exhaustion(self):
        grid = GridSpec(L=np.pi, N=256, k=1.0)
        fam = free_wave(40.0, T=1.0, k=1.0)  # fast wave forces halving
        f1 = _band_field(grid)
        prob = CauchyProblem(family=fam, f1=f1, f2=np.zeros_like(f1), t_start=0.0, T=1.0)
        mesh = graded_mesh(fam, 0.0, 1.0, 16, kappa=1.0000001)
        traj = integrate(prob, grid, mesh, [1.0])
        assert traj.stats["halvings"] > 0
        fam2 = free_wave(1e9, T=1.0, k=1.0)
        prob2 = CauchyProblem(family=fam2, f1=f1, f2=np.zeros_like(f1), t_start=0.0, T=1.0)
        with pytest.raises(SolverError, match="CFL"):
            integrate(prob2, grid, graded_mesh(fam2, 0.0, 1.0, 8, kappa=1.0000001), [1.0])

    def test_support_validation_for_x_dependent(self):
        grid = GridSpec(L=8.0, N=128, k=1.0)
        fam = theorem_coefficient(0.0, 1.25, pair=poly_pair(0.5, 0.5), k=1.0)
        f1 = np.ones(grid.N, dtype=complex)  # global support
        prob = CauchyProblem(family=fam, f1=f1, f2=np.zeros_like(f1), t_start=0.0, T=1.0)
        with pytest.raises(SupportError):
            integrate(prob, grid, graded_mesh(fam, 0.0, 1.0, 64), [1.0])

    def test_snapshot_times_are_node_times(self):
        grid = GridSpec(L=np.pi, N=64, k=1.0)
        fam = free_wave(1.0, k=1.0)
        f1 = _band_field(grid)
        prob = CauchyProblem(family=fam, f1=f1, f2=np.zeros_like(f1), t_start=0.0, T=1.0)
        mesh = graded_mesh(fam, 0.0, 1.0, 64)
        traj = integrate(prob, grid, mesh, [0.33, 0.8])
        for t, _, _ in traj.snapshots:
            assert np.min(np.abs(mesh.nodes - t)) == 0.0


class TestExcisionSolve:
    def test_on_off_identical_when_window_empty(self):
        # t_start * Phi_min * k >= 2: the excised symbol equals a on the whole run
        grid = GridSpec(L=np.pi, N=128, k=16.0)
        fam = theorem_coefficient(0.0, 1.25, k=16.0)
        f1 = _band_field(grid)
        f2 = np.zeros_like(f1)
        runs = {}
        for flag in (False, True):
            prob = CauchyProblem(family=fam, f1=f1, f2=f2, t_start=0.5, T=1.0,
                                 use_excision=flag)
            traj = integrate(prob, grid, graded_mesh(fam, 0.5, 1.0, 256), [1.0])
            runs[flag] = traj.snapshots[-1][1]
        assert np.max(np.abs(runs[True] - runs[False])) \
            <= 1e-12 * np.max(np.abs(runs[False]))

    def test_difference_bounded_from_zero_start(self):
        grid = GridSpec(L=np.pi, N=64, k=4.0)
        fam = theorem_coefficient(0.0, 1.25, k=4.0)
        f1 = _band_field(grid)
        f2 = np.zeros_like(f1)
        runs = {}
        for flag in (False, True):
            prob = CauchyProblem(family=fam, f1=f1, f2=f2, t_start=0.0, T=1.0,
                                 use_excision=flag)
            traj = integrate(prob, grid, graded_mesh(fam, 0.0, 1.0, 512), [1.0])
            runs[flag] = traj.snapshots[-1][1]
        diff = l2_norm(grid, runs[True] - runs[False]) / l2_norm(grid, runs[False])
        assert diff <= 1.0

    @pytest.mark.xfail(strict=False, reason=(
        "the integrated excision defect grows like (Phi<xi>_k)^(2-(1-p)/(q-p)) with "
        "positive exponent, so the on/off difference is an O(1)-in-k phase surgery "
        "near t=0, not a quantity that decays monotonically in k"))
    def test_difference_monotone_in_k(self):
        diffs = []
        for k in (4.0, 16.0, 64.0):
            grid = GridSpec(L=np.pi, N=64, k=k)
            fam = theorem_coefficient(0.0, 1.25, k=k)
            f1 = _band_field(grid)
            f2 = np.zeros_like(f1)
            runs = {}
            for flag in (False, True):
                prob = CauchyProblem(family=fam, f1=f1, f2=f2, t_start=0.0, T=1.0,
                                     use_excision=flag)
                traj = integrate(prob, grid, graded_mesh(fam, 0.0, 1.0, 512), [1.0])
                runs[flag] = traj.snapshots[-1][1]
            diffs.append(l2_norm(grid, runs[True] - runs[False])
                         / l2_norm(grid, runs[False]))
        assert diffs[0] >= diffs[1] >= diffs[2]


class TestSystem:
    def test_zero_state_reduces_to_zero(self):
        grid = GridSpec(L=np.pi, N=64, k=2.0)
        fam = reference_wave(k=2.0)
        z = np.zeros(grid.N, dtype=complex)
        prob = CauchyProblem(family=fam, f1=z, f2=z, t_start=0.0, T=1.0)
        u1, u2 = reduce_to_system(0.5, z, z, prob, grid)
        assert np.max(np.abs(u1)) == 0.0 and np.max(np.abs(u2)) == 0.0

    def test_single_mode_reduction(self):
        grid = GridSpec(L=np.pi, N=64, k=2.0)
        fam = reference_wave(k=2.0)
        mode = np.exp(1j * 3 * grid.x)
        vmode = 2j * mode
        prob = CauchyProblem(family=fam, f1=mode, f2=vmode, t_start=0.0, T=1.0)
        u1, _ = reduce_to_system(0.5, mode, vmode, prob, grid)
        expect = vmode + 1j * bracket(3.0, 2.0) * mode
        assert np.max(np.abs(u1 - expect)) <= 1e-12 * np.max(np.abs(expect))

    def test_u2_equals_mu_where_h_vanishes(self):
        grid = GridSpec(L=np.pi, N=64, k=2.0)
        fam = reference_wave(k=2.0)
        mode = np.exp(1j * 3 * grid.x)
        prob = CauchyProblem(family=fam, f1=mode, f2=mode, t_start=0.0, T=1.0)
        # t <xi>_k <= 3 across the active spectrum
        _, u2 = reduce_to_system(0.05, mode, mode, prob, grid)
        assert np.max(np.abs(u2 - bracket(3.0, 2.0) * mode)) <= 1e-12

    def test_residual_second_order_in_snapshot_spacing(self):
        grid = GridSpec(L=np.pi, N=128, k=4.0)
        fam = reference_wave(k=4.0, T=1.0)
        f1 = _band_field(grid)
        f2 = _band_field(grid, 1)
        res = {}
        for M, nsnap in ((256, 17), (512, 33)):
            prob = CauchyProblem(family=fam, f1=f1, f2=f2, t_start=0.0, T=1.0)
            traj = integrate(prob, grid, graded_mesh(fam, 0.0, 1.0, M),
                             np.linspace(0.25, 1.0, nsnap))
            res[M] = system_residual(traj, prob, grid)
        assert res[256] / res[512] >= 3.0

    def test_residual_requires_three_snapshots(self):
        grid = GridSpec(L=np.pi, N=64, k=2.0)
        fam = reference_wave(k=2.0)
        f1 = _band_field(grid)
        prob = CauchyProblem(family=fam, f1=f1, f2=np.zeros_like(f1), t_start=0.0, T=1.0)
        traj = integrate(prob, grid, graded_mesh(fam, 0.0, 1.0, 64), [0.5, 1.0])
        with pytest.raises(ValueError):
            system_residual(traj, prob, grid)

    def test_zero_trajectory_residual_zero(self):
        grid = GridSpec(L=np.pi, N=64, k=2.0)
        fam = reference_wave(k=2.0)
        z = np.zeros(grid.N, dtype=complex)
        prob = CauchyProblem(family=fam, f1=z, f2=z, t_start=0.0, T=1.0)
        traj = integrate(prob, grid, graded_mesh(fam, 0.0, 1.0, 64),
                         np.linspace(0.2, 1.0, 5))
        assert system_residual(traj, prob, grid) == 0.0

    def test_dense_kn_path_matches_multiplier_path(self):
        # x-independent family forced through the dense quantizer must agree
        grid = GridSpec(L=np.pi, N=64, k=4.0)
        fam = reference_wave(k=4.0)
        f1 = _band_field(grid)
        f2 = _band_field(grid, 1)
        prob = CauchyProblem(family=fam, f1=f1, f2=f2, t_start=0.0, T=1.0)
        ops = SystemOperators(prob, grid)
        u1a, u2a = ops.reduce(0.7, f1, f2)
        ops._mult_path = False  # exercise the dense route
        u1b, u2b = ops.reduce(0.7, f1, f2)
        assert np.max(np.abs(u1a - u1b)) <= 1e-10 * np.max(np.abs(u1a))
        assert np.max(np.abs(u2a - u2b)) <= 1e-10 * np.max(np.abs(u2a))
