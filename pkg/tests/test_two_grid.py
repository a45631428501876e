"""Tests for the two-grid stationary solver and its transient adapter.

Oracles: a direct sparse factorization of the same operator, exact
zero-iteration convergence from the true solution, one-iteration
convergence for right-hand sides inside the coarse range, and the
reporting contract (residual history consistency, non-convergence flag,
bitwise determinism of repeated setups).
"""

import numpy as np
import pytest
import scipy.sparse
import scipy.sparse.linalg

from poroimex import coarse_space as cs
from poroimex import constitutive as con
from poroimex import smoothers as sm
from poroimex import time_integration as ti
from poroimex import two_grid as tg
from poroimex.mesh_fem import BoundaryConfig, build_dofmap, build_mesh

P_DRY = 602700.0
P_WET = 202860.0
GRAVITY = -9.8


def make_split(N=8):
    mesh = build_mesh(N, 10.0)
    vg = con.VanGenuchtenParams(theta_r=0.03, theta_s=0.45, beta=0.01,
                                n_theta=1.6, eta=0.5)
    e_d = np.full(mesh.n_cells, 3e6)
    elast = con.ElasticityParams(nu=0.37, zeta_E=1.5, E_d=e_d, E_w=e_d / 2.0)
    fluid = con.FluidSolidParams(
        rho_w=1000.0, rho_s=2650.0, g_scalar=GRAVITY, g_vec=(0.0, GRAVITY),
        phi=0.45, alpha=0.9, C_w=4.4e-10, C_s=1e-11, mu_w=1e-3,
        k_s=np.full(mesh.n_cells, 3e-9),
    )
    bc = BoundaryConfig(gamma=1e6, p1=P_WET)
    bounds = con.coefficient_bounds(vg, elast, fluid, P_WET, P_DRY)
    return ti.SplitOperators(mesh, vg, elast, fluid, bc, bounds)


def make_problem(N=8, N_H=2, M=2, tau=8640.0):
    """Fixed coupled operator with its coarse space and Vanka geometry."""
    split = make_split(N)
    mesh = split.mesh
    L = ti.coupled_matrix(split.linear, tau, split.alpha)
    basis = cs.build_spectral_basis(mesh, split.bounds, N_H,
                                    M_max_p=M, M_max_u=M)
    prol = cs.assemble_prolongation(basis, M, M)
    coarse = basis.coarse
    dofmap = basis.dofmap
    patches = sm.build_patches(coarse, "cell", o=2, dofmap=dofmap)
    coloring = sm.color_patches(coarse, patches, 4)
    return {
        "split": split, "mesh": mesh, "L": L, "prol": prol,
        "coarse": coarse, "dofmap": dofmap,
        "patches": patches, "coloring": coloring,
    }


def vanka_config(**kw):
    kind = sm.smoother_from_name("VK2", sweeps=3, colors=4)
    return tg.TwoGridConfig(smoother=kind, **kw)


def physical_rhs(prob, seed=0):
    """A right-hand side with the scales of a real transient step."""
    rng = np.random.default_rng(seed)
    n_p = prob["dofmap"].n_pressure
    x = np.concatenate([
        P_DRY + (P_WET - P_DRY) * rng.random(n_p),
        1e-4 * rng.standard_normal(2 * n_p),
    ])
    return prob["L"] @ x, x


class TestConfig:
    def test_validation(self):
        kind = sm.smoother_from_name("gs")
        with pytest.raises(ValueError):
            tg.TwoGridConfig(smoother=kind, rel_tol=0.0)
        with pytest.raises(ValueError):
            tg.TwoGridConfig(smoother=kind, max_iters=0)

    def test_vanka_needs_patches(self):
        prob = make_problem()
        with pytest.raises(ValueError):
            tg.setup_two_grid(prob["L"], prob["prol"], vanka_config())

    def test_prolongation_size_mismatch(self):
        prob = make_problem()
        small = make_problem(N=4, N_H=2, M=1)
        with pytest.raises(ValueError):
            tg.setup_two_grid(small["L"], prob["prol"],
                              vanka_config(), patches=prob["patches"],
                              coloring=prob["coloring"])


class TestSolve:
    def test_matches_direct_factorization(self):
        prob = make_problem()
        solver = tg.setup_two_grid(prob["L"], prob["prol"],
                                   vanka_config(rel_tol=1e-12),
                                   patches=prob["patches"],
                                   coloring=prob["coloring"])
        b, x_star = physical_rhs(prob)
        x, report = solver.solve(b)
        assert report.converged
        x_ref = scipy.sparse.linalg.splu(prob["L"].tocsc()).solve(b)
        assert np.linalg.norm(x - x_ref) <= 1e-8 * np.linalg.norm(x_ref)

    def test_report_residuals_consistent(self):
        prob = make_problem()
        solver = tg.setup_two_grid(prob["L"], prob["prol"], vanka_config(),
                                   patches=prob["patches"],
                                   coloring=prob["coloring"])
        b, _ = physical_rhs(prob)
        x, report = solver.solve(b)
        assert len(report.residuals) == report.iterations + 1
        # the last history entry is the scaled residual of the returned x
        y = x / solver.scale
        b_s = solver.scale * b
        final = np.linalg.norm(b_s - solver.matrix @ y)
        assert abs(final - report.residuals[-1]) <= 1e-12 * (1.0 + final)
        assert report.residuals[-1] <= 1e-8 * np.linalg.norm(b_s)

    def test_exact_initial_guess_converges_immediately(self):
        prob = make_problem()
        solver = tg.setup_two_grid(prob["L"], prob["prol"], vanka_config(),
                                   patches=prob["patches"],
                                   coloring=prob["coloring"])
        b, _ = physical_rhs(prob, seed=3)
        x_ref = scipy.sparse.linalg.splu(prob["L"].tocsc()).solve(b)
        x, report = solver.solve(b, x0=x_ref)
        assert report.iterations == 0
        assert report.converged
        assert np.array_equal(report.residuals.shape, (1,))

    def test_coarse_range_rhs_needs_one_iteration(self):
        prob = make_problem()
        solver = tg.setup_two_grid(prob["L"], prob["prol"], vanka_config(),
                                   patches=prob["patches"],
                                   coloring=prob["coloring"])
        rng = np.random.default_rng(7)
        P = prob["prol"].block().to_scipy()
        b = prob["L"] @ (P @ rng.standard_normal(P.shape[1]))
        _, report = solver.solve(b)
        assert report.converged
        assert report.iterations == 1

    def test_nonconvergence_reported_not_raised(self):
        prob = make_problem()
        kind = sm.SmootherKind("jacobi", damping=1.0)
        solver = tg.setup_two_grid(
            prob["L"], prob["prol"],
            tg.TwoGridConfig(smoother=kind, max_iters=5),
        )
        b, _ = physical_rhs(prob)
        _, report = solver.solve(b)
        assert not report.converged
        assert report.iterations == 5
        assert len(report.residuals) == 6

    def test_identity_rows_solved_exactly(self):
        prob = make_problem()
        solver = tg.setup_two_grid(prob["L"], prob["prol"], vanka_config(),
                                   patches=prob["patches"],
                                   coloring=prob["coloring"])
        rng = np.random.default_rng(1)
        b = rng.standard_normal(prob["L"].shape[0])
        x, _ = solver.solve(b)
        n_p = prob["dofmap"].n_pressure
        pinned = n_p + np.flatnonzero(prob["dofmap"].u_constrained)
        assert np.allclose(x[pinned], b[pinned], rtol=0, atol=1e-13)

    def test_determinism_across_setups(self):
        histories = []
        for _ in range(2):
            prob = make_problem()
            solver = tg.setup_two_grid(prob["L"], prob["prol"],
                                       vanka_config(),
                                       patches=prob["patches"],
                                       coloring=prob["coloring"])
            b, _ = physical_rhs(prob, seed=12)
            _, report = solver.solve(b)
            histories.append(report.residuals)
        assert np.array_equal(histories[0], histories[1])

    def test_warm_start_reuses_previous_iterate(self):
        prob = make_problem()
        solver = tg.setup_two_grid(prob["L"], prob["prol"],
                                   vanka_config(warm_start=True),
                                   patches=prob["patches"],
                                   coloring=prob["coloring"])
        b, _ = physical_rhs(prob)
        _, first = solver.solve(b)
        _, second = solver.solve(b)
        assert first.iterations >= 1
        assert second.iterations == 0

    def test_wrong_rhs_length(self):
        prob = make_problem()
        solver = tg.setup_two_grid(prob["L"], prob["prol"], vanka_config(),
                                   patches=prob["patches"],
                                   coloring=prob["coloring"])
        with pytest.raises(ValueError):
            solver.solve(np.ones(7))

    def test_setup_count_and_operator_kept(self):
        prob = make_problem()
        solver = tg.setup_two_grid(prob["L"], prob["prol"], vanka_config(),
                                   patches=prob["patches"],
                                   coloring=prob["coloring"])
        assert solver.setup_count == 1
        assert (solver.operator - prob["L"]).nnz == 0

    def test_report_json_roundtrip(self):
        report = tg.SolveReport(
            iterations=2, residuals=np.array([1.0, 0.1, 0.001]),
            converged=True, setup_seconds=0.5, solve_seconds=0.25,
        )
        d = report.to_json_dict()
        assert d == {
            "iterations": 2, "residuals": [1.0, 0.1, 0.001],
            "converged": True, "setup_seconds": 0.5, "solve_seconds": 0.25,
        }
        assert isinstance(d["iterations"], int)
        assert isinstance(d["converged"], bool)


class TestStepwiseImexSolver:
    def run_pair(self, n_t=4):
        grid = ti.TimeGrid(t_end=17280.0, n_steps=n_t)
        split_ref = make_split()
        p0 = np.full(split_ref.n_pressure, P_DRY)
        p0[split_ref.mesh.boundary_vertices("top")] = P_WET
        u0 = ti.initial_displacement(split_ref, p0)
        ref = ti.run_transient(split_ref, grid, "imex", p0, u0=u0)

        prob = make_problem()
        factory = tg.StepwiseImexSolver(
            prob["prol"], vanka_config(),
            patches=prob["patches"], coloring=prob["coloring"],
            x0=np.concatenate([p0, u0]),
        )
        got = ti.run_transient(prob["split"], grid, "imex", p0, u0=u0,
                               imex_solver_factory=factory)
        return ref, got, factory, n_t

    def test_reproduces_direct_trajectory(self):
        ref, got, factory, n_t = self.run_pair()
        assert ti.relative_l2(got.p, ref.p) <= 1e-6
        assert ti.relative_l2(got.u, ref.u) <= 1e-6

    def test_instrumentation(self):
        ref, got, factory, n_t = self.run_pair()
        assert factory.factory_calls == 1
        assert factory.solver.setup_count == 1
        # the first step bootstraps semi-implicitly outside the fixed system
        assert len(factory.reports) == n_t - 1
        assert all(r.converged for r in factory.reports)

    def test_on_report_callback_propagates(self):
        class Abort(RuntimeError):
            pass

        grid = ti.TimeGrid(t_end=17280.0, n_steps=3)
        prob = make_problem()
        p0 = np.full(prob["split"].n_pressure, P_DRY)
        p0[prob["mesh"].boundary_vertices("top")] = P_WET
        u0 = ti.initial_displacement(prob["split"], p0)
        factory = tg.StepwiseImexSolver(
            prob["prol"], vanka_config(),
            patches=prob["patches"], coloring=prob["coloring"],
            x0=np.concatenate([p0, u0]),
        )

        def boom(report):
            raise Abort()

        factory.on_report = boom
        with pytest.raises(Abort):
            ti.run_transient(prob["split"], grid, "imex", p0, u0=u0,
                             imex_solver_factory=factory)

    def test_runs_without_baseline(self):
        grid = ti.TimeGrid(t_end=17280.0, n_steps=3)
        prob = make_problem()
        p0 = np.full(prob["split"].n_pressure, P_DRY)
        p0[prob["mesh"].boundary_vertices("top")] = P_WET
        factory = tg.StepwiseImexSolver(
            prob["prol"], vanka_config(),
            patches=prob["patches"], coloring=prob["coloring"],
        )
        result = ti.run_transient(prob["split"], grid, "imex", p0,
                                  imex_solver_factory=factory)
        assert np.all(np.isfinite(result.p))
        assert np.all(np.isfinite(result.u))
        assert len(factory.reports) == 2
