"""Solver-layer checks: CG, assembly symmetry, manufactured solutions,
the zero-lam kernel pathway, and spec validation.

The manufactured pair u* = cos(pi x_1) cos(pi x_2), F = (2 pi^2 g + lam) u*
happens to sample to an exact generalized eigenvector of the discrete Q1
Neumann pencil on uniform grids, so the discrete solution is a scalar
multiple of u* and both error norms shrink at second order.  Because that
case converges in one CG step, a separate test cross-checks CG against a
sparse direct solve on an oscillating-coefficient problem.
"""

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from perihom.assembly import apply_mass
from perihom.coefficients import checkerboard_coefficient
from perihom.discretization import domain_grid, h1_norm, l2_norm
from perihom.lattice_symbol import scalar_gradient_symbol, unit_lattice
from perihom.solvers import (
    ConfigurationError,
    InvalidKernelError,
    ProblemSpec,
    SolverFailure,
    assemble,
    build_kernel,
    conjugate_gradient,
    solve_lambda0,
    solve_problem,
    solve_spd,
)

OP = scalar_gradient_symbol(2)
LAT = unit_lattice(2)


def manufactured(grid, g0, lam):
    x = grid.nodes()
    ustar = (np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]))[:, None]
    return ustar, (2.0 * np.pi ** 2 * g0 + lam) * ustar


class TestConjugateGradient:
    def test_identity(self):
        A = sp.eye_array(10, format="csr")
        b = np.arange(10.0)
        x, stats = conjugate_gradient(A, b)
        assert stats.converged
        assert np.abs(x - b).max() < 1e-12

    def test_diagonal(self):
        d = np.arange(1.0, 8.0)
        A = sp.diags_array(d, format="csr")
        b = np.ones(7)
        x, stats = conjugate_gradient(A, b)
        assert stats.converged
        assert np.abs(x - 1.0 / d).max() < 1e-12

    def test_random_spd(self):
        rng = np.random.default_rng(4)
        B = rng.standard_normal((30, 30))
        A = sp.csr_array(B @ B.T + 30.0 * np.eye(30))
        b = rng.standard_normal(30)
        x, stats = conjugate_gradient(A, b, tol=1e-12)
        assert np.abs(x - np.linalg.solve(A.toarray(), b)).max() < 1e-9

    def test_zero_rhs(self):
        A = sp.eye_array(5, format="csr")
        x, stats = conjugate_gradient(A, np.zeros(5))
        assert stats.converged and stats.iterations == 0
        assert np.abs(x).max() == 0.0

    def test_iteration_cap_raises(self):
        rng = np.random.default_rng(9)
        B = rng.standard_normal((40, 40))
        A = sp.csr_array(B @ B.T + 40.0 * np.eye(40))
        b = rng.standard_normal(40)
        with pytest.raises(SolverFailure) as info:
            solve_spd(A, b, tol=1e-14, maxiter=2)
        assert info.value.stats.iterations == 2

    def test_projection_confines_iterates(self):
        # singular 1D Neumann stiffness; deflate constants
        N = 20
        main = np.full(N, 2.0)
        main[0] = main[-1] = 1.0
        A = sp.diags_array([-np.ones(N - 1), main, -np.ones(N - 1)],
                           offsets=[-1, 0, 1], format="csr")
        b = np.cos(np.pi * np.arange(N) / (N - 1))
        b -= b.mean()
        proj = lambda v: v - v.mean()
        x, stats = conjugate_gradient(A, b, project=proj)
        assert stats.converged
        assert abs(x.mean()) < 1e-12
        assert np.linalg.norm(A @ x - b) < 1e-9 * np.linalg.norm(b)


class TestAssembly:
    def test_symmetry_random_probes(self):
        grid = domain_grid([1.0, 1.0], 16)
        spec = ProblemSpec(kind="neumann_eps", grid=grid, op=OP,
                           rhs=np.zeros((grid.n_nodes, 1)), lam=1.0,
                           coefficient=checkerboard_coefficient(2), lattice=LAT, eps=0.25)
        A = assemble(spec).matrix
        rng = np.random.default_rng(11)
        for _ in range(10):
            v = rng.standard_normal(A.shape[0])
            w = rng.standard_normal(A.shape[0])
            lhs = float(v @ (A @ w))
            rhs = float(w @ (A @ v))
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)

    def test_constant_identity_acts_as_mass_on_constants(self):
        grid = domain_grid([1.0, 1.0], 8)
        lam = 2.0
        spec = ProblemSpec(kind="neumann_eff", grid=grid, op=OP,
                           rhs=np.zeros((grid.n_nodes, 1)), lam=lam,
                           effective=np.eye(2))
        A = assemble(spec).matrix
        ones = np.ones(grid.n_nodes)
        expected = lam * apply_mass(grid, ones)
        assert np.abs(A @ ones - expected).max() < 1e-13

    def test_rayleigh_coercivity(self):
        # scalar operator: form >= min(gmin, lam) * h1 norm squared, exactly
        grid = domain_grid([1.0, 1.0], 12)
        lam = 0.7
        spec = ProblemSpec(kind="neumann_eps", grid=grid, op=OP,
                           rhs=np.zeros((grid.n_nodes, 1)), lam=lam,
                           coefficient=checkerboard_coefficient(2), lattice=LAT, eps=0.5)
        A = assemble(spec).matrix
        c_lam = min(1.0, lam)
        rng = np.random.default_rng(3)
        for _ in range(50):
            v = rng.standard_normal((grid.n_nodes, 1))
            quad = float(v.ravel() @ (A @ v.ravel()))
            assert quad >= 0.9 * c_lam * h1_norm(grid, v) ** 2


class TestManufactured:
    def test_orders_energy_and_apriori(self):
        g0 = 1.7
        lam = 1.0
        errs_l2, errs_h1 = [], []
        for N in (32, 64, 128):
            grid = domain_grid([1.0, 1.0], N)
            ustar, F = manufactured(grid, g0, lam)
            spec = ProblemSpec(kind="neumann_eff", grid=grid, op=OP, rhs=F,
                               lam=lam, effective=g0 * np.eye(2))
            u, stats, asm = solve_problem(spec)
            errs_l2.append(l2_norm(grid, u - ustar))
            errs_h1.append(h1_norm(grid, u - ustar))
            au = float(u.ravel() @ (asm.matrix @ u.ravel()))
            fu = float(asm.rhs @ u.ravel())
            assert abs(au - fu) <= 1e-8 * abs(fu)
            # solution bound: H1 norm below c_lam^{-1} ||F||_L2 with 5% slack
            c_lam = min(1.0 / (1.0 / g0), lam)
            assert h1_norm(grid, u) <= (1.0 + 0.05) / c_lam * l2_norm(grid, F)
        orders_l2 = np.diff(-np.log2(errs_l2))
        orders_h1 = np.diff(-np.log2(errs_h1))
        assert orders_l2.min() >= 1.9
        assert orders_h1.min() >= 0.9

    def test_zero_rhs_gives_zero(self):
        grid = domain_grid([1.0, 1.0], 8)
        spec = ProblemSpec(kind="neumann_eff", grid=grid, op=OP,
                           rhs=np.zeros((grid.n_nodes, 1)), lam=1.0,
                           effective=np.eye(2))
        u, stats, _ = solve_problem(spec)
        assert np.abs(u).max() == 0.0

    def test_cg_matches_direct_solve(self):
        grid = domain_grid([1.0, 1.0], 32)
        x = grid.nodes()
        F = np.exp(x[:, 0])[:, None] * np.sin(x[:, 1])[:, None]
        spec = ProblemSpec(kind="neumann_eps", grid=grid, op=OP, rhs=F, lam=1.0,
                           coefficient=checkerboard_coefficient(2), lattice=LAT, eps=0.25)
        asm = assemble(spec)
        u, stats, _ = solve_problem(spec, assembled=asm)
        direct = spla.spsolve(sp.csr_matrix(asm.matrix), asm.rhs)
        assert stats.iterations > 10
        assert np.abs(u.ravel() - direct).max() <= 1e-7 * np.abs(direct).max()


class TestLambda0:
    def test_manufactured_and_orthogonality(self):
        g0 = 1.7
        grid = domain_grid([1.0, 1.0], 64)
        x = grid.nodes()
        ustar = np.cos(np.pi * x[:, 0])[:, None]
        F = np.pi ** 2 * g0 * ustar
        spec = ProblemSpec(kind="neumann_eff", grid=grid, op=OP, rhs=F, lam=0.0,
                           effective=g0 * np.eye(2))
        u, stats, asm, kernel = solve_lambda0(spec)
        assert l2_norm(grid, u - ustar) < 5e-4
        z = kernel.fields[0]
        orth = abs(float(np.vdot(apply_mass(grid, u), z)))
        assert orth <= 1e-10 * max(l2_norm(grid, u), 1.0)

    def test_pure_kernel_load_gives_zero(self):
        grid = domain_grid([1.0, 1.0], 16)
        F = np.full((grid.n_nodes, 1), 3.0)
        spec = ProblemSpec(kind="neumann_eff", grid=grid, op=OP, rhs=F, lam=0.0,
                           effective=np.eye(2))
        u, stats, _, _ = solve_lambda0(spec)
        assert np.abs(u).max() < 1e-12

    def test_oscillating_coefficient_zero_mean(self):
        grid = domain_grid([1.0, 1.0], 32)
        x = grid.nodes()
        F = np.sin(2.0 * np.pi * x[:, 0])[:, None]
        spec = ProblemSpec(kind="neumann_eps", grid=grid, op=OP, rhs=F, lam=0.0,
                           coefficient=checkerboard_coefficient(2), lattice=LAT, eps=0.25)
        u, stats, _, _ = solve_lambda0(spec)
        ones = np.ones((grid.n_nodes, 1))
        assert abs(float(np.vdot(apply_mass(grid, u), ones))) <= 1e-10


class TestKernel:
    def test_default_constants_normalized(self):
        grid = domain_grid([2.0, 0.5], 8)
        kernel = build_kernel(OP, grid)
        assert kernel.size == 1
        assert np.abs(kernel.gram - np.eye(1)).max() < 1e-12
        z = kernel.fields[0]
        assert np.abs(z - z[0]).max() == 0.0  # constant

    def test_declared_invalid_rejected(self):
        grid = domain_grid([1.0, 1.0], 8)
        bad = grid.nodes()[:, :1]  # z = x_1, b(D)z clearly nonzero
        with pytest.raises(InvalidKernelError):
            build_kernel(OP, grid, declared=[bad])

    def test_declared_dependent_rejected(self):
        grid = domain_grid([1.0, 1.0], 8)
        z = np.ones((grid.n_nodes, 1))
        with pytest.raises(InvalidKernelError):
            build_kernel(OP, grid, declared=[z, 2.0 * z])


class TestSpecValidation:
    def _rhs(self, grid):
        return np.zeros((grid.n_nodes, 1))

    def test_unknown_kind(self):
        grid = domain_grid([1.0, 1.0], 4)
        with pytest.raises(ConfigurationError):
            ProblemSpec(kind="dirichlet", grid=grid, op=OP, rhs=self._rhs(grid))

    def test_periodic_kind_needs_periodic_grid(self):
        grid = domain_grid([1.0, 1.0], 4)
        with pytest.raises(ConfigurationError):
            ProblemSpec(kind="periodic_eff", grid=grid, op=OP, rhs=self._rhs(grid),
                        lam=1.0, effective=np.eye(2))

    def test_torus_needs_positive_lam(self):
        grid = domain_grid([1.0, 1.0], 4, periodic=True)
        with pytest.raises(ConfigurationError):
            ProblemSpec(kind="periodic_eff", grid=grid, op=OP, rhs=self._rhs(grid),
                        lam=0.0, effective=np.eye(2))

    def test_torus_commensurability(self):
        grid = domain_grid([1.0, 1.0], 8, periodic=True)
        with pytest.raises(ConfigurationError):
            ProblemSpec(kind="periodic_eps", grid=grid, op=OP, rhs=self._rhs(grid),
                        lam=1.0, coefficient=checkerboard_coefficient(2),
                        lattice=LAT, eps=0.3)

    def test_oscillating_needs_scale(self):
        grid = domain_grid([1.0, 1.0], 4)
        with pytest.raises(ConfigurationError):
            ProblemSpec(kind="neumann_eps", grid=grid, op=OP, rhs=self._rhs(grid),
                        lam=1.0, coefficient=checkerboard_coefficient(2))

    def test_lambda0_rejected_by_solve_problem(self):
        grid = domain_grid([1.0, 1.0], 4)
        spec = ProblemSpec(kind="neumann_eff", grid=grid, op=OP, rhs=self._rhs(grid),
                           lam=0.0, effective=np.eye(2))
        with pytest.raises(ConfigurationError):
            solve_problem(spec)
