"""Built-in verification suite: small exact oracles with pass/fail lines."""

import numpy as np

from .approximation import corrector_at, corrector_plain, corrector_smoothed, extend_h2
from .assembly import mass_inner
from .cell_problem import solve_cell_problem
from .coefficients import (
    checkerboard_coefficient,
    constant_coefficient,
    diag_cross_coefficient,
    laminate_coefficient,
    trig_coefficient,
)
from .discretization import (
    apply_symbol_nodal,
    cell_grid,
    domain_grid,
    h1_norm,
    h1_seminorm,
    l2_norm,
)
from .harness import StudyPlan, run_study
from .lattice_symbol import (
    build_lattice,
    check_rank_condition,
    elasticity_2d_symbol,
    scalar_gradient_symbol,
    unit_lattice,
)
from .smoothing import steklov_smooth
from .solvers import ProblemSpec, solve_lambda0, solve_problem


def _check_lattice_duality():
    worst = 0.0
    for basis in (np.eye(2), np.array([[1.0, 0.0], [0.5, 1.0]])):
        lat = build_lattice(basis)
        res = np.abs(lat.dual_basis.T @ lat.basis / (2 * np.pi) - np.eye(2)).max()
        worst = max(worst, res)
    return worst <= 1e-12, f"duality residual {worst:.2e}"


def _check_symbol_ellipticity():
    c1 = check_rank_condition(scalar_gradient_symbol(2))
    c2 = check_rank_condition(elasticity_2d_symbol())
    ok = (
        abs(c1.alpha0 - 1) <= 1e-9
        and abs(c1.alpha1 - 1) <= 1e-9
        and abs(c2.alpha0 - 0.5) <= 1e-9
        and abs(c2.alpha1 - 1.0) <= 1e-9
    )
    return ok, (
        f"gradient [{c1.alpha0:.6f}, {c1.alpha1:.6f}], "
        f"plane strain [{c2.alpha0:.6f}, {c2.alpha1:.6f}]"
    )


def _check_cell_1d_harmonic_mean():
    cell = solve_cell_problem(
        trig_coefficient(1), scalar_gradient_symbol(1), cell_grid(unit_lattice(1), 512)
    )
    err = abs(cell.g_eff[0, 0] - np.sqrt(3.0))
    return err <= 1e-6, f"|g_eff - sqrt(3)| = {err:.2e}"


def _check_cell_laminate():
    cell = solve_cell_problem(
        laminate_coefficient(2),
        scalar_gradient_symbol(2),
        cell_grid(unit_lattice(2), 256),
    )
    err = np.abs(cell.g_eff - np.diag([1.6, 2.5])).max()
    return err <= 1e-4, f"max |g_eff - diag(1.6, 2.5)| = {err:.2e}"


def _check_cell_split_diagonal():
    cell = solve_cell_problem(
        diag_cross_coefficient(), scalar_gradient_symbol(2),
        cell_grid(unit_lattice(2), 64),
    )
    h1 = np.sqrt(cell.corrector_l2**2 + cell.dcorrector_l2**2)
    gap = np.abs(cell.g_eff - cell.g_bar).max()
    return h1 <= 1e-6 and gap <= 1e-6, f"corrector H1 {h1:.2e}, |g_eff - mean| {gap:.2e}"


def _check_mean_bounds_sandwich():
    op = scalar_gradient_symbol(2)
    grid = cell_grid(unit_lattice(2), 32)
    worst = np.inf
    for coef in (
        constant_coefficient(2.0, 2),
        trig_coefficient(2),
        laminate_coefficient(2),
        checkerboard_coefficient(2),
        diag_cross_coefficient(),
    ):
        cell = solve_cell_problem(coef, op, grid)
        upper = np.linalg.eigvalsh(cell.g_bar - cell.g_eff).min()
        lower = np.linalg.eigvalsh(cell.g_eff - cell.g_under).min()
        worst = min(worst, upper, lower)
    return worst >= -1e-8, f"smallest sandwich eigenvalue {worst:.2e}"


def _check_smoothing_contraction():
    lat = unit_lattice(2)
    tor = domain_grid([1.0, 1.0], 32, periodic=True)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        u = rng.standard_normal((tor.n_nodes, 1))
        worst = max(worst, l2_norm(tor, steklov_smooth(tor, u, 1 / 8, lat)) / l2_norm(tor, u))
    t = tor.fractional_nodes()
    aff = (2.0 * t[:, 0] - 0.5 * t[:, 1])[:, None]
    saff = steklov_smooth(tor, aff, 1 / 8, lat)
    mask = np.all((t >= 0.2) & (t <= 0.8), axis=1)
    aff_err = np.abs(saff[mask] - aff[mask]).max()
    ok = worst <= 1 + 1e-10 and aff_err <= 1e-12
    return ok, f"worst ratio {worst:.6f}, affine error {aff_err:.2e}"


def _check_smoothing_deviation_bound():
    lat = unit_lattice(2)
    tor = domain_grid([1.0, 1.0], 64, periodic=True)
    t = tor.fractional_nodes()
    u = (np.sin(2 * np.pi * t[:, 0]) * np.cos(2 * np.pi * t[:, 1]))[:, None]
    eps = 1 / 8
    lhs = l2_norm(tor, steklov_smooth(tor, u, eps, lat) - u)
    rhs = eps * lat.r1 * h1_seminorm(tor, u) + 2 * (1 / 64) ** 2
    return lhs <= rhs, f"deviation {lhs:.4f} within bound {rhs:.4f}"


def _check_solver_orders():
    op = scalar_gradient_symbol(2)
    lam = 1.0
    errs_l2, errs_h1 = [], []
    energy_rel = 0.0
    for n in (32, 64, 128):
        grid = domain_grid([1.0, 1.0], n)
        x = grid.nodes()
        star = (np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]))[:, None]
        rhs = (2 * np.pi**2 + lam) * star
        spec = ProblemSpec(
            kind="neumann_eff", grid=grid, op=op, rhs=rhs, lam=lam, effective=np.eye(2)
        )
        u, stats, asm = solve_problem(spec)
        errs_l2.append(l2_norm(grid, u - star))
        errs_h1.append(h1_norm(grid, u - star))
        uf = u.ravel()
        energy_rel = max(
            energy_rel,
            abs(uf @ (asm.matrix @ uf) - uf @ asm.rhs) / max(abs(uf @ asm.rhs), 1e-30),
        )
    o_l2 = min(np.log2(a / b) for a, b in zip(errs_l2, errs_l2[1:]))
    o_h1 = min(np.log2(a / b) for a, b in zip(errs_h1, errs_h1[1:]))
    ok = o_l2 >= 1.9 and o_h1 >= 0.9 and energy_rel <= 1e-8
    return ok, f"orders L2 {o_l2:.2f}, H1 {o_h1:.2f}, energy residual {energy_rel:.1e}"


def _check_kernel_orthogonality():
    op = scalar_gradient_symbol(2)
    grid = domain_grid([1.0, 1.0], 32)
    x = grid.nodes()
    rhs = np.cos(np.pi * x[:, 0])[:, None]
    spec = ProblemSpec(
        kind="neumann_eff", grid=grid, op=op, rhs=rhs, lam=0.0, effective=np.eye(2)
    )
    u, stats, asm, kernel = solve_lambda0(spec)
    worst = max(abs(mass_inner(grid, u, z)) for z in kernel.fields)
    return worst <= 1e-10, f"kernel inner product {worst:.2e}"


def _check_corrector_identity():
    lat = unit_lattice(1)
    op = scalar_gradient_symbol(1)
    cell = solve_cell_problem(trig_coefficient(1), op, cell_grid(lat, 256))
    tor = domain_grid([1.0], 128, periodic=True)
    x = tor.nodes()[:, 0]
    u0 = np.sin(2 * np.pi * x)[:, None]
    eps = 1 / 8
    v = corrector_smoothed(tor, u0, cell, eps)
    vp = corrector_plain(tor, u0, cell, eps)
    w = apply_symbol_nodal(tor, op, u0)
    sw = steklov_smooth(tor, w, eps, lat)
    lam = corrector_at(cell, tor.nodes(), eps)
    gap = np.abs((vp - v) - eps * np.einsum("pij,pj->pi", lam, w - sw)).max()
    return gap <= 1e-12, f"difference identity residual {gap:.2e}"


def _check_extension_order2():
    grid = domain_grid([1.0, 1.0], 32)
    xy = grid.nodes()
    u = (xy[:, 0] ** 2 + xy[:, 0] * xy[:, 1] - 2 * xy[:, 1] ** 2)[:, None]
    ext = extend_h2(grid, u, 4)
    xye = ext.grid.nodes()
    want = xye[:, 0] ** 2 + xye[:, 0] * xye[:, 1] - 2 * xye[:, 1] ** 2
    err = np.abs(ext.values[:, 0] - want).max()
    return err <= 1e-12, f"quadratic reproduction error {err:.2e}"


def _check_degenerate_study():
    plan = StudyPlan(
        kind="torus",
        coefficient=constant_coefficient(2.0, 2),
        op=scalar_gradient_symbol(2),
        lattice=unit_lattice(2),
        lam=1.0,
        eps_list=(1 / 4, 1 / 8, 1 / 16),
        cell_resolution=8,
        study_id="selftest-degenerate",
    )
    rep = run_study(plan)
    worst = max(max(v) for v in rep.metrics.values())
    return worst <= 1e-9, f"largest metric {worst:.2e}"


CHECKS = (
    ("lattice-duality", _check_lattice_duality),
    ("symbol-ellipticity", _check_symbol_ellipticity),
    ("cell-1d-harmonic-mean", _check_cell_1d_harmonic_mean),
    ("cell-laminate", _check_cell_laminate),
    ("cell-split-diagonal", _check_cell_split_diagonal),
    ("mean-bounds-sandwich", _check_mean_bounds_sandwich),
    ("smoothing-contraction", _check_smoothing_contraction),
    ("smoothing-deviation-bound", _check_smoothing_deviation_bound),
    ("solver-orders", _check_solver_orders),
    ("kernel-orthogonality", _check_kernel_orthogonality),
    ("corrector-identity", _check_corrector_identity),
    ("extension-order2", _check_extension_order2),
    ("degenerate-study", _check_degenerate_study),
)


def run_selftest(stream=None):
    """Run every check; returns (all_passed, result dicts)."""
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append({"name": name, "passed": bool(ok), "detail": detail})
        if stream is not None:
            print(("PASS" if ok else "FAIL") + f" {name}: {detail}", file=stream)
    all_passed = all(r["passed"] for r in results)
    if stream is not None:
        n_ok = sum(r["passed"] for r in results)
        print(
            ("OK" if all_passed else "FAILED") + f" {n_ok}/{len(results)} checks passed",
            file=stream,
        )
    return all_passed, results
