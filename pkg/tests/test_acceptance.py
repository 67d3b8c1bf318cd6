"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Reference values for the convergence tables come from the published tables
for Example 2 (kappa = 10, h = 1/2 ... 1/64).  Run with ``pytest -s`` to see
the lines inline; they are also repeated in the terminal summary.
"""

import math
from functools import lru_cache

import numpy as np
import pytest

from oracle import bh_star_value, bh_value
from sdg_helmholtz.analytic import bessel_j, example1, example2, polynomial_solution
from sdg_helmholtz.assembly import (
    assemble_bh,
    assemble_bh_star,
    assemble_boundary_load,
    assemble_loads,
    assemble_operators,
    assemble_volume_load,
    build_elliptic_projection_system,
    build_helmholtz_system,
)
from sdg_helmholtz.harness import make_mesh, run_solve
from sdg_helmholtz.mesh import build_square_mesh, perturb_mesh
from sdg_helmholtz.polyquad import composite_level_for
from sdg_helmholtz.solver import solve_condensed, solve_direct
from sdg_helmholtz.spaces import FieldVector, build_scalar_space, build_vector_space
from sdg_helmholtz.verify import compute_rates, l2_error, project_Ih, project_Jh

pytestmark = pytest.mark.acceptance

KAPPA = 10.0
LEVELS = (2, 4, 8, 16, 32, 64)
PERTURBED = "perturbed:0.2:1"

# (m, quantity) -> errors at h = 1/2 ... 1/64
TABLE1 = {
    (1, "u"): [1.72e-1, 3.91e-2, 1.07e-2, 2.70e-3, 6.82e-4, 1.70e-4],
    (1, "p"): [1.65e-1, 4.43e-2, 1.18e-2, 3.00e-3, 7.58e-4, 1.90e-4],
    (2, "u"): [4.19e-2, 5.60e-3, 7.46e-4, 9.49e-5, 1.19e-5, 1.49e-6],
    (2, "p"): [4.78e-2, 5.30e-3, 6.17e-4, 7.42e-5, 9.13e-6, 1.13e-6],
}


@lru_cache(maxsize=None)
def study(example, xi, kappa, m, grid, levels):
    """Condensed solves cross-checked against direct LU at every level."""
    sol = example2(kappa, xi) if example == "ex2" else example1(kappa)
    results = [run_solve(sol, make_mesh(grid, n, sol.domain), m, solver="both", n=n) for n in levels]
    return results, compute_rates([r.report for r in results])


def table_study(xi, m, grid="square"):
    return study("ex2", xi, KAPPA, m, grid, LEVELS)


def all_studies():
    out = []
    for grid in ("square", PERTURBED):
        for m in (1, 2):
            out.append(table_study(1.0, m, grid))
    for xi in (1.5, 2.0 / 3.0):
        for m in (1, 2):
            out.append(table_study(xi, m))
    out.append(pollution_study())
    return out


def pollution_study():
    return study("ex1", None, 50.0, 1, "square", (4, 8, 16, 32, 64, 128))


def final_rates(rec, quantity, count=1):
    return rec.rates[quantity][-count:]


def fmt(values):
    return "[" + ", ".join(f"{v:.3f}" for v in values) + "]"


# ---------------------------------------------------------------------------


def test_criterion_01_structural_identities(criterion):
    adj = 0.0
    orth = 0.0
    rng = np.random.default_rng(0)
    for delta in (0.0, 0.2):
        mesh = perturb_mesh(build_square_mesh(4), delta, seed=2)
        for m in (0, 1, 2, 3, 4):
            S, V = build_scalar_space(mesh, m), build_vector_space(mesh, m)
            B, Bs = assemble_bh(S, V), assemble_bh_star(S, V)
            adj = max(adj, abs(B - Bs.T).max() / abs(B).max())
            if delta == 0.0 or m == 0 or m == 4:
                continue
            u = lambda x, y: np.exp(x) * np.sin(3 * x + 1) * np.cos(2 * y) + 1j * np.cos(x * y)
            p = lambda x, y: np.stack([np.sin(2 * y) * np.exp(x), np.cos(3 * x - y) - 1j * y], axis=-1)
            ihu = project_Ih(u, S, level=2).coefficients
            jhp = project_Jh(p, V, level=2).coefficients
            for _ in range(30):
                q = rng.standard_normal(V.ndof)
                v = rng.standard_normal(S.ndof)
                e9 = abs(bh_star_value(mesh, S, V, u, q) - q @ (Bs @ ihu)) / (
                    np.linalg.norm(q) * np.linalg.norm(ihu))
                e8 = abs(bh_value(mesh, S, V, p, v) - v @ (B @ jhp)) / (
                    np.linalg.norm(v) * np.linalg.norm(jhp))
                orth = max(orth, e8, e9)
    energy = max(max(r.energy["re_rel"], r.energy["im_rel"])
                 for results, _ in all_studies() for r in results)
    ok = adj <= 1e-12 and orth <= 1e-10 and energy <= 1e-9
    criterion(1, ok, f"adjoint {adj:.1e} (<=1e-12), orthogonality {orth:.1e} (<=1e-10), "
                     f"energy identities {energy:.1e} (<=1e-9) over every acceptance solve")


def test_criterion_02_patch_test(criterion):
    from test_assembly import polynomial_case

    worst = 0.0
    for delta in (0.0, 0.2):
        mesh = perturb_mesh(build_square_mesh(4), delta, seed=3)
        for m in (1, 2, 3):
            S, V = build_scalar_space(mesh, m), build_vector_space(mesh, m)
            sol = polynomial_case(m)
            ops = assemble_loads(assemble_operators(S, V), sol)
            x = solve_condensed(ops, KAPPA).solution
            eu = l2_error(FieldVector(S, x[V.ndof:]), sol.u)
            ep = l2_error(FieldVector(V, x[: V.ndof]), sol.p)
            worst = max(worst, eu, ep)
    criterion(2, worst <= 1e-9, f"max polynomial-solution error {worst:.1e} (<=1e-9), m=1,2,3, square+perturbed")


def check_table1(grid, widen):
    msgs, ok = [], True
    spec = {(1, "u"): (2, 0.1), (1, "p"): (2, 0.1), (2, "u"): (3, 0.1), (2, "p"): (3, 0.15)}
    worst_factor = 1.0
    for m in (1, 2):
        results, rec = table_study(1.0, m, grid)
        for qty, key in (("u", "err_u_l2"), ("p", "err_p_l2")):
            target, tol = spec[m, qty]
            rates = final_rates(rec, key, 3)
            good = all(abs(r - target) <= tol + widen for r in rates)
            ok &= good
            msgs.append(f"P{m} {qty} {fmt(rates)}")
            if not widen:
                errs = [getattr(r.report, key) for r in results]
                factors = [max(e / t, t / e) for e, t in zip(errs, TABLE1[m, qty])]
                worst_factor = max(worst_factor, max(factors))
    if not widen:
        ok &= worst_factor <= 2.0
        msgs.append(f"worst magnitude factor vs table {worst_factor:.2f} (<=2)")
    return ok, "; ".join(msgs)


def test_criterion_03_regular_solution_table(criterion):
    ok, detail = check_table1("square", 0.0)
    criterion(3, ok, "xi=1 finest three rates " + detail)


def test_criterion_04_xi_three_halves(criterion):
    rates = {m: final_rates(table_study(1.5, m)[1], "err_u_l2")[0] for m in (1, 2)}
    ok = all(1.35 <= r <= 1.75 for r in rates.values())
    criterion(4, ok, f"xi=3/2 final u-rates P1 {rates[1]:.3f}, P2 {rates[2]:.3f} (need [1.35, 1.75])")


def test_criterion_05_xi_two_thirds(criterion):
    r1 = table_study(2.0 / 3.0, 1)[1]
    r2 = table_study(2.0 / 3.0, 2)[1]
    u1 = final_rates(r1, "err_u_l2")[0]
    p1 = final_rates(r1, "err_p_l2")[0]
    u2 = final_rates(r2, "err_u_l2")[0]
    ok = 0.55 <= u1 <= 0.85 and 0.40 <= p1 <= 0.70 and 1.15 <= u2 <= 1.50
    criterion(5, ok, f"xi=2/3 final rates P1 u {u1:.3f} [0.55,0.85], P1 p {p1:.3f} [0.40,0.70], "
                     f"P2 u {u2:.3f} [1.15,1.50]")


def test_criterion_06_pollution(criterion):
    results, rec = pollution_study()
    kappa = 50.0
    sol = example1(kappa)
    rows = []
    coarse_ok = True
    rate_ok = None
    for i, res in enumerate(results):
        kh = kappa * res.report.h
        rel = res.report.err_u_l2 / l2_error(FieldVector(res.u_h.space, 0 * res.u_h.coefficients), sol.u)
        rows.append(f"kh={kh:.2f} rel={rel:.2f}")
        if kh >= 2.0:
            coarse_ok &= 0.3 <= rel <= 3.0
        rate = rec.rates["err_u_l2"][i]
        if kh <= 0.5 and rate is not None:
            rate_ok = (rate_ok is not False) and rate >= 1.8
            rows[-1] += f" rate={rate:.3f}"
    ok = coarse_ok and bool(rate_ok)
    criterion(6, ok, "ex1 kappa=50 P1 relative u-errors in [0.3, 3] for kh>=2, rate>=1.8 once kh<=0.5: "
                     + ", ".join(rows))


def test_criterion_07_distorted_grids(criterion):
    ok, detail = check_table1(PERTURBED, 0.1)
    criterion(7, ok, f"xi=1 on {PERTURBED} finest three rates (tolerances +0.1) " + detail)


def test_criterion_08_elliptic_projection(criterion):
    sol = example1(KAPPA)
    ratios = []
    cross = 0.0
    for n in (4, 8, 16, 32):
        mesh = build_square_mesh(n)
        S, V = build_scalar_space(mesh, 1), build_vector_space(mesh, 1)
        ops = assemble_operators(S, V)
        level = composite_level_for(KAPPA, mesh.h)
        rhs = (assemble_volume_load(S, sol.div_p, level=level)
               + assemble_boundary_load(S, sol.boundary_datum, level=level))
        rep = solve_condensed(ops, KAPPA, rhs=rhs, volume=False)
        direct = solve_direct(build_elliptic_projection_system(ops, KAPPA, "+", rhs=rhs))
        cross = max(cross, np.linalg.norm(rep.solution - direct.solution) / np.linalg.norm(direct.solution))
        U = rep.solution[V.ndof:]
        ihu = project_Ih(sol.u, S, level=level).coefficients
        jhp = project_Jh(sol.p, V, level=level)
        num = l2_error(FieldVector(S, ihu - U), level=level)
        den = l2_error(jhp, sol.p, level=level)
        ratios.append(num / den)
    slopes = [math.log2(a / b) for a, b in zip(ratios, ratios[1:])]
    ok = all(s >= 0.9 for s in slopes) and cross <= 1e-8
    criterion(8, ok, f"|I_h u - u_h+| / |p - J_h p| slopes {fmt(slopes)} (>=0.9); "
                     f"projection direct vs condensed {cross:.1e}")


def test_criterion_09_solver_cross_validation(criterion):
    diff = resid = 0.0
    count = 0
    for results, _ in all_studies():
        for r in results:
            diff = max(diff, r.report.extra["direct_rel_diff"])
            resid = max(resid, r.report.resid, r.report.extra["direct_residual"])
            count += 1
    ok = diff <= 1e-8 and resid <= 1e-10
    criterion(9, ok, f"{count} fixtures: max direct/condensed difference {diff:.1e} (<=1e-8), "
                     f"max relative residual {resid:.1e} (<=1e-10)")


def test_criterion_10_special_functions(criterion):
    import mpmath

    xs = np.unique(np.concatenate([np.linspace(0.0, 500.0, 1001), [0.1, 1.0, 10.0, 100.0]]))
    worst = 0.0
    with mpmath.workdps(40):
        for nu in (0.0, 1.0, 0.5, 2.0 / 3.0, 1.5):
            ref = np.array([float(mpmath.besselj(mpmath.mpf(nu), mpmath.mpf(x))) for x in xs])
            got = bessel_j(nu, xs)
            nz = ref != 0
            if np.any(got[~nz] != 0):
                worst = np.inf
            worst = max(worst, np.max(np.abs(got[nz] - ref[nz]) / np.abs(ref[nz])))
    closed = max(abs(bessel_j(0.5, np.pi / 2) - 2 / np.pi), abs(bessel_j(1.5, np.pi) - math.sqrt(2) / np.pi))
    ok = worst <= 1e-10 and closed <= 1e-12
    criterion(10, ok, f"max relative error {worst:.1e} on orders 0,1,1/2,2/3,3/2 x [0,500] (<=1e-10); "
                      f"closed forms {closed:.1e} (<=1e-12)")
