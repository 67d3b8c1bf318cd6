"""Convergence of the staggered DG scheme for a smooth Bessel solution.

u = J_1(kappa r) cos(theta) on (0, 1) x (-0.5, 0.5) with kappa = 10.  Both
u and the flux p = -grad u / (i kappa) should converge at order m + 1.
"""

from sdg_helmholtz import build_square_mesh, compute_rates, example2, run_solve

sol = example2(10.0, 1.0)

for m in (1, 2):
    reports = []
    for n in (4, 8, 16, 32):
        mesh = build_square_mesh(n, sol.domain)
        reports.append(run_solve(sol, mesh, m, n=n).report)
    rec = compute_rates(reports)
    print(f"P{m}")
    print("    h        |u-uh|      rate    |p-ph|      rate")
    for i, r in enumerate(reports):
        ru = rec.rates["err_u_l2"][i]
        rp = rec.rates["err_p_l2"][i]
        print(f"  {r.h:.4f}   {r.err_u_l2:.3e}  {'' if ru is None else f'{ru:5.2f}':>5}"
              f"   {r.err_p_l2:.3e}  {'' if rp is None else f'{rp:5.2f}':>5}")
