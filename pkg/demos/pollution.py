"""Pollution at high wave number.

The radial test problem with kappa = 50: on coarse grids (kappa h well above
1) the discrete solution carries an error as large as the solution itself,
and the expected second-order rate only appears once kappa h is small.
"""

import numpy as np

from sdg_helmholtz import FieldVector, build_square_mesh, example1, l2_error, run_solve

kappa = 50.0
sol = example1(kappa)

prev = None
for n in (4, 8, 16, 32, 64):
    res = run_solve(sol, build_square_mesh(n), 1, n=n)
    err = res.report.err_u_l2
    size = l2_error(FieldVector(res.u_h.space, np.zeros(res.u_h.space.ndof)), sol.u)
    rate = "" if prev is None else f"rate {np.log2(prev / err):.2f}"
    print(f"kappa h = {kappa * res.report.h:6.2f}   relative error {err / size:.3f}   {rate}")
    prev = err
