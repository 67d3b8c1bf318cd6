"""Random distortion, hanging nodes and output files.

Builds a perturbed grid, a small polygonal mesh with a hanging node, solves
on both and writes a VTK file that ParaView can open.
"""

from pathlib import Path

from sdg_helmholtz import (
    build_polygonal_mesh,
    build_square_mesh,
    example1,
    perturb_mesh,
    run_solve,
    validate_regularity,
)
from sdg_helmholtz.harness import write_vtk

sol = example1(10.0)

mesh = perturb_mesh(build_square_mesh(16), delta=0.2, seed=1)
print(validate_regularity(mesh, 0.1))
res = run_solve(sol, mesh, 2, n=16)
print(f"distorted grid, P2: |u-uh| = {res.report.err_u_l2:.3e}, |p-ph| = {res.report.err_p_l2:.3e}")

# two cells; the left one carries the right one's midpoint as a hanging node
vertices = [(-0.5, -0.5), (0.0, -0.5), (0.5, -0.5), (0.5, 0.0), (0.5, 0.5),
            (0.0, 0.5), (-0.5, 0.5), (0.0, 0.0)]
cells = [[0, 1, 7, 5, 6], [1, 2, 3, 4, 5, 7]]
poly = build_polygonal_mesh(vertices, cells)
res = run_solve(sol, poly, 3)
print(f"{poly.n_cells} polygons, {poly.n_triangles} triangles, P3: |u-uh| = {res.report.err_u_l2:.3e}")

out = Path("demo_output")  # relative to the working directory
out.mkdir(exist_ok=True)
write_vtk(res, out / "polygons.vtk")
print(f"wrote {out / 'polygons.vtk'}")
