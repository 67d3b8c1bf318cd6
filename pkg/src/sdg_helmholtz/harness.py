"""Solve and convergence-study drivers plus the command-line interface.

    python -m sdg_helmholtz convergence --example ex2 --xi 1 --kappa 10 \\
        --order 1,2 --levels 2:64 --out results/
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .analytic import ManufacturedSolution, example1, example2
from .assembly import assemble_loads, assemble_operators, build_helmholtz_system
from .mesh import MeshError, StaggeredMesh, build_square_mesh, perturb_mesh, read_mesh, write_mesh
from .polyquad import composite_level_for
from .solver import SolverError, solve_condensed, solve_direct
from .spaces import FieldVector, build_scalar_space, build_vector_space, evaluate_reference
from .verify import ErrorReport, compute_rates, l2_error, project_Ih

log = logging.getLogger(__name__)

CSV_FIELDS = ["example", "xi", "kappa", "m", "n", "h", "dof_u", "dof_p", "err_u_l2",
              "err_p_l2", "rate_u", "rate_p", "resid", "wall_ms"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    example: str = "ex2"
    xi: float | None = 1.0
    kappas: list = field(default_factory=lambda: [10.0])
    orders: list = field(default_factory=lambda: [1])
    grid: str = "square"
    levels: tuple = (2, 16)
    out: Path | None = None
    quad_level: int = 0
    solver: str = "condensed"
    seed: int = 0
    graded_loads: bool = False

    def __post_init__(self):
        if self.example not in ("ex1", "ex2"):
            raise ConfigError(f"unknown example {self.example!r}")
        if self.example == "ex2" and (self.xi is None or self.xi <= 0):
            raise ConfigError("ex2 needs a positive xi")
        if not self.kappas or any(k <= 0 for k in self.kappas):
            raise ConfigError("kappa must be positive")
        if any(not 0 <= m <= 4 for m in self.orders):
            raise ConfigError("order must lie in [0, 4]")
        n0, n1 = self.levels
        if n0 < 1 or n1 < n0:
            raise ConfigError("levels must satisfy 1 <= n0 <= n1")
        if self.solver not in ("direct", "condensed", "both"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        parse_grid(self.grid)

    @property
    def level_list(self) -> list[int]:
        n0, n1 = self.levels
        out = []
        n = n0
        while n <= n1:
            out.append(n)
            n *= 2
        return out


def parse_grid(grid_str: str) -> tuple:
    kind, _, rest = grid_str.partition(":")
    if kind == "square" and not rest:
        return ("square",)
    if kind == "perturbed":
        parts = rest.split(":")
        try:
            delta = float(parts[0]) if parts[0] else 0.2
            seed = int(parts[1]) if len(parts) > 1 and parts[1] else 0
        except ValueError as exc:
            raise ConfigError(f"bad grid string {grid_str!r}") from exc
        if not 0 <= delta < 0.5:
            raise ConfigError("perturbation delta must lie in [0, 0.5)")
        return ("perturbed", delta, seed)
    if kind == "file" and rest:
        return ("file", rest)
    raise ConfigError(f"bad grid string {grid_str!r}")


def parse_number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def make_solution(example: str, kappa: float, xi: float | None = None) -> ManufacturedSolution:
    if example == "ex1":
        return example1(kappa)
    if example == "ex2":
        return example2(kappa, xi)
    raise ConfigError(f"unknown example {example!r}")


def make_mesh(grid: str, n: int, domain) -> StaggeredMesh:
    grid_str = parse_grid(grid)
    if grid_str[0] == "file":
        return read_mesh(grid_str[1])
    x0, x1, y0, y1 = domain
    nx = max(1, int(round(n * (x1 - x0))))
    ny = max(1, int(round(n * (y1 - y0))))
    mesh = build_square_mesh(nx, domain, ny=ny)
    if grid_str[0] == "perturbed":
        mesh = perturb_mesh(mesh, grid_str[1], grid_str[2])
    return mesh


# ---------------------------------------------------------------------------
# single solve


@dataclass
class SolveResult:
    report: ErrorReport
    mesh: StaggeredMesh
    u_h: FieldVector
    p_h: FieldVector
    energy: dict


def energy_identities(ops, kappa: float, P, U) -> dict:
    """Residuals of Re/Im parts of U^H (F + G) = |u|_bdry^2 - i kappa |p|^2 + i kappa |u|^2."""
    load = np.vdot(U, ops.rhs)
    bnd = float(np.real(np.vdot(U, ops.R @ U)))
    uu = float(np.real(np.vdot(U, ops.M_u @ U)))
    pp = float(np.real(np.vdot(P, ops.M_p @ P)))
    im_rhs = kappa * (uu - pp)
    scale_re = max(abs(load.real), bnd, 1e-300)
    scale_im = max(abs(load.imag), kappa * uu, kappa * pp, 1e-300)
    return {
        "re_lhs": float(load.real), "re_rhs": bnd,
        "im_lhs": float(load.imag), "im_rhs": im_rhs,
        "re_rel": abs(load.real - bnd) / scale_re,
        "im_rel": abs(load.imag - im_rhs) / scale_im,
    }


def run_solve(solution: ManufacturedSolution, mesh: StaggeredMesh, m: int, solver: str = "condensed",
              quad_level: int = 0, n: int = 0, graded_loads: bool = False) -> SolveResult:
    """Assemble, solve and measure errors for one (mesh, m, kappa) case.

    ``solver`` is "condensed", "direct" or "both" (condensed, checked against
    direct; the relative difference lands in ``report.extra``).

    Error norms always refine toward ``solution.singular_point``; the loads
    only do so with ``graded_loads``.
    """
    t0 = time.perf_counter()
    kappa = solution.kappa
    S = build_scalar_space(mesh, m)
    V = build_vector_space(mesh, m)
    level = composite_level_for(kappa, mesh.h) + quad_level
    ops = assemble_loads(assemble_operators(S, V), solution, level=level, graded=graded_loads)
    if solver == "direct":
        rep = solve_direct(build_helmholtz_system(ops, kappa))
    else:
        rep = solve_condensed(ops, kappa)
    if solver == "both":
        # cross-check the condensed solve against LU on the full system
        ref = solve_direct(build_helmholtz_system(ops, kappa))
        scale = max(np.linalg.norm(ref.solution), 1e-300)
        rep.stats["direct_rel_diff"] = float(np.linalg.norm(rep.solution - ref.solution) / scale)
        rep.stats["direct_residual"] = ref.residual
    P, U = rep.solution[: V.ndof], rep.solution[V.ndof:]
    u_h, p_h = FieldVector(S, U), FieldVector(V, P)
    sing = solution.singular_point
    err_u = l2_error(u_h, solution.u, level=level, singular_point=sing)
    err_p = l2_error(p_h, solution.p, level=level, singular_point=sing)
    ihu = project_Ih(solution.u, S, level=level, singular_point=sing)
    err_ihu = l2_error(FieldVector(S, ihu.coefficients - U), level=level)
    wall = (time.perf_counter() - t0) * 1e3
    energy = energy_identities(ops, kappa, P, U)
    report = ErrorReport(err_u, err_p, err_ihu, S.ndof, V.ndof, mesh.h, kappa, m, n=n,
                         resid=rep.residual, wall_ms=wall, extra={"energy": energy, **rep.stats})
    log.info("m=%d n=%d h=%.4g |u-uh|=%.3e |p-ph|=%.3e resid=%.1e", m, n, mesh.h, err_u, err_p,
             rep.residual)
    return SolveResult(report, mesh, u_h, p_h, energy)


# ---------------------------------------------------------------------------
# output


def write_vtk(result: SolveResult, path) -> None:
    """Legacy VTK unstructured grid, one cell per triangle, fields at its corners."""
    mesh = result.mesh
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    u = evaluate_reference(result.u_h.space, result.u_h.coefficients, ref)
    p = evaluate_reference(result.p_h.space, result.p_h.coefficients, ref)
    pts = mesh.tri_coords.reshape(-1, 2)
    nt = mesh.n_triangles
    buf = io.StringIO()
    buf.write("# vtk DataFile Version 3.0\nstaggered DG Helmholtz solution\nASCII\n")
    buf.write("DATASET UNSTRUCTURED_GRID\n")
    buf.write(f"POINTS {len(pts)} double\n")
    np.savetxt(buf, np.column_stack([pts, np.zeros(len(pts))]), fmt="%.17g")
    buf.write(f"CELLS {nt} {4 * nt}\n")
    np.savetxt(buf, np.column_stack([np.full(nt, 3), np.arange(3 * nt).reshape(nt, 3)]), fmt="%d")
    buf.write(f"CELL_TYPES {nt}\n")
    np.savetxt(buf, np.full(nt, 5), fmt="%d")
    buf.write(f"POINT_DATA {len(pts)}\n")
    for name, vals in (("re_u", u.real), ("im_u", u.imag), ("abs_p", np.linalg.norm(p, axis=-1))):
        buf.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        np.savetxt(buf, vals.reshape(-1), fmt="%.10g")
    Path(path).write_text(buf.getvalue())


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.6g}"


def csv_rows(example: str, xi, record) -> list[dict]:
    rows = []
    for i, r in enumerate(record.levels):
        rows.append({
            "example": example,
            "xi": "" if xi is None else _fmt(xi),
            "kappa": _fmt(r.kappa),
            "m": str(r.m),
            "n": str(r.n),
            "h": _fmt(r.h),
            "dof_u": str(r.dof_u),
            "dof_p": str(r.dof_p),
            "err_u_l2": _fmt(r.err_u_l2),
            "err_p_l2": _fmt(r.err_p_l2),
            "rate_u": _fmt(record.rates["err_u_l2"][i]),
            "rate_p": _fmt(record.rates["err_p_l2"][i]),
            "resid": _fmt(r.resid),
            "wall_ms": _fmt(r.wall_ms),
        })
    return rows


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def plot_convergence(records: dict, path) -> None:
    """Static log-log SVG: errors against h (left) and against total DOFs (right)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for (kappa, m), rec in records.items():
        h = [r.h for r in rec.levels]
        dofs = [r.dof_u + r.dof_p for r in rec.levels]
        for key, style in (("err_u_l2", "-o"), ("err_p_l2", "--s")):
            e = [getattr(r, key) for r in rec.levels]
            label = f"k={kappa:g} P{m} {'u' if key == 'err_u_l2' else 'p'}"
            axes[0].loglog(h, e, style, label=label)
            axes[1].loglog(dofs, e, style, label=label)
    axes[0].set_xlabel("h")
    axes[1].set_xlabel("degrees of freedom")
    for ax in axes:
        ax.set_ylabel("L2 error")
        ax.grid(True, which="both", alpha=0.3)
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    # fixed salt and no date keep the SVG byte-identical across runs
    with plt.rc_context({"svg.hashsalt": "sdg-helmholtz"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# convergence study


def run_convergence(config: StudyConfig, plot: bool = True) -> dict:
    """Run every (kappa, m) over the level list; returns {(kappa, m): ConvergenceRecord}."""
    records = {}
    rows = []
    grid = parse_grid(config.grid)
    for kappa in config.kappas:
        sol = make_solution(config.example, kappa, config.xi)
        for m in config.orders:
            levels = []
            for n in ([0] if grid[0] == "file" else config.level_list):
                mesh = make_mesh(config.grid, n, sol.domain)
                res = run_solve(sol, mesh, m, config.solver, config.quad_level, n=n,
                                graded_loads=config.graded_loads)
                levels.append(res.report)
            rec = compute_rates(levels)
            records[kappa, m] = rec
            rows.extend(csv_rows(config.example, config.xi if config.example == "ex2" else None, rec))
    if config.out is not None:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(rows, out / "convergence.csv")
        if plot:
            plot_convergence(records, out / "convergence.svg")
    return records


# ---------------------------------------------------------------------------
# CLI


def _list(text: str, conv=float) -> list:
    return [conv(parse_number(t)) if conv is float else conv(t) for t in text.split(",") if t]


def _levels(text: str) -> tuple:
    a, _, b = text.partition(":")
    try:
        n0 = int(a)
        n1 = int(b) if b else n0
    except ValueError as exc:
        raise ConfigError(f"bad levels {text!r}") from exc
    return n0, n1


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors (exit 1), not argparse's exit 2
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sdg_helmholtz", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--example", choices=["ex1", "ex2"], default="ex2")
        sp.add_argument("--xi", default="1", help="Bessel order for ex2 (1, 3/2, 2/3)")
        sp.add_argument("--kappa", default="10", help="comma-separated wave numbers")
        sp.add_argument("--order", default="1", help="comma-separated polynomial degrees")
        sp.add_argument("--grid", default="square", help="square | perturbed:<delta>:<seed> | file:<path>")
        sp.add_argument("--levels", default="2:16", help="n0:n1, cells per unit length, doubling")
        sp.add_argument("--out", default="out")
        sp.add_argument("--solver", choices=["direct", "condensed", "both"], default="condensed")
        sp.add_argument("--quad-level", type=int, default=0, help="extra composite quadrature levels")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--graded-quadrature", action="store_true",
                        help="refine load quadrature toward the singular corner (ex2)")

    g = sub.add_parser("gen-mesh", help="write a mesh file")
    g.add_argument("--n", type=int, default=4)
    g.add_argument("--domain", default="-0.5,0.5,-0.5,0.5")
    g.add_argument("--grid", default="square")
    g.add_argument("--out", default="mesh.json")
    g.add_argument("--seed", type=int, default=0)
    common(sub.add_parser("solve", help="single solve per (kappa, order) at the finest level"))
    common(sub.add_parser("convergence", help="refinement study with CSV and SVG output"))
    return p


def _with_seed(grid: str, seed: int) -> str:
    """'perturbed' or 'perturbed:<delta>' picks up --seed (delta defaults to 0.2)."""
    if grid.startswith("perturbed") and grid.count(":") < 2:
        return f"perturbed:{grid.partition(':')[2] or 0.2}:{seed}"
    return grid


def _config(args) -> StudyConfig:
    xi = parse_number(args.xi) if args.example == "ex2" else None
    grid = _with_seed(args.grid, args.seed)
    return StudyConfig(
        example=args.example,
        xi=xi,
        kappas=_list(args.kappa),
        orders=_list(args.order, int),
        grid=grid,
        levels=_levels(args.levels),
        out=Path(args.out),
        quad_level=args.quad_level,
        solver=args.solver,
        seed=args.seed,
        graded_loads=args.graded_quadrature,
    )


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "gen-mesh":
            domain = [parse_number(t) for t in args.domain.split(",")]
            if len(domain) != 4:
                raise ConfigError("domain needs x0,x1,y0,y1")
            mesh = make_mesh(_with_seed(args.grid, args.seed), args.n, domain)
            write_mesh(mesh, args.out)
            print(f"wrote {args.out}: {mesh.n_cells} cells, {mesh.n_triangles} triangles")
            return EXIT_OK
        config = _config(args)
        if args.command == "solve":
            config = replace(config, levels=(config.levels[1], config.levels[1]))
            out = Path(config.out)
            out.mkdir(parents=True, exist_ok=True)
            rows = []
            for kappa in config.kappas:
                sol = make_solution(config.example, kappa, config.xi)
                for m in config.orders:
                    n = config.levels[1]
                    mesh = make_mesh(config.grid, n, sol.domain)
                    res = run_solve(sol, mesh, m, config.solver, config.quad_level, n=n,
                                    graded_loads=config.graded_loads)
                    write_vtk(res, out / f"{config.example}_k{kappa:g}_m{m}_n{n}.vtk")
                    rows.extend(csv_rows(config.example, config.xi, compute_rates([res.report])))
            write_csv(rows, out / "solve.csv")
            return EXIT_OK
        run_convergence(config)
        return EXIT_OK
    except (ConfigError, MeshError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
