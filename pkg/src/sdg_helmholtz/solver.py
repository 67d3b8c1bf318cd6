"""Sparse direct solves of the coupled system, with or without condensing P."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledOperators, ComplexSparseSystem

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Singular system or residual above tolerance."""


@dataclass
class SolveReport:
    solution: np.ndarray
    residual: float
    wall_time: float
    stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"residual": self.residual, "wall_time": self.wall_time, **self.stats}


def _relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return float(r / nb) if nb > 0 else float(r)


def _lu_solve(A: sp.spmatrix, b: np.ndarray, tol: float, refine: int = 2):
    A = sp.csc_matrix(A, dtype=complex)
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise SolverError(f"factorization failed: {exc}") from exc
    x = lu.solve(b)
    res = _relative_residual(A, x, b)
    steps = 0
    while res > tol * 1e-2 and steps < refine:
        x = x + lu.solve(b - A @ x)
        res = _relative_residual(A, x, b)
        steps += 1
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution")
    stats = {"nnz_L": int(lu.L.nnz), "nnz_U": int(lu.U.nnz), "refinement_steps": steps}
    return x, res, stats


def solve_direct(system: ComplexSparseSystem, tol: float = RESIDUAL_TOL) -> SolveReport:
    """Sparse LU with partial pivoting on the full block system."""
    t0 = time.perf_counter()
    b = np.asarray(system.rhs, dtype=complex)
    if not np.any(b):
        x = np.zeros_like(b)
        return SolveReport(x, 0.0, time.perf_counter() - t0, {"n": len(b)})
    x, res, stats = _lu_solve(system.matrix, b, tol)
    if res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds {tol:.1e}")
    stats["n"] = len(b)
    return SolveReport(x, res, time.perf_counter() - t0, stats)


def vector_cell_blocks(ops: AssembledOperators) -> list[np.ndarray]:
    """Vector DOF ids grouped by primal cell (V_h functions never leave their cell)."""
    vec = ops.vector
    cell = ops.mesh.tri_cell
    owner = np.empty(vec.ndof, dtype=np.int64)
    owner[vec.local_dofs] = np.repeat(cell[:, None], vec.local_dofs.shape[1], axis=1)
    order = np.argsort(owner, kind="stable")
    bounds = np.searchsorted(owner[order], np.arange(ops.mesh.n_cells + 1))
    return [order[bounds[c]:bounds[c + 1]] for c in range(ops.mesh.n_cells)]


def block_inverse(M: sp.spmatrix, blocks: list[np.ndarray]) -> sp.csr_matrix:
    """Inverse of a block-diagonal matrix given its diagonal blocks' index sets."""
    M = sp.csr_matrix(M)
    n = M.shape[0]
    rows, cols, vals = [], [], []
    by_size: dict[int, list[np.ndarray]] = {}
    for idx in blocks:
        by_size.setdefault(len(idx), []).append(idx)
    for size, group in by_size.items():
        idx = np.array(group)
        dense = np.stack([M[i][:, i].toarray() for i in idx])
        if np.any(np.linalg.cond(dense) > 1e14):
            raise SolverError("singular local mass block")
        inv = np.linalg.inv(dense)
        rows.append(np.repeat(idx, size, axis=1).ravel())
        cols.append(np.tile(idx, (1, size)).ravel())
        vals.append(inv.ravel())
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def solve_condensed(ops: AssembledOperators, kappa: float, rhs=None, boundary_sign: float = 1.0,
                    volume: bool = True, tol: float = RESIDUAL_TOL) -> SolveReport:
    """Eliminate P cell by cell, solve for U, recover P = M_p^{-1} Bstar U / (i kappa).

    ``volume=False`` drops the i kappa M_u block (elliptic projection) and
    ``boundary_sign`` multiplies R.  The returned solution is [P; U].
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    t0 = time.perf_counter()
    b = ops.rhs if rhs is None else np.asarray(rhs, dtype=complex)
    nv, ns = ops.vector.ndof, ops.scalar.ndof
    Minv = block_inverse(ops.M_p, vector_cell_blocks(ops))
    S = boundary_sign * ops.R + (ops.B @ Minv @ ops.Bstar) / (1j * kappa)
    if volume:
        S = S + 1j * kappa * ops.M_u
    S = sp.csr_matrix(S)
    if not np.any(b):
        U = np.zeros(ns, dtype=complex)
        res, stats = 0.0, {}
    else:
        U, res, stats = _lu_solve(S, b, tol)
    P = (Minv @ (ops.Bstar @ U)) / (1j * kappa)
    x = np.concatenate([P, U])
    # residual of the full block system
    lower = (1j * kappa * ops.M_u if volume else 0 * ops.M_u) + boundary_sign * ops.R
    A = sp.bmat([[1j * kappa * ops.M_p, -ops.Bstar], [ops.B, lower]], format="csr")
    full_b = np.concatenate([np.zeros(nv, dtype=complex), b])
    res_full = _relative_residual(A, x, full_b) if np.any(b) else 0.0
    if res_full > tol:
        raise SolverError(f"relative residual {res_full:.3e} exceeds {tol:.1e}")
    stats.update({"n": ns, "schur_residual": res})
    return SolveReport(x, res_full, time.perf_counter() - t0, stats)
