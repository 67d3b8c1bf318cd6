"""Sparse matrices and load vectors of the staggered DG scheme.

With real basis functions phi_i of S_h and psi_j of V_h the scheme reads

    i kappa M_p P - Bstar U = 0
    B P + (i kappa M_u + R) U = F + G

where

    B[i, j]     = b_h(psi_j, phi_i)  = -(psi_j, grad phi_i) + sum_{F_p} <psi_j . n, [phi_i]>
    Bstar[j, i] = b_h*(phi_i, psi_j) = (div psi_j, phi_i) - sum_{F_u} <[psi_j . n], phi_i>

B and Bstar are assembled from these two different formulas; their
transpose identity is a check on the construction, not an assumption.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .polyquad import composite_edge_quadrature, composite_level_for, reference_basis, tri_quadrature
from .spaces import (
    ScalarSpace,
    VectorSpace,
    edge_groups,
    edge_points,
    inverse_jacobians,
    jacobians,
    map_to_physical,
    triangle_groups,
)


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class _Reference:
    """Reference-triangle integrals of the orthonormal basis."""

    gxi: np.ndarray   # int psi_k d(psi_j)/dxi, indexed [k, j]
    geta: np.ndarray
    e_ab: np.ndarray  # int_0^1 psi_k psi_j along (1-t, t)
    e_nua: np.ndarray
    e_nub: np.ndarray


def _reference(m: int) -> _Reference:
    q = tri_quadrature(max(2 * m, 1))
    psi, dxi, deta = reference_basis(q.points[:, 0], q.points[:, 1], m)
    w = q.weights[:, None]
    e = composite_edge_quadrature(2 * m + 1, 0)
    t = e.points

    def edge(xi, eta):
        v, _, _ = reference_basis(xi, eta, m)
        return v.T @ (v * e.weights[:, None])

    return _Reference(
        gxi=(psi * w).T @ dxi,
        geta=(psi * w).T @ deta,
        e_ab=edge(1.0 - t, t),
        e_nua=edge(t, 0.0 * t),
        e_nub=edge(0.0 * t, t),
    )


def _check_pair(scalar: ScalarSpace, vector: VectorSpace) -> None:
    if scalar.mesh is not vector.mesh or scalar.degree != vector.degree:
        raise AssemblyError("scalar and vector spaces must share mesh and degree")


def _outward(p_from: np.ndarray, p_to: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand unit normal of the directed segment and its length."""
    d = p_to - p_from
    length = np.hypot(d[:, 0], d[:, 1])
    return np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None], length


def _to_global(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
    """Sum per-triangle blocks (n, r, c) into a CSR matrix (duplicates merged)."""
    n, r, c = local.shape
    I = np.broadcast_to(rows[:, :, None], (n, r, c)).ravel()
    J = np.broadcast_to(cols[:, None, :], (n, r, c)).ravel()
    mat = sp.coo_matrix((local.ravel(), (I, J)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _geometry(mesh):
    c = mesh.tri_coords
    det = np.abs(np.linalg.det(jacobians(mesh)))
    jinv = inverse_jacobians(mesh)
    return c, det, jinv


def _div_block(gxi, geta, det, jinv):
    """(n_tri, nb, 2 nb) from reference blocks G[k, j] = int psi_k d_ref psi_j.

    With ``(ref.gxi, ref.geta)`` this is int_tau phi_k div(psi_j e_c); with
    the transposes it is int_tau psi_j d_c phi_k.
    """
    gx = jinv[:, 0, 0, None, None] * gxi + jinv[:, 1, 0, None, None] * geta
    gy = jinv[:, 0, 1, None, None] * gxi + jinv[:, 1, 1, None, None] * geta
    return det[:, None, None] * np.concatenate([gx, gy], axis=2)


def _trace_block(E: np.ndarray, normal: np.ndarray, length: np.ndarray):
    """(n_tri, nb, 2 nb): int_e phi_k (psi_j e_c) . normal."""
    base = length[:, None, None] * E[None]
    return np.concatenate([base * normal[:, 0, None, None], base * normal[:, 1, None, None]], axis=2)


def assemble_bh(scalar: ScalarSpace, vector: VectorSpace) -> sp.csr_matrix:
    """B with B[i, j] = b_h(psi_j, phi_i), gradient-plus-dual-jump form."""
    _check_pair(scalar, vector)
    mesh = scalar.mesh
    ref = _reference(scalar.degree)
    c, det, jinv = _geometry(mesh)
    # -(q, grad v): same reference integrals with the roles of test/trial swapped
    vol = -_div_block(ref.gxi.T, ref.geta.T, det, jinv)
    # each triangle contributes <q . n_out, v|_tau> on its two dual edges (q . n is single-valued there)
    n1, l1 = _outward(c[:, 0], c[:, 1])   # nu -> a
    n2, l2 = _outward(c[:, 2], c[:, 0])   # b -> nu
    local = vol + _trace_block(ref.e_nua, n1, l1) + _trace_block(ref.e_nub, n2, l2)
    local = np.einsum("tbi,tbc,tcj->tij", scalar.local_matrices, local, vector.local_matrices)
    return _to_global(local, scalar.local_dofs, vector.local_dofs, (scalar.ndof, vector.ndof))


def assemble_bh_star(scalar: ScalarSpace, vector: VectorSpace) -> sp.csr_matrix:
    """Bstar with Bstar[j, i] = b_h*(phi_i, psi_j), divergence-minus-primal-jump form."""
    _check_pair(scalar, vector)
    mesh = scalar.mesh
    ref = _reference(scalar.degree)
    c, det, jinv = _geometry(mesh)
    vol = _div_block(ref.gxi, ref.geta, det, jinv)
    # -<[q . n], v> over F_u: each triangle contributes -<q_tau . n_out, v> on its primal edge
    n0, l0 = _outward(c[:, 1], c[:, 2])   # a -> b
    local = vol - _trace_block(ref.e_ab, n0, l0)
    local = np.einsum("tcj,tbc,tbi->tji", vector.local_matrices, local, scalar.local_matrices)
    return _to_global(local, vector.local_dofs, scalar.local_dofs, (vector.ndof, scalar.ndof))


def assemble_mass(space) -> sp.csr_matrix:
    """L2 Gram matrix of the space's global basis."""
    mesh = space.mesh
    det = np.abs(np.linalg.det(jacobians(mesh)))
    C = space.local_matrices
    # the reference basis is orthonormal on the reference triangle
    local = det[:, None, None] * np.einsum("tbi,tbj->tij", C, C)
    return _to_global(local, space.local_dofs, space.local_dofs, (space.ndof, space.ndof))


def assemble_boundary_mass(scalar: ScalarSpace) -> sp.csr_matrix:
    """R[i, j] = <phi_j, phi_i> over the boundary."""
    mesh = scalar.mesh
    ref = _reference(scalar.degree)
    on_bdry = mesh.is_boundary[mesh.tri_primal_edge]
    tris = np.flatnonzero(on_bdry)
    length = mesh.edge_length[mesh.tri_primal_edge[tris]]
    C = scalar.local_matrices[tris]
    local = length[:, None, None] * np.einsum("tbi,bc,tcj->tij", C, ref.e_ab, C)
    dofs = scalar.local_dofs[tris]
    return _to_global(local, dofs, dofs, (scalar.ndof, scalar.ndof))


def _finite(vals, what):
    if not np.all(np.isfinite(vals)):
        raise AssemblyError(f"non-finite {what} at a quadrature point")
    return vals


def assemble_volume_load(scalar: ScalarSpace, func, degree=None, level=None, kappa=None,
                         singular_point=None) -> np.ndarray:
    """Vector of int func * phi_i with the composite rule (kappa h_sub <= 2)."""
    mesh = scalar.mesh
    m = scalar.degree
    deg = 2 * m + 4 if degree is None else degree
    if level is None:
        level = composite_level_for(kappa, mesh.h) if kappa else 0
    det = np.abs(np.linalg.det(jacobians(mesh)))
    out = np.zeros(scalar.ndof, dtype=complex)
    for tris, q in triangle_groups(mesh, deg, level, singular_point):
        pts = map_to_physical(mesh, q.points, tris)
        vals = _finite(np.asarray(func(pts[..., 0], pts[..., 1])), "source")
        psi, _, _ = reference_basis(q.points[:, 0], q.points[:, 1], m)
        ref_coef = det[tris, None] * ((vals * q.weights) @ psi)
        local = np.einsum("tbi,tb->ti", scalar.local_matrices[tris], ref_coef)
        np.add.at(out, scalar.local_dofs[tris], local)
    return out


def assemble_boundary_load(scalar: ScalarSpace, datum, degree=None, level=None, kappa=None,
                           singular_point=None) -> np.ndarray:
    """Vector of <datum(x, y, n), phi_i> over boundary edges, n the outward normal."""
    mesh = scalar.mesh
    m = scalar.degree
    deg = 2 * m + 4 if degree is None else degree
    if level is None:
        level = composite_level_for(kappa, mesh.h) if kappa else 0
    out = np.zeros(scalar.ndof, dtype=complex)
    bedges = mesh.boundary_edges
    if len(bedges) == 0:
        return out
    tri_of = mesh.edge_tris[:, 0]
    for edges, q in edge_groups(mesh, bedges, deg, level, singular_point):
        pts = edge_points(mesh, edges, q.points)
        n = np.broadcast_to(mesh.normals[edges][:, None, :], pts.shape)
        vals = _finite(np.asarray(datum(pts[..., 0], pts[..., 1], n)), "boundary datum")
        tris = tri_of[edges]
        c = mesh.tri_coords[tris]
        # reference coordinate of each edge point: along a -> b, t_ref = |x - a| / |b - a|
        a, b = c[:, 1], c[:, 2]
        tref = np.einsum("tpc,tc->tp", pts - a[:, None, :], b - a) / ((b - a) ** 2).sum(axis=1)[:, None]
        psi, _, _ = reference_basis(1.0 - tref, tref, m)
        ref_coef = mesh.edge_length[edges, None] * np.einsum("tp,tpb->tb", vals * q.weights, psi)
        local = np.einsum("tbi,tb->ti", scalar.local_matrices[tris], ref_coef)
        np.add.at(out, scalar.local_dofs[tris], local)
    return out


@dataclass
class AssembledOperators:
    scalar: ScalarSpace
    vector: VectorSpace
    B: sp.csr_matrix
    Bstar: sp.csr_matrix
    M_p: sp.csr_matrix
    M_u: sp.csr_matrix
    R: sp.csr_matrix
    F_vec: np.ndarray | None = None
    G_vec: np.ndarray | None = None

    @property
    def mesh(self):
        return self.scalar.mesh

    @property
    def rhs(self) -> np.ndarray:
        out = np.zeros(self.scalar.ndof, dtype=complex)
        if self.F_vec is not None:
            out += self.F_vec
        if self.G_vec is not None:
            out += self.G_vec
        return out


def assemble_operators(scalar: ScalarSpace, vector: VectorSpace) -> AssembledOperators:
    _check_pair(scalar, vector)
    return AssembledOperators(
        scalar=scalar,
        vector=vector,
        B=assemble_bh(scalar, vector),
        Bstar=assemble_bh_star(scalar, vector),
        M_p=assemble_mass(vector),
        M_u=assemble_mass(scalar),
        R=assemble_boundary_mass(scalar),
    )


def assemble_loads(ops: AssembledOperators, solution, level=None, graded=False) -> AssembledOperators:
    """Fill F_vec, G_vec from a ManufacturedSolution (mixed-system data).

    ``graded=True`` refines the load quadrature toward the solution's
    singular point; by default the plain composite rule is used everywhere.
    """
    sing = solution.singular_point if graded else None
    kw = dict(level=level, kappa=solution.kappa, singular_point=sing)
    ops.F_vec = assemble_volume_load(ops.scalar, solution.mixed_source, **kw)
    ops.G_vec = assemble_boundary_load(ops.scalar, solution.boundary_datum, **kw)
    return ops


@dataclass
class ComplexSparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_vector: int
    n_scalar: int

    def __post_init__(self):
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n) or self.rhs.shape != (n,):
            raise ValueError("system must be square with a matching right-hand side")
        if n != self.n_vector + self.n_scalar:
            raise ValueError("block sizes do not add up")

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(P, U) blocks of a solution vector."""
        return x[: self.n_vector], x[self.n_vector:]


def build_helmholtz_system(ops: AssembledOperators, kappa: float, rhs=None) -> ComplexSparseSystem:
    """[[i k M_p, -Bstar], [B, i k M_u + R]] [P; U] = [0; F + G]."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    lower = 1j * kappa * ops.M_u + ops.R
    A = sp.bmat([[1j * kappa * ops.M_p, -ops.Bstar], [ops.B, lower]], format="csr")
    b = np.concatenate([np.zeros(ops.vector.ndof, dtype=complex),
                        ops.rhs if rhs is None else np.asarray(rhs, dtype=complex)])
    return ComplexSparseSystem(A, b, ops.vector.ndof, ops.scalar.ndof)


def build_elliptic_projection_system(ops: AssembledOperators, kappa: float, sign: str = "+",
                                     rhs=None) -> ComplexSparseSystem:
    """Helmholtz blocks without i k M_u; boundary coupling +R (sign '+') or -R (sign '-').

    ``rhs`` is the assembled (F, v) + sign <G, v>; it defaults to ``ops.rhs``.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    s = 1.0 if sign == "+" else -1.0
    A = sp.bmat([[1j * kappa * ops.M_p, -ops.Bstar], [ops.B, s * ops.R]], format="csr")
    b = np.concatenate([np.zeros(ops.vector.ndof, dtype=complex),
                        ops.rhs if rhs is None else np.asarray(rhs, dtype=complex)])
    return ComplexSparseSystem(A.astype(complex), b, ops.vector.ndof, ops.scalar.ndof)


def write_matrix_market(matrix, path) -> None:
    """Dump as Matrix Market coordinate complex general."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix, dtype=complex), field="complex",
                     symmetry="general")
