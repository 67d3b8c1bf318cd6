"""Staggered spaces S_h and V_h built from moment degrees of freedom.

S_h (scalar, continuous across primal edges):
    edge moments  (1/|e|) <w, L_k>_e,  k = 0..m, on the primal edge of each triangle
    cell moments  int_ref (w o F) psi_k,  psi_k in P^{m-1}
V_h (vector, normal-continuous across dual edges):
    edge moments  (1/|e|) <v . n_e, L_k>_e on both dual edges of each triangle
    cell moments  of both components against P^{m-1}

L_k are Legendre polynomials in the edge parameter running from the lower to
the higher point id, and n_e is the mesh's global edge normal, so the two
triangles sharing an edge evaluate the same functional.

Locally, fields are expanded in the reference orthonormal basis pulled back
to each triangle (``polyquad.reference_basis``).  ``local_matrices[t]`` maps
the local DOF values of triangle t to those coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import StaggeredMesh
from .polyquad import (
    composite_edge_quadrature,
    composite_tri_quadrature,
    dim_p,
    graded_edge_quadrature,
    graded_tri_quadrature,
    legendre,
    reference_basis,
)

MAX_DEGREE = 4
# triangles this many h from a singular point get extra quadrature levels
NEAR_FACTOR = 2.0
NEAR_EXTRA = 3
COND_LIMIT = 1e10

# reference edges: (nu, a) -> (t, 0); (nu, b) -> (0, t); (a, b) -> (1 - t, t)
_REF_EDGES = {
    "nu_a": lambda t: (t, 0.0 * t),
    "nu_b": lambda t: (0.0 * t, t),
    "a_b": lambda t: (1.0 - t, t),
}


class SpaceError(ValueError):
    pass


def _edge_moment_rows(degree: int, which: str, flipped: bool) -> np.ndarray:
    """Rows (degree+1, dim_p(degree)): int_0^1 psi_l(edge(t)) L_k(s(t)) dt."""
    q = composite_edge_quadrature(2 * degree, 0)
    xi, eta = _REF_EDGES[which](q.points)
    psi, _, _ = reference_basis(xi, eta, degree)
    s = 2.0 * q.points - 1.0
    if flipped:
        s = -s
    L = legendre(s, degree)
    return (L * q.weights[:, None]).T @ psi


def _check_conditioning(mats: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(mats)
    if not np.all(np.isfinite(cond)) or cond.max() > COND_LIMIT:
        raise SpaceError(f"{what}: local DOF matrix is singular or ill-conditioned "
                         f"(cond = {cond.max():.3e}); degenerate triangle?")
    return cond


@dataclass(frozen=True, eq=False)
class ScalarSpace:
    mesh: StaggeredMesh
    degree: int
    ndof: int
    local_dofs: np.ndarray       # (n_tri, n_loc) global DOF ids
    local_matrices: np.ndarray   # (n_tri, n_basis, n_loc)
    condition: np.ndarray

    kind = "scalar"

    @property
    def n_basis(self) -> int:
        return dim_p(self.degree)


@dataclass(frozen=True, eq=False)
class VectorSpace:
    mesh: StaggeredMesh
    degree: int
    ndof: int
    local_dofs: np.ndarray
    local_matrices: np.ndarray   # (n_tri, 2 * n_basis, n_loc); x-block then y-block
    condition: np.ndarray

    kind = "vector"

    @property
    def n_basis(self) -> int:
        return dim_p(self.degree)


def _check_degree(m: int) -> None:
    if not 0 <= m <= MAX_DEGREE:
        raise SpaceError(f"polynomial degree must lie in [0, {MAX_DEGREE}], got {m}")


def build_scalar_space(mesh: StaggeredMesh, m: int) -> ScalarSpace:
    _check_degree(m)
    nb = dim_p(m)
    ni = dim_p(m - 1)
    nt = mesh.n_triangles
    npe = mesh.n_primal_edges

    interior = np.zeros((ni, nb))
    interior[:, :ni] = np.eye(ni)
    mats = {}
    for flipped in (False, True):
        D = np.vstack([_edge_moment_rows(m, "a_b", flipped), interior])
        mats[flipped] = np.linalg.inv(D)
    a = mesh.triangles[:, 1]
    b = mesh.triangles[:, 2]
    flipped = a > b
    local = np.where(flipped[:, None, None], mats[True][None], mats[False][None])
    cond = _check_conditioning(local, "scalar space")

    pe = mesh.tri_primal_edge
    edge_dofs = pe[:, None] * (m + 1) + np.arange(m + 1)[None, :]
    int_dofs = npe * (m + 1) + np.arange(nt)[:, None] * ni + np.arange(ni)[None, :]
    dofs = np.hstack([edge_dofs, int_dofs])
    ndof = (m + 1) * npe + ni * nt
    return ScalarSpace(mesh, m, ndof, dofs, local, cond)


def build_vector_space(mesh: StaggeredMesh, m: int) -> VectorSpace:
    _check_degree(m)
    nb = dim_p(m)
    ni = dim_p(m - 1)
    nt = mesh.n_triangles
    npe = mesh.n_primal_edges
    nde = mesh.n_dual_edges
    tri = mesh.triangles

    rows = {}
    for which in ("nu_a", "nu_b"):
        for flipped in (False, True):
            rows[which, flipped] = _edge_moment_rows(m, which, flipped)

    n_loc = 2 * nb
    D = np.zeros((nt, n_loc, n_loc))
    r = 0
    for j, which in enumerate(("nu_a", "nu_b")):
        e = mesh.tri_dual_edges[:, j]
        # edge parameter runs from the lower point id: nu -> vertex is reversed when nu is higher
        flipped = tri[:, 0] > tri[:, 1 + j]
        R = np.where(flipped[:, None, None], rows[which, True][None], rows[which, False][None])
        n = mesh.normals[e]
        D[:, r:r + m + 1, :nb] = R * n[:, 0, None, None]
        D[:, r:r + m + 1, nb:] = R * n[:, 1, None, None]
        r += m + 1
    for c in range(2):
        D[:, r:r + ni, c * nb:c * nb + ni] = np.eye(ni)
        r += ni
    cond = _check_conditioning(D, "vector space")
    local = np.linalg.inv(D)

    de = mesh.dual_index(mesh.tri_dual_edges)
    e1 = de[:, 0, None] * (m + 1) + np.arange(m + 1)[None, :]
    e2 = de[:, 1, None] * (m + 1) + np.arange(m + 1)[None, :]
    int_dofs = nde * (m + 1) + np.arange(nt)[:, None] * (2 * ni) + np.arange(2 * ni)[None, :]
    dofs = np.hstack([e1, e2, int_dofs])
    ndof = (m + 1) * nde + 2 * ni * nt
    return VectorSpace(mesh, m, ndof, dofs, local, cond)


@dataclass
class FieldVector:
    space: ScalarSpace | VectorSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.coefficients.shape != (self.space.ndof,):
            raise ValueError(f"coefficient vector has length {self.coefficients.shape}, "
                             f"space dimension is {self.space.ndof}")


def local_coefficients(space, coefficients) -> np.ndarray:
    """Reference-basis coefficients per triangle, (n_tri, n_basis) or (n_tri, 2 * n_basis)."""
    coefficients = np.asarray(coefficients)
    if coefficients.shape != (space.ndof,):
        raise ValueError("coefficient vector does not match the space")
    return np.einsum("tbl,tl->tb", space.local_matrices, coefficients[space.local_dofs])


def evaluate_reference(space, coefficients, ref_points, triangles=None, derivatives=False):
    """Evaluate a field at the same reference points in each triangle.

    Returns values of shape (n_tri, n_pts) for scalar fields and
    (n_tri, n_pts, 2) for vector fields.  With ``derivatives`` also returns
    the physical gradient (scalar, (n_tri, n_pts, 2)) or divergence (vector).
    """
    mesh = space.mesh
    tris = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    coef = local_coefficients(space, coefficients)[tris]
    ref_points = np.atleast_2d(ref_points)
    psi, dxi, deta = reference_basis(ref_points[:, 0], ref_points[:, 1], space.degree)
    nb = space.n_basis
    if space.kind == "scalar":
        val = coef @ psi.T
    else:
        val = np.stack([coef[:, :nb] @ psi.T, coef[:, nb:] @ psi.T], axis=-1)
    if not derivatives:
        return val
    jinv = inverse_jacobians(mesh)[tris]
    if space.kind == "scalar":
        dx = coef @ dxi.T
        dy = coef @ deta.T
        gx = jinv[:, 0, 0, None] * dx + jinv[:, 1, 0, None] * dy
        gy = jinv[:, 0, 1, None] * dx + jinv[:, 1, 1, None] * dy
        return val, np.stack([gx, gy], axis=-1)
    cx, cy = coef[:, :nb], coef[:, nb:]
    div = (jinv[:, 0, 0, None] * (cx @ dxi.T) + jinv[:, 1, 0, None] * (cx @ deta.T)
           + jinv[:, 0, 1, None] * (cy @ dxi.T) + jinv[:, 1, 1, None] * (cy @ deta.T))
    return val, div


def evaluate_field(space, coefficients, triangle: int, points, derivatives=False, tol=1e-12):
    """Evaluate a field at physical ``points`` inside one triangle."""
    mesh = space.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v = mesh.tri_coords[triangle]
    jac = np.column_stack([v[1] - v[0], v[2] - v[0]])
    ref = np.linalg.solve(jac, (pts - v[0]).T).T
    bary = np.column_stack([1.0 - ref.sum(axis=1), ref])
    if np.any(bary < -tol):
        raise ValueError("point outside triangle")
    out = evaluate_reference(space, coefficients, ref, [triangle], derivatives)
    if derivatives:
        return out[0][0], out[1][0]
    return out[0]


def jacobians(mesh: StaggeredMesh) -> np.ndarray:
    """(n_tri, 2, 2) affine maps from the reference triangle."""
    c = mesh.tri_coords
    return np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=-1)


def inverse_jacobians(mesh: StaggeredMesh) -> np.ndarray:
    return np.linalg.inv(jacobians(mesh))


def map_to_physical(mesh: StaggeredMesh, ref_points, triangles=None) -> np.ndarray:
    """(n_tri, n_pts, 2) physical images of reference points."""
    tris = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    c = mesh.tri_coords[tris]
    J = jacobians(mesh)[tris]
    return c[:, None, 0, :] + np.einsum("tij,pj->tpi", J, np.atleast_2d(ref_points))


# ---------------------------------------------------------------------------
# quadrature plans that refine toward an optional singular point


def triangle_groups(mesh: StaggeredMesh, degree: int, level: int, singular_point=None, tol=1e-12):
    """Split triangles into groups sharing one reference rule.

    Returns a list of (triangle ids, QuadratureRule).  Triangles with a vertex
    at ``singular_point`` get a rule graded toward that vertex; the other
    triangles within ``NEAR_FACTOR * h`` of it get ``NEAR_EXTRA`` more
    uniform levels.
    """
    nt = mesh.n_triangles
    regular = np.ones(nt, dtype=bool)
    groups = []
    if singular_point is not None:
        d = np.linalg.norm(mesh.tri_coords - np.asarray(singular_point), axis=-1)
        scale = tol * max(mesh.h, 1.0)
        for corner in range(3):
            hit = np.flatnonzero(regular & (d[:, corner] <= scale))
            if len(hit):
                regular[hit] = False
                groups.append((hit, graded_tri_quadrature(degree, corner)))
        near = np.flatnonzero(regular & (d.min(axis=1) < NEAR_FACTOR * mesh.h))
        if len(near):
            regular[near] = False
            groups.append((near, composite_tri_quadrature(degree, level + NEAR_EXTRA)))
    groups.insert(0, (np.flatnonzero(regular), composite_tri_quadrature(degree, level)))
    return [(t, q) for t, q in groups if len(t)]


def edge_groups(mesh: StaggeredMesh, edge_ids, degree: int, level: int, singular_point=None, tol=1e-12):
    """Like ``triangle_groups`` for edges parametrized from edges[:, 0] to edges[:, 1]."""
    edge_ids = np.asarray(edge_ids)
    regular = np.ones(len(edge_ids), dtype=bool)
    groups = []
    if singular_point is not None:
        p = mesh.points[mesh.edges[edge_ids]]
        d = np.linalg.norm(p - np.asarray(singular_point), axis=-1)
        scale = tol * max(mesh.h, 1.0)
        for end, at_start in ((0, True), (1, False)):
            hit = np.flatnonzero(d[:, end] <= scale)
            if len(hit):
                regular[hit] = False
                groups.append((edge_ids[hit], graded_edge_quadrature(degree, at_start)))
    groups.insert(0, (edge_ids[regular], composite_edge_quadrature(degree, level)))
    return [(e, q) for e, q in groups if len(e)]


def edge_points(mesh: StaggeredMesh, edge_ids, t) -> np.ndarray:
    """(n_edges, n_t, 2) points p0 + t (p1 - p0) along edges."""
    p0 = mesh.points[mesh.edges[edge_ids, 0]]
    p1 = mesh.points[mesh.edges[edge_ids, 1]]
    return p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]


def _eval_func(func, pts):
    return np.asarray(func(pts[..., 0], pts[..., 1]))


def interpolate(space, func, quad_degree=None, level=0, singular_point=None) -> FieldVector:
    """Apply the DOF functionals of ``space`` to ``func(x, y)``.

    For the scalar space this is the projection I_h, for the vector space
    J_h; ``func`` returns arrays of shape x.shape (scalar) or x.shape + (2,).
    """
    mesh = space.mesh
    m = space.degree
    qd = 2 * m + 2 if quad_degree is None else quad_degree
    ni = dim_p(m - 1)
    out = np.zeros(space.ndof, dtype=complex)
    if space.kind == "scalar":
        edges = np.arange(mesh.n_primal_edges)
        base = 0
    else:
        edges = np.flatnonzero(mesh.edge_kind == 1)
        base = mesh.n_primal_edges
    for ids, q in edge_groups(mesh, edges, qd + m, level, singular_point):
        vals = _eval_func(func, edge_points(mesh, ids, q.points))
        if space.kind == "vector":
            vals = np.einsum("epc,ec->ep", vals, mesh.normals[ids])
        L = legendre(2.0 * q.points - 1.0, m)
        mom = (vals * q.weights) @ L
        idx = (ids - base)[:, None] * (m + 1) + np.arange(m + 1)
        out[idx] = mom
    if ni:
        off = len(edges) * (m + 1)
        for tris, q in triangle_groups(mesh, qd + m, level, singular_point):
            pts = map_to_physical(mesh, q.points, tris)
            vals = _eval_func(func, pts)
            psi, _, _ = reference_basis(q.points[:, 0], q.points[:, 1], m - 1)
            if space.kind == "scalar":
                mom = (vals * q.weights) @ psi
                idx = off + tris[:, None] * ni + np.arange(ni)
                out[idx] = mom
            else:
                for c in range(2):
                    mom = (vals[..., c] * q.weights) @ psi
                    idx = off + tris[:, None] * (2 * ni) + c * ni + np.arange(ni)
                    out[idx] = mom
    return FieldVector(space, out)
