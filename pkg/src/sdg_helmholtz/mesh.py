"""Primal cells, their triangle fans, and the primal/dual edge sets.

A primal cell S(nu) is a polygon split into triangles (nu, v_i, v_{i+1}) by
joining an interior point nu to its vertices.  Cell boundary edges are the
primal edges; the spokes (nu, v_i) are the dual edges.  Each triangle has
exactly one primal edge and two dual edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PRIMAL = 0
DUAL = 1


class MeshError(ValueError):
    """Invalid mesh input or geometry."""


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(poly) -> np.ndarray:
    poly = np.asarray(poly, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if a == 0.0:
        return poly.mean(axis=0)
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def _diameter(poly: np.ndarray) -> float:
    d = poly[:, None, :] - poly[None, :, :]
    return float(np.sqrt((d**2).sum(axis=-1)).max())


@dataclass(frozen=True, eq=False)
class StaggeredMesh:
    """Three-level staggered mesh.

    Arrays (read-only by convention):

    points          (n_points, 2)  primal vertices followed by cell centers
    cells           tuple of int arrays, CCW primal vertex ids per cell
    center_ids      (n_cells,)     point id of each cell center nu
    triangles       (n_tri, 3)     point ids (nu, a, b), CCW; a->b is the primal edge
    tri_cell        (n_tri,)
    tri_primal_edge (n_tri,)       global edge id of the primal edge
    tri_dual_edges  (n_tri, 2)     global edge ids of (nu, a) and (nu, b)
    edges           (n_edges, 2)   endpoint point ids, lower id first
    edge_kind       (n_edges,)     PRIMAL or DUAL; primal edges come first
    edge_tris       (n_edges, 2)   adjacent triangles, lower id first, -1 if absent
    normals         (n_edges, 2)   unit normal, from edge_tris[:, 0] to edge_tris[:, 1]
                                   (outward on the boundary)
    edge_length     (n_edges,)
    """

    points: np.ndarray
    n_vertices: int
    cells: tuple
    center_ids: np.ndarray
    triangles: np.ndarray
    tri_cell: np.ndarray
    tri_primal_edge: np.ndarray
    tri_dual_edges: np.ndarray
    edges: np.ndarray
    edge_kind: np.ndarray
    edge_tris: np.ndarray
    normals: np.ndarray
    edge_length: np.ndarray

    @property
    def vertices(self) -> np.ndarray:
        return self.points[: self.n_vertices]

    @property
    def centers(self) -> np.ndarray:
        return self.points[self.center_ids]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_primal_edges(self) -> int:
        return int(np.count_nonzero(self.edge_kind == PRIMAL))

    @property
    def n_dual_edges(self) -> int:
        return int(np.count_nonzero(self.edge_kind == DUAL))

    @property
    def is_boundary(self) -> np.ndarray:
        return self.edge_tris[:, 1] < 0

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.is_boundary)

    @property
    def tri_coords(self) -> np.ndarray:
        """(n_tri, 3, 2) vertex coordinates."""
        return self.points[self.triangles]

    @property
    def tri_area(self) -> np.ndarray:
        c = self.tri_coords
        e1, e2 = c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def tri_diameter(self) -> np.ndarray:
        c = self.tri_coords
        d = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 1], c[:, 0] - c[:, 2]], axis=1)
        return np.sqrt((d**2).sum(axis=-1)).max(axis=1)

    @property
    def h(self) -> float:
        return float(self.tri_diameter.max())

    @property
    def area(self) -> float:
        return float(self.tri_area.sum())

    def primal_index(self, edge_ids):
        """Position of primal edges within F_u (identity, primal edges come first)."""
        return np.asarray(edge_ids)

    def dual_index(self, edge_ids):
        """Position of dual edges within F_p."""
        return np.asarray(edge_ids) - self.n_primal_edges

    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edges].ravel()] = True
        return mask


def build_polygonal_mesh(vertices, cells, centers=None) -> StaggeredMesh:
    """Build the staggered mesh from polygon cells.

    ``cells`` is a sequence of vertex-index lists.  Clockwise polygons are
    reversed.  ``centers`` optionally gives nu per cell (``None`` entries fall
    back to the centroid).  Hanging nodes are ordinary polygon vertices.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2:
        raise MeshError("vertices must have shape (n, 2)")
    if not np.all(np.isfinite(verts)):
        raise MeshError("non-finite vertex coordinate")
    nv = len(verts)
    if len(cells) == 0:
        raise MeshError("mesh has no cells")

    cell_list = []
    center_xy = []
    for c, cell in enumerate(cells):
        ids = np.asarray(cell, dtype=np.int64)
        if ids.ndim != 1 or len(ids) < 3:
            raise MeshError(f"cell {c} needs at least 3 vertices")
        if ids.min() < 0 or ids.max() >= nv:
            raise MeshError(f"cell {c} references a vertex out of range")
        if len(np.unique(ids)) != len(ids):
            raise MeshError(f"cell {c} repeats a vertex")
        poly = verts[ids]
        area = _signed_area(poly)
        if area == 0.0:
            raise MeshError(f"cell {c} has zero area")
        if area < 0:
            ids = ids[::-1].copy()
            poly = verts[ids]
        given = None if centers is None else centers[c]
        nu = polygon_centroid(poly) if given is None else np.asarray(given, dtype=float)
        if not np.all(np.isfinite(nu)):
            raise MeshError(f"cell {c} has a non-finite center")
        # every fan triangle must be positively oriented (nu in the kernel)
        d0 = poly - nu
        d1 = np.roll(poly, -1, axis=0) - nu
        fan = d0[:, 0] * d1[:, 1] - d0[:, 1] * d1[:, 0]
        if np.any(fan <= 0.0):
            raise MeshError(f"cell {c} is not star-shaped with respect to its center")
        cell_list.append(ids)
        center_xy.append(nu)

    nc = len(cell_list)
    points = np.vstack([verts, np.array(center_xy)])
    center_ids = np.arange(nv, nv + nc)

    sizes = np.array([len(ids) for ids in cell_list])
    nt = int(sizes.sum())
    tri_cell = np.repeat(np.arange(nc), sizes)
    a = np.concatenate(cell_list)
    b = np.concatenate([np.roll(ids, -1) for ids in cell_list])
    nu_ids = center_ids[tri_cell]
    triangles = np.column_stack([nu_ids, a, b])

    # primal edges: (a, b) deduplicated by sorted pair
    pkeys = np.sort(np.column_stack([a, b]), axis=1)
    pedges, p_inv, p_count = np.unique(pkeys, axis=0, return_inverse=True, return_counts=True)
    p_inv = p_inv.ravel()
    if np.any(p_count > 2):
        raise MeshError("primal edge shared by more than two cells (overlapping cells)")
    # dual edges: (nu, a); one per triangle, shared with the previous triangle in the fan
    dual_of_tri_a = np.arange(nt)  # edge (nu, a_i) indexed by triangle i
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    local = np.arange(nt) - np.repeat(starts, sizes)
    nxt = np.where(local == np.repeat(sizes, sizes) - 1, np.repeat(starts, sizes), np.arange(nt) + 1)
    # (nu, b_i) == (nu, a_{i+1})
    dual_of_tri_b = dual_of_tri_a[nxt]

    n_pe = len(pedges)
    n_de = nt
    dual_endpoints = np.sort(np.column_stack([nu_ids, a]), axis=1)
    edges = np.vstack([pedges, dual_endpoints])
    edge_kind = np.concatenate([np.full(n_pe, PRIMAL), np.full(n_de, DUAL)]).astype(np.int8)

    tri_primal_edge = p_inv
    tri_dual_edges = np.column_stack([dual_of_tri_a, dual_of_tri_b]) + n_pe

    edge_tris = np.full((n_pe + n_de, 2), -1, dtype=np.int64)
    order = np.argsort(p_inv, kind="stable")
    first = np.ones(nt, dtype=bool)
    first[1:] = p_inv[order][1:] != p_inv[order][:-1]
    edge_tris[p_inv[order][first], 0] = order[first]
    edge_tris[p_inv[order][~first], 1] = order[~first]
    # dual edge (nu, a_i) is shared by triangles prev(i) and i
    prev = np.empty(nt, dtype=np.int64)
    prev[nxt] = np.arange(nt)
    pair = np.sort(np.column_stack([prev, np.arange(nt)]), axis=1)
    edge_tris[n_pe:] = pair

    p0 = points[edges[:, 0]]
    p1 = points[edges[:, 1]]
    d = p1 - p0
    length = np.hypot(d[:, 0], d[:, 1])
    if np.any(length == 0.0):
        raise MeshError("zero-length edge")
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    tri_centroid = points[triangles].mean(axis=1)
    mid = 0.5 * (p0 + p1)
    away = mid - tri_centroid[edge_tris[:, 0]]
    flip = (normals * away).sum(axis=1) < 0
    normals[flip] *= -1.0

    mesh = StaggeredMesh(
        points=points,
        n_vertices=nv,
        cells=tuple(cell_list),
        center_ids=center_ids,
        triangles=triangles,
        tri_cell=tri_cell,
        tri_primal_edge=tri_primal_edge,
        tri_dual_edges=tri_dual_edges,
        edges=edges,
        edge_kind=edge_kind,
        edge_tris=edge_tris,
        normals=normals,
        edge_length=length,
    )
    if np.any(mesh.tri_area <= 0.0):
        raise MeshError("non-positive triangle area")
    for arr in (points, triangles, edges, edge_tris, normals, length):
        arr.setflags(write=False)
    return mesh


def build_square_mesh(n: int, domain=(-0.5, 0.5, -0.5, 0.5), ny: int | None = None) -> StaggeredMesh:
    """Uniform grid of ``n`` x ``ny`` rectangles on ``domain`` = (x0, x1, y0, y1)."""
    ny = n if ny is None else ny
    if n < 1 or ny < 1:
        raise MeshError("need at least one cell per direction")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError("degenerate domain")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    k = j * (n + 1) + i
    cells = np.column_stack([k, k + 1, k + n + 2, k + n + 1])
    return build_polygonal_mesh(verts, list(cells))


# ---------------------------------------------------------------------------
# regularity


@dataclass(frozen=True)
class RegularityReport:
    rho_edge: float
    rho_star: float
    rho: float

    @property
    def passed(self) -> bool:
        return self.rho_edge >= self.rho and self.rho_star >= self.rho

    # alias matching the report field name
    @property
    def pass_(self) -> bool:
        return self.passed


def validate_regularity(mesh: StaggeredMesh, rho: float) -> RegularityReport:
    """Edge-to-diameter ratio and star-ball ratio of every primal cell.

    ``rho_star`` uses the largest ball centred at nu that stays inside every
    edge half-plane of the cell, i.e. inside its kernel.
    """
    rho_edge = np.inf
    rho_star = np.inf
    pts = mesh.points
    for c, ids in enumerate(mesh.cells):
        poly = pts[ids]
        diam = _diameter(poly)
        d = np.roll(poly, -1, axis=0) - poly
        lengths = np.hypot(d[:, 0], d[:, 1])
        rho_edge = min(rho_edge, lengths.min() / diam)
        nu = pts[mesh.center_ids[c]]
        rel = nu - poly
        dist = (d[:, 0] * rel[:, 1] - d[:, 1] * rel[:, 0]) / lengths
        rho_star = min(rho_star, dist.min() / diam)
    return RegularityReport(float(rho_edge), float(rho_star), float(rho))


def perturb_mesh(mesh: StaggeredMesh, delta: float, seed: int = 0, rho: float = 0.1,
                 max_tries: int = 20) -> StaggeredMesh:
    """Randomly displace interior primal vertices by up to ``delta * h`` per coordinate.

    Centers are recomputed as centroids.  Draws are repeated with derived
    seeds until the result passes ``validate_regularity(., rho)``.
    """
    if not 0.0 <= delta < 0.5:
        raise MeshError("delta must lie in [0, 0.5)")
    if delta == 0.0:
        return mesh
    h = mesh.h
    interior = ~mesh.boundary_vertex_mask()
    for attempt in range(max_tries):
        rng = np.random.default_rng([seed, attempt])
        offsets = rng.uniform(-1.0, 1.0, size=(mesh.n_vertices, 2))
        verts = mesh.vertices.copy()
        verts[interior] += delta * h * offsets[interior]
        try:
            out = build_polygonal_mesh(verts, mesh.cells)
        except MeshError:
            continue
        if validate_regularity(out, rho).passed:
            return out
    raise MeshError(f"no regular perturbation found after {max_tries} tries")


# ---------------------------------------------------------------------------
# file format


def write_mesh(mesh: StaggeredMesh, path) -> None:
    doc = {
        "vertices": mesh.vertices.tolist(),
        "cells": [
            {"vertices": ids.tolist(), "center": mesh.points[cid].tolist()}
            for ids, cid in zip(mesh.cells, mesh.center_ids)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def read_mesh(path) -> StaggeredMesh:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeshError(f"malformed mesh file: {exc}") from exc
    if not isinstance(doc, dict) or "vertices" not in doc or "cells" not in doc:
        raise MeshError("mesh file needs 'vertices' and 'cells'")
    try:
        verts = np.array(doc["vertices"], dtype=float)
        cells, centers = [], []
        for cell in doc["cells"]:
            cells.append([int(i) for i in cell["vertices"]])
            centers.append(cell.get("center"))
    except (TypeError, KeyError, ValueError) as exc:
        raise MeshError(f"malformed mesh file: {exc}") from exc
    return build_polygonal_mesh(verts, cells, centers)
