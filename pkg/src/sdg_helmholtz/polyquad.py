"""Quadrature rules and polynomial bases on triangles and edges.

Everything is set up on the reference triangle with vertices (0, 0), (1, 0),
(0, 1) and pushed to physical triangles by the affine map

    x = x0 + J @ xi,    J = [x1 - x0, x2 - x0].

Because an affine pull-back maps P^m onto P^m, one reference basis serves
every triangle of the mesh and all per-element work vectorizes over
triangles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_TRI_DEGREE = 20
BARY_TOL = 1e-12


@dataclass(frozen=True)
class QuadratureRule:
    """Points and positive weights on the reference triangle or interval.

    For triangles ``points`` has shape (n, 2) in reference coordinates and the
    weights sum to 1/2.  For edges ``points`` is a 1-D array of parameters in
    [0, 1] and the weights sum to 1.
    """

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __len__(self) -> int:
        return len(self.weights)

    def mapped(self, vertices) -> tuple[np.ndarray, np.ndarray]:
        """Physical points and weights of a triangle rule on ``vertices`` (3, 2)."""
        v = np.asarray(vertices, dtype=float)
        jac = np.column_stack([v[1] - v[0], v[2] - v[0]])
        det = abs(np.linalg.det(jac))
        return v[0] + self.points @ jac.T, self.weights * det


@lru_cache(maxsize=None)
def tri_quadrature(degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi (Stroud conical product) rule exact to ``degree``."""
    if not 1 <= degree <= MAX_TRI_DEGREE:
        raise ValueError(f"unsupported triangle quadrature degree {degree}")
    n = degree // 2 + 1
    # Duffy collapse: xi = s, eta = t (1 - s); the Jacobian (1 - s) is absorbed
    # by the Jacobi weight on the s direction.
    s, ws = roots_jacobi(n, 1.0, 0.0)
    t, wt = roots_legendre(n)
    s = 0.5 * (s + 1.0)
    t = 0.5 * (t + 1.0)
    ws = ws / 4.0
    wt = wt / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    xi = S.ravel()
    eta = (T * (1.0 - S)).ravel()
    pts = np.column_stack([xi, eta])
    return QuadratureRule(pts, W.ravel(), degree)


@lru_cache(maxsize=None)
def edge_quadrature(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact to ``degree``."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    n = degree // 2 + 1
    x, w = roots_legendre(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, degree)


def _subdivide(tri: np.ndarray) -> list[np.ndarray]:
    a, b, c = tri
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return [np.array([a, ab, ca]), np.array([ab, b, bc]),
            np.array([ca, bc, c]), np.array([ab, bc, ca])]


def _rule_on_subtriangles(base: QuadratureRule, tris) -> QuadratureRule:
    pts, wts = [], []
    for tri in tris:
        p, w = base.mapped(tri)
        pts.append(p)
        wts.append(w)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), base.exact_degree)


@lru_cache(maxsize=None)
def composite_tri_quadrature(degree: int, level: int) -> QuadratureRule:
    """Base rule of ``degree`` repeated on the 4**level uniform subtriangles."""
    base = tri_quadrature(degree)
    if level <= 0:
        return base
    tris = [np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])]
    for _ in range(level):
        tris = [s for t in tris for s in _subdivide(t)]
    return _rule_on_subtriangles(base, tris)


@lru_cache(maxsize=None)
def graded_tri_quadrature(degree: int, corner: int, levels: int = 30) -> QuadratureRule:
    """Rule geometrically refined toward reference vertex ``corner`` (0, 1, 2).

    Used for integrands with an integrable point singularity at one vertex.
    """
    base = tri_quadrature(degree)
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tri = np.roll(ref, -corner, axis=0)
    keep = []
    for _ in range(levels):
        subs = _subdivide(tri)
        # one more split keeps each piece at least its own size away from the corner
        for sub in subs[1:]:
            keep.extend(_subdivide(sub))
        tri = subs[0]
    keep.append(tri)
    return _rule_on_subtriangles(base, keep)


@lru_cache(maxsize=None)
def composite_edge_quadrature(degree: int, level: int) -> QuadratureRule:
    base = edge_quadrature(degree)
    k = 2 ** max(level, 0)
    offs = np.arange(k) / k
    pts = (offs[:, None] + base.points[None, :] / k).ravel()
    wts = np.tile(base.weights / k, k)
    return QuadratureRule(pts, wts, degree)


@lru_cache(maxsize=None)
def graded_edge_quadrature(degree: int, at_start: bool, levels: int = 40) -> QuadratureRule:
    """Gauss rule on [0, 1] bisected geometrically toward one endpoint."""
    base = edge_quadrature(degree)
    pts, wts = [], []
    lo, hi = 0.0, 1.0
    for _ in range(levels):
        mid = 0.5 * (lo + hi)
        pts.append(mid + base.points * (hi - mid))
        wts.append(base.weights * (hi - mid))
        hi = mid
    pts.append(lo + base.points * (hi - lo))
    wts.append(base.weights * (hi - lo))
    p = np.concatenate(pts)
    if not at_start:
        p = 1.0 - p
    return QuadratureRule(p, np.concatenate(wts), degree)


def composite_level_for(kappa: float, h: float, max_ratio: float = 2.0) -> int:
    """Smallest L with kappa * h / 2**L <= max_ratio."""
    if kappa * h <= max_ratio:
        return 0
    return int(np.ceil(np.log2(kappa * h / max_ratio)))


# ---------------------------------------------------------------------------
# bases


def monomial_exponents(degree: int) -> list[tuple[int, int]]:
    """(a, b) with a + b <= degree, ordered by total degree."""
    return [(d - b, b) for d in range(degree + 1) for b in range(d + 1)]


def dim_p(degree: int) -> int:
    """Dimension of P^degree in two variables (0 for negative degree)."""
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2


def _monomials(xi: np.ndarray, eta: np.ndarray, degree: int):
    """Values and reference gradients of the monomials, shape (..., n)."""
    exps = monomial_exponents(degree)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    val = np.empty(xi.shape + (len(exps),))
    dxi = np.zeros_like(val)
    deta = np.zeros_like(val)
    for k, (a, b) in enumerate(exps):
        val[..., k] = xi**a * eta**b
        if a > 0:
            dxi[..., k] = a * xi ** (a - 1) * eta**b
        if b > 0:
            deta[..., k] = b * xi**a * eta ** (b - 1)
    return val, dxi, deta


@lru_cache(maxsize=None)
def _orthonormal_coefficients(degree: int) -> np.ndarray:
    # Gram-Schmidt in the graded monomial order via Cholesky; the leading
    # dim_p(k) functions then span P^k for every k <= degree.
    # exact monomial moments a! b! / (a + b + 2)!; a second pass removes the
    # rounding left by the first (the monomial Gram matrix is ill-conditioned)
    exps = monomial_exponents(degree)
    gram = np.array([[math.factorial(a1 + a2) * math.factorial(b1 + b2)
                      / math.factorial(a1 + a2 + b1 + b2 + 2)
                      for a2, b2 in exps] for a1, b1 in exps])
    coef = np.linalg.inv(np.linalg.cholesky(gram)).T
    again = coef.T @ gram @ coef
    return coef @ np.linalg.inv(np.linalg.cholesky(again)).T


def reference_basis(xi, eta, degree: int):
    """Orthonormal basis of P^degree on the reference triangle.

    Returns (values, d/dxi, d/deta), each of shape ``xi.shape + (n,)``.
    The basis is hierarchical: its first ``dim_p(k)`` members span P^k.
    """
    coef = _orthonormal_coefficients(degree)
    val, dxi, deta = _monomials(xi, eta, degree)
    return val @ coef, dxi @ coef, deta @ coef


def legendre(s, degree: int) -> np.ndarray:
    """Legendre polynomials P_0..P_degree at s in [-1, 1], shape s.shape + (degree+1,)."""
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = s
    for k in range(2, degree + 1):
        out[..., k] = ((2 * k - 1) * s * out[..., k - 1] - (k - 1) * out[..., k - 2]) / k
    return out


class TriBasis:
    """Orthonormal basis of P^m on one physical triangle."""

    def __init__(self, vertices, degree: int):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.shape != (3, 2):
            raise ValueError("triangle needs 3 vertices")
        self.degree = degree
        self.n_funcs = dim_p(degree)
        v = self.vertices
        self.jacobian = np.column_stack([v[1] - v[0], v[2] - v[0]])
        self.det = float(np.linalg.det(self.jacobian))
        if self.det == 0.0:
            raise ValueError("degenerate triangle")
        self.inverse = np.linalg.inv(self.jacobian)
        self._scale = 1.0 / np.sqrt(abs(self.det))

    def to_reference(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - self.vertices[0]) @ self.inverse.T

    def eval(self, points, tol: float = BARY_TOL):
        """Values (n_pts, n) and physical gradients (n_pts, n, 2)."""
        ref = self.to_reference(points)
        bary = np.column_stack([1.0 - ref.sum(axis=1), ref])
        if np.any(bary < -tol):
            raise ValueError("point outside triangle")
        val, dxi, deta = reference_basis(ref[:, 0], ref[:, 1], self.degree)
        # grad_x = J^{-T} grad_xi
        ginv = self.inverse
        gx = dxi * ginv[0, 0] + deta * ginv[1, 0]
        gy = dxi * ginv[0, 1] + deta * ginv[1, 1]
        grad = np.stack([gx, gy], axis=-1)
        return val * self._scale, grad * self._scale


class EdgeBasis:
    """Legendre polynomials in the arclength parameter s in [-1, 1] of an edge."""

    def __init__(self, start, end, degree: int):
        self.start = np.asarray(start, dtype=float)
        self.end = np.asarray(end, dtype=float)
        self.degree = degree
        self.n_funcs = degree + 1
        self.length = float(np.hypot(*(self.end - self.start)))

    def eval(self, points, tol: float = BARY_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.end - self.start
        t = (pts - self.start) @ d / (self.length**2)
        rel = pts - self.start
        off = np.abs(d[0] * rel[:, 1] - d[1] * rel[:, 0]) / self.length
        if np.any(t < -tol) or np.any(t > 1 + tol) or np.any(off > tol * max(self.length, 1.0)):
            raise ValueError("point not on edge")
        return legendre(2.0 * t - 1.0, self.degree)


def eval_basis(basis, points):
    """Evaluate a TriBasis (values, gradients) or EdgeBasis (values)."""
    return basis.eval(points)
