"""Interpolation projections, L2 errors and observed convergence rates."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .polyquad import composite_level_for
from .spaces import (
    FieldVector,
    evaluate_reference,
    interpolate,
    jacobians,
    map_to_physical,
    triangle_groups,
)


def project_Ih(u, scalar_space, level=0, singular_point=None) -> FieldVector:
    """I_h u: edge moments on primal edges and P^{m-1} cell moments of ``u(x, y)``."""
    return interpolate(scalar_space, u, level=level, singular_point=singular_point)


def project_Jh(p, vector_space, level=0, singular_point=None) -> FieldVector:
    """J_h p: normal moments on dual edges and P^{m-1} cell moments of ``p(x, y)``."""
    return interpolate(vector_space, p, level=level, singular_point=singular_point)


def l2_error(field_vec: FieldVector, exact=None, kappa=None, level=None, degree=None,
             singular_point=None) -> float:
    """||exact - field||_0 with the composite rule of degree 2m+4 and kappa h_sub <= 2.

    ``exact=None`` gives the norm of the field itself.  Per-triangle
    contributions are summed in triangle order with ``math.fsum``.
    """
    space = field_vec.space
    mesh = space.mesh
    deg = 2 * space.degree + 4 if degree is None else degree
    if level is None:
        level = composite_level_for(kappa, mesh.h) if kappa else 0
    det = np.abs(np.linalg.det(jacobians(mesh)))
    per_tri = np.zeros(mesh.n_triangles)
    for tris, q in triangle_groups(mesh, deg, level, singular_point):
        vals = evaluate_reference(space, field_vec.coefficients, q.points, tris)
        if exact is not None:
            pts = map_to_physical(mesh, q.points, tris)
            vals = np.asarray(exact(pts[..., 0], pts[..., 1])) - vals
        sq = np.abs(vals) ** 2
        if sq.ndim == 3:
            sq = sq.sum(axis=-1)
        per_tri[tris] = det[tris] * (sq @ q.weights)
    return math.sqrt(math.fsum(per_tri))


def boundary_norm(field_vec: FieldVector) -> float:
    """||w||_{0, boundary} of a scalar field, exact for polynomials."""
    from .assembly import assemble_boundary_mass

    R = assemble_boundary_mass(field_vec.space)
    c = field_vec.coefficients
    return math.sqrt(max(float(np.real(np.conj(c) @ (R @ c))), 0.0))


@dataclass
class ErrorReport:
    err_u_l2: float
    err_p_l2: float
    err_Ihu_uh: float
    dof_u: int
    dof_p: int
    h: float
    kappa: float
    m: int
    n: int = 0
    resid: float = 0.0
    wall_ms: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("err_u_l2", "err_p_l2", "err_Ihu_uh"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be a nonnegative number")

    def as_dict(self) -> dict:
        return asdict(self)


def observed_rate(e_coarse: float, e_fine: float, ratio: float = 2.0) -> float | None:
    """log(e_coarse / e_fine) / log(ratio); None if either error is zero."""
    if e_coarse <= 0 or e_fine <= 0:
        return None
    return math.log(e_coarse / e_fine) / math.log(ratio)


@dataclass
class ConvergenceRecord:
    levels: list
    rates: dict

    def rate(self, quantity: str, i: int):
        """Rate between levels i-1 and i (None for the first level)."""
        return self.rates[quantity][i]


def compute_rates(records, quantities=("err_u_l2", "err_p_l2")) -> ConvergenceRecord:
    """log2(e_coarse / e_fine) between consecutive levels of a halving sequence."""
    records = list(records)
    for prev, cur in zip(records, records[1:]):
        if prev.n and cur.n and cur.n != 2 * prev.n:
            raise ValueError("consecutive levels must double n (halve h)")
    rates = {}
    for qname in quantities:
        out = [None]
        for prev, cur in zip(records, records[1:]):
            out.append(observed_rate(getattr(prev, qname), getattr(cur, qname)))
        rates[qname] = out[: len(records)]
    return ConvergenceRecord(records, rates)
