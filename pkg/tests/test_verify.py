import numpy as np
import pytest

from oracle import bh_star_value, bh_value
from sdg_helmholtz.analytic import example2
from sdg_helmholtz.assembly import assemble_bh, assemble_bh_star
from sdg_helmholtz.harness import run_solve
from sdg_helmholtz.mesh import build_square_mesh, perturb_mesh
from sdg_helmholtz.spaces import FieldVector, build_scalar_space, build_vector_space
from sdg_helmholtz.verify import (
    ErrorReport,
    compute_rates,
    l2_error,
    observed_rate,
    project_Ih,
    project_Jh,
)


def smooth_u(x, y):
    return np.exp(x) * np.sin(3 * x + 1) * np.cos(2 * y) + 1j * np.cos(x * y)


def smooth_p(x, y):
    return np.stack([np.sin(2 * y) * np.exp(x) + 1j * x * x, np.cos(3 * x - y) - 1j * y], axis=-1)


@pytest.fixture(scope="module", params=[1, 2])
def setup(request):
    m = request.param
    mesh = perturb_mesh(build_square_mesh(4), 0.2, seed=9)
    S, V = build_scalar_space(mesh, m), build_vector_space(mesh, m)
    return mesh, S, V, assemble_bh(S, V), assemble_bh_star(S, V)


def test_Ih_orthogonality(setup):
    # b_h*(u - I_h u, q) = 0 for every q in V_h
    mesh, S, V, _, Bs = setup
    ihu = project_Ih(smooth_u, S, level=2).coefficients
    rng = np.random.default_rng(0)
    for _ in range(30):
        q = rng.standard_normal(V.ndof)
        cont = bh_star_value(mesh, S, V, smooth_u, q)
        disc = q @ (Bs @ ihu)
        assert abs(cont - disc) <= 1e-10 * np.linalg.norm(q) * np.linalg.norm(ihu)


def test_Jh_orthogonality(setup):
    # b_h(p - J_h p, v) = 0 for every v in S_h
    mesh, S, V, B, _ = setup
    jhp = project_Jh(smooth_p, V, level=2).coefficients
    rng = np.random.default_rng(1)
    for _ in range(30):
        v = rng.standard_normal(S.ndof)
        cont = bh_value(mesh, S, V, smooth_p, v)
        disc = v @ (B @ jhp)
        assert abs(cont - disc) <= 1e-10 * np.linalg.norm(v) * np.linalg.norm(jhp)


def test_l2_error_basics():
    mesh = build_square_mesh(4)
    S = build_scalar_space(mesh, 1)
    zero = FieldVector(S, np.zeros(S.ndof))
    assert l2_error(zero, lambda x, y: np.ones_like(x)) == pytest.approx(1.0, abs=1e-14)
    lin = lambda x, y: 2 * x - y + 0j
    assert l2_error(project_Ih(lin, S), lin) <= 1e-11


def test_interpolation_rate():
    errs = []
    for n in (4, 8, 16, 32):
        S = build_scalar_space(build_square_mesh(n), 1)
        f = lambda x, y: np.sin(np.pi * x) + 0j
        errs.append(l2_error(project_Ih(f, S), f))
    rate = observed_rate(errs[-2], errs[-1])
    assert abs(rate - 2.0) <= 0.05


def make_report(err, n):
    return ErrorReport(err, err, 0.0, 1, 1, 1.0 / n, 10.0, 1, n=n)


def test_rates():
    rec = compute_rates([make_report(4e-2, 4), make_report(1e-2, 8)])
    assert rec.rate("err_u_l2", 0) is None
    assert rec.rate("err_u_l2", 1) == pytest.approx(2.0)
    # first two P1 entries of the regular-solution table
    assert observed_rate(3.91e-2, 1.07e-2) == pytest.approx(1.87, abs=0.02)
    assert compute_rates([make_report(1e-3, 4)]).rates["err_u_l2"] == [None]
    assert compute_rates([make_report(1e-3, 4), make_report(0.0, 8)]).rate("err_p_l2", 1) is None
    with pytest.raises(ValueError):
        compute_rates([make_report(1e-3, 4), make_report(1e-4, 16)])
    with pytest.raises(ValueError):
        make_report(float("nan"), 4)


def test_reported_errors_are_quadrature_stable_and_consistent():
    sol = example2(10.0, 2.0 / 3.0)
    mesh = build_square_mesh(8, domain=sol.domain)
    res = run_solve(sol, mesh, 1, n=8)
    rep = res.report
    for fv, exact, err in ((res.u_h, sol.u, rep.err_u_l2), (res.p_h, sol.p, rep.err_p_l2)):
        finer = l2_error(fv, exact, level=2, singular_point=sol.singular_point)
        assert abs(finer - err) <= 1e-6 * err
    ihu = project_Ih(sol.u, res.u_h.space, level=1, singular_point=sol.singular_point)
    interp = l2_error(ihu, sol.u, level=1, singular_point=sol.singular_point)
    assert abs(rep.err_u_l2 - interp) <= rep.err_Ihu_uh * (1 + 1e-9)
