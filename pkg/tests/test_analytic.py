import math

import mpmath
import numpy as np
import pytest

from sdg_helmholtz.analytic import (
    MILLER_MAX,
    SERIES_MAX,
    bessel_j,
    bessel_j_prime,
    example1,
    example2,
    polynomial_solution,
)

ORDERS = [0.0, 1.0, 0.5, 2.0 / 3.0, 1.5]
GRID = np.unique(np.concatenate([np.linspace(0.0, 500.0, 1001), [0.1, 1.0, 10.0, 100.0]]))


def oracle(nu, xs, dps=30):
    with mpmath.workdps(dps):
        return np.array([float(mpmath.besselj(mpmath.mpf(nu), mpmath.mpf(x))) for x in xs])


@pytest.mark.parametrize("nu", ORDERS)
def test_bessel_against_high_precision(nu):
    ref = oracle(nu, GRID)
    got = bessel_j(nu, GRID)
    nz = ref != 0
    assert np.all(np.abs(got[~nz]) == 0)
    assert np.max(np.abs(got[nz] - ref[nz]) / np.abs(ref[nz])) <= 1e-10


def test_bessel_spot_values_two_thirds():
    xs = np.array([0.1, 1.0, 10.0, 100.0])
    ref = oracle(2.0 / 3.0, xs, dps=60)
    assert np.all(np.abs(bessel_j(2.0 / 3.0, xs) - ref) <= 1e-10 * np.abs(ref))


def test_half_integer_closed_forms():
    assert abs(bessel_j(0.5, np.pi / 2) - 2.0 / np.pi) <= 1e-12
    assert abs(bessel_j(1.5, np.pi) - math.sqrt(2.0) / np.pi) <= 1e-12


@pytest.mark.parametrize("nu", ORDERS)
def test_switchovers_are_continuous(nu):
    for x0 in (1.0, SERIES_MAX, MILLER_MAX):
        xs = np.array([x0 * (1 - 1e-13), x0, x0 * (1 + 1e-13)])
        vals = bessel_j(nu, xs)
        assert np.ptp(vals) <= 1e-10 * max(abs(vals[1]), 1e-3)


@pytest.mark.parametrize("nu", [1.0, 1.5, 2.0 / 3.0 + 1.0])
def test_three_term_recurrence(nu):
    x = np.linspace(0.5, 200.0, 800)
    lo, mid, hi = bessel_j(nu - 1, x), bessel_j(nu, x), bessel_j(nu + 1, x)
    scale = np.maximum.reduce([np.abs(lo), np.abs(hi), np.abs(2 * nu / x * mid)])
    assert np.max(np.abs(lo + hi - 2 * nu / x * mid) / scale) <= 1e-9


@pytest.mark.parametrize("nu", [1.0, 1.5, 2.0])
def test_derivative_self_consistency(nu):
    x = np.linspace(0.5, 200.0, 800)
    d = bessel_j_prime(nu, x)
    alt = 0.5 * (bessel_j(nu - 1, x) - bessel_j(nu + 1, x))
    assert np.max(np.abs(d - alt)) <= 1e-9 * np.max(np.abs(alt))


def test_bessel_limits_and_errors():
    assert bessel_j(0.0, 0.0) == 1.0
    assert bessel_j(2.0 / 3.0, 0.0) == 0.0
    assert bessel_j_prime(1.0, 0.0) == 0.5
    assert np.isinf(bessel_j_prime(2.0 / 3.0, 0.0))
    with pytest.raises(ValueError):
        bessel_j(1.0, -1.0)
    with pytest.raises(ValueError):
        bessel_j(-1.0, 1.0)


def laplacian_fd(func, x, y, h):
    return (func(x + h, y) + func(x - h, y) + func(x, y + h) + func(x, y - h) - 4 * func(x, y)) / h ** 2


def pde_residual(sol, x, y, h):
    k = sol.kappa
    return -laplacian_fd(sol.u, x, y, h) - k * k * sol.u(x, y) - sol.f(x, y)


@pytest.mark.parametrize("sol", [example1(10.0), example2(10.0, 1.0), example2(10.0, 1.5),
                                 example2(10.0, 2.0 / 3.0)], ids=["ex1", "xi1", "xi32", "xi23"])
def test_manufactured_solutions_solve_the_pde(sol):
    rng = np.random.default_rng(1)
    x0, x1, y0, y1 = sol.domain
    x = rng.uniform(x0 + 0.1, x1 - 0.1, 20)
    y = rng.uniform(y0 + 0.1, y1 - 0.1, 20)
    scale = np.max(np.abs(sol.kappa ** 2 * sol.u(x, y))) + np.max(np.abs(sol.f(x, y)))
    r1 = np.max(np.abs(pde_residual(sol, x, y, 2e-3)))
    r2 = np.max(np.abs(pde_residual(sol, x, y, 1e-3)))
    # second-order finite differences: the residual shrinks 4x per halving
    assert r2 <= 1e-3 * scale
    assert 3.5 < r1 / r2 < 4.5


@pytest.mark.parametrize("sol", [example1(7.0), example2(10.0, 1.5)], ids=["ex1", "xi32"])
def test_gradient_and_flux(sol):
    rng = np.random.default_rng(2)
    x0, x1, y0, y1 = sol.domain
    x = rng.uniform(x0 + 0.1, x1 - 0.1, 10)
    y = rng.uniform(y0 + 0.1, y1 - 0.1, 10)
    h = 1e-6
    gx = (sol.u(x + h, y) - sol.u(x - h, y)) / (2 * h)
    gy = (sol.u(x, y + h) - sol.u(x, y - h)) / (2 * h)
    g = sol.grad_u(x, y)
    assert np.allclose(g[..., 0], gx, atol=1e-7) and np.allclose(g[..., 1], gy, atol=1e-7)
    assert np.allclose(sol.p(x, y), -g / (1j * sol.kappa))
    n = np.array([[0.6, 0.8]] * len(x))
    expect = sol.u(x, y) + (g @ n[0]) / (1j * sol.kappa)
    assert np.allclose(sol.boundary_datum(x, y, n), expect)
    assert np.allclose(sol.div_p(x, y), sol.f(x, y) / (1j * sol.kappa) - 1j * sol.kappa * sol.u(x, y))


def test_example1_radial_symmetry_and_origin():
    sol = example1(10.0)
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-0.5, 0.5, (2, 50))
    u = sol.u(x, y)
    assert np.allclose(u, sol.u(y, x), atol=1e-14)
    assert np.allclose(u, sol.u(-x, y), atol=1e-14)
    assert sol.f(0.0, 0.0) == 10.0
    assert np.all(sol.grad_u(0.0, 0.0) == 0)


@pytest.mark.parametrize("xi, slope", [(1.5, 0.5), (2.0 / 3.0, -1.0 / 3.0)])
def test_example2_gradient_singularity(xi, slope):
    sol = example2(10.0, xi)
    assert sol.singular_point == (0.0, 0.0)
    r = np.array([1e-6, 1e-5])
    g = np.linalg.norm(np.abs(sol.grad_u(r, 0.3 * r)), axis=-1)
    measured = np.log(g[1] / g[0]) / np.log(10.0)
    assert abs(measured - slope) <= 0.02


def test_example2_smooth_case_and_validation():
    sol = example2(10.0, 1.0)
    assert sol.singular_point is None
    assert np.allclose(sol.grad_u(0.0, 0.0), [5.0, 0.0])
    with pytest.raises(ValueError):
        example2(10.0, 0.0)
    with pytest.raises(ValueError):
        example1(-1.0)


def test_polynomial_solution():
    sol = polynomial_solution(3.0, lambda x, y: x * y + 0j,
                              lambda x, y: np.stack([y, x], axis=-1) + 0j,
                              lambda x, y: 0.0 * x)
    assert np.allclose(sol.f(0.5, 0.2), -9.0 * 0.1)
