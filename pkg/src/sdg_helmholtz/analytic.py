"""Bessel functions J_nu of real order and the manufactured test solutions.

J_nu(x), x >= 0, is evaluated by

* the ascending series for x <= 8,
* Miller's backward recurrence normalized by the Neumann sum
  (x/2)^nu = sum_k (nu + 2k) Gamma(nu + k) / k! J_{nu+2k}(x) for 8 < x <= 50,
* Hankel's asymptotic expansion for x > 50,

with the elementary closed forms used for nu = 1/2 and 3/2 away from x = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SERIES_MAX = 8.0
MILLER_MAX = 50.0


def _check(nu, x):
    if nu < 0:
        raise ValueError("order must be nonnegative")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("argument must be nonnegative")
    return x


def _series(nu: float, x: np.ndarray) -> np.ndarray:
    half = x / 2.0
    q = -half * half
    term = np.exp(nu * np.log(np.where(half > 0, half, 1.0)) - math.lgamma(nu + 1.0))
    term = np.where(half > 0, term, 1.0 if nu == 0 else 0.0)
    total = term.copy()
    for k in range(1, 60):
        term = term * q / (k * (k + nu))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def _miller(nu: float, x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    flat = x.ravel()
    res = out.reshape(-1)
    # bins of similar x share one starting order
    edges = np.arange(SERIES_MAX, MILLER_MAX + 5.0, 5.0)
    which = np.digitize(flat, edges)
    for b in np.unique(which):
        sel = which == b
        xs = flat[sel]
        xmax = xs.max()
        n_top = int(xmax + 30 + 12 * xmax ** (1.0 / 3.0))
        n_top += n_top % 2
        y_next = np.zeros_like(xs)
        y = np.full_like(xs, 1e-300)
        norm = np.zeros_like(xs)
        # y holds the unnormalized J_{nu+k}; walk k from n_top down to 0
        for k in range(n_top, 0, -1):
            if k % 2 == 0:
                j = k // 2
                c = (nu + k) * math.exp(math.lgamma(nu + j) - math.lgamma(j + 1.0))
                norm += c * y
            y_prev = 2.0 * (nu + k) / xs * y - y_next
            y_next, y = y, y_prev
            big = np.abs(y) > 1e250
            if np.any(big):
                y_next[big] *= 1e-250
                y[big] *= 1e-250
                norm[big] *= 1e-250
        norm += math.gamma(nu + 1.0) * y
        res[sel] = y * (xs / 2.0) ** nu / norm
    return out


def _hankel(nu: float, x: np.ndarray) -> np.ndarray:
    mu = 4.0 * nu * nu
    p = np.ones_like(x)
    qsum = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(1, 40):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if k % 2 == 1:
            qsum += (-1) ** ((k - 1) // 2) * term
        else:
            p += (-1) ** (k // 2) * term
        if np.all(np.abs(term) < 1e-17):
            break
    chi = x - (0.5 * nu + 0.25) * np.pi
    return np.sqrt(2.0 / (np.pi * x)) * (p * np.cos(chi) - qsum * np.sin(chi))


def bessel_j(nu: float, x) -> np.ndarray:
    """J_nu(x) for real nu >= 0 and x >= 0."""
    x = _check(nu, x)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    if nu in (0.5, 1.5):
        big = x >= 1.0
        xb = x[big]
        amp = np.sqrt(2.0 / (np.pi * xb))
        if nu == 0.5:
            out[big] = amp * np.sin(xb)
        else:
            out[big] = amp * (np.sin(xb) / xb - np.cos(xb))
        small = ~big
        out[small] = _series(nu, x[small])
        return out[0] if scalar else out
    s = x <= SERIES_MAX
    h = x > MILLER_MAX
    mid = ~s & ~h
    out[s] = _series(nu, x[s])
    if np.any(mid):
        out[mid] = _miller(nu, x[mid])
    if np.any(h):
        out[h] = _hankel(nu, x[h])
    return out[0] if scalar else out


def bessel_j_prime(nu: float, x) -> np.ndarray:
    """dJ_nu/dx = (nu / x) J_nu - J_{nu+1}; the x = 0 limit is inf for 0 < nu < 1."""
    x = _check(nu, x)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = (nu / xp) * bessel_j(nu, xp) - bessel_j(nu + 1.0, xp)
    if nu == 1.0:
        at0 = 0.5
    elif 0.0 < nu < 1.0:
        at0 = np.inf
    else:
        at0 = 0.0
    out[~pos] = at0
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# manufactured solutions


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact (u, p) pair with data for -lap u - kappa^2 u = f.

    ``p = -grad u / (i kappa)``.  The discrete scheme works with the
    first-order system, whose source and boundary datum are
    ``mixed_source = f / (i kappa)`` and ``boundary_datum = -p . n + u``.
    """

    name: str
    kappa: float
    domain: tuple
    u: Callable
    grad_u: Callable
    f: Callable
    singular_point: tuple | None = None
    params: dict = field(default_factory=dict)

    def p(self, x, y):
        return -self.grad_u(x, y) / (1j * self.kappa)

    def mixed_source(self, x, y):
        return self.f(x, y) / (1j * self.kappa)

    def boundary_datum(self, x, y, n):
        p = self.p(x, y)
        n = np.asarray(n)
        return -(p[..., 0] * n[..., 0] + p[..., 1] * n[..., 1]) + self.u(x, y)

    def div_p(self, x, y):
        """div p from the first-order system: mixed_source - i kappa u."""
        return self.mixed_source(x, y) - 1j * self.kappa * self.u(x, y)


def example1(kappa: float) -> ManufacturedSolution:
    """Radial solution with f = sin(kappa r) / r on [-0.5, 0.5]^2."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    k = float(kappa)
    const = (np.cos(k) + 1j * np.sin(k)) / (k * (bessel_j(0, k) + 1j * bessel_j(1, k)))

    def radius(x, y):
        return np.hypot(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def u(x, y):
        r = radius(x, y)
        return np.cos(k * r) / k - const * bessel_j(0.0, k * r)

    def grad_u(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = radius(x, y)
        dudr = -np.sin(k * r) + const * k * bessel_j(1.0, k * r)
        safe = np.where(r > 0, r, 1.0)
        scale = np.where(r > 0, dudr / safe, 0.0)
        return np.stack([scale * x, scale * y], axis=-1)

    def f(x, y):
        r = radius(x, y)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, np.sin(k * r) / safe, k) + 0j

    return ManufacturedSolution("ex1", k, (-0.5, 0.5, -0.5, 0.5), u, grad_u, f,
                                params={"const": const})


def example2(kappa: float, xi: float) -> ManufacturedSolution:
    """u = J_xi(kappa r) cos(xi theta) on (0, 1) x (-0.5, 0.5), f = 0.

    theta = atan2(y, x) lies in [-pi/2, pi/2] on the closed domain.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if xi <= 0:
        raise ValueError("xi must be positive")
    k = float(kappa)
    xi = float(xi)

    def u(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        return bessel_j(xi, k * r) * np.cos(xi * th) + 0j

    def grad_u(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        pos = r > 0
        kr = k * r
        ur = k * bessel_j_prime(xi, kr) * np.cos(xi * th)
        safe = np.where(pos, r, 1.0)
        ut_over_r = -xi * bessel_j(xi, kr) * np.sin(xi * th) / safe
        c, s = np.cos(th), np.sin(th)
        gx = ur * c - ut_over_r * s
        gy = ur * s + ut_over_r * c
        if np.any(~pos):
            if xi == 1.0:
                g0 = (k / 2.0, 0.0)
            elif xi > 1.0:
                g0 = (0.0, 0.0)
            else:
                g0 = (np.inf, np.inf)
            gx = np.where(pos, gx, g0[0])
            gy = np.where(pos, gy, g0[1])
        return np.stack([gx, gy], axis=-1) + 0j

    def f(x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape, dtype=complex)

    singular = None if float(xi).is_integer() else (0.0, 0.0)
    return ManufacturedSolution("ex2", k, (0.0, 1.0, -0.5, 0.5), u, grad_u, f,
                                singular_point=singular, params={"xi": xi})


def polynomial_solution(kappa: float, u, grad_u, laplacian, domain=(-0.5, 0.5, -0.5, 0.5),
                        name="poly") -> ManufacturedSolution:
    """Wrap a polynomial u (with its gradient and Laplacian) as a test case."""
    k = float(kappa)

    def f(x, y):
        return -laplacian(x, y) - k * k * u(x, y)

    return ManufacturedSolution(name, k, tuple(domain), u, grad_u, f)


def zero_solution(kappa: float, domain=(-0.5, 0.5, -0.5, 0.5)) -> ManufacturedSolution:
    """u = 0 with zero source and boundary data."""

    def zero(x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape, dtype=complex)

    def zero_grad(x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape + (2,), dtype=complex)

    return ManufacturedSolution("zero", float(kappa), tuple(domain), zero, zero_grad, zero)
