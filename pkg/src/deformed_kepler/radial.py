"""Reduced radial problem: turning points, quadratures, rapidity and world time.

With the conserved data (eps, E1, l^2) fixed, the radius obeys a first-order
equation ``(d r^2 / d tau)^2 = G(r)``.  The rapidity ``a`` of the second
O(2,1) triple follows from a separable equation in ``(r, a)``, and the
shifted world time is an algebraic function of ``(r, a)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq, minimize_scalar

from . import conventions
from .algebra import BIG_I, T, DeformationParams, as_vector
from .observables import (
    ChartError, e1, e1_coefficients, hyperbolic_from_svars, l_squared, r_squared,
    svars_from_state, theta, theta_closed_form,
)

ROOT_RTOL = 1e-12
QUAD_RTOL = 1e-13


class ForbiddenRegionError(ValueError):
    """The radius lies where the radial speed squared is negative."""


class NoRootError(ValueError):
    """No sign change of the radial speed squared inside the bracket."""


@dataclass(frozen=True)
class RadialConstants:
    """Conserved data of the reduced problem."""

    epsilon: float
    E1: float
    l2: float
    theta: float
    params: DeformationParams

    @classmethod
    def from_state(cls, s, params: DeformationParams, rtol: float = 1e-8) -> "RadialConstants":
        """Read the constants off a state, checking theta against its closed form."""
        z = as_vector(s)
        th = theta(z, params)
        closed = theta_closed_form(z[0], params)
        scale = max(abs(closed), params.M2 * params.T / (2 * params.m))
        if abs(th - closed) > rtol * scale:
            raise ValueError(f"state is off-shell: theta {th!r} differs from closed form {closed!r}")
        return cls(float(z[0]), e1(z, params), l_squared(z), th, params)


@dataclass(frozen=True)
class TurningPoints:
    r_min: float
    r_max: float | None

    @property
    def bound(self) -> bool:
        return self.r_max is not None


def denom_D(r: float, rc: RadialConstants) -> float:
    """1 - m^2 T^2/nu^2 + (kappa m alpha / r - E1) / M^2."""
    prm = rc.params
    _, kappa = e1_coefficients(prm)
    base = 1 - (prm.m * prm.T / prm.nu) ** 2
    pot = kappa * prm.m * prm.alpha / r
    d = base + (pot - rc.E1) / prm.M2
    scale = abs(base) + (abs(pot) + abs(rc.E1)) / prm.M2
    if abs(d) <= 64 * np.finfo(float).eps * scale:
        raise ChartError(f"D(r) vanishes at r={r!r}: boundary of the (r, a) chart")
    return d


def _rho(r: float, rc: RadialConstants) -> float:
    return r * r - rc.l2 / rc.params.M2


def _w2(r: float, rc: RadialConstants) -> float:
    """s+1 - s-1 as a function of r."""
    prm = rc.params
    c, kappa = e1_coefficients(prm)
    return (2 * prm.m * rc.epsilon + kappa * prm.m * prm.alpha / r - rc.E1) / c


def radial_speed_squared(r: float, rc: RadialConstants) -> float:
    """(d r^2 / d tau)^2 at radius r.

    Solves the quadratic closure q1 W1^2 + q2 W1 W2 + q3 W3^2 = l^2/2 for
    W3 = (d r^2/d tau) / (4 D), with W1 = (m/2T) (r^2 - l^2/M^2) / D.  Both
    sides are multiplied through by D^2 so the result stays regular.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    prm = rc.params
    D = denom_D(r, rc)
    q1, q2, q3 = conventions.RADIAL_FORM
    w1d = (prm.m / (2 * prm.T)) * _rho(r, rc)  # W1 * D
    w3d_sq = (0.5 * rc.l2 * D * D - q1 * w1d * w1d - q2 * w1d * D * _w2(r, rc)) / q3
    return 16.0 * w3d_sq


def _scale_G(r: float, rc: RadialConstants) -> float:
    """Magnitude of the terms in radial_speed_squared, for root tolerances."""
    prm = rc.params
    D = denom_D(r, rc)
    w1d = (prm.m / (2 * prm.T)) * (r * r + rc.l2 / prm.M2)
    return 16.0 * (abs(rc.l2 * D * D) + 4 * w1d * w1d + 4 * abs(w1d * D * _w2(r, rc))) + 1e-300


def radial_polynomial(rc: RadialConstants) -> Polynomial:
    """r^2 G(r) as a polynomial in r (degree at most 6)."""
    prm = rc.params
    c, kappa = e1_coefficients(prm)
    q1, q2, q3 = conventions.RADIAL_FORM
    R = Polynomial([0.0, 1.0])
    w1d = (prm.m / (2 * prm.T)) * (R * R - rc.l2 / prm.M2)
    pot = kappa * prm.m * prm.alpha
    Dr = (1 - (prm.m * prm.T / prm.nu) ** 2 - rc.E1 / prm.M2) * R + pot / prm.M2  # D * r
    W2r = ((2 * prm.m * rc.epsilon - rc.E1) * R + pot) / c  # (s+1 - s-1) * r
    return (16.0 / q3) * (0.5 * rc.l2 * Dr * Dr - q1 * w1d * w1d * R * R - q2 * w1d * Dr * W2r)


def turning_points(rc: RadialConstants, bracket: tuple[float, float], r0: float | None = None,
                   n_grid: int = 4000) -> TurningPoints:
    """Roots of the radial speed squared around ``r0``.

    The bracket is scanned on a geometric grid and each sign change refined
    by Brent's method to relative tolerance 1e-12.  With ``r0`` the allowed
    interval containing it is returned; otherwise the first allowed interval.
    ``r_max`` is None when no root lies above the interval inside the
    bracket (unbound motion).  A tangential (double) root is reported as
    ``r_min == r_max``.
    """
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < rLo < rHi")
    grid = np.geomspace(lo, hi, n_grid)
    g = np.array([radial_speed_squared(r, rc) for r in grid])
    roots = []
    for k in range(n_grid - 1):
        if g[k] == 0.0:
            roots.append(float(grid[k]))
        elif g[k] * g[k + 1] < 0:
            roots.append(brentq(radial_speed_squared, grid[k], grid[k + 1], args=(rc,),
                                xtol=1e-300, rtol=ROOT_RTOL, maxiter=500))
    if not roots:
        return _double_root(rc, grid, g)
    if r0 is None:
        k = int(np.argmax(g > 0))
        if not g[k] > 0:
            return _double_root(rc, grid, g)
        probe = float(grid[k])
    else:
        probe = _allowed_probe(r0, rc)
    below = [r for r in roots if r <= probe]
    above = [r for r in roots if r > probe]
    if not below:
        raise NoRootError(f"no inner turning point in [{lo!r}, {probe!r}]")
    return TurningPoints(max(below), min(above) if above else None)


def _allowed_probe(r0: float, rc: RadialConstants) -> float:
    """A point of the allowed interval at r0, stepping off r0 when it is a turning point."""
    if radial_speed_squared(r0, rc) > 1e-9 * _scale_G(r0, rc):
        return r0
    for probe in (r0 * (1 + 1e-6), r0 * (1 - 1e-6)):
        if radial_speed_squared(probe, rc) > 0:
            return probe
    raise NoRootError(f"r0={r0!r} is not inside an allowed interval")


def _double_root(rc, grid, g) -> TurningPoints:
    k = int(np.argmax(g))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(lambda r: -radial_speed_squared(r, rc), bounds=(a, b),
                          method="bounded", options={"xatol": 1e-14 * b})
    r = float(res.x)
    if abs(radial_speed_squared(r, rc)) <= 1e-10 * _scale_G(r, rc):
        return TurningPoints(r, r)
    raise NoRootError("radial speed squared does not change sign in the bracket")


def _branch_integral(r0: float, r1: float, rc: RadialConstants,
                     weight: Callable[[float], float] | None = None,
                     rtol: float = QUAD_RTOL) -> tuple[float, float]:
    """Signed integral of weight(r) d(r^2) / sqrt(G(r)) from r0 to r1.

    The interval is split at its midpoint; the halves use r = lo + u^2 and
    r = hi - u^2 so that simple roots of G at either end become regular.
    Returns (value, error estimate).
    """
    if abs(r1 - r0) <= ROOT_RTOL * max(abs(r0), abs(r1)):
        return 0.0, 0.0
    sgn = 1.0 if r1 > r0 else -1.0
    lo, hi = min(r0, r1), max(r0, r1)
    mid = 0.5 * (lo + hi)
    gmid = radial_speed_squared(mid, rc)
    tol = 1e-9 * _scale_G(mid, rc)
    for r in (lo, hi):
        if radial_speed_squared(r, rc) < -tol:
            raise ForbiddenRegionError(f"r={r!r} lies in the forbidden region")
    if not gmid > 0:
        raise ForbiddenRegionError(f"radial speed squared is not positive at r={mid!r}")
    w = (lambda r: 1.0) if weight is None else weight

    def end_slope(r_end, direction):
        # dG/d|r - r_end| at a turning point, or None when G(r_end) > 0
        if abs(radial_speed_squared(r_end, rc)) > tol:
            return None
        h = 1e-6 * r_end
        return direction * (radial_speed_squared(r_end + h, rc)
                            - radial_speed_squared(r_end - h, rc)) / (2 * h)

    slope_lo, slope_hi = end_slope(lo, 1.0), end_slope(hi, -1.0)

    def integrand(u, r_end, direction, slope):
        u2 = u * u
        r = r_end + direction * u2
        if slope is None:
            return 4.0 * r * u * w(r) / math.sqrt(abs(radial_speed_squared(r, rc)))
        # below this offset rounding in G(r) dominates its linear growth
        q = slope if u2 <= 1e-8 * r_end else radial_speed_squared(r, rc) / u2
        return 4.0 * r * w(r) / math.sqrt(abs(q))

    def f_lo(u):
        return integrand(u, lo, 1.0, slope_lo)

    def f_hi(u):
        return integrand(u, hi, -1.0, slope_hi)

    # very short branches hit the roundoff floor; the error estimate still reports it
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        v1, e1_ = quad(f_lo, 0.0, math.sqrt(mid - lo), epsabs=0.0, epsrel=rtol, limit=400)
        v2, e2_ = quad(f_hi, 0.0, math.sqrt(hi - mid), epsabs=0.0, epsrel=rtol, limit=400)
    return sgn * (v1 + v2), e1_ + e2_


def tau_of_r(r0: float, r1: float, rc: RadialConstants, rtol: float = QUAD_RTOL,
             with_error: bool = False):
    """Proper time to move from r0 to r1 along one monotone branch.

    Signed (negative when r1 < r0), hence additive; the half period is
    ``tau_of_r(r_min, r_max)``.
    """
    val, err = _branch_integral(r0, r1, rc, rtol=rtol)
    return (val, err) if with_error else val


def rapidity_rate(r: float, rc: RadialConstants) -> float:
    """(da/dtau) / sinh a, which depends on r only."""
    prm = rc.params
    free = conventions.A_FREE_SIGN * (-4 * prm.m / prm.T)
    coupling = (conventions.A_COUPLING_MULT * prm.m ** 2 * prm.alpha
                / (2 * prm.M2 * prm.T * r ** 3) * _rho(r, rc) / denom_D(r, rc))
    return free - coupling


def a_rhs(r: float, a: float, rc: RadialConstants) -> float:
    sh = math.sinh(a)
    if sh == 0.0:
        raise ChartError("sinh a = 0 is outside the rapidity chart")
    return sh * rapidity_rate(r, rc)


def world_time_squared(r: float, a: float, rc: RadialConstants) -> float:
    """((t - m T^2/nu) / T)^2 as a function of r and a."""
    sh = math.sinh(a)
    if sh == 0.0:
        raise ChartError("sinh a = 0 is outside the rapidity chart")
    val = conventions.WORLD_TIME_SIGN * denom_D(r, rc) * math.exp(-a) / (2 * sh)
    if val < 0:
        raise ValueError(f"negative world time squared {val!r}: inputs are inconsistent")
    return val


def system_matrix(a: float) -> np.ndarray:
    """Coefficients of the three radial relations in the unknowns (s+1, s01, s-1)."""
    sh = math.sinh(a)
    if sh == 0.0:
        raise ChartError("sinh a = 0: the radial linear system is singular")
    return np.array([
        [-math.exp(-a) / (2 * sh), 1 / (2 * sh), -math.exp(a) / (2 * sh)],
        [1.0, 0.0, -1.0],
        [1 / sh, -math.cosh(a) / sh, 1 / sh],
    ])


def radial_rhs(r: float, dr2dtau: float, rc: RadialConstants) -> np.ndarray:
    """Right-hand sides of the radial relations."""
    prm = rc.params
    D = denom_D(r, rc)
    return np.array([
        conventions.ROW1_SIGN * (prm.m / (2 * prm.T)) * _rho(r, rc) / D,
        _w2(r, rc),
        dr2dtau / (4 * D),
    ])


def reconstruct_s1(r: float, dr2dtau: float, a: float, rc: RadialConstants) -> tuple[float, float, float]:
    """(s+1, s-1, s01) from radial data and the rapidity a."""
    sp1, s01, sm1 = np.linalg.solve(system_matrix(a), radial_rhs(r, dr2dtau, rc))
    return float(sp1), float(sm1), float(s01)


def printed_matrices(a: float) -> dict[str, np.ndarray]:
    """The displayed system matrix, its displayed inverse and the quadratic forms.

    The third row of the displayed matrix is the negative of the relation it
    summarizes; ``K`` encodes s+ s- - s0^2/4 in the ordering (s+, s0, s-).
    """
    sh, ch = math.sinh(a), math.cosh(a)
    M = np.array([
        [-math.exp(-a) / (2 * sh), 1 / (2 * sh), -math.exp(a) / (2 * sh)],
        [1.0, 0.0, -1.0],
        [-1 / sh, ch / sh, -1 / sh],
    ])
    M_inv = np.array([
        [ch / sh, 1 / (2 * sh * sh) - math.exp(a) * ch / (2 * sh * sh), -1 / (2 * sh)],
        [2 / sh, -1 / sh, -ch / sh],
        [ch / sh, -1 / (2 * sh * sh) + math.exp(-a) * ch / (2 * sh * sh), -1 / (2 * sh)],
    ])
    K = np.array([[0.0, 0.0, 1.0], [0.0, -0.5, 0.0], [1.0, 0.0, 0.0]])
    Q = np.array([[2.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -0.5]])
    return {"M": M, "M_inv": M_inv, "K": K, "Q": Q}


class RadialSolution:
    """Radius, rapidity and world time as functions of proper time by quadrature.

    Built from an on-shell state inside the hyperbolic chart with a bound
    radial motion; proper time is measured from that state.  The orbit is
    parametrized by an angle ``phi`` with ``r = c - h cos(phi)`` between the
    turning points.  Dividing the two simple roots out of r^2 G(r) leaves a
    factor that stays positive, so every integrand is smooth in ``phi``.
    """

    def __init__(self, s0, params: DeformationParams, bracket: tuple[float, float] | None = None,
                 rtol: float = QUAD_RTOL):
        z0 = as_vector(s0)
        self.params = params
        self.rtol = rtol
        self.rc = RadialConstants.from_state(z0, params)
        self.r0 = math.sqrt(r_squared(z0, params))
        if bracket is None:
            bracket = (1e-3 * self.r0, 1e4 * self.r0)
        self.turning = turning_points(self.rc, bracket, r0=self.r0)
        if not self.turning.bound:
            raise ValueError("radial motion is unbound; no periodic solution")
        r_min, r_max = self.turning.r_min, self.turning.r_max
        if r_max - r_min <= ROOT_RTOL * r_max:
            raise ValueError("circular radial motion: the angle parametrization degenerates")
        self._center = 0.5 * (r_min + r_max)
        self._half_width = 0.5 * (r_max - r_min)
        quotient, remainder = divmod(radial_polynomial(self.rc),
                                     Polynomial([-r_min * r_max, r_min + r_max, -1.0]))
        self._quotient = quotient  # r^2 G(r) / ((r - r_min)(r_max - r))
        if remainder.coef.size and np.max(np.abs(remainder.coef)) > 1e-8 * np.max(np.abs(quotient.coef)):
            raise ValueError("turning points are not simple roots of the radial polynomial")
        self.half_period = self._tau_integral(math.pi)
        self.period = 2 * self.half_period
        self._full_rate = self._rate_integral(2 * math.pi)

        from .dynamics import radial_rate
        cos0 = min(1.0, max(-1.0, (self._center - self.r0) / self._half_width))
        phi0 = math.acos(cos0)
        if radial_rate(z0, params) < 0:
            phi0 = 2 * math.pi - phi0
        self.phase0 = self._tau_integral(phi0)
        self._psi0 = self._rate_integral(phi0)
        self.l = math.sqrt(self.rc.l2)
        # r(tau) needs no chart; a(tau) and t(tau) need the rapidity chart at the start
        try:
            self.a0 = hyperbolic_from_svars(svars_from_state(z0, params), self.l).a
            self.chart_error = None
        except ChartError as exc:
            self.a0 = None
            self.chart_error = str(exc)
        self.t_sign = math.copysign(1.0, z0[BIG_I])
        self.t_shift = params.t_shift

    def radius(self, phi: float) -> float:
        return self._center - self._half_width * math.cos(phi)

    def _dtau_dphi(self, phi: float) -> float:
        r = self.radius(phi)
        return 2 * r * r / math.sqrt(self._quotient(r))

    def _integral(self, phi: float, f: Callable[[float], float]) -> float:
        if phi == 0.0:
            return 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            val, _ = quad(f, 0.0, phi, epsabs=0.0, epsrel=self.rtol, limit=400)
        return val

    def _tau_integral(self, phi: float) -> float:
        """Proper time from perihelion to angle phi."""
        return self._integral(phi, self._dtau_dphi)

    def _rate_integral(self, phi: float) -> float:
        """Integral of (da/dtau)/sinh a from perihelion to angle phi."""
        return self._integral(phi, lambda u: rapidity_rate(self.radius(u), self.rc) * self._dtau_dphi(u))

    def _angle_at_phase(self, phase: float) -> tuple[int, float]:
        """Completed periods and angle in [0, 2 pi) reached ``phase`` after perihelion."""
        n, rem = divmod(phase, self.period)
        if rem <= 0.0:
            return int(n), 0.0
        # tau(phi) has slope bounded away from zero, so the inversion is well conditioned
        phi = brentq(lambda u: self._tau_integral(u) - rem, 0.0, 2 * math.pi,
                     xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return int(n), phi

    def r(self, tau: float) -> float:
        _, phi = self._angle_at_phase(self.phase0 + tau)
        return self.radius(phi)

    def a(self, tau: float) -> float:
        if self.a0 is None:
            raise ChartError(f"initial state is outside the rapidity chart: {self.chart_error}")
        n, phi = self._angle_at_phase(self.phase0 + tau)
        shift = n * self._full_rate + self._rate_integral(phi) - self._psi0
        return 2 * math.atanh(math.tanh(self.a0 / 2) * math.exp(shift))

    def world_time(self, tau: float) -> float:
        """World time t from r(tau) and a(tau)."""
        r, a = self.r(tau), self.a(tau)
        return self.t_shift + self.t_sign * self.params.T * math.sqrt(world_time_squared(r, a, self.rc))


def flow_a(s, params: DeformationParams) -> float:
    """Rapidity of the second triple at a state."""
    z = as_vector(s)
    return hyperbolic_from_svars(svars_from_state(z, params), math.sqrt(l_squared(z))).a


def flow_world_time_squared(s, params: DeformationParams) -> float:
    z = as_vector(s)
    return ((z[T] - params.t_shift) / params.T) ** 2
