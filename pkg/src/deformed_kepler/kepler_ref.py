"""Newtonian Kepler reference orbits and the contraction-limit comparison.

The classical Hamiltonian is ``p^2/2m + alpha/r``, so bound orbits need
``alpha < 0``.  The deformed Hamiltonian carries ``+2 m alpha / r`` and
attracts for ``alpha > 0``; in the limit of large (M^2, T^2, nu) the
deformed flow reduces to the classical one with

* classical time ``t = 2 m tau``,
* classical coupling ``-alpha``,
* classical energy ``-(H - 2 m eps) / (2 m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import DeformationParams, as_vector, make_state
from .dynamics import IntegratorConfig, integrate_flow, radial_rate
from .observables import hamiltonian, l_squared, r_squared, tilde_x

KEPLER_TOL = 1e-14


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class KeplerElements:
    """Classical orbit data: energy, angular momentum magnitude, coupling, mass."""

    energy: float
    l: float
    alpha: float
    m: float

    @property
    def bound(self) -> bool:
        return self.energy < 0 and self.alpha < 0

    def _require_bound(self):
        if not self.bound:
            raise ValueError("elements describe an unbound orbit (need energy < 0 and alpha < 0)")

    @property
    def a(self) -> float:
        """Semi-major axis."""
        self._require_bound()
        return abs(self.alpha) / (2 * abs(self.energy))

    @property
    def e(self) -> float:
        """Eccentricity."""
        return math.sqrt(max(0.0, 1 + 2 * self.energy * self.l ** 2 / (self.m * self.alpha ** 2)))

    @property
    def n(self) -> float:
        """Mean motion."""
        return math.sqrt(abs(self.alpha) / (self.m * self.a ** 3))

    @property
    def period(self) -> float:
        return 2 * math.pi / self.n

    @classmethod
    def from_orbit(cls, a: float, e: float, alpha: float, m: float) -> "KeplerElements":
        """Elements of the bound orbit with semi-major axis a and eccentricity e."""
        energy = -abs(alpha) / (2 * a)
        l = math.sqrt(m * abs(alpha) * a * (1 - e * e))
        return cls(energy, l, alpha, m)


def solve_kepler(mean_anomaly: float, e: float, tol: float = KEPLER_TOL, max_iter: int = 100) -> float:
    """Eccentric anomaly E with E - e sin E = M, by Newton steps kept inside a bracket."""
    if not 0 <= e < 1:
        raise ValueError(f"eccentricity must lie in [0, 1), got {e!r}")
    turns = math.floor((mean_anomaly + math.pi) / (2 * math.pi))
    M = mean_anomaly - 2 * math.pi * turns
    lo, hi = M - e, M + e  # f(lo) <= 0 <= f(hi)
    E = M + e * math.sin(M)
    for _ in range(max_iter):
        f = E - e * math.sin(E) - M
        if f > 0:
            hi = E
        else:
            lo = E
        step = f / (1 - e * math.cos(E))
        E_new = E - step
        if not lo <= E_new <= hi:
            E_new = 0.5 * (lo + hi)
        if abs(E_new - E) <= tol * max(1.0, abs(E)):
            return E_new + 2 * math.pi * turns
        E = E_new
    raise ConvergenceError(f"Kepler equation did not converge for M={mean_anomaly!r}, e={e!r}")


def _anomaly(el: KeplerElements, tau: float, tau_peri: float) -> float:
    return solve_kepler(el.n * (tau - tau_peri), el.e)


def orbit_r_of_tau(el: KeplerElements, tau: float, tau_peri: float = 0.0) -> float:
    """Radius at time ``tau`` for an orbit passing perihelion at ``tau_peri``."""
    E = _anomaly(el, tau, tau_peri)
    return el.a * (1 - el.e * math.cos(E))


def orbit_rdot(el: KeplerElements, tau: float, tau_peri: float = 0.0) -> float:
    E = _anomaly(el, tau, tau_peri)
    return el.a * el.e * math.sin(E) * el.n / (1 - el.e * math.cos(E))


def classical_radial_identity(r: float, rdot: float, el: KeplerElements) -> float:
    """r^2 (2 m H - 2 m alpha / r) - (m r rdot)^2 - l^2; zero on every orbit."""
    m = el.m
    return r * r * (2 * m * el.energy - 2 * m * el.alpha / r) - (m * r * rdot) ** 2 - el.l ** 2


def perihelion_time(el: KeplerElements, r0: float, outgoing: bool) -> float:
    """Time of the perihelion passage preceding a point at radius r0."""
    cos_E = (1 - r0 / el.a) / el.e if el.e > 0 else 1.0
    E0 = math.acos(min(1.0, max(-1.0, cos_E)))
    if not outgoing:
        E0 = -E0
    return -(E0 - el.e * math.sin(E0)) / el.n


@dataclass(frozen=True)
class LimitFamily:
    """Physical initial data held fixed while the deformation scales grow."""

    p: tuple[float, float, float]
    x: tuple[float, float, float]
    t: float = 0.0
    bigI: float = 1.0

    def state(self, params: DeformationParams):
        return make_state(self.p, self.x, self.t, self.bigI, params)


@dataclass(frozen=True)
class LimitReport:
    lam: float
    deviation: float
    energy: float
    l: float
    eccentricity: float | None
    status: str

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "deviation": self.deviation, "energy": self.energy,
                "l": self.l, "eccentricity": self.eccentricity, "status": self.status}


def matched_elements(s, params: DeformationParams) -> KeplerElements:
    """Classical elements matching a deformed state (see module docstring)."""
    z = as_vector(s)
    m = params.m
    energy = -(hamiltonian(z, params) - 2 * m * z[0]) / (2 * m)
    return KeplerElements(energy, math.sqrt(l_squared(z)), -params.alpha, m)


def limit_compare(family: LimitFamily, lam: float, cfg: IntegratorConfig,
                  params: DeformationParams) -> LimitReport:
    """Sup over the horizon of |r_deformed - r_classical| / r_classical.

    ``params`` holds the base scales; they are multiplied by ``lam``.  With
    ``alpha = 0`` the classical reference is straight-line motion.
    """
    if not lam >= 1:
        raise ValueError("lam must be >= 1")
    scaled = params.scaled(lam)
    s0 = family.state(scaled)
    traj = integrate_flow(s0, cfg, scaled)
    m = scaled.m
    r_def = traj.radii
    el = matched_elements(s0, scaled)
    times = 2 * m * traj.taus
    if scaled.alpha == 0:
        z0 = as_vector(s0)
        x0, v = tilde_x(z0, scaled), z0[3:6] / m
        r_ref = np.array([np.linalg.norm(x0 + v * t) for t in times])
        ecc = None
    else:
        r0 = math.sqrt(r_squared(s0, scaled))
        t_peri = perihelion_time(el, r0, radial_rate(s0, scaled) >= 0)
        r_ref = np.array([orbit_r_of_tau(el, t, t_peri) for t in times])
        ecc = el.e
    dev = float(np.max(np.abs(r_def - r_ref) / r_ref))
    return LimitReport(lam, dev, el.energy, el.l, ecc, traj.status)
