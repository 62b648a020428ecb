"""Derived quantities: covariant position, radius, Hamiltonian, O(2,1) pair.

The two commuting O(2,1) triples are built from the shifted world time
``t - m T^2 / nu``.  On the constraint surface the radius, the Hamiltonian
and the first integral can all be written through these six generators.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass

import numpy as np

from . import conventions
from .algebra import (
    BIG_I, EPS, F, L, NDIM, P, T, X,
    DeformationParams, Observable, as_vector, constraint_residuals,
)


class SingularityError(ArithmeticError):
    """Raised when an observable is evaluated at the collision point r = 0."""


class ChartError(ValueError):
    """Raised outside the domain of a coordinate chart."""


def tilde_x(s, params: DeformationParams) -> np.ndarray:
    """Position commuting with the energy coordinate: x - (T^2/nu) p."""
    z = as_vector(s)
    return z[X] - (params.T2 / params.nu) * z[P]


def r_squared(s, params: DeformationParams) -> float:
    z = as_vector(s)
    xt = tilde_x(z, params)
    l = z[L]
    return float(xt @ xt + l @ l / params.M2)


def grad_r_squared(s, params: DeformationParams) -> np.ndarray:
    z = as_vector(s)
    xt = tilde_x(z, params)
    g = np.zeros(NDIM)
    g[X] = 2 * xt
    g[P] = -2 * (params.T2 / params.nu) * xt
    g[L] = 2 * z[L] / params.M2
    return g


def _radius(r2: float) -> float:
    if not r2 > 0:
        raise SingularityError(f"radius vanishes (r^2 = {r2!r})")
    return math.sqrt(r2)


def hamiltonian(s, params: DeformationParams) -> float:
    """2 m eps - p^2 + f^2/T^2 + 2 m alpha / r."""
    z = as_vector(s)
    m = params.m
    r = _radius(r_squared(z, params))
    p, f = z[P], z[F]
    return float(2 * m * z[EPS] - p @ p + f @ f / params.T2 + 2 * m * params.alpha / r)


def grad_hamiltonian(s, params: DeformationParams) -> np.ndarray:
    z = as_vector(s)
    m = params.m
    r2 = r_squared(z, params)
    r = _radius(r2)
    g = -(m * params.alpha / (r * r2)) * grad_r_squared(z, params)
    g[EPS] += 2 * m
    g[P] -= 2 * z[P]
    g[F] += 2 * z[F] / params.T2
    return g


def kinetic_part(s, params: DeformationParams) -> float:
    """Kinetic part p^2 - f^2/T^2, which commutes with the energy coordinate."""
    z = as_vector(s)
    return float(z[P] @ z[P] - z[F] @ z[F] / params.T2)


@dataclass(frozen=True)
class SVars:
    """Components (+, -, 0) of the two commuting O(2,1) vectors."""

    sp1: float
    sm1: float
    s01: float
    sp2: float
    sm2: float
    s02: float

    def __array__(self, dtype=None, copy=None):
        v = np.array(astuple(self))
        return v if dtype is None else v.astype(dtype)

    @classmethod
    def from_array(cls, v) -> "SVars":
        return cls(*(float(c) for c in v))


SVAR_NAMES = ("sp1", "sm1", "s01", "sp2", "sm2", "s02")


def svars_from_state(s, params: DeformationParams) -> SVars:
    z = as_vector(s)
    m, M2, T_ = params.m, params.M2, params.T
    p, f, I = z[P], z[F], z[BIG_I]
    tt = z[T] - params.t_shift
    return SVars(
        sp1=T_ * (p @ p) / (2 * m),
        sm1=(f @ f) / (2 * m * T_),
        s01=(p @ f) / m,
        sp2=-T_ * M2 * I * I / (2 * m),
        sm2=-M2 * tt * tt / (2 * T_ * m),
        s02=-M2 * I * tt / m,
    )


def grad_svars(s, params: DeformationParams) -> np.ndarray:
    """6 x 15 Jacobian of :func:`svars_from_state`."""
    z = as_vector(s)
    m, M2, T_ = params.m, params.M2, params.T
    p, f, I = z[P], z[F], z[BIG_I]
    tt = z[T] - params.t_shift
    G = np.zeros((6, NDIM))
    G[0, P] = T_ * p / m
    G[1, F] = f / (m * T_)
    G[2, P] = f / m
    G[2, F] = p / m
    G[3, BIG_I] = -T_ * M2 * I / m
    G[4, T] = -M2 * tt / (T_ * m)
    G[5, BIG_I] = -M2 * tt / m
    G[5, T] = -M2 * I / m
    return G


def svar_observables(params: DeformationParams) -> dict[str, Observable]:
    """Each s-component as an :class:`Observable` with analytic gradient."""
    out = {}
    for k, name in enumerate(SVAR_NAMES):
        out[name] = Observable(
            lambda z, k=k: float(np.asarray(svars_from_state(z, params))[k]),
            lambda z, k=k: grad_svars(z, params)[k],
            name=name,
        )
    return out


def hamiltonian_observable(params: DeformationParams) -> Observable:
    return Observable(lambda z: hamiltonian(z, params),
                      lambda z: grad_hamiltonian(z, params), name="H")


def r_squared_observable(params: DeformationParams) -> Observable:
    return Observable(lambda z: r_squared(z, params),
                      lambda z: grad_r_squared(z, params), name="r2")


def l_squared(s) -> float:
    l = as_vector(s)[L]
    return float(l @ l)


def casimirs(sv: SVars) -> tuple[float, float]:
    """(s+ s- - s0^2/4) for each triple."""
    return (sv.sp1 * sv.sm1 - sv.s01 ** 2 / 4,
            sv.sp2 * sv.sm2 - sv.s02 ** 2 / 4)


def r_squared_from_svars(sv: SVars, params: DeformationParams) -> float:
    """Radius squared through the generators; equals r_squared on-shell."""
    cas1 = sv.sp1 * sv.sm1 - sv.s01 ** 2 / 4
    mixed = sv.sp1 * sv.sm2 + sv.sm1 * sv.sp2 - sv.s01 * sv.s02 / 2
    return 4.0 / params.M2 * (cas1 - mixed)


def hamiltonian_svars(sv: SVars, epsilon: float, params: DeformationParams) -> float:
    """Hamiltonian in terms of the first triple and the energy coordinate."""
    m = params.m
    r = _radius(r_squared_from_svars(sv, params))
    return 2 * m * epsilon - (2 * m / params.T) * (sv.sp1 - sv.sm1) + 2 * m * params.alpha / r


def vacuum_term(params: DeformationParams) -> float:
    """M^2 (1 - m^2 T^2 / nu^2)."""
    return params.M2 * (1 - (params.m * params.T / params.nu) ** 2)


def hamiltonian_svars_alt(sv: SVars, params: DeformationParams) -> float:
    """Hamiltonian in terms of the second triple; equal to the first form on-shell."""
    m = params.m
    r = _radius(r_squared_from_svars(sv, params))
    return vacuum_term(params) + (2 * m / params.T) * (sv.sp2 - sv.sm2) + 2 * m * params.alpha / r


def theta(s, params: DeformationParams) -> float:
    """First integral -s+2 + s-2 - s+1 + s-1."""
    sv = svars_from_state(s, params)
    return -sv.sp2 + sv.sm2 - sv.sp1 + sv.sm1


def theta_closed_form(epsilon: float, params: DeformationParams) -> float:
    """On-shell value of :func:`theta` as a function of the energy coordinate."""
    m = params.m
    return (params.M2 * params.T / (2 * m)) * (
        1 - (m * params.T / params.nu) ** 2 - 2 * epsilon * m / params.M2)


def e1_coefficients(params: DeformationParams, c_mult: float | None = None,
                    kappa: float | None = None) -> tuple[float, float]:
    """(c, kappa) of the second integral; defaults are the calibrated values."""
    c_mult = conventions.E1_C_MULT if c_mult is None else c_mult
    kappa = conventions.E1_KAPPA if kappa is None else kappa
    return c_mult * params.m / params.T, kappa


def e1(s, params: DeformationParams, c_mult: float | None = None,
       kappa: float | None = None) -> float:
    """Second integral 2 m eps - c (s+1 - s-1) + kappa m alpha / r."""
    z = as_vector(s)
    c, kappa = e1_coefficients(params, c_mult, kappa)
    sv = svars_from_state(z, params)
    r = _radius(r_squared(z, params))
    return float(2 * params.m * z[EPS] - c * (sv.sp1 - sv.sm1) + kappa * params.m * params.alpha / r)


def e2(s, params: DeformationParams, kappa: float | None = None) -> float:
    """Second integral through the second triple (vacuum term plus s+2 - s-2)."""
    kappa = conventions.E1_KAPPA if kappa is None else kappa
    z = as_vector(s)
    sv = svars_from_state(z, params)
    r = _radius(r_squared(z, params))
    return float(vacuum_term(params) + (2 * params.m / params.T) * (sv.sp2 - sv.sm2)
                 + kappa * params.m * params.alpha / r)


@dataclass(frozen=True)
class HyperbolicParams:
    """Chart of the triples: rapidity tauH and boost rho of the first, scale R and rapidity a of the second."""

    tauH: float
    rho: float
    R: float
    a: float


def hyperbolic_from_svars(sv: SVars, l: float) -> HyperbolicParams:
    """Hyperbolic coordinates of the two triples for angular momentum ``l``.

    The chart needs l > 0, both ratios s+/s- positive and s0^2 < 0 (the
    second triple is negative by construction, so its scale R = s0^2/l is
    negative).  a = 0 is the coordinate singularity of the rapidity flow
    and is rejected as well.
    """
    if not l > 0:
        raise ChartError(f"angular momentum must be positive, got {l!r}")
    if not (sv.sm1 != 0 and sv.sp1 / sv.sm1 > 0):
        raise ChartError("ratio sp1/sm1 must be positive")
    if not (sv.sm2 != 0 and sv.sp2 / sv.sm2 > 0):
        raise ChartError("ratio sp2/sm2 must be positive")
    if not sv.s02 < 0:
        raise ChartError(f"s02 must be negative for this chart, got {sv.s02!r}")
    a = 0.5 * math.log(sv.sp2 / sv.sm2)
    if math.sinh(a) == 0.0:
        raise ChartError("a = 0: sinh a vanishes (rapidity equation is singular)")
    return HyperbolicParams(
        tauH=math.asinh(sv.s01 / l),
        rho=0.5 * math.log(sv.sp1 / sv.sm1),
        R=float(sv.s02 / l),
        a=a,
    )


def svars_from_hyperbolic(hp: HyperbolicParams, l: float) -> SVars:
    c = math.cosh(hp.tauH)
    return SVars(
        sp1=0.5 * l * c * math.exp(hp.rho),
        sm1=0.5 * l * c * math.exp(-hp.rho),
        s01=l * math.sinh(hp.tauH),
        sp2=0.5 * l * hp.R * math.exp(hp.a),
        sm2=0.5 * l * hp.R * math.exp(-hp.a),
        s02=l * hp.R,
    )


@dataclass(frozen=True)
class IntegralsReport:
    H: float
    epsilon: float
    E1: float
    theta: float
    l2: float
    cas1: float
    cas2: float
    scalar_residual: float
    vec_residuals: tuple[float, ...]  # (F1, F2, F3, L1, L2, L3)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("H", "epsilon", "E1", "theta", "l2", "cas1", "cas2",
                                           "scalar_residual")}
        d["vec_residuals"] = list(self.vec_residuals)
        return d


def integrals_report(s, params: DeformationParams) -> IntegralsReport:
    z = as_vector(s)
    sv = svars_from_state(z, params)
    cas1, cas2 = casimirs(sv)
    scalar, vf, vl = constraint_residuals(z, params)
    return IntegralsReport(
        H=hamiltonian(z, params),
        epsilon=float(z[EPS]),
        E1=e1(z, params),
        theta=-sv.sp2 + sv.sm2 - sv.sp1 + sv.sm1,
        l2=l_squared(z),
        cas1=cas1,
        cas2=cas2,
        scalar_residual=scalar,
        vec_residuals=tuple(float(v) for v in np.concatenate([vf, vl])),
    )
