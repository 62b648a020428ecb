"""Deformed Galilei phase space: coordinates, Poisson bivector, constraints.

The phase space has 15 coordinates ``(epsilon, t, I, p, x, f, l)``; the mass
``m`` is central and lives in :class:`DeformationParams`.  Every bracket is
affine in the coordinates, so the bivector is stored as a structure-constant
tensor ``pi_ij(z) = C_ijk z_k + d_ij`` and nested brackets are exact.

Sign conventions
----------------
The bracket table below is the unique assignment (up to the central
constants) that

* satisfies the Jacobi identity on all 455 coordinate triples,
* keeps the ideal generated by the constraints invariant, and
* keeps ``x - (T^2/nu) p`` commuting with ``epsilon``.

In particular ``{x_a, p_b} = delta_ab I`` (the canonical orientation),
``{f_a, p_b} = -delta_ab m`` and the boost constraint reads
``I f = t p - m x``.  Rotations act as
``{l_a, v_b} = eps_abc v_c`` and ``{x_a, x_b} = XX_SIGN * eps_abc l_c / M^2``
with ``XX_SIGN = -1`` forced by Jacobi on ``(x1, x2, p1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from functools import lru_cache
from typing import Callable

import numpy as np

COORDS: tuple[str, ...] = (
    "epsilon", "t", "I",
    "p1", "p2", "p3",
    "x1", "x2", "x3",
    "f1", "f2", "f3",
    "l1", "l2", "l3",
)
NDIM = len(COORDS)

EPS, T, BIG_I = 0, 1, 2
P = slice(3, 6)
X = slice(6, 9)
F = slice(9, 12)
L = slice(12, 15)

# sign of {x_a, x_b} relative to eps_abc l_c / M^2; fixed by Jacobi(x1, x2, p1)
XX_SIGN = -1

FD_REL_STEP = 1e-6


def index(name: str) -> int:
    """Position of a coordinate name in the state vector."""
    try:
        return COORDS.index(name)
    except ValueError:
        raise KeyError(f"unknown coordinate {name!r}; expected one of {COORDS}") from None


def _levi_civita() -> np.ndarray:
    e = np.zeros((3, 3, 3))
    e[0, 1, 2] = e[1, 2, 0] = e[2, 0, 1] = 1.0
    e[0, 2, 1] = e[2, 1, 0] = e[1, 0, 2] = -1.0
    return e


LEVI = _levi_civita()


class ParameterError(ValueError):
    """Raised when deformation parameters violate their preconditions.

    ``problems`` maps each offending field to a message.
    """

    def __init__(self, problems: dict[str, str]):
        self.problems = dict(problems)
        super().__init__("; ".join(f"{k}: {v}" for k, v in self.problems.items()))


@dataclass(frozen=True)
class DeformationParams:
    """Scales of the deformed space plus the particle mass and coupling.

    ``M2`` has units of impulse squared, ``T2`` of time squared, ``nu`` of
    mass times time.  ``alpha`` is the Kepler coupling entering the
    Hamiltonian as ``2 m alpha / r``; positive alpha attracts under the flow
    convention ``dz/dtau = {H, z}``.
    """

    M2: float = 1.0
    T2: float = 1.0
    nu: float = 1.0
    m: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ParameterError(problems)

    def validate(self) -> dict[str, str]:
        problems = {}
        for fld in fields(self):
            v = getattr(self, fld.name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                problems[fld.name] = f"must be a finite real number, got {v!r}"
        if "M2" not in problems and self.M2 <= 0:
            problems["M2"] = f"must be > 0, got {self.M2!r}"
        if "T2" not in problems and self.T2 <= 0:
            problems["T2"] = f"must be > 0, got {self.T2!r}"
        if "nu" not in problems and self.nu == 0:
            problems["nu"] = "must be nonzero"
        if "m" not in problems and self.m <= 0:
            problems["m"] = f"must be > 0, got {self.m!r}"
        return problems

    @property
    def T(self) -> float:
        return math.sqrt(self.T2)

    @property
    def t_shift(self) -> float:
        """World-time offset m T^2 / nu used by the O(2,1) variables."""
        return self.m * self.T2 / self.nu

    def scaled(self, lam: float) -> "DeformationParams":
        """Contraction family (M2, T2, nu) -> lam * (M2, T2, nu)."""
        return DeformationParams(self.M2 * lam, self.T2 * lam, self.nu * lam, self.m, self.alpha)

    def with_alpha(self, alpha: float) -> "DeformationParams":
        return DeformationParams(self.M2, self.T2, self.nu, self.m, alpha)

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


@dataclass(frozen=True)
class PhaseState:
    """A point of the 15-dimensional phase space.

    Behaves as a numpy array (``np.asarray(state)``) in coordinate order
    :data:`COORDS`.
    """

    epsilon: float
    t: float
    bigI: float
    p: tuple[float, float, float]
    x: tuple[float, float, float]
    f: tuple[float, float, float]
    l: tuple[float, float, float]

    def __post_init__(self):
        for name in ("p", "x", "f", "l"):
            v = tuple(float(c) for c in getattr(self, name))
            if len(v) != 3:
                raise ValueError(f"{name} must have 3 components")
            object.__setattr__(self, name, v)
        for name in ("epsilon", "t", "bigI"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("phase state components must be finite")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.epsilon, self.t, self.bigI, *self.p, *self.x, *self.f, *self.l])

    def __array__(self, dtype=None, copy=None):
        v = self.vector
        return v if dtype is None else v.astype(dtype)

    @classmethod
    def from_vector(cls, z) -> "PhaseState":
        z = np.asarray(z, dtype=float)
        if z.shape != (NDIM,):
            raise ValueError(f"expected a vector of length {NDIM}, got shape {z.shape}")
        return cls(z[0], z[1], z[2], tuple(z[P]), tuple(z[X]), tuple(z[F]), tuple(z[L]))


def as_vector(s) -> np.ndarray:
    """Coordinate vector of a PhaseState or array-like."""
    z = np.asarray(s, dtype=float)
    if z.shape != (NDIM,):
        raise ValueError(f"expected a phase-space vector of length {NDIM}, got shape {z.shape}")
    return z


class BracketTable:
    """Affine Poisson bivector ``pi(z) = C @ z + d`` for fixed parameters."""

    def __init__(self, params: DeformationParams, xx_sign: int = XX_SIGN):
        self.params = params
        self.xx_sign = xx_sign
        self.C, self.d = _structure_constants(params.M2, params.T2, params.nu, params.m, xx_sign)

    def at(self, s) -> np.ndarray:
        """Full 15x15 bivector matrix at a state."""
        return self.C @ as_vector(s) + self.d

    def bracket(self, i: int, j: int, s) -> float:
        return float(self.C[i, j] @ as_vector(s) + self.d[i, j])

    def jacobi(self, s) -> np.ndarray:
        """Jacobiator J[i, j, k] for every coordinate triple at ``s``.

        Since pi is affine, {z_i, {z_j, z_k}} = sum_l pi_il C_jkl exactly.
        """
        pi = self.at(s)
        inner = np.einsum("il,jkl->ijk", pi, self.C)
        return inner + inner.transpose(1, 2, 0) + inner.transpose(2, 0, 1)


@lru_cache(maxsize=64)
def _structure_constants(M2, T2, nu, m, xx_sign):
    C = np.zeros((NDIM, NDIM, NDIM))
    d = np.zeros((NDIM, NDIM))

    def lin(i, j, k, c):
        C[i, j, k] += c
        C[j, i, k] -= c

    def const(i, j, c):
        d[i, j] += c
        d[j, i] -= c

    lin(EPS, T, BIG_I, 1.0)
    lin(EPS, BIG_I, T, 1.0 / T2)
    const(EPS, BIG_I, -m / nu)
    const(T, BIG_I, m / M2)
    for a in range(3):
        pa, xa, fa, la = 3 + a, 6 + a, 9 + a, 12 + a
        lin(EPS, pa, fa, 1.0 / T2)
        lin(EPS, xa, fa, 1.0 / nu)
        lin(EPS, fa, pa, 1.0)
        lin(T, xa, fa, -1.0 / M2)
        lin(BIG_I, xa, pa, -1.0 / M2)
        lin(pa, xa, BIG_I, -1.0)
        lin(fa, xa, T, -1.0)
        const(fa, pa, -m)
        for b in range(3):
            for c in range(3):
                e = LEVI[a, b, c]
                if e == 0.0:
                    continue
                if a < b:
                    lin(6 + a, 6 + b, 12 + c, xx_sign * e / M2)
                for off in (3, 6, 9):
                    lin(12 + a, off + b, off + c, e)
                if a < b:
                    lin(12 + a, 12 + b, 12 + c, e)
    C.setflags(write=False)
    d.setflags(write=False)
    return C, d


def bracket_table(params: DeformationParams, xx_sign: int = XX_SIGN) -> BracketTable:
    return BracketTable(params, xx_sign)


def structure_bracket(i: int, j: int, s, params: DeformationParams) -> float:
    """Poisson bracket {z_i, z_j} of two coordinates at state ``s``."""
    if not (0 <= i < NDIM and 0 <= j < NDIM):
        raise IndexError(f"coordinate indices must lie in [0, {NDIM})")
    return bracket_table(params).bracket(i, j, s)


def jacobi_residual(i: int, j: int, k: int, s, params: DeformationParams,
                    xx_sign: int = XX_SIGN) -> float:
    """{z_i,{z_j,z_k}} + cyclic, evaluated exactly from the structure constants."""
    table = bracket_table(params, xx_sign)
    pi = table.at(s)
    C = table.C
    return float(pi[i] @ C[j, k] + pi[j] @ C[k, i] + pi[k] @ C[i, j])


class Observable:
    """A scalar function on phase space with an optional analytic gradient.

    Without an analytic gradient, central differences with step
    ``1e-6 * max(1, |z_i|)`` are used.
    """

    def __init__(self, value: Callable[[np.ndarray], float],
                 gradient: Callable[[np.ndarray], np.ndarray] | None = None,
                 name: str = ""):
        self._value = value
        self._gradient = gradient
        self.name = name

    def __repr__(self):
        return f"Observable({self.name or self._value.__name__!s})"

    def value(self, s) -> float:
        return float(self._value(as_vector(s)))

    def gradient(self, s) -> np.ndarray:
        z = as_vector(s)
        if self._gradient is not None:
            g = np.asarray(self._gradient(z), dtype=float)
        else:
            g = fd_gradient(self._value, z)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {self!r}")
        return g

    @classmethod
    def coordinate(cls, i: int | str) -> "Observable":
        if isinstance(i, str):
            i = index(i)
        e = np.zeros(NDIM)
        e[i] = 1.0
        return cls(lambda z: z[i], lambda z: e, name=COORDS[i])


def fd_gradient(fn: Callable[[np.ndarray], float], z: np.ndarray) -> np.ndarray:
    g = np.empty(NDIM)
    for i in range(NDIM):
        h = FD_REL_STEP * max(1.0, abs(z[i]))
        zp = z.copy()
        zm = z.copy()
        zp[i] += h
        zm[i] -= h
        g[i] = (fn(zp) - fn(zm)) / (2 * h)
    return g


def observable_bracket(F: Observable, G: Observable, s, params: DeformationParams) -> float:
    """{F, G} = dF . pi . dG."""
    z = as_vector(s)
    return float(F.gradient(z) @ bracket_table(params).at(z) @ G.gradient(z))


def constraint_residuals(s, params: DeformationParams) -> tuple[float, np.ndarray, np.ndarray]:
    """Residuals of the scalar, boost and angular-momentum constraints.

    Returns ``(scalar, vecF, vecL)`` with

    * scalar = I^2 - t^2/T^2 + 2mt/nu + (-p^2 + f^2/T^2 + 2m eps)/M^2 - 1
    * vecF   = I f - t p + m x
    * vecL   = I l - x cross p
    """
    z = as_vector(s)
    M2, T2, nu, m = params.M2, params.T2, params.nu, params.m
    eps, t, I = z[EPS], z[T], z[BIG_I]
    p, x, f, l = z[P], z[X], z[F], z[L]
    scalar = I * I - t * t / T2 + 2 * m * t / nu + (-(p @ p) + f @ f / T2 + 2 * m * eps) / M2 - 1.0
    vecF = I * f - t * p + m * x
    vecL = I * l - np.cross(x, p)
    return float(scalar), vecF, vecL


def constraint_scales(s, params: DeformationParams) -> np.ndarray:
    """Magnitude of the terms entering each of the seven residuals.

    Used to express residuals relative to the size of the cancelling terms.
    """
    z = as_vector(s)
    M2, T2, nu, m = params.M2, params.T2, params.nu, params.m
    eps, t, I = z[EPS], z[T], z[BIG_I]
    p, x, f, l = z[P], z[X], z[F], z[L]
    scalar = (I * I + t * t / T2 + abs(2 * m * t / nu)
              + (p @ p + f @ f / T2 + abs(2 * m * eps)) / M2 + 1.0)
    vecF = np.abs(I * f) + np.abs(t * p) + np.abs(m * x)
    ax, ap = np.abs(x), np.abs(p)
    vecL = np.abs(I * l) + np.array([
        ax[1] * ap[2] + ax[2] * ap[1],
        ax[2] * ap[0] + ax[0] * ap[2],
        ax[0] * ap[1] + ax[1] * ap[0],
    ])
    out = np.concatenate([[scalar], vecF, vecL])
    return np.maximum(out, np.finfo(float).tiny)


def constraint_gradients(s, params: DeformationParams) -> np.ndarray:
    """7 x 15 Jacobian of the constraint residuals."""
    z = as_vector(s)
    M2, T2, nu, m = params.M2, params.T2, params.nu, params.m
    t, I = z[T], z[BIG_I]
    p, x, f, l = z[P], z[X], z[F], z[L]
    G = np.zeros((7, NDIM))
    G[0, EPS] = 2 * m / M2
    G[0, T] = -2 * t / T2 + 2 * m / nu
    G[0, BIG_I] = 2 * I
    G[0, P] = -2 * p / M2
    G[0, F] = 2 * f / (M2 * T2)
    for a in range(3):
        row = G[1 + a]
        row[BIG_I] = f[a]
        row[9 + a] = I
        row[T] = -p[a]
        row[3 + a] = -t
        row[6 + a] = m
        row = G[4 + a]
        row[BIG_I] = l[a]
        row[12 + a] = I
        b, c = (a + 1) % 3, (a + 2) % 3
        # (x cross p)_a = x_b p_c - x_c p_b
        row[6 + b] -= p[c]
        row[3 + c] -= x[b]
        row[6 + c] += p[b]
        row[3 + b] += x[c]
    return G


def make_state(p, x, t: float, bigI: float, params: DeformationParams) -> PhaseState:
    """On-shell state from the free data (p, x, t, I).

    ``f`` and ``l`` solve the vector constraints and ``epsilon`` the scalar
    one.  ``I = 0`` has no chart and is rejected.
    """
    if bigI == 0 or not math.isfinite(bigI):
        raise ValueError("bigI must be a finite nonzero number: the constraint chart needs I != 0")
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    M2, T2, nu, m = params.M2, params.T2, params.nu, params.m
    f = (t * p - m * x) / bigI
    l = np.cross(x, p) / bigI
    eps = (M2 / (2 * m)) * (1 - bigI ** 2 + t * t / T2 - 2 * m * t / nu) + (p @ p - f @ f / T2) / (2 * m)
    return PhaseState(eps, t, bigI, tuple(p), tuple(x), tuple(f), tuple(l))


def project_on_shell(s, params: DeformationParams) -> PhaseState:
    """Re-solve the dependent coordinates (f, l, epsilon) from (p, x, t, I)."""
    z = as_vector(s)
    return make_state(z[P], z[X], z[T], z[BIG_I], params)


def random_state(rng: np.random.Generator, params: DeformationParams,
                 low: float = -2.0, high: float = 2.0) -> PhaseState:
    """Random on-shell state: (p, x, t, I) uniform on [low, high], |I| kept off zero."""
    p = rng.uniform(low, high, 3)
    x = rng.uniform(low, high, 3)
    t = rng.uniform(low, high)
    bigI = rng.uniform(low, high)
    while abs(bigI) < 0.05:
        bigI = rng.uniform(low, high)
    return make_state(p, x, t, bigI, params)
