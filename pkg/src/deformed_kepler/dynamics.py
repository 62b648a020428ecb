"""Hamiltonian flow on the full phase space and invariant monitoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import conventions
from .algebra import (
    EPS, F, L, P, X, DeformationParams, ParameterError, PhaseState, as_vector, bracket_table, constraint_residuals,
    constraint_scales, project_on_shell,
)
from .observables import (
    SVars, grad_hamiltonian, grad_r_squared, grad_svars, integrals_report, r_squared,
    svars_from_state,
)


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and span of an adaptive DOP853 run.

    ``perihelion_guard`` of ``None`` means 1e-6 times the initial radius.
    ``n_samples`` evenly spaced output points (endpoints included) are
    recorded; ``project`` re-solves the dependent coordinates after every
    output interval.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    horizon: float = 10.0
    perihelion_guard: float | None = None
    n_samples: int = 201
    project: bool = False

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ParameterError(problems)

    def validate(self) -> dict[str, str]:
        problems = {}
        if not (self.rel_tol > 0 and math.isfinite(self.rel_tol)):
            problems["rel_tol"] = "must be a finite number > 0"
        if not (self.abs_tol > 0 and math.isfinite(self.abs_tol)):
            problems["abs_tol"] = "must be a finite number > 0"
        if not self.max_step > 0:
            problems["max_step"] = "must be > 0"
        if not (self.horizon >= 0 and math.isfinite(self.horizon)):
            problems["horizon"] = "must be a finite number >= 0"
        if self.perihelion_guard is not None and not self.perihelion_guard >= 0:
            problems["perihelion_guard"] = "must be >= 0"
        if not (isinstance(self.n_samples, int) and self.n_samples >= 2):
            problems["n_samples"] = "must be an integer >= 2"
        return problems


@dataclass
class Trajectory:
    """Samples of a flow run.

    ``status`` is "ok" when the horizon was reached; otherwise it names the
    reason for stopping and ``diagnostic`` carries detail.
    """

    taus: np.ndarray
    states: np.ndarray  # (n, 15)
    params: DeformationParams
    reports: list = field(default_factory=list)
    turning_taus: np.ndarray = field(default_factory=lambda: np.empty(0))
    status: str = "ok"
    diagnostic: str = ""

    def __len__(self):
        return len(self.taus)

    def state(self, k: int) -> PhaseState:
        return PhaseState.from_vector(self.states[k])

    @property
    def radii(self) -> np.ndarray:
        return np.sqrt([r_squared(z, self.params) for z in self.states])


def flow_rhs(s, params: DeformationParams, xx_sign: int | None = None) -> np.ndarray:
    """dz/dtau = {H, z}; the energy component is exactly zero."""
    z = as_vector(s)
    table = bracket_table(params) if xx_sign is None else bracket_table(params, xx_sign)
    dz = grad_hamiltonian(z, params) @ table.at(z)
    dz[EPS] = 0.0
    return dz


def radial_rate(s, params: DeformationParams) -> float:
    """d(r^2)/dtau along the flow."""
    z = as_vector(s)
    return float(grad_r_squared(z, params) @ flow_rhs(z, params))


def svar_rates(s, params: DeformationParams) -> np.ndarray:
    """d(s-components)/dtau along the flow, by the chain rule."""
    z = as_vector(s)
    return grad_svars(z, params) @ flow_rhs(z, params)


def integrate_flow(s0, cfg: IntegratorConfig, params: DeformationParams,
                   reverse: bool = False) -> Trajectory:
    """Integrate the flow from ``s0`` over ``[0, cfg.horizon]``.

    With ``reverse`` the negated vector field is integrated (time reversal).
    Stops early at the perihelion guard or on integrator failure, returning
    the partial trajectory with a diagnostic.
    """
    z0 = as_vector(s0).copy()
    r0 = math.sqrt(r_squared(z0, params))
    guard = 1e-6 * r0 if cfg.perihelion_guard is None else cfg.perihelion_guard
    if not r0 > guard:
        raise ValueError(f"initial radius {r0!r} does not exceed the perihelion guard {guard!r}")
    sign = -1.0 if reverse else 1.0
    table = bracket_table(params)

    def rhs(_tau, z):
        g = grad_hamiltonian(z, params)
        dz = g @ (table.C @ z + table.d)
        dz[EPS] = 0.0
        return sign * dz

    def hit_guard(_tau, z):
        return r_squared(z, params) - guard * guard
    hit_guard.terminal = True
    hit_guard.direction = -1

    def turning(_tau, z):
        return grad_r_squared(z, params) @ rhs(_tau, z)

    if cfg.horizon == 0:
        return _finish(np.array([0.0]), z0[None, :], params, np.empty(0), "ok", "")

    t_eval = np.linspace(0.0, cfg.horizon, cfg.n_samples)
    if not cfg.project:
        sol = solve_ivp(rhs, (0.0, cfg.horizon), z0, method="DOP853", t_eval=t_eval,
                        rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step,
                        events=(hit_guard, turning))
        status, diag = _status(sol)
        taus, states = sol.t, sol.y.T
        if status == "perihelion_guard" and sol.t_events[0][0] > taus[-1]:
            # keep the state at which the guard fired as the last sample
            taus = np.append(taus, sol.t_events[0][0])
            states = np.vstack([states, sol.y_events[0][0]])
        return _finish(taus, states, params, sol.t_events[1], status, diag)

    taus, states, turns = [0.0], [z0], []
    z = z0
    status, diag = "ok", ""
    for a, b in zip(t_eval[:-1], t_eval[1:]):
        sol = solve_ivp(rhs, (a, b), z, method="DOP853", rtol=cfg.rel_tol, atol=cfg.abs_tol,
                        max_step=cfg.max_step, events=(hit_guard, turning))
        turns.extend(sol.t_events[1])
        status, diag = _status(sol)
        z = np.asarray(project_on_shell(sol.y[:, -1], params))
        taus.append(sol.t[-1])
        states.append(z)
        if status != "ok":
            break
    return _finish(np.array(taus), np.array(states), params, np.array(turns), status, diag)


def _status(sol) -> tuple[str, str]:
    if sol.status == 1:
        return "perihelion_guard", f"radius fell below guard at tau={sol.t_events[0][0]:.17g}"
    if sol.status == -1:
        return "integrator_failure", sol.message
    return "ok", ""


def _finish(taus, states, params, turns, status, diag) -> Trajectory:
    reports = [integrals_report(z, params) for z in states]
    return Trajectory(np.asarray(taus, dtype=float), np.asarray(states, dtype=float), params,
                      reports, np.asarray(turns, dtype=float), status, diag)


DRIFT_KEYS = ("H", "epsilon", "E1", "theta", "l2", "cas1", "cas2")


@dataclass(frozen=True)
class DriftReport:
    """Largest change of each invariant over a trajectory.

    ``relative`` divides by the magnitude of the terms that make up the
    invariant at the initial state; ``constraints`` holds, for each of the
    seven constraint residuals, the largest change divided by the size of the
    cancelling terms at that sample.
    """

    relative: dict
    absolute: dict
    constraints: tuple[float, ...]
    constraints_absolute: tuple[float, ...]

    def max_relative(self) -> float:
        return max(max(self.relative.values()), max(self.constraints))

    def as_dict(self) -> dict:
        return {
            "relative": dict(self.relative),
            "absolute": dict(self.absolute),
            "constraints": list(self.constraints),
            "constraints_absolute": list(self.constraints_absolute),
        }


def _term_scales(z: np.ndarray, params: DeformationParams) -> dict[str, float]:
    m = params.m
    sv = svars_from_state(z, params)
    r = math.sqrt(r_squared(z, params))
    h_scale = (abs(2 * m * z[EPS]) + z[P] @ z[P] + z[F] @ z[F] / params.T2
               + abs(2 * m * params.alpha / r))
    x_p = float(np.linalg.norm(z[X]) * np.linalg.norm(z[P]) / abs(z[2]))
    return {
        "H": h_scale,
        "epsilon": max(abs(z[EPS]), h_scale / (2 * m)),
        "E1": h_scale,
        "theta": abs(sv.sp1) + abs(sv.sm1) + abs(sv.sp2) + abs(sv.sm2),
        "l2": max(z[L] @ z[L], x_p * x_p),
        "cas1": abs(sv.sp1 * sv.sm1) + sv.s01 ** 2 / 4,
        "cas2": abs(sv.sp2 * sv.sm2) + sv.s02 ** 2 / 4,
    }


def drift_report(traj: Trajectory) -> DriftReport:
    params = traj.params
    scales = _term_scales(traj.states[0], params)
    tiny = np.finfo(float).tiny
    first = traj.reports[0]
    rel, ab = {}, {}
    for key in DRIFT_KEYS:
        vals = np.array([getattr(rep, key) for rep in traj.reports])
        d = float(np.max(np.abs(vals - getattr(first, key))))
        ab[key] = d
        rel[key] = d / max(scales[key], tiny)
    res0 = _residual_vector(first)
    cons = np.zeros(7)
    cons_abs = np.zeros(7)
    for z, rep in zip(traj.states, traj.reports):
        d = np.abs(_residual_vector(rep) - res0)
        cons_abs = np.maximum(cons_abs, d)
        cons = np.maximum(cons, d / constraint_scales(z, params))
    return DriftReport(rel, ab, tuple(float(c) for c in cons), tuple(float(c) for c in cons_abs))


def _residual_vector(rep) -> np.ndarray:
    return np.array([rep.scalar_residual, *rep.vec_residuals])


# -- printed reduced equations -------------------------------------------------

COUPLING_READINGS = {
    "literal": lambda sv: sv.sp1 * sv.sm2 - sv.sp2 * sv.sp1,
    "literal_plus": lambda sv: sv.sp1 * sv.sm2 + sv.sp2 * sv.sp1,
    "corrected": lambda sv: sv.sp1 * sv.sm2 - sv.sp2 * sv.sm1,
}


def printed_coupling_terms(sv: SVars, r: float, params: DeformationParams,
                           reading: str = "corrected") -> np.ndarray:
    """Coupling rates of the first triple with the printed coefficients."""
    k = params.m * params.alpha / (r ** 3 * params.M2)
    return np.array([
        -k * (sv.s01 * sv.sp2 - sv.sp1 * sv.s02) / 4,
        k * (sv.s01 * sv.sm2 - sv.sm1 * sv.s02) / 4,
        k * COUPLING_READINGS[reading](sv) / 2,
    ])


def printed_sum_rates(sv: SVars, params: DeformationParams) -> np.ndarray:
    """Rates of the summed components (s+1+s+2, s-1+s-2, s01+s02) as printed."""
    w = params.m / params.T
    return np.array([2 * w * sv.s02, 2 * w * sv.s02, 4 * w * (sv.sm2 + sv.sp2)])


def printed_r2_rate(sv: SVars, params: DeformationParams) -> float:
    """d(r^2)/dtau as printed."""
    return (2 * params.m / params.T) * (4 / params.M2) * (
        -(sv.sp2 + sv.sm2) * sv.s01 + (sv.sp1 + sv.sm1) * sv.s02)


def svar_rhs_printed(sv: SVars, r: float, params: DeformationParams,
                     corrected: bool = True) -> np.ndarray:
    """Rates of all six s-components from the reduced equations.

    The first triple follows the coupling equations, the second is the
    summed free equations minus the first.  With ``corrected`` the frozen
    multipliers and reading are applied; otherwise the printed literal forms.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if corrected:
        first = conventions.COUPLING_MULT * printed_coupling_terms(sv, r, params, "corrected")
        total = np.asarray(conventions.SUM_RATE_SIGNS) * printed_sum_rates(sv, params)
    else:
        first = printed_coupling_terms(sv, r, params, "literal")
        total = printed_sum_rates(sv, params)
    return np.concatenate([first, total - first])


@dataclass(frozen=True)
class EquationCheck:
    """Printed residual, best multiplier on the printed form, and residual after it."""

    printed_residual: float
    multiplier: float
    corrected_residual: float
    reading: str = ""

    def as_dict(self) -> dict:
        d = {"printed_residual": self.printed_residual, "multiplier": self.multiplier,
             "corrected_residual": self.corrected_residual}
        if self.reading:
            d["reading"] = self.reading
        return d


MULTIPLIER_GRID = tuple(sorted({s * 2.0 ** k for s in (1, -1) for k in range(-6, 7)}))


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b)) / scale)


def fit_multiplier(true: np.ndarray, printed: np.ndarray, tol: float = 1e-6) -> EquationCheck:
    """Pick the multiplier in ``MULTIPLIER_GRID`` that best maps printed onto true.

    The printed form is accepted unchanged (multiplier 1) when its residual
    is already within ``tol``.
    """
    true = np.asarray(true, dtype=float)
    printed = np.asarray(printed, dtype=float)
    base = _rel(true, printed)
    if base <= tol:
        return EquationCheck(base, 1.0, base)
    best = min(MULTIPLIER_GRID, key=lambda k: _rel(true, k * printed))
    return EquationCheck(base, best, _rel(true, best * printed))


def crosscheck_eom(traj: Trajectory, params: DeformationParams | None = None) -> dict:
    """Compare flow-derived rates with the printed reduced equations.

    Returns one :class:`EquationCheck` per equation ("sum_rate1".."sum_rate3",
    "coupling1".."coupling3", "r2_rate"); for the corrupted third coupling entry
    all readings are tried and the best one is recorded.
    """
    params = traj.params if params is None else params
    if len(traj) < 3:
        raise ValueError("crosscheck needs at least 3 samples")
    true_s, true_r2, svs, rs = [], [], [], []
    for z in traj.states:
        dz = flow_rhs(z, params)
        true_s.append(grad_svars(z, params) @ dz)
        true_r2.append(grad_r_squared(z, params) @ dz)
        svs.append(svars_from_state(z, params))
        rs.append(math.sqrt(r_squared(z, params)))
    true_s = np.array(true_s)
    true_r2 = np.array(true_r2)

    out = {}
    sum_true = true_s[:, :3] + true_s[:, 3:]
    sum_pr = np.array([printed_sum_rates(sv, params) for sv in svs])
    for k in range(3):
        out[f"sum_rate{k + 1}"] = fit_multiplier(sum_true[:, k], sum_pr[:, k])
    if params.alpha != 0:
        coupling_pr = np.array([printed_coupling_terms(sv, r, params, "literal") for sv, r in zip(svs, rs)])
        for k in range(2):
            out[f"coupling{k + 1}"] = fit_multiplier(true_s[:, k], coupling_pr[:, k])
        checks = {}
        for name in COUPLING_READINGS:
            pr = np.array([printed_coupling_terms(sv, r, params, name)[2] for sv, r in zip(svs, rs)])
            checks[name] = fit_multiplier(true_s[:, 2], pr)
        best = min(checks, key=lambda n: checks[n].corrected_residual)
        c = checks[best]
        out["coupling3"] = EquationCheck(checks["literal"].printed_residual, c.multiplier,
                                         c.corrected_residual, best)
    out["r2_rate"] = fit_multiplier(true_r2, np.array([printed_r2_rate(sv, params) for sv in svs]))
    return out
