from __future__ import annotations

import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from conftest import load_json
from deformed_kepler.algebra import DeformationParams
from deformed_kepler.dynamics import IntegratorConfig
from deformed_kepler.kepler_ref import (
    KeplerElements, LimitFamily, classical_radial_identity, limit_compare, matched_elements,
    orbit_r_of_tau, orbit_rdot, perihelion_time, solve_kepler,
)

ELLIPSE = KeplerElements.from_orbit(a=2.0, e=0.6, alpha=-1.5, m=0.8)


def limit_family():
    doc = load_json("limit.json")
    ini = doc["initial"]
    return LimitFamily(tuple(ini["p"]), tuple(ini["x"]), ini["t"], ini["I"]), DeformationParams(**doc["params"]), doc


class TestSolveKepler:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50.0, 50.0), st.floats(0.0, 0.999))
    def test_matches_bracketed_root(self, M, e):
        E = solve_kepler(M, e)
        assert abs(E - e * math.sin(E) - M) <= 1e-12 * max(1.0, abs(M))
        # independent oracle on the same branch
        want = brentq(lambda u: u - e * math.sin(u) - M, M - 1.0, M + 1.0, xtol=1e-15)
        assert E == pytest.approx(want, abs=1e-11)

    def test_circular(self):
        assert solve_kepler(1.234, 0.0) == pytest.approx(1.234, abs=1e-15)

    def test_large_mean_anomaly(self):
        M = 1e4 + 0.3
        E = solve_kepler(M, 0.9)
        assert abs(E - 0.9 * math.sin(E) - M) <= 1e-10

    def test_near_parabolic(self):
        for M in (1e-6, 1e-3, 0.1, 3.0):
            E = solve_kepler(M, 0.999999)
            assert abs(E - 0.999999 * math.sin(E) - M) <= 1e-13

    @pytest.mark.parametrize("e", [-0.1, 1.0, 1.5, math.nan])
    def test_bad_eccentricity(self, e):
        with pytest.raises(ValueError):
            solve_kepler(0.5, e)


class TestElements:
    def test_from_orbit_round_trip(self):
        assert ELLIPSE.a == pytest.approx(2.0, rel=1e-14)
        assert ELLIPSE.e == pytest.approx(0.6, rel=1e-14)
        assert ELLIPSE.period == pytest.approx(2 * math.pi * math.sqrt(0.8 * 8 / 1.5), rel=1e-14)

    @pytest.mark.parametrize("energy,alpha", [(0.1, -1.0), (-0.1, 1.0), (0.0, -1.0)])
    def test_unbound(self, energy, alpha):
        el = KeplerElements(energy, 1.0, alpha, 1.0)
        assert not el.bound
        with pytest.raises(ValueError):
            el.a


class TestOrbit:
    def test_perihelion_and_aphelion(self):
        assert orbit_r_of_tau(ELLIPSE, 0.0) == pytest.approx(2.0 * 0.4, rel=1e-14)
        assert orbit_r_of_tau(ELLIPSE, 0.5 * ELLIPSE.period) == pytest.approx(2.0 * 1.6, rel=1e-12)
        assert orbit_r_of_tau(ELLIPSE, 3.0, tau_peri=3.0) == pytest.approx(0.8, rel=1e-14)

    def test_periodic(self):
        for tau in (0.3, 1.7, 4.2):
            npt.assert_allclose(orbit_r_of_tau(ELLIPSE, tau + 3 * ELLIPSE.period),
                                orbit_r_of_tau(ELLIPSE, tau), rtol=1e-11)

    def test_circular_orbit(self):
        el = KeplerElements.from_orbit(a=1.5, e=0.0, alpha=-1.0, m=1.0)
        # e is a square root of a cancelling sum, so it is only good to ~sqrt(eps)
        assert el.e <= 3e-8
        rs = [orbit_r_of_tau(el, tau) for tau in np.linspace(0, 10, 7)]
        npt.assert_allclose(rs, 1.5, rtol=3e-8)
        assert abs(orbit_rdot(el, 2.0)) <= 3e-8
        assert classical_radial_identity(1.5, 0.0, el) == pytest.approx(0.0, abs=1e-14)

    def test_identity_along_orbit(self):
        for tau in np.linspace(0, ELLIPSE.period, 23):
            r, rdot = orbit_r_of_tau(ELLIPSE, tau), orbit_rdot(ELLIPSE, tau)
            assert abs(classical_radial_identity(r, rdot, ELLIPSE)) <= 1e-10 * ELLIPSE.l ** 2

    def test_rdot_matches_finite_differences(self):
        h = 1e-6
        for tau in (0.2, 1.1, 2.9, 5.0):
            fd = (orbit_r_of_tau(ELLIPSE, tau + h) - orbit_r_of_tau(ELLIPSE, tau - h)) / (2 * h)
            assert orbit_rdot(ELLIPSE, tau) == pytest.approx(fd, rel=1e-7, abs=1e-9)

    @pytest.mark.parametrize("outgoing", [True, False])
    def test_perihelion_time(self, outgoing):
        r0 = 2.5
        tp = perihelion_time(ELLIPSE, r0, outgoing)
        assert orbit_r_of_tau(ELLIPSE, 0.0, tp) == pytest.approx(r0, rel=1e-12)
        assert (orbit_rdot(ELLIPSE, 0.0, tp) > 0) == outgoing


class TestLimit:
    def test_matched_elements(self):
        family, base, _ = limit_family()
        params = base.scaled(1e6)
        el = matched_elements(family.state(params), params)
        assert el.alpha == -params.alpha
        assert el.l == pytest.approx(math.sqrt(1.5), rel=1e-12)
        # classical energy p^2/2m + alpha/r for |p|^2 = 1.5, r = 1
        assert el.energy == pytest.approx(0.75 - 1.0, rel=1e-4)

    def test_deviation_decreases(self):
        family, base, doc = limit_family()
        lim = doc["limit"]
        cfg = IntegratorConfig(horizon=lim["horizon"], n_samples=lim["nSamples"])
        devs = [limit_compare(family, lam, cfg, base).deviation for lam in lim["lambdas"]]
        assert devs[0] > devs[1] > devs[2]
        assert devs[-1] <= lim["maxFinalDeviation"]

    def test_report_fields(self):
        family, base, _ = limit_family()
        rep = limit_compare(family, 1e6, IntegratorConfig(horizon=2.0, n_samples=11), base)
        d = rep.as_dict()
        assert d["lambda"] == 1e6 and d["status"] == "ok"
        assert d["eccentricity"] == pytest.approx(0.5, abs=1e-4)

    def test_free_motion(self):
        family = LimitFamily((0.3, 0.5, -0.2), (1.0, 0.4, 0.1))
        base = DeformationParams(M2=1.0, T2=1.0, nu=1.0, m=1.0, alpha=0.0)
        rep = limit_compare(family, 1e6, IntegratorConfig(horizon=1.0, n_samples=21), base)
        assert rep.eccentricity is None
        assert rep.deviation <= 1e-6

    @pytest.mark.parametrize("lam", [0.5, 0.0, math.nan])
    def test_rejects_small_lambda(self, lam):
        family, base, _ = limit_family()
        with pytest.raises(ValueError):
            limit_compare(family, lam, IntegratorConfig(horizon=1.0), base)
