from __future__ import annotations

import itertools

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings

from conftest import UNIT, big_i, coord, params_st, reference_state, vec3
from deformed_kepler.algebra import (
    COORDS, NDIM, DeformationParams, Observable, ParameterError, PhaseState, bracket_table,
    constraint_gradients, constraint_residuals, index, jacobi_residual, make_state,
    observable_bracket, random_state, structure_bracket,
)

E, TT, II = index("epsilon"), index("t"), index("I")


def p_(a):
    return 3 + a


def x_(a):
    return 6 + a


def f_(a):
    return 9 + a


def l_(a):
    return 12 + a


def expected_bracket(i, j, z, prm, xx_sign=-1):
    """Independent hand-written bracket table; the oracle for the structure constants."""
    M2, T2, nu, m = prm.M2, prm.T2, prm.nu, prm.m
    eps3 = np.zeros((3, 3, 3))
    for a, b, c in itertools.permutations(range(3)):
        eps3[a, b, c] = np.linalg.det(np.eye(3)[[a, b, c]])
    name_i, name_j = COORDS[i], COORDS[j]

    def part(n):
        return (n[0], int(n[1]) - 1) if n[0] in "pxfl" and len(n) == 2 else (n, None)

    (ki, a), (kj, b) = part(name_i), part(name_j)
    t, bigI = z[TT], z[II]
    p, x, f, l = z[3:6], z[6:9], z[9:12], z[12:15]
    table = {
        ("epsilon", "t"): lambda: bigI,
        ("epsilon", "I"): lambda: t / T2 - m / nu,
        ("epsilon", "p"): lambda: f[b] / T2,
        ("epsilon", "x"): lambda: f[b] / nu,
        ("epsilon", "f"): lambda: p[b],
        ("t", "I"): lambda: m / M2,
        ("t", "x"): lambda: -f[b] / M2,
        ("I", "x"): lambda: -p[b] / M2,
        ("p", "x"): lambda: -bigI * (a == b),
        ("f", "x"): lambda: -t * (a == b),
        ("f", "p"): lambda: -m * (a == b),
        ("x", "x"): lambda: xx_sign * eps3[a, b] @ l / M2,
        ("l", "p"): lambda: eps3[a, b] @ p,
        ("l", "x"): lambda: eps3[a, b] @ x,
        ("l", "f"): lambda: eps3[a, b] @ f,
        ("l", "l"): lambda: eps3[a, b] @ l,
    }
    if (ki, kj) in table:
        return float(table[(ki, kj)]())
    if (kj, ki) in table:
        return -expected_bracket(j, i, z, prm, xx_sign)
    return 0.0


class TestParams:
    def test_valid(self):
        prm = DeformationParams(M2=4.0, T2=2.0, nu=-1.0, m=0.5, alpha=-3.0)
        assert prm.T == pytest.approx(np.sqrt(2.0))
        assert prm.t_shift == pytest.approx(-1.0)

    @pytest.mark.parametrize("field,value", [
        ("M2", 0.0), ("M2", -1.0), ("T2", 0.0), ("nu", 0.0), ("m", 0.0), ("m", -2.0),
        ("alpha", float("nan")), ("T2", float("inf")),
    ])
    def test_rejected(self, field, value):
        kwargs = dict(M2=1.0, T2=1.0, nu=1.0, m=1.0, alpha=0.0)
        kwargs[field] = value
        with pytest.raises(ParameterError) as exc:
            DeformationParams(**kwargs)
        assert field in exc.value.problems

    def test_scaled(self):
        prm = DeformationParams(1.0, 2.0, 3.0, 4.0, 5.0).scaled(10.0)
        assert (prm.M2, prm.T2, prm.nu, prm.m, prm.alpha) == (10.0, 20.0, 30.0, 4.0, 5.0)


class TestPhaseState:
    def test_vector_roundtrip(self):
        z = np.arange(NDIM, dtype=float)
        s = PhaseState.from_vector(z)
        npt.assert_array_equal(np.asarray(s), z)
        assert s.p == (3.0, 4.0, 5.0)

    def test_rejects_nonfinite(self):
        z = np.zeros(NDIM)
        z[4] = np.nan
        with pytest.raises(ValueError):
            PhaseState.from_vector(z)


class TestStructureBracket:
    def test_energy_time(self):
        z = np.zeros(NDIM)
        z[II] = 1.0
        assert structure_bracket(E, TT, z, UNIT) == 1.0

    def test_momenta_commute(self, rng):
        z = rng.normal(size=NDIM)
        assert structure_bracket(p_(0), p_(1), z, UNIT) == 0.0

    def test_positions(self):
        z = np.zeros(NDIM)
        z[l_(2)] = 2.0
        prm = DeformationParams(M2=4.0)
        assert structure_bracket(x_(0), x_(1), z, prm) == pytest.approx(-0.5)
        assert structure_bracket(x_(1), x_(0), z, prm) == pytest.approx(0.5)

    def test_table_against_hand_written(self, rng):
        prm = DeformationParams(M2=2.0, T2=3.0, nu=5.0, m=1.5)
        table = bracket_table(prm)
        for _ in range(5):
            z = rng.uniform(-2, 2, NDIM)
            pi = table.at(z)
            want = np.array([[expected_bracket(i, j, z, prm) for j in range(NDIM)]
                             for i in range(NDIM)])
            npt.assert_allclose(pi, want, rtol=0, atol=1e-14)

    def test_bad_index(self):
        with pytest.raises(IndexError):
            structure_bracket(0, NDIM, np.zeros(NDIM), UNIT)

    @settings(max_examples=50, deadline=None)
    @given(params_st, vec3, vec3, coord, big_i)
    def test_antisymmetry(self, prm, p, x, t, bigI):
        pi = bracket_table(prm).at(make_state(p, x, t, bigI, prm))
        npt.assert_array_equal(pi, -pi.T)


class TestJacobi:
    def test_trivial_triples(self, rng):
        z = rng.uniform(-2, 2, NDIM)
        assert jacobi_residual(E, TT, II, z, UNIT) == 0.0
        assert jacobi_residual(p_(0), p_(1), x_(2), z, UNIT) == 0.0

    def test_pivot_triple_fixes_sign(self, rng):
        z = rng.uniform(-2, 2, NDIM)
        assert abs(jacobi_residual(x_(0), x_(1), p_(0), z, UNIT)) <= 1e-14
        flipped = jacobi_residual(x_(0), x_(1), p_(0), z, UNIT, xx_sign=1)
        assert abs(flipped) > 1e-3

    @settings(max_examples=30, deadline=None)
    @given(params_st, vec3, vec3, coord, big_i)
    def test_all_triples_vanish(self, prm, p, x, t, bigI):
        s = make_state(p, x, t, bigI, prm)
        J = bracket_table(prm).jacobi(s)
        scale = max(1.0, float(np.max(np.abs(np.asarray(s)))))
        assert np.max(np.abs(J)) / scale <= 1e-9

    def test_tensor_matches_nested_brackets(self, rng):
        # nested brackets through finite-difference gradients of the inner bracket
        prm = DeformationParams(M2=2.0, T2=3.0, nu=5.0, m=1.5)
        table = bracket_table(prm)
        z = rng.uniform(-2, 2, NDIM)
        J = table.jacobi(z)

        def nested(i, j, k):
            inner = Observable(lambda w: table.bracket(j, k, w))
            return observable_bracket(Observable.coordinate(i), inner, z, prm)

        for i, j, k in [(x_(0), x_(1), p_(0)), (E, x_(2), f_(2)), (TT, II, x_(1)),
                        (l_(0), x_(1), x_(2)), (E, p_(0), x_(0))]:
            want = nested(i, j, k) + nested(j, k, i) + nested(k, i, j)
            npt.assert_allclose(J[i, j, k], want, atol=1e-8)
            npt.assert_allclose(jacobi_residual(i, j, k, z, prm), want, atol=1e-8)


class TestObservableBracket:
    def test_self_bracket_zero(self, rng):
        z = np.asarray(random_state(rng, UNIT))
        F = Observable(lambda w: w[3] ** 2 + np.sin(w[7]) * w[1])
        assert observable_bracket(F, F, z, UNIT) == pytest.approx(0.0, abs=1e-12)

    def test_antisymmetric(self, rng):
        prm = DeformationParams(M2=2.0, T2=3.0, nu=5.0, m=1.5)
        F = Observable(lambda w: w[3] * w[9] + w[12] ** 2)
        G = Observable(lambda w: np.cos(w[6]) + w[0] * w[2])
        for _ in range(10):
            z = np.asarray(random_state(rng, prm))
            npt.assert_allclose(observable_bracket(F, G, z, prm), -observable_bracket(G, F, z, prm),
                                rtol=1e-12, atol=1e-14)

    def test_coordinates_reproduce_table(self, rng):
        prm = DeformationParams(M2=2.0, T2=3.0, nu=5.0, m=1.5)
        z = np.asarray(random_state(rng, prm))
        for i, j in itertools.combinations(range(NDIM), 2):
            got = observable_bracket(Observable.coordinate(i), Observable.coordinate(j), z, prm)
            npt.assert_allclose(got, structure_bracket(i, j, z, prm), rtol=1e-12, atol=1e-15)

    def test_free_energy_commutes_with_energy_coordinate(self, rng):
        prm = DeformationParams(M2=2.0, T2=3.0, nu=5.0, m=1.5)
        kin = Observable(lambda w: w[3:6] @ w[3:6] - w[9:12] @ w[9:12] / prm.T2,
                         lambda w: np.concatenate([np.zeros(3), 2 * w[3:6], np.zeros(3),
                                                   -2 * w[9:12] / prm.T2, np.zeros(3)]))
        for _ in range(10):
            z = random_state(rng, prm)
            assert observable_bracket(kin, Observable.coordinate(E), z, prm) == pytest.approx(0.0, abs=1e-12)

    def test_fd_gradient(self, rng):
        z = rng.uniform(-2, 2, NDIM)
        F = Observable(lambda w: w[3] ** 3 * w[8] + np.exp(w[1]))
        want = np.zeros(NDIM)
        want[3] = 3 * z[3] ** 2 * z[8]
        want[8] = z[3] ** 3
        want[1] = np.exp(z[1])
        npt.assert_allclose(F.gradient(z), want, rtol=1e-6, atol=1e-8)

    def test_nonfinite_gradient_reported(self):
        F = Observable(lambda w: w[0], lambda w: np.full(NDIM, np.nan))
        with pytest.raises(FloatingPointError):
            observable_bracket(F, F, np.zeros(NDIM), UNIT)


class TestConstraints:
    def test_reference_state(self):
        s = reference_state()
        npt.assert_allclose(s.f, (0.0, -1.0, 0.0))
        npt.assert_allclose(s.l, (0.0, 0.0, -1.0))
        assert s.epsilon == 0.0
        sc, vf, vl = constraint_residuals(s, UNIT)
        assert sc == 0.0
        npt.assert_array_equal(vf, 0.0)
        npt.assert_array_equal(vl, 0.0)

    def test_vacuum(self):
        z = np.zeros(NDIM)
        z[II] = 1.0
        sc, vf, vl = constraint_residuals(z, UNIT)
        assert sc == 0.0 and not vf.any() and not vl.any()
        s = make_state([0, 0, 0], [0, 0, 0], 0.0, 1.0, UNIT)
        assert s.epsilon == 0.0 and s.f == (0.0,) * 3 and s.l == (0.0,) * 3

    def test_energy_perturbation(self):
        z = np.asarray(reference_state())
        z[E] += 1.0
        sc, vf, vl = constraint_residuals(z, UNIT)
        assert sc == pytest.approx(2.0)
        npt.assert_array_equal(vf, 0.0)
        npt.assert_array_equal(vl, 0.0)

    def test_moving_example(self):
        s = make_state([1, 0, 0], [0, 0, 0], 1.0, 1.0, UNIT)
        npt.assert_allclose(s.f, (1.0, 0.0, 0.0))
        npt.assert_allclose(s.l, (0.0, 0.0, 0.0))
        assert s.epsilon == pytest.approx(-0.5)

    def test_zero_bigI_rejected(self):
        with pytest.raises(ValueError):
            make_state([1, 0, 0], [0, 1, 0], 0.0, 0.0, UNIT)

    @settings(max_examples=200, deadline=None)
    @given(params_st, vec3, vec3, coord, big_i)
    def test_make_state_on_shell(self, prm, p, x, t, bigI):
        from deformed_kepler.algebra import constraint_scales
        s = make_state(p, x, t, bigI, prm)
        sc, vf, vl = constraint_residuals(s, prm)
        res = np.abs(np.concatenate([[sc], vf, vl])) / constraint_scales(s, prm)
        assert res.max() <= 1e-12

    def test_constraint_gradients(self, rng):
        prm = DeformationParams(M2=2.0, T2=3.0, nu=5.0, m=1.5)
        z = rng.uniform(-2, 2, NDIM)
        G = constraint_gradients(z, prm)
        for row in range(7):
            def fn(w, row=row):
                sc, vf, vl = constraint_residuals(w, prm)
                return np.concatenate([[sc], vf, vl])[row]
            npt.assert_allclose(G[row], Observable(fn).gradient(z), rtol=1e-6, atol=1e-8)

    def test_constraints_are_first_class(self, rng):
        # brackets of the constraints with each other vanish on the constraint surface
        prm = DeformationParams(M2=2.0, T2=3.0, nu=5.0, m=1.5)
        table = bracket_table(prm)
        for _ in range(5):
            z = np.asarray(random_state(rng, prm))
            G = constraint_gradients(z, prm)
            npt.assert_allclose(G @ table.at(z) @ G.T, 0.0, atol=1e-10)
