import math
import warnings

import numpy as np
import pytest
from conftest import CHAIN, random_condition_a
from hypothesis import assume, given
from hypothesis import strategies as st

from hypodecay import fp_core, matlib, propagator
from hypodecay.errors import (
    ConditionViolationError,
    DefectiveInputError,
    InsufficientSignalError,
    InvalidInputError,
    UnboundedSupremumError,
)

seeds = st.integers(0, 2**32 - 1)
C_A2 = fp_core.kinetic_drift(2.0)


def quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kwargs)


class TestCurve:
    def test_starts_at_one(self, rng):
        C = random_condition_a(rng, 3)
        assert propagator.h_curve(C, [0.0, 1.0]).values[0] == 1.0

    def test_diagonal(self):
        v = propagator.h_curve(np.diag([1.0, 2.0]), [1.0]).values[0]
        assert v == pytest.approx(math.exp(-1.0), rel=1e-14)

    def test_kinetic_point(self):
        v = propagator.h_curve(C_A2, [1.0]).values[0]
        assert v == pytest.approx(propagator.kinetic_fp_closed_form(2.0, 1.0), abs=1e-13)

    def test_grid_validation(self):
        with pytest.raises(InvalidInputError):
            propagator.h_curve(np.eye(2), [1.0, 0.5])
        with pytest.raises(InvalidInputError):
            propagator.h_curve(np.eye(2), [-1.0])
        with pytest.raises(InvalidInputError):
            propagator.h_curve(np.eye(2), [])

    def test_parallel_bit_identical(self, rng):
        C = random_condition_a(rng, 3)
        t = np.linspace(0, 10, 500)
        serial = propagator.h_values(C, t, workers=1)
        parallel = propagator.h_values(C, t, workers=4)
        assert np.array_equal(serial, parallel)

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv(propagator.THREADS_ENV, "3")
        assert propagator.thread_count() == 3
        monkeypatch.setenv(propagator.THREADS_ENV, "nonsense")
        assert propagator.thread_count() == 1

    @given(st.integers(1, 4), seeds)
    def test_contractive(self, d, seed):
        C = random_condition_a(np.random.default_rng(seed), d)
        v = propagator.h_curve(C, np.linspace(0, 8, 80)).values
        assert v[0] == 1.0
        assert np.all(v <= 1.0 + 1e-14) and np.all(v > 0)

    @given(st.integers(1, 4), seeds, st.floats(0, 3), st.floats(0, 3))
    def test_submultiplicative(self, d, seed, s, t):
        C = random_condition_a(np.random.default_rng(seed), d)
        hs, ht, hst = propagator.h_values(C, [s, t, s + t], workers=1)
        assert hst <= hs * ht * (1 + 1e-12) + 1e-15

    @given(st.integers(1, 3), seeds)
    def test_deficit_consistent(self, d, seed):
        C = random_condition_a(np.random.default_rng(seed), d)
        t = np.array([0.05, 0.3, 1.0, 3.0])
        direct = 1.0 - propagator.h_values(C, t, workers=1)
        accurate = propagator.deficit_values(C, t)
        np.testing.assert_allclose(accurate, direct, rtol=1e-6, atol=1e-13)


class TestClosedForm:
    @pytest.mark.parametrize("a", [0.1, 0.2, 0.25, 0.3, 2.0, 10.0])
    def test_at_zero(self, a):
        assert propagator.kinetic_fp_closed_form(a, 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_critical_formula(self):
        t = np.linspace(0, 10, 11)
        ref = np.sqrt(1 + t**2 / 2 + t * np.sqrt(1 + (t / 2) ** 2)) * np.exp(-t / 2)
        np.testing.assert_allclose(propagator.kinetic_fp_closed_form(0.25, t), ref, rtol=1e-15)

    @pytest.mark.parametrize("a", [0.2, 2.0])
    def test_against_curve(self, a):
        t = np.linspace(0, 20, 200)
        h = propagator.h_curve(fp_core.kinetic_drift(a), t).values
        assert np.max(np.abs(h - propagator.kinetic_fp_closed_form(a, t))) <= 1e-8

    @given(st.floats(0.01, 20.0), st.floats(0, 30))
    def test_oracle_any_a(self, a, t):
        h = propagator.h_values(fp_core.kinetic_drift(a), [t], workers=1)[0]
        assert h == pytest.approx(propagator.kinetic_fp_closed_form(a, t), abs=1e-9)

    def test_domain(self):
        with pytest.raises(InvalidInputError):
            propagator.kinetic_fp_closed_form(0.0, 1.0)
        with pytest.raises(InvalidInputError):
            propagator.kinetic_fp_closed_form(1.0, -1.0)


class TestBestConstant:
    def test_identity(self):
        r = propagator.best_constant_numeric(np.eye(2))
        assert r.c_numeric == 1.0 and r.t_argmax == 0.0 and not r.attained_at_infinity

    def test_a_one_fifth(self):
        with pytest.warns(propagator.TailWarning):
            r = propagator.best_constant_numeric(fp_core.kinetic_drift(0.2))
        assert r.c_numeric == pytest.approx(math.sqrt(5), abs=1e-6)
        assert r.attained_at_infinity and math.isinf(r.t_argmax)

    def test_a_two(self):
        r = propagator.best_constant_numeric(C_A2)
        assert r.c_numeric == pytest.approx((2 * math.sqrt(2) + 1) / math.sqrt(7), abs=1e-9)
        # first time with |exp(theta t) - 1| = 2, i.e. sqrt(7) t / 2 = pi / 2
        assert r.t_argmax == pytest.approx(math.pi / math.sqrt(7), abs=1e-5)

    def test_defective_needs_epsilon(self):
        with pytest.raises(UnboundedSupremumError):
            propagator.best_constant_numeric(fp_core.kinetic_drift(0.25))
        r = propagator.best_constant_numeric(fp_core.kinetic_drift(0.25), epsilon=0.005)
        assert math.isfinite(r.c_numeric) and r.c_numeric > 1 and r.case_tag == "defective"

    def test_unstable(self):
        with pytest.raises(ConditionViolationError):
            propagator.best_constant_numeric([[0.0, -1.0], [1.0, 0.0]])

    def test_symmetric_2x2(self):
        r = propagator.best_constant_2x2(np.diag([1.0, 2.0]))
        assert r.closed_form == pytest.approx(1.0) and r.c_numeric == pytest.approx(1.0)

    def test_closed_forms(self):
        r2 = propagator.best_constant_2x2(C_A2)
        assert r2.case_tag == "nd_case1"
        assert r2.closed_form == pytest.approx((2 * math.sqrt(2) + 1) / math.sqrt(7), rel=1e-12)
        r5 = propagator.best_constant_2x2(fp_core.kinetic_drift(0.2))
        assert r5.case_tag == "nd_case2"
        assert r5.closed_form == pytest.approx(math.sqrt(5), rel=1e-12)

    def test_2x2_rejects(self):
        with pytest.raises(DefectiveInputError):
            propagator.best_constant_2x2(fp_core.kinetic_drift(0.25))
        with pytest.raises(InvalidInputError):
            propagator.best_constant_2x2(np.eye(3))

    def test_case_tags(self):
        assert quiet(propagator.best_constant_numeric, np.diag([1.0, 2.0, 3.0])).case_tag == "coercive"
        assert quiet(propagator.best_constant_numeric, CHAIN).case_tag == "general_d"

    @given(st.integers(2, 3), seeds)
    def test_bounds_hold_on_grid(self, d, seed):
        C = random_condition_a(np.random.default_rng(seed), d)
        g = fp_core.spectral_gap(C)
        if g.defective:
            return
        r = quiet(propagator.best_constant_numeric, C, n_coarse=1500)
        t = np.linspace(0, 20, 101)
        h = propagator.h_values(C, t, workers=1)
        assert r.c_numeric >= 1.0
        assert np.all(h <= r.c_numeric * np.exp(-r.mu * t) * (1 + 1e-9))
        assert np.all(h >= np.exp(-r.mu * t) / r.c_numeric * (1 - 1e-9))

    def test_report_dict_keys(self):
        keys = propagator.best_constant_numeric(C_A2).to_dict().keys()
        assert {"mu", "c_numeric", "t_argmax", "epsilon", "closed_form", "case_tag"} <= set(keys)


class TestShortTime:
    GRID = np.geomspace(1e-5, 1.0, 200)

    @pytest.mark.parametrize("C,alpha", [(np.eye(2), 1), (C_A2, 3), (CHAIN, 5)])
    def test_exponent(self, C, alpha):
        a_fit, _ = propagator.short_time_fit(propagator.h_curve(C, self.GRID, deficits=True))
        assert a_fit == pytest.approx(alpha, abs=0.15)

    def test_identity_coefficient(self):
        _, c = propagator.short_time_fit(propagator.h_curve(np.eye(2), self.GRID, deficits=True))
        assert c == pytest.approx(1.0, rel=0.02)

    @pytest.mark.parametrize("a", [0.2, 0.25, 2.0, 5.0])
    def test_kinetic_coefficient(self, a):
        # 1 - h^2 ~ (a/6) t^3 from the Gramian, hence 1 - h ~ (a/12) t^3
        C = fp_core.kinetic_drift(a)
        _, c = propagator.short_time_fit(propagator.h_curve(C, self.GRID, deficits=True))
        assert c == pytest.approx(a / 12.0, rel=0.01)

    def test_without_accurate_deficits(self):
        curve = propagator.h_curve(np.eye(2), np.geomspace(1e-4, 1e-1, 50))
        a_fit, _ = propagator.short_time_fit(curve, t_window=(1e-4, 1e-1))
        assert a_fit == pytest.approx(1.0, abs=0.15)

    def test_no_signal(self):
        curve = propagator.NormCurve(np.geomspace(1e-3, 1, 20), np.ones(20))
        with pytest.raises(InsufficientSignalError):
            propagator.short_time_fit(curve)

    def test_too_narrow(self):
        curve = propagator.h_curve(np.eye(2), np.geomspace(1e-3, 5e-3, 20), deficits=True)
        with pytest.raises(InsufficientSignalError):
            propagator.short_time_fit(curve)

    @given(st.integers(1, 4), seeds)
    def test_random_matches_index(self, d, seed):
        C = random_condition_a(np.random.default_rng(seed), d)
        m = fp_core.hypocoercivity_index(C)
        assume(m <= 2)
        a_fit, _ = propagator.short_time_fit(propagator.h_curve(C, self.GRID, deficits=True))
        assert a_fit == pytest.approx(2 * m + 1, abs=0.15)


class TestEnvelope:
    def test_identity_small_t(self):
        t = 1e-3
        assert propagator.regularization_envelope(np.eye(2), t) == pytest.approx(1 / (2 * math.e * t), rel=1e-3)

    def test_large_t(self):
        t = 5.0
        h = propagator.h_values(C_A2, [t], workers=1)[0]
        assert propagator.regularization_envelope(C_A2, t) == pytest.approx(h**2, rel=1e-12)

    @pytest.mark.parametrize("C,alpha", [(np.eye(2), 1), (C_A2, 3)])
    def test_slope(self, C, alpha):
        t = np.geomspace(1e-3, 1e-1, 40)
        G = [propagator.regularization_envelope(C, x) for x in t]
        assert np.polyfit(np.log(t), np.log(G), 1)[0] == pytest.approx(-alpha, abs=0.2)

    def test_matches_brute_force(self):
        for t in (0.05, 0.3, 1.0):
            h = propagator.h_values(C_A2, [t], workers=1)[0]
            brute = max(m * h ** (2 * m) for m in range(1, 200000))
            assert propagator.regularization_envelope(C_A2, t) == pytest.approx(brute, rel=1e-10)

    def test_truncation_warning(self):
        with pytest.warns(propagator.TruncationWarning):
            propagator.regularization_envelope(np.eye(2), 1e-3, M_cap=3)

    def test_domain(self):
        with pytest.raises(InvalidInputError):
            propagator.regularization_envelope(np.eye(2), 0.0)

    @pytest.mark.parametrize("C,alpha", [(np.eye(2), 1), (C_A2, 3), (CHAIN, 5)])
    def test_duality(self, C, alpha):
        r = propagator.regularization_duality(C, alpha, 0.1)
        assert r.passed and r.c2 > 0 and 0 < r.delta2 <= 0.1
