import math

import numpy as np
import pytest
from conftest import CHAIN, random_condition_a, random_raw_problem
from hypothesis import given
from hypothesis import strategies as st

from hypodecay import fp_core, matlib
from hypodecay.errors import ConditionViolationError, InvalidInputError

seeds = st.integers(0, 2**32 - 1)


class TestProblem:
    def test_zero_diffusion_rejected(self):
        with pytest.raises(InvalidInputError):
            fp_core.FpProblem([[0.0, -1.0], [1.0, 0.0]], np.zeros((2, 2)))

    def test_asymmetric_diffusion_rejected(self):
        with pytest.raises(InvalidInputError):
            fp_core.FpProblem(np.eye(2), [[1.0, 0.1], [0.0, 1.0]])

    def test_indefinite_diffusion_rejected(self):
        with pytest.raises(InvalidInputError):
            fp_core.FpProblem(np.eye(2), np.diag([1.0, -1.0]))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            fp_core.FpProblem(np.eye(2), np.eye(3))

    def test_nonpositive_kinetic_parameter(self):
        with pytest.raises(InvalidInputError):
            fp_core.kinetic_problem(0.0)


class TestNormalize:
    def test_identity(self):
        n = fp_core.normalize(fp_core.FpProblem(np.eye(2), np.eye(2)))
        np.testing.assert_allclose(n.C, np.eye(2), atol=1e-14)
        np.testing.assert_allclose(n.K, np.eye(2), atol=1e-14)

    def test_kinetic_a2(self):
        n = fp_core.normalize(fp_core.kinetic_problem(2.0))
        np.testing.assert_allclose(n.K, np.diag([0.5, 1.0]), atol=1e-13)
        r = math.sqrt(2.0)
        np.testing.assert_allclose(n.C, [[0.0, -r], [r, 1.0]], atol=1e-13)

    @pytest.mark.parametrize("a", [0.05, 0.2, 0.25, 1.0, 2.0, 7.5])
    def test_kinetic_family(self, a):
        n = fp_core.normalize(fp_core.kinetic_problem(a))
        np.testing.assert_allclose(n.C, fp_core.kinetic_drift(a), atol=1e-12)

    def test_unstable_drift(self):
        with pytest.raises(ConditionViolationError):
            fp_core.normalize(fp_core.FpProblem([[0.0, -1.0], [1.0, 0.0]], np.eye(2)))

    def test_invariant_kernel(self):
        # diffusion only in x1 while x2 is decoupled: K is singular
        with pytest.raises(ConditionViolationError) as info:
            fp_core.normalize(fp_core.FpProblem(np.diag([1.0, 1.0]), np.diag([1.0, 0.0])))
        assert info.value.clause == "kawashima"

    @given(st.integers(1, 5), seeds)
    def test_identity_and_index(self, d, seed):
        p = random_raw_problem(np.random.default_rng(seed), d)
        n = fp_core.normalize(p)
        D = n.K_half_inv @ p.Dtilde @ n.K_half_inv
        assert np.linalg.norm(matlib.sym_part(n.C) - D, 2) <= 1e-9
        assert n.m_hc == fp_core.hypocoercivity_index_raw(p.Ctilde, p.Dtilde)
        assert n.m_hc <= d - 1

    @given(st.integers(1, 5), seeds)
    def test_gap_similarity(self, d, seed):
        p = random_raw_problem(np.random.default_rng(seed), d)
        n = fp_core.normalize(p)
        assert n.mu == pytest.approx(fp_core.spectral_gap(p.Ctilde).mu, rel=1e-7, abs=1e-9)


class TestConditionA:
    @pytest.mark.parametrize("a", [0.1, 0.25, 2.0])
    def test_kinetic_passes(self, a):
        assert fp_core.check_condition_a(fp_core.kinetic_drift(a)).passed

    def test_rotation_fails(self):
        r = fp_core.check_condition_a([[0.0, -1.0], [1.0, 0.0]])
        assert r.cs_psd and not r.kawashima_ok and not r.passed

    def test_invariant_kernel_fails(self):
        r = fp_core.check_condition_a(np.diag([1.0, 0.0]))
        assert not r.passed and not r.positive_stable

    def test_indefinite(self):
        r = fp_core.check_condition_a(np.diag([1.0, -1.0]))
        assert not r.cs_psd and not r.passed

    @given(st.integers(1, 4), seeds)
    def test_implies_positive_stable(self, d, seed):
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((d, d))
        W = rng.standard_normal((d, d))
        C = G @ np.diag(rng.integers(0, 2, d)) @ G.T + (W - W.T)
        if fp_core.check_condition_a(C).passed:
            assert fp_core.spectral_gap(C).mu > 0


class TestIndex:
    def test_identity(self):
        assert fp_core.hypocoercivity_index(np.eye(3)) == 0

    @pytest.mark.parametrize("a", [0.2, 0.25, 2.0])
    def test_kinetic(self, a):
        assert fp_core.hypocoercivity_index(fp_core.kinetic_drift(a)) == 1
        p = fp_core.kinetic_problem(a)
        assert fp_core.hypocoercivity_index_raw(p.Ctilde, p.Dtilde) == 1

    def test_chain(self):
        assert fp_core.hypocoercivity_index(CHAIN) == 2

    def test_chain_through_congruence(self, rng):
        G = rng.standard_normal((3, 3))
        K = G @ G.T + np.eye(3)
        half, half_inv = matlib.sqrtm_spd(K)
        Ct = half @ CHAIN @ half_inv
        Dt = half @ matlib.sym_part(CHAIN) @ half
        assert fp_core.hypocoercivity_index_raw(Ct, Dt) == 2
        assert fp_core.normalize(fp_core.FpProblem(Ct, 0.5 * (Dt + Dt.T))).m_hc == 2

    def test_infinite(self):
        assert fp_core.hypocoercivity_index(np.diag([1.0, 0.0])) == fp_core.INFINITE

    @given(st.integers(1, 4), seeds)
    def test_zero_iff_coercive(self, d, seed):
        C = random_condition_a(np.random.default_rng(seed), d)
        coercive = matlib.is_positive_definite(matlib.sym_part(C))
        assert (fp_core.hypocoercivity_index(C) == 0) == coercive

    @given(st.integers(2, 5), seeds)
    def test_bounded_by_dimension(self, d, seed):
        C = random_condition_a(np.random.default_rng(seed), d, rank=1)
        assert 1 <= fp_core.hypocoercivity_index(C) <= d - 1


class TestGap:
    def test_kinetic_a2(self):
        g = fp_core.spectral_gap(fp_core.kinetic_drift(2.0))
        assert g.mu == pytest.approx(0.5, abs=1e-14)
        assert not g.defective and g.max_jordan == 1

    def test_kinetic_critical(self):
        g = fp_core.spectral_gap(fp_core.kinetic_drift(0.25))
        assert g.mu == pytest.approx(0.5, abs=1e-7)
        assert g.defective and g.max_jordan == 2

    def test_identity(self):
        g = fp_core.spectral_gap(np.eye(2))
        assert g.mu == 1.0 and not g.defective and g.max_jordan == 1

    @pytest.mark.parametrize("a", [0.05, 0.2, 1.0, 3.0])
    def test_kinetic_formula(self, a):
        mu = (1 - math.sqrt(max(1 - 4 * a, 0.0))) / 2
        assert fp_core.spectral_gap(fp_core.kinetic_drift(a)).mu == pytest.approx(mu, abs=1e-13)

    def test_jordan_three(self):
        J = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]])
        g = fp_core.spectral_gap(J)
        assert g.defective and g.max_jordan == 3
