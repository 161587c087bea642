"""Closed forms, derivatives and kernel moments of the mean-field model."""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as o
from imdlab import model
from imdlab.errors import DomainError, NotAMaximizerError, UsageError
from imdlab.model import H_C, J_C, M_C, ModelParams

TRI = ModelParams(J_C, H_C)
OFF = ModelParams(0.5, 0.0)
SQ2 = math.sqrt(2.0)


def test_tricritical_constants_match_high_precision():
    assert J_C == pytest.approx(float(o.MP_JC), abs=1e-15)
    assert J_C == pytest.approx(1 / (4 * (3 - 2 * SQ2)), abs=1e-12)
    assert H_C == pytest.approx(float(o.MP_HC), abs=1e-15)
    assert M_C == pytest.approx(float(o.MP_MC), abs=1e-15)


def test_model_params_validation():
    with pytest.raises(DomainError):
        ModelParams(-0.1, 0.0)
    with pytest.raises(DomainError):
        ModelParams(1.0, math.inf)
    p = ModelParams(1.5, 0.2)
    assert p.a == 1.5
    assert p.b(100) == pytest.approx(0.5 * math.log(100) + 0.2 - 1.5)


class TestG:
    def test_fixed_point_at_tricritical(self):
        assert model.g_of(model.tau(M_C, TRI)) == pytest.approx(M_C, abs=1e-15)

    def test_value_at_zero(self):
        g0 = model.g_of(0.0)
        assert g0 == pytest.approx(0.5 * (math.sqrt(5) - 1), abs=1e-15)
        assert g0**2 / (1 - g0) == pytest.approx(1.0, abs=1e-14)

    def test_monotone_decay_to_zero(self):
        xs = np.linspace(-40, 0, 200)
        g = model.g_of(xs)
        assert np.all(np.diff(g) > 0)
        assert g[0] < 1e-17

    def test_vectorized_matches_scalar(self):
        xs = np.array([-3.0, -0.1, 0.0, 0.2, 5.0])
        assert np.allclose(model.g_of(xs), [model.g_of(x) for x in xs], rtol=0, atol=0)

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError):
            model.g_of(math.nan)

    def test_typo_variant_fails_fixed_point(self):
        # the 2e^{2x} variant does not satisfy m_c = g(tau(m_c))
        x = float(model.tau(M_C, TRI))
        e = math.exp(2 * x)
        variant = 0.5 * (math.sqrt(e * e + 2 * e) - e)
        assert abs(variant - M_C) > 1e-2

    @given(st.floats(-30, 30))
    @settings(max_examples=200, deadline=None)
    def test_inverse_identity(self, x):
        g = model.g_of(x)
        assert 0 < g <= 1 and model.one_minus_g(x) > 0
        # g^2 / (1 - g) = e^{2x}, compared in log space
        lhs = 2 * math.log(g) - math.log(model.one_minus_g(x))
        assert lhs == pytest.approx(2 * x, abs=1e-12 * max(1.0, abs(x)))

    @given(st.floats(-20, 20))
    @settings(max_examples=100, deadline=None)
    def test_matches_mpmath(self, x):
        assert model.g_of(x) == pytest.approx(float(o.mp_g(x)), rel=1e-14)

    def test_one_minus_g_large_argument(self):
        x = 30.0
        assert model.one_minus_g(x) == pytest.approx(float(1 - o.mp_g(x)), rel=1e-12)


class TestGPrime:
    @pytest.mark.parametrize("x", [float(model.tau(M_C, TRI)), 0.0, -2.0, 3.0])
    def test_finite_difference(self, x):
        h = 1e-6
        fd = (model.g_of(x + h) - model.g_of(x - h)) / (2 * h)
        assert model.g_prime(x) == pytest.approx(fd, abs=1e-8)

    def test_value_at_tricritical(self):
        x = model.tau(M_C, TRI)
        assert model.g_prime(x) == pytest.approx(2 * M_C * (1 - M_C) / (2 - M_C), abs=1e-15)
        assert model.g_prime(x) == pytest.approx(0.3431458, abs=1e-7)

    def test_value_at_zero(self):
        assert model.g_prime(0.0) == pytest.approx(0.3416408, abs=1e-7)

    def test_positive(self):
        assert np.all(model.g_prime(np.linspace(-30, 30, 1001)) > 0)


class TestTau:
    @pytest.mark.parametrize("J,h", [(0.0, 0.3), (2.0, -1.0), (0.7, 0.0)])
    def test_half(self, J, h):
        assert model.tau(0.5, ModelParams(J, h)) == h

    def test_tricritical(self):
        assert model.tau(M_C, TRI) == pytest.approx(0.5 * math.log(2 * SQ2 - 2), abs=1e-15)
        assert model.tau(M_C, TRI) == pytest.approx(-0.0941132, abs=1e-7)

    def test_zero(self):
        assert model.tau(0.0, ModelParams(1.0, 0.0)) == -1.0


class TestPTilde:
    def test_finite_on_grid(self):
        v = model.p_tilde(np.linspace(0, 1, 1001)[1:-1], OFF)
        assert np.all(np.isfinite(v))
        assert np.max(np.abs(np.diff(v))) < 1e-2

    def test_matches_mpmath(self):
        for m in (0.1, 0.5, 0.9):
            assert model.p_tilde(m, OFF) == pytest.approx(float(o.mp_p_tilde(m, 0.5, 0.0)), abs=1e-14)

    def test_tricritical_flatness(self):
        assert abs(model.p_tilde_deriv(M_C, TRI, 1)) < 1e-15
        assert abs(model.p_tilde_deriv(M_C, TRI, 2)) < 1e-14
        assert abs(model.p_tilde_deriv(M_C, TRI, 3)) < 1e-6
        assert model.p_tilde_deriv(M_C, TRI, 4) < 0

    def test_fourth_derivative_is_minus_lambda_c(self):
        exact = -float(mp.diff(lambda x: o.mp_p_tilde(x, o.MP_JC, o.MP_HC), o.MP_MC, 4))
        assert model.tricritical_point().lambda_c == pytest.approx(exact, abs=1e-6)
        assert model.LAMBDA_C_EXACT == pytest.approx(exact, abs=1e-12)
        assert model.LAMBDA_C_EXACT / 24 == pytest.approx(0.5 + 17 * SQ2 / 48, abs=1e-15)

    def test_first_derivative_vs_finite_difference(self):
        grid = np.linspace(0.05, 0.95, 37)
        fd = model.richardson(lambda x: model.p_tilde(x, OFF), grid, 1, h0=1e-5)
        assert np.max(np.abs(model.p_tilde_deriv(grid, OFF, 1) - fd)) <= 1e-7

    @pytest.mark.parametrize("order", [1, 2, 3, 4])
    def test_derivatives_match_mpmath(self, order):
        for m in (0.3, 0.7):
            ref = float(mp.diff(lambda x: o.mp_p_tilde(x, 0.5, 0.0), m, order))
            assert model.p_tilde_deriv(m, OFF, order) == pytest.approx(ref, abs=1e-6)

    def test_bad_order(self):
        with pytest.raises(UsageError):
            model.p_tilde_deriv(0.5, OFF, 5)

    def test_second_derivative_negative_at_maximizer(self):
        m0 = float(o.mp_root(lambda m: m - o.mp_g(o.mp_tau(m, 0.5, 0.0)), 0.5, 0.8))
        assert model.p_tilde_deriv(m0, OFF, 2) < 0

    def test_sup_at_fixed_point(self):
        grid = np.linspace(1e-4, 1 - 1e-4, 10001)
        i = int(np.argmax(model.p_tilde(grid, OFF)))
        m0 = float(o.mp_root(lambda m: m - o.mp_g(o.mp_tau(m, 0.5, 0.0)), 0.5, 0.8))
        assert abs(grid[i] - m0) < 2e-4


class TestResidual:
    def test_tricritical_root(self):
        assert abs(model.fixed_point_residual(M_C, TRI)) <= 1e-12

    def test_at_zero_negative(self):
        p = ModelParams(1.3, -0.2)
        assert model.fixed_point_residual(0.0, p) == -model.g_of(model.tau(0.0, p))

    def test_zero_coupling_root(self):
        r = float(o.mp_root(lambda m: m - o.mp_g(0), 0.1, 0.9))
        assert abs(model.fixed_point_residual(r, ModelParams(0.0, 0.0))) < 1e-15
        assert r == pytest.approx(0.5 * (math.sqrt(5) - 1), abs=1e-15)

    def test_hardcore_balance_at_tricritical(self):
        e2 = math.exp(2 * model.tau(M_C, TRI))
        assert abs(M_C**2 - (1 - M_C) * e2) <= 1e-12


class TestL:
    def test_vanish_at_one(self):
        assert model.L1(1.0, OFF) == 0
        assert model.L2(1.0, OFF) == 0

    def test_L1_zero_at_tricritical(self):
        assert abs(model.L1(M_C, TRI)) <= 1e-12
        assert 6 - 4 * SQ2 == pytest.approx(M_C**2, abs=1e-15)

    @pytest.mark.parametrize("J,h", [(0.5, 0.0), (2.0, -0.4), (0.1, 1.5)])
    def test_match_mpmath(self, J, h):
        for m in (0.05, 0.4, 0.93):
            assert model.L1(m, ModelParams(J, h)) == pytest.approx(float(o.mp_L1(m, J, h)), abs=1e-14)
            assert model.L2(m, ModelParams(J, h)) == pytest.approx(float(o.mp_L2(m, J, h)), abs=1e-14)

    def test_large_field_no_overflow(self):
        p = ModelParams(3.0, 400.0)
        assert np.isfinite(model.L1(0.5, p)) and np.isfinite(model.L1_prime(0.5, p))
        assert model.L1(0.5, p) == pytest.approx(float(o.mp_L1(0.5, 3.0, 400.0)), rel=1e-12)

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_derivatives_match_mpmath(self, order):
        for m in (0.3, 0.6):
            ref = float(mp.diff(lambda x: o.mp_L1(x, 1.2, -0.3), m, order))
            assert model.L1_deriv(m, ModelParams(1.2, -0.3), order) == pytest.approx(ref, abs=1e-7)

    def test_third_derivative_at_tricritical(self):
        ref = mp.diff(lambda x: o.mp_L1(x, o.MP_JC, o.MP_HC), o.MP_MC, 3)
        got = model.L1_deriv(M_C, TRI, 3)
        assert got == pytest.approx(float(ref), abs=1e-7)
        # the closed form 6 + 17 sqrt2 / 4 is L1''' / L2 at m_c, not L1''' itself
        assert got / model.L2(M_C, TRI) == pytest.approx(6 + 17 * SQ2 / 4, abs=1e-6)
        assert abs(got - model.L1_THIRD_AT_MC) > 1.0


class TestUk:
    def test_reduces_to_L(self):
        grid = np.linspace(0.01, 0.99, 99)
        for p in (OFF, TRI, ModelParams(2.0, -0.41)):
            assert np.max(np.abs(model.U_k(grid, 0.0, 1, p) - model.L1(grid, p))) <= 1e-14
            assert np.max(np.abs(model.U_k(grid, 0.0, 2, p) - model.L2(grid, p))) <= 1e-14

    def test_first_term_vanishes_at_zero(self):
        p = ModelParams(1.0, 0.3)
        t = 0.05
        E = math.exp(2 * model.tau(0.0, p) + 4 * p.J * t)
        c = 1 - t
        second = (-2.0) / (1 - t) * c * E / (c + E)
        assert model.U_k(0.0, t, 1, p) == pytest.approx(second, rel=1e-14)

    def test_bad_arguments(self):
        with pytest.raises(UsageError):
            model.U_k(0.5, 0.1, 3, OFF)
        with pytest.raises(UsageError):
            model.U_k(0.5, 1.0, 1, OFF)


class TestLambda:
    def test_zero_coupling(self):
        f = model.lambda_forms(model.g_of(0.0), ModelParams(0.0, 0.0))
        assert f["stable"] == pytest.approx(0.3416408, abs=1e-7)
        assert math.isnan(f["definitional"])
        assert f["explicit"] == pytest.approx(f["stable"], rel=1e-12)

    @pytest.mark.parametrize("J,h", [(0.5, 0.0), (1.0, 0.3), (2.5, 1.0)])
    def test_forms_agree(self, J, h):
        p = ModelParams(J, h)
        m0 = float(o.mp_root(lambda m: m - o.mp_g(o.mp_tau(m, J, h)), 0.5, 0.99))
        f = model.lambda_forms(m0, p)
        assert f["definitional"] == pytest.approx(f["stable"], rel=1e-9)
        assert f["explicit"] == pytest.approx(f["stable"], rel=1e-9)
        assert f["stable"] > 0
        # 2 L1' / (2! L2) = 1 / (2 lambda)
        assert 2 * model.L1_prime(m0, p) / (2 * model.L2(m0, p)) == pytest.approx(1 / (2 * f["stable"]), abs=1e-9)

    def test_not_a_maximizer(self):
        with pytest.raises(NotAMaximizerError):
            model.lambda_forms(0.5, ModelParams(4.0, -1.0))
