"""Limit laws, coefficient identities, rate fits and verification reports."""

import math

import jsonschema
import mpmath as mp
import numpy as np
import pytest
from scipy import integrate
from scipy.special import gamma

from imdlab import limits, model, phase
from imdlab.errors import NotAMaximizerError, UsageError
from imdlab.limits import LimitLaw
from imdlab.model import H_C, J_C, M_C, ModelParams

TRI = ModelParams(J_C, H_C)
QUARTIC = LimitLaw.quartic(model.LAMBDA_C_EXACT)


class TestLaws:
    @pytest.mark.parametrize("law", [LimitLaw.gaussian(0.7), QUARTIC])
    def test_median(self, law):
        assert law.cdf(0.0) == pytest.approx(0.5, abs=1e-15)

    def test_gaussian_quantile(self):
        assert LimitLaw.gaussian(1.0).cdf(1.959964) == pytest.approx(0.975, abs=1e-7)

    def test_quartic_normalization_closed_form(self):
        # int exp(-beta z^4) dz = 2 Gamma(5/4) beta^{-1/4}, cross-checked by quadrature
        beta = QUARTIC.beta
        total = 2 * integrate.quad(lambda s: math.exp(-beta * s**4), 0, np.inf)[0]
        assert 1 / QUARTIC.norm_const == pytest.approx(total, rel=1e-12)
        assert QUARTIC.norm_const == pytest.approx(beta**0.25 / (2 * gamma(1.25)), rel=1e-15)

    def test_quartic_mass(self):
        masses = [limits.quartic_mass(QUARTIC, R) for R in (0.5, 1.0, 2.0, 3.0)]
        assert all(a < b for a, b in zip(masses, masses[1:]))
        assert 1 - masses[-1] < 1e-10
        assert limits.quartic_mass(QUARTIC) == pytest.approx(1.0, abs=1e-12)

    def test_cutoff_tail_bound(self):
        z = QUARTIC.cutoff
        assert math.exp(-QUARTIC.beta * z**4) / (4 * QUARTIC.beta * z**3) <= limits.TAIL_TOL

    def test_quartic_cdf_against_mpmath(self):
        beta, c = mp.mpf(QUARTIC.beta), mp.mpf(QUARTIC.norm_const)
        zs = np.array([-2.0, -0.7, -0.1, 0.3, 1.1, 2.5])
        got = QUARTIC.cdf(zs)
        for z, g in zip(zs, got):
            ref = mp.mpf(1) / 2 + c * mp.quad(lambda s: mp.exp(-beta * s**4), [0, z])
            assert g == pytest.approx(float(ref), abs=1e-12)

    def test_cdf_monotone_and_bounded(self):
        zs = np.linspace(-5, 5, 301)
        for law in (LimitLaw.gaussian(2.0), QUARTIC):
            F = law.cdf(zs)
            assert np.all(np.diff(F) >= 0) and F[0] >= 0 and F[-1] <= 1

    def test_unsorted_input_order_preserved(self):
        zs = np.array([1.0, -1.0, 0.2, 0.0])
        assert np.allclose(QUARTIC.cdf(zs), [QUARTIC.cdf(z) for z in zs], atol=1e-14)

    def test_bad_law(self):
        with pytest.raises(UsageError):
            LimitLaw("CAUCHY", 1.0)
        with pytest.raises(UsageError):
            LimitLaw.gaussian(0.0)


class TestCoefficientChecks:
    def test_quartic_value(self):
        q = limits.quartic_coefficient_check(M_C, TRI)
        assert q == pytest.approx(0.5 + 17 * math.sqrt(2) / 48, abs=1e-6)
        assert q == pytest.approx(1.0008673, abs=1e-7)
        assert q == pytest.approx(-model.p_tilde_deriv(M_C, TRI, 4) / 24, abs=1e-6)

    def test_quartic_rejects_off_critical(self):
        with pytest.raises(UsageError):
            limits.quartic_coefficient_check(0.678, ModelParams(0.5, 0.0))

    def test_gaussian_off_critical(self):
        p = ModelParams(0.5, 0.0)
        pp = phase.classify(p)
        lam = pp.maximizers[0].lam
        assert limits.gaussian_coefficient_check(pp.m[0], p) == pytest.approx(1 / (2 * lam), abs=1e-9)

    def test_gaussian_both_branches(self):
        g = phase.critical_h(2.0)
        p = ModelParams(2.0, g)
        for mx in phase.classify(p).maximizers:
            # lambda_l = -1/p''(m_l) - 1/(2J)
            lam = -1 / model.p_tilde_deriv(mx.m, p, 2) - 1 / 4
            assert limits.gaussian_coefficient_check(mx.m, p) == pytest.approx(1 / (2 * lam), abs=1e-9)

    def test_gaussian_zero_coupling(self):
        p = ModelParams(0.0, 0.0)
        m0 = model.g_of(0.0)
        lam = model.lambda_variance(m0, p)
        assert limits.gaussian_coefficient_check(m0, p) == pytest.approx(1 / (2 * lam), abs=1e-9)

    def test_gaussian_rejects_non_fixed_point(self):
        with pytest.raises(UsageError):
            limits.gaussian_coefficient_check(0.3, ModelParams(0.5, 0.0))

    def test_gaussian_rejects_degenerate(self):
        with pytest.raises(NotAMaximizerError):
            limits.gaussian_coefficient_check(M_C, TRI)


class TestRateFit:
    def test_exact_power(self):
        f = limits.rate_fit([(N, N**-0.5) for N in (500, 1000, 2000, 4000, 8000)])
        assert f.slope == pytest.approx(-0.5, abs=1e-12)
        assert f.residual <= 1e-12
        assert f.scaled_ratio(0.5) == pytest.approx(1.0, abs=1e-12)

    def test_prefactor(self):
        f = limits.rate_fit([(N, 3 * N**-0.25) for N in (100, 200, 400, 800)])
        assert f.slope == pytest.approx(-0.25, abs=1e-12)
        assert f.intercept == pytest.approx(math.log(3), abs=1e-12)
        assert f.to_dict()["label"] == "empirical"

    def test_needs_four_positive_points(self):
        with pytest.raises(UsageError):
            limits.rate_fit([(1, 1.0), (2, 0.5), (3, 0.3)])
        with pytest.raises(UsageError):
            limits.rate_fit([(1, 1.0), (2, 0.5), (3, 0.3), (4, 0.0)])


N_SHORT = [500, 1000, 2000, 4000]


class TestReports:
    def test_clt_report(self):
        p = ModelParams(0.5, 0.0)
        r = limits.verify_clt(p, N_SHORT, with_stein=True)
        limits.validate_report(r)
        (study,) = r["studies"]
        assert study["law"]["kind"] == limits.GAUSSIAN
        assert study["law"]["variance"] == pytest.approx(model.lambda_variance(study["center"], p), rel=1e-15)
        assert study["scale_exponent"] == 0.5
        assert study["rate_fit"]["label"] == "empirical"
        assert len(r["stein"]) == len(N_SHORT)

    def test_clt_rejects_critical_input(self):
        with pytest.raises(UsageError):
            limits.verify_clt(TRI, N_SHORT)

    def test_critical_report(self):
        r = limits.verify_critical(N_SHORT)
        limits.validate_report(r)
        (study,) = r["studies"]
        assert study["law"]["kind"] == limits.QUARTIC
        assert study["law"]["lambda_c"] == pytest.approx(-model.p_tilde_deriv(M_C, TRI, 4), rel=1e-12)
        assert study["scale_exponent"] == 0.75

    def test_conditional_report(self):
        r = limits.verify_conditional(2.0, N_SHORT)
        limits.validate_report(r)
        assert [s["label"] for s in r["studies"]] == ["side_1", "side_2"]
        assert all(s["law"]["kind"] == limits.GAUSSIAN for s in r["studies"])
        m1, m2 = (s["center"] for s in r["studies"])
        assert r["xi"] == pytest.approx(0.5 * (m1 + m2))

    def test_schema_rejects_bad_report(self):
        r = limits.verify_clt(ModelParams(0.5, 0.0), N_SHORT)
        r["schema_version"] = "0.0"
        with pytest.raises(jsonschema.ValidationError):
            limits.validate_report(r)
