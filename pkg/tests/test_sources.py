import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxent_laplace.errors import NegativeSample, TooFewSamples
from maxent_laplace.problem import QuadratureSpec, validate_problem
from maxent_laplace.quadrature import integrate
from maxent_laplace.sources import (AlphaScheme, Exponential, Gamma, LogNormal, Mixture,
                                    empirical_moments, empirical_problem, laplace_at,
                                    make_problem)

LAWS = [Exponential(1.0), Exponential(3.5), Gamma(2.0, 1.0), Gamma(1.5, 2.0),
        LogNormal(0.0, 1.0), Mixture((0.3, 0.7), (Exponential(1.0), Gamma(2.0, 1.0)))]


class TestLaplace:
    def test_exponential(self):
        assert laplace_at(Exponential(2.0), 0.5) == pytest.approx(0.8, rel=1e-15)

    def test_gamma_prefix(self):
        p = make_problem(Gamma(2.0, 1.0), AlphaScheme.harmonic(3))
        np.testing.assert_allclose(p.mus, [0.25, 4 / 9, 9 / 16], rtol=1e-15)

    def test_lognormal_against_reference(self):
        # 30-digit mpmath quadrature of E[exp(-alpha S)] for S ~ LogNormal(0, 1)
        refs = {1.0: 0.3817564647554833369, 0.5: 0.56170741021863717566, 0.25: 0.71929206296680513166}
        law = LogNormal(0.0, 1.0)
        for a, ref in refs.items():
            assert laplace_at(law, a) == pytest.approx(ref, rel=1e-10)

    def test_mixture_is_linear(self):
        m = Mixture((0.25, 0.75), (Exponential(1.0), Gamma(3.0, 2.0)))
        a = 0.4
        assert m.laplace(a) == pytest.approx(0.25 / 1.4 + 0.75 * (2 / 2.4) ** 3, rel=1e-15)

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            laplace_at(Exponential(1.0), 0.0)

    @pytest.mark.parametrize("law", LAWS, ids=lambda l: type(l).__name__)
    def test_transform_equals_y_moment_of_pdf(self, law):
        for a in (1.0, 0.5, 0.2):
            value, _ = integrate(lambda y: y ** a * law.pdf_y(y))
            assert value == pytest.approx(laplace_at(law, a), rel=1e-9)


class TestDensities:
    @pytest.mark.parametrize("law", LAWS, ids=lambda l: type(l).__name__)
    def test_pdf_y_is_normalised(self, law):
        value, _ = integrate(law.pdf_y)
        assert value == pytest.approx(1.0, rel=1e-10)

    def test_gamma21_image_is_minus_log(self):
        y = np.array([1e-8, 0.2, 0.9, 1.0])
        np.testing.assert_allclose(Gamma(2.0, 1.0).pdf_y(y), -np.log(y), rtol=1e-14, atol=1e-16)

    def test_shape_below_one_is_finite_at_y_one(self):
        # f_S(0) = inf maps to y = 1; y-floats resolve that corner only to ~eps**shape
        law = Gamma(0.7, 2.0)
        assert np.isfinite(law.pdf_y(np.array([1.0]))[0])
        value, _ = integrate(law.pdf_y, QuadratureSpec(abs_tol=1e-8, rel_tol=1e-8))
        assert value == pytest.approx(1.0, abs=1e-8)

    def test_unit_exponential_image_is_uniform(self):
        np.testing.assert_allclose(Exponential(1.0).pdf_y(np.linspace(0.01, 1, 7)), 1.0, rtol=1e-14)

    def test_pdf_s_zero_on_negative_axis(self):
        assert Gamma(2.0, 1.0).pdf_s(np.array([-1.0]))[0] == 0.0

    @pytest.mark.parametrize("bad", [lambda: Exponential(0.0), lambda: Gamma(-1.0, 1.0),
                                     lambda: LogNormal(0.0, 0.0),
                                     lambda: Mixture((0.5, 0.6), (Exponential(1.0), Exponential(2.0))),
                                     lambda: Mixture((1.0,), (Exponential(1.0), Exponential(2.0)))])
    def test_invalid_parameters(self, bad):
        with pytest.raises(ValueError):
            bad()


class TestAlphaScheme:
    def test_harmonic(self):
        np.testing.assert_allclose(AlphaScheme.harmonic(4).alphas(), [1, 1 / 2, 1 / 3, 1 / 4])

    def test_scaled(self):
        np.testing.assert_allclose(AlphaScheme.scaled(2.0, 3).alphas(), [2, 1, 2 / 3])

    def test_explicit_prefix(self):
        s = AlphaScheme.explicit([1.5, 0.7, 0.1])
        np.testing.assert_array_equal(s.alphas(2), [1.5, 0.7])
        assert s.with_count(2).count == 2

    def test_nested_prefixes(self):
        s = AlphaScheme.harmonic(8)
        for k in (2, 4, 6):
            np.testing.assert_array_equal(s.with_count(k).alphas(), s.alphas()[:k])

    @pytest.mark.parametrize("make", [lambda: AlphaScheme.explicit([0.5, 1.0]),
                                      lambda: AlphaScheme.explicit([1.0, -0.5]),
                                      lambda: AlphaScheme.harmonic(0),
                                      lambda: AlphaScheme.scaled(0.0, 3),
                                      lambda: AlphaScheme("fibonacci", 3)])
    def test_invalid(self, make):
        with pytest.raises(ValueError):
            make()

    def test_too_many_requested(self):
        with pytest.raises(ValueError):
            AlphaScheme.harmonic(3).alphas(4)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, 5.0), st.integers(1, 12))
    def test_generated_sequences_are_valid_moment_problems(self, c, k):
        p = make_problem(Exponential(1.3), AlphaScheme.scaled(c, k))
        assert validate_problem(p).ok


class TestEmpirical:
    def test_monte_carlo_oracle(self):
        # mean of exp(-alpha S) over n draws is within a few standard errors of L(alpha)
        law = Gamma(2.0, 1.0)
        n = 200_000
        s = law.sample(n, np.random.default_rng(11))
        a = AlphaScheme.harmonic(4).alphas()
        m = empirical_moments(s, a)
        exact = np.array([law.laplace(x) for x in a])
        sd = np.sqrt(np.array([law.laplace(2 * x) for x in a]) - exact ** 2) / np.sqrt(n)
        assert np.all(np.abs(m - exact) < 5 * sd)

    def test_chunking_does_not_change_the_mean(self):
        s = np.random.default_rng(1).exponential(size=150_001)
        a = np.array([1.0, 0.5])
        direct = np.exp(-np.multiply.outer(s, a)).mean(axis=0)
        np.testing.assert_allclose(empirical_moments(s, a), direct, rtol=1e-13)

    def test_sampling_is_seeded(self):
        law = Mixture((0.4, 0.6), (Exponential(2.0), LogNormal(0.0, 0.5)))
        a = law.sample(1000, np.random.default_rng(5))
        b = law.sample(1000, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            empirical_problem(np.ones(99), AlphaScheme.harmonic(2))

    def test_negative_sample(self):
        s = np.ones(200)
        s[17] = -0.1
        with pytest.raises(NegativeSample, match="17"):
            empirical_problem(s, AlphaScheme.harmonic(2))

    def test_degenerate_samples_are_left_to_validation(self):
        p = empirical_problem(np.zeros(500), AlphaScheme.harmonic(3))
        assert "mu_in_unit_interval" in validate_problem(p).invariants()


class TestReferenceExamples:
    def test_mixture_of_exponentials(self):
        m = Mixture((0.5, 0.5), (Exponential(1.0), Exponential(2.0)))
        assert laplace_at(m, 1.0) == pytest.approx(7 / 12, rel=1e-15)

    def test_repeated_sample(self):
        p = empirical_problem(np.full(100, np.log(2.0)), AlphaScheme.harmonic(1))
        assert p.mus[0] == pytest.approx(0.5, rel=1e-15)

    def test_empirical_route_agrees_with_transform(self):
        for law in (Exponential(1.0), Gamma(2.0, 1.0), LogNormal(0.0, 0.5)):
            n = 1_000_000
            s = law.sample(n, np.random.default_rng(7))
            a = AlphaScheme.harmonic(4).alphas()
            exact = make_problem(law, AlphaScheme.harmonic(4)).mus
            sd = np.sqrt(np.array([laplace_at(law, 2 * x) for x in a]) - exact ** 2) / np.sqrt(n)
            assert np.all(np.abs(empirical_moments(s, a) - exact) < 5 * sd)
