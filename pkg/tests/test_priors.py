"""Priors module tests: densities, samples, transforms, normalization."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from l96calib.dynamics import Params
from l96calib.priors import (
    ParamSpace,
    PriorSet,
    PriorSpec,
    default_priors,
    from_unconstrained,
    log_density,
    log_jacobian,
    sample,
    to_unconstrained,
)

TRUE = Params(10.0, 1.0, 10.0, 10.0)


class TestDensities:
    def test_normal_peak_value(self):
        spec = PriorSpec("normal", 10.0, 10.0)
        assert spec.log_density(10.0) == pytest.approx(-0.5 * math.log(20 * math.pi))

    def test_lognormal_at_exp_mu(self):
        spec = PriorSpec("lognormal", 2.0, 0.1)
        assert spec.log_density(math.e ** 2) == pytest.approx(
            -0.5 * math.log(0.2 * math.pi) - 2.0)

    def test_out_of_support(self):
        priors = default_priors()
        assert priors["c"].log_density(-1.0) == -math.inf
        assert priors["c"].log_density(0.0) == -math.inf
        assert log_density(priors, Params(10, 1, -1.0, 10)) == -math.inf

    def test_joint_is_sum_of_marginals(self):
        priors = default_priors()
        total = log_density(priors, TRUE)
        parts = sum(priors[n].log_density(getattr(TRUE, n)) for n in ("F", "h", "c", "b"))
        assert total == pytest.approx(parts)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            PriorSpec("uniform", 0, 1)
        with pytest.raises(ValueError):
            PriorSpec("normal", 0, 0.0)
        with pytest.raises(ValueError):
            PriorSet({"F": PriorSpec("normal", 0, 1)})


class TestSampling:
    def test_c_always_positive(self):
        rng = np.random.default_rng(0)
        priors = default_priors()
        cs = priors["c"].sample(rng, size=10_000)
        assert np.all(cs > 0)

    def test_monte_carlo_mean_of_F(self):
        rng = np.random.default_rng(1)
        draws = default_priors()["F"].sample(rng, size=100_000)
        assert abs(draws.mean() - 10.0) < 3 * math.sqrt(10.0 / 100_000)

    def test_fixed_seed_reproducible(self):
        priors = default_priors()
        a = sample(priors, np.random.default_rng(42))
        b = sample(priors, np.random.default_rng(42))
        assert a == b

    @pytest.mark.slow
    def test_kolmogorov_smirnov_against_analytic_cdf(self):
        # 1% critical value for n=1e5 is ~1.628/sqrt(n).
        n = 100_000
        crit = 1.628 / math.sqrt(n)
        rng = np.random.default_rng(5)
        priors = default_priors()
        for name, cdf in (
            ("F", stats.norm(10.0, math.sqrt(10.0)).cdf),
            ("h", stats.norm(0.0, 1.0).cdf),
            ("c", stats.lognorm(s=math.sqrt(0.1), scale=math.exp(2.0)).cdf),
            ("b", stats.norm(5.0, math.sqrt(10.0)).cdf),
        ):
            draws = priors[name].sample(rng, size=n)
            ks = stats.kstest(draws, cdf).statistic
            assert ks < crit, name


class TestNormalization:
    def test_marginals_integrate_to_one(self):
        for spec in default_priors().specs.values():
            s = math.sqrt(spec.var)
            if spec.kind == "normal":
                lo, hi = spec.mean - 12 * s, spec.mean + 12 * s
            else:
                lo, hi = math.exp(spec.mean - 12 * s), math.exp(spec.mean + 12 * s)
            total, _ = integrate.quad(lambda x: math.exp(spec.log_density(x)), lo, hi, limit=200)
            assert abs(total - 1.0) < 1e-6


class TestTransforms:
    def test_round_trip(self):
        u = to_unconstrained(TRUE)
        np.testing.assert_allclose(u, [10.0, 1.0, math.log(10.0), 10.0], rtol=1e-15)
        back = from_unconstrained(u)
        assert back.F == TRUE.F and back.h == TRUE.h and back.b == TRUE.b
        assert back.c == pytest.approx(TRUE.c, rel=1e-15)

    def test_fails_on_nonpositive_c(self):
        with pytest.raises(ValueError):
            to_unconstrained(Params(10, 1, -1.0, 10))

    def test_far_negative_u_still_positive_c(self):
        p = from_unconstrained(np.array([0.0, 0.0, -50.0, 0.0]))
        assert 0 < p.c == pytest.approx(math.exp(-50))

    def test_change_of_variables(self):
        # density in u-coordinates at log c == lognormal density at c, times c
        spec = default_priors()["c"]
        for c in (0.5, 7.4, 20.0):
            u = math.log(c)
            assert spec.log_density_unconstrained(u) == pytest.approx(
                spec.log_density(c) + u)

    def test_log_jacobian(self):
        u = to_unconstrained(TRUE)
        assert log_jacobian(u) == pytest.approx(math.log(10.0))


class TestParamSpace:
    def test_full_space_round_trip(self):
        space = ParamSpace(default_priors())
        u = space.to_unconstrained(TRUE)
        p = space.from_unconstrained(u)
        assert p.F == TRUE.F and p.c == pytest.approx(TRUE.c, rel=1e-15)

    def test_fast_subset_with_fixed_F(self):
        space = ParamSpace(default_priors(), names=("h", "c", "b"), fixed={"F": 10.0})
        assert space.dim == 3
        u = space.to_unconstrained(TRUE)
        assert u.shape == (3,)
        p = space.from_unconstrained(u)
        assert p.F == 10.0 and p.h == 1.0

    def test_uncovered_parameter_rejected(self):
        with pytest.raises(ValueError):
            ParamSpace(default_priors(), names=("h", "c"))

    def test_unconstrained_prior_consistency(self):
        # log p_u(u) = log p_theta(theta(u)) + sum of log-Jacobian terms
        space = ParamSpace(default_priors())
        rng = np.random.default_rng(8)
        for _ in range(10):
            u = space.sample_unconstrained(rng)
            lp_u = space.log_prior_unconstrained(u)
            lp_c = space.log_prior_constrained(u)
            assert lp_u == pytest.approx(lp_c + u[2], rel=1e-12)

    def test_vectorized_sampling_and_constrained(self):
        space = ParamSpace(default_priors())
        rng = np.random.default_rng(9)
        us = space.sample_unconstrained(rng, 1000)
        assert us.shape == (1000, 4)
        theta = space.constrained(us)
        assert np.all(theta[:, 2] > 0)
        np.testing.assert_allclose(theta[:, 2], np.exp(us[:, 2]), rtol=1e-15)
        np.testing.assert_array_equal(theta[:, 0], us[:, 0])

    def test_unconstrained_std(self):
        space = ParamSpace(default_priors())
        np.testing.assert_allclose(
            space.unconstrained_std(),
            [math.sqrt(10), 1.0, math.sqrt(0.1), math.sqrt(10)], rtol=1e-15)
