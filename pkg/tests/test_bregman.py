import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dncc.bregman import (
    FUNCTIONALS,
    NEG_LOG,
    SQUARED_NORM,
    X_LOG_X,
    DiscreteDistribution,
    bregman_divergence,
    bregman_information,
    itakura_saito_log_domain,
    jensen_gap,
)
from dncc.errors import DomainError

# 40-digit mpmath evaluations, frozen
D_HALF_QUARTER = 0.30685281944005469
INFO_HALF_QUARTER = 0.05889151782819173


class TestDivergence:
    def test_zero_at_same_point(self):
        assert bregman_divergence(NEG_LOG, 0.3, 0.3) == 0.0

    def test_squared_norm_is_squared_distance(self):
        assert bregman_divergence(SQUARED_NORM, [1.0, 2.0], [0.0, 0.0]) == 5.0

    def test_neg_log_worked_value(self):
        assert abs(bregman_divergence(NEG_LOG, 0.5, 0.25) - D_HALF_QUARTER) < 1e-15

    def test_x_log_x_is_kl_on_simplex(self):
        p, q = np.array([0.2, 0.8]), np.array([0.5, 0.5])
        kl = float(np.sum(p * np.log(p / q)))
        assert abs(bregman_divergence(X_LOG_X, p, q) - kl) < 1e-15

    def test_domain_error(self):
        with pytest.raises(DomainError):
            bregman_divergence(NEG_LOG, -0.1, 0.5)
        with pytest.raises(DomainError):
            bregman_divergence(X_LOG_X, 0.5, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.sampled_from(sorted(FUNCTIONALS)),
        st.lists(st.floats(1e-3, 10.0), min_size=3, max_size=3),
        st.lists(st.floats(1e-3, 10.0), min_size=3, max_size=3),
    )
    def test_non_negative(self, name, a, b):
        assert bregman_divergence(FUNCTIONALS[name], a, b) >= -1e-12


class TestInformation:
    @pytest.mark.parametrize("phi", [NEG_LOG, SQUARED_NORM, X_LOG_X])
    def test_single_point_is_zero(self, phi):
        d = DiscreteDistribution([[0.4, 0.6]], [1.0])
        assert bregman_information(phi, d) == 0.0
        assert jensen_gap(phi, d) == 0.0

    def test_squared_norm_is_variance(self):
        d = DiscreteDistribution.uniform([0.0, 2.0])
        assert bregman_information(SQUARED_NORM, d) == 1.0
        assert jensen_gap(SQUARED_NORM, d) == 1.0

    def test_neg_log_worked_value(self):
        d = DiscreteDistribution.uniform([0.5, 0.25])
        assert abs(bregman_information(NEG_LOG, d) - INFO_HALF_QUARTER) < 1e-15
        assert abs(jensen_gap(NEG_LOG, d) - INFO_HALF_QUARTER) < 1e-15

    def test_boundary_mean_rejected(self):
        d = DiscreteDistribution.uniform([[0.0, 1.0], [0.0, 1.0]])
        with pytest.raises(DomainError):
            bregman_information(X_LOG_X, d)

    def test_point_outside_domain_named(self):
        d = DiscreteDistribution.uniform([0.5, -0.5, 2.0])
        with pytest.raises(DomainError) as err:
            jensen_gap(NEG_LOG, d)
        assert err.value.index == 1

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            DiscreteDistribution([1.0, 2.0], [0.6, 0.6])
        with pytest.raises(ValueError):
            DiscreteDistribution([1.0, 2.0], [1.5, -0.5])

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from(sorted(FUNCTIONALS)), st.integers(0, 2**32 - 1))
    def test_jensen_gap_equals_information(self, name, seed):
        rng = np.random.default_rng(seed)
        n, d = rng.integers(1, 8), rng.integers(1, 5)
        pts = rng.uniform(0.01, 1.0, size=(n, d))
        w = rng.dirichlet(np.ones(n))
        w /= w.sum()
        dist = DiscreteDistribution(pts, w)
        phi = FUNCTIONALS[name]
        assert abs(jensen_gap(phi, dist) - bregman_information(phi, dist)) < 1e-12


class TestLogDomain:
    def test_equal_logs(self):
        assert itakura_saito_log_domain(-1.3, -1.3) == 0.0

    def test_matches_linear_form(self):
        v = itakura_saito_log_domain(math.log(0.5), math.log(0.25))
        assert abs(v - D_HALF_QUARTER) < 1e-15

    def test_tiny_probability_is_finite(self):
        # oracle: 698 + exp(-699), which rounds to 698 in float64
        v = itakura_saito_log_domain(-700.0, -1.0)
        assert np.isfinite(v) and v == 698.0

    def test_vectorised(self):
        lp = np.log([0.5, 0.25])
        out = itakura_saito_log_domain(lp, math.log(0.375))
        np.testing.assert_allclose(out, [0.04565126088155241, 0.07213177477483105], rtol=0, atol=1e-15)
