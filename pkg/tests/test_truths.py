import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nllvm.numerics import Density, GridFunction, NumericsError, integrate
from nllvm.truths import beta_to_j, catalog, check_assumption2, fd_log_deriv, get_truth, log_deriv

NAMES = [t.name for t in catalog()]


class TestCatalog:
    @pytest.mark.parametrize("name", NAMES)
    def test_unit_mass_and_nonnegative(self, name):
        t = get_truth(name)
        f = t.density()
        assert isinstance(f, Density)
        assert f.values.min() >= 0.0
        assert integrate(f.f) == pytest.approx(1.0, abs=1e-8)
        assert (f.lo, f.hi) == t.support

    @pytest.mark.parametrize("name", NAMES)
    def test_assumption2_holds(self, name):
        t = get_truth(name)
        ok, rep = check_assumption2(t.density(), *t.flat_interval)
        assert ok, rep
        assert rep["min_on_interval"] > 0

    @pytest.mark.parametrize("name", NAMES)
    def test_extension_matches_on_support(self, name):
        t = get_truth(name)
        if t.extension is None:
            pytest.skip("zero extension")
        x = np.linspace(*t.support, 101)[1:-1]
        np.testing.assert_allclose(t.extension(x), t.pdf(x), rtol=1e-12)

    def test_strictly_positive_floor(self):
        for t in catalog():
            if t.strictly_positive:
                assert t.min_on_support > 0
            else:
                assert t.min_on_support == 0.0

    def test_unknown_name(self):
        with pytest.raises(KeyError, match="unknown truth"):
            get_truth("nope")


class TestAssumption2:
    def test_uniform(self):
        ok, _ = check_assumption2(get_truth("uniform").density(), 0.0, 1.0)
        assert ok

    def test_truncnorm(self):
        ok, _ = check_assumption2(get_truth("truncnorm").density(), -1.0, 1.0)
        assert ok

    def test_dip_to_zero(self):
        x = np.linspace(0, 1, 1001)
        f = Density.normalized(GridFunction(0.0, 1.0, np.abs(x - 0.5)))
        ok, rep = check_assumption2(f, 0.25, 0.75)
        assert not ok
        assert rep["min_on_interval"] == 0.0

    def test_nonmonotone_tail(self):
        x = np.linspace(0, 1, 1001)
        v = 1.0 + 0.5 * np.sin(12 * np.pi * x)
        f = Density.normalized(GridFunction(0.0, 1.0, v))
        ok, rep = check_assumption2(f, 0.45, 0.55)
        assert not ok
        assert not (rep["nondecreasing_left"] and rep["nonincreasing_right"])

    def test_interval_outside_support(self):
        with pytest.raises(NumericsError):
            check_assumption2(get_truth("uniform").density(), -0.5, 0.5)


class TestLogDeriv:
    @pytest.mark.parametrize("j", [1, 2])
    def test_uniform_zero(self, j):
        assert log_deriv(get_truth("uniform"), j, 0.3) == 0.0

    def test_gaussian_score(self):
        assert log_deriv(get_truth("truncnorm"), 1, 0.7) == pytest.approx(-0.7, abs=1e-6)

    def test_bump_symmetric(self):
        assert log_deriv(get_truth("bump"), 1, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_boundary_rejected(self):
        with pytest.raises(NumericsError):
            log_deriv(get_truth("truncnorm"), 1, 2.0)

    def test_order_limit(self):
        with pytest.raises(ValueError):
            log_deriv(get_truth("twobump"), 3, 0.5)

    @settings(max_examples=40, deadline=None)
    @given(name=st.sampled_from(["truncnorm", "bump", "beta33"]), j=st.integers(1, 2),
           u=st.floats(0.2, 0.8))
    def test_finite_difference_agrees(self, name, j, u):
        t = get_truth(name)
        a, b = t.support
        x = a + u * (b - a)
        assert fd_log_deriv(t, j, x) == pytest.approx(log_deriv(t, j, x), abs=1e-4)


class TestBetaToJ:
    def test_values(self):
        assert [beta_to_j(b) for b in (1.0, 2.0, 2.5, 4.0, 4.1)] == [0, 0, 1, 1, 2]

    def test_positive(self):
        with pytest.raises(ValueError):
            beta_to_j(0.0)

    @settings(max_examples=50, deadline=None)
    @given(beta=st.floats(0.01, 40.0))
    def test_bracket(self, beta):
        j = beta_to_j(beta)
        assert 2 * j < beta <= 2 * j + 2 + 1e-12
