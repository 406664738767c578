import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nllvm.approx import (
    NUMERICAL_FLOOR,
    CorrectionSequence,
    OrderFit,
    PositivityError,
    binomial_coefficients,
    build_fj_binomial,
    build_fj_iterative,
    convolve_onto,
    extend_f0,
    fit_order,
    fj_on_support,
    interior_interval,
    kl_order_check,
    normalize_to_hbeta,
    normalizer_check,
    order_check_sup,
    padded_grid,
    rho_hat,
    sublevel_integral,
    tail_integrals,
    tail_order_check,
)
from nllvm.numerics import GridFunction, NumericsError, integrate, sup_diff
from nllvm.truths import catalog, get_truth

NAMES = [t.name for t in catalog()]


@pytest.fixture(scope="module")
def tn():
    return get_truth("truncnorm").density()


class TestCoefficients:
    def test_values(self):
        assert binomial_coefficients(0) == [1]
        assert binomial_coefficients(1) == [2, -1]
        assert binomial_coefficients(2) == [3, -3, 1]
        assert binomial_coefficients(3) == [4, -6, 4, -1]

    @pytest.mark.parametrize("j", range(11))
    def test_sum_is_one(self, j):
        assert sum(binomial_coefficients(j)) == 1

    def test_negative(self):
        with pytest.raises(ValueError):
            binomial_coefficients(-1)


class TestConstruction:
    def test_j0_is_f0(self, tn):
        fj = build_fj_iterative(tn, 2.0**-5, 0)
        assert fj_on_support(fj, tn, 0).values == pytest.approx(tn.values, abs=1e-15)

    def test_j1_closed_form(self, tn):
        s = 2.0**-5
        grid = padded_grid(tn, s, 1)
        base = extend_f0(tn, grid)
        expect = 2.0 * base.values - convolve_onto(base, s, grid).values
        fj = build_fj_iterative(tn, s, 1)
        assert np.max(np.abs(fj.values - expect)) <= 1e-12

    def test_j2_equivalence(self, tn):
        s = 2.0**-5
        assert sup_diff(build_fj_iterative(tn, s, 2), build_fj_binomial(tn, s, 2)) <= 1e-10

    @settings(max_examples=12, deadline=None)
    @given(name=st.sampled_from(NAMES), j=st.integers(1, 4), k=st.integers(4, 6))
    def test_equivalence_property(self, name, j, k):
        t = get_truth(name)
        f0 = t.density()
        s = 2.0**-k
        assert sup_diff(build_fj_iterative(f0, s, j), build_fj_binomial(f0, s, j)) <= 1e-10

    def test_analytic_extension_equivalence(self, tn):
        ext = get_truth("truncnorm").extension
        s = 2.0**-4
        # the extended f0 is cut at the padded ends, so compare on the support
        a = build_fj_iterative(tn, s, 3, extension=ext).restrict(tn.lo, tn.hi)
        b = build_fj_binomial(tn, s, 3, extension=ext).restrict(tn.lo, tn.hi)
        assert sup_diff(a, b) <= 1e-10

    def test_under_resolved(self, tn):
        with pytest.raises(NumericsError):
            build_fj_binomial(tn, 1e-5, 1)

    def test_bad_j(self, tn):
        with pytest.raises(ValueError):
            build_fj_binomial(tn, 0.1, -1)

    def test_unit_mass_over_line(self, tn):
        fj = build_fj_binomial(tn, 2.0**-4, 2)
        assert integrate(fj) == pytest.approx(1.0, abs=1e-9)


class TestNormalize:
    def test_j0(self, tn):
        fj = build_fj_binomial(tn, 2.0**-4, 0)
        h, z = normalize_to_hbeta(fj, tn, 0)
        assert z == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(h.values - tn.values)) <= 1e-10

    def test_truncnorm_normalizer(self, tn):
        s = 2.0**-6
        ext = get_truth("truncnorm").extension
        seq = CorrectionSequence.build(tn, s, 1, extension=ext)
        assert 1.0 - 10 * s * s <= seq.normalizer <= 1.0 + 10 * s * s
        assert integrate(seq.hbeta.f) == pytest.approx(1.0, abs=1e-12)

    def test_bump_positivity_failure(self):
        b = get_truth("bump").density()
        with pytest.raises(PositivityError, match="sigma too large for positivity"):
            normalize_to_hbeta(build_fj_binomial(b, 0.4, 1), b, 1)

    def test_unknown_method(self, tn):
        with pytest.raises(ValueError):
            CorrectionSequence.build(tn, 0.1, 1, method="other")


class TestPositivity:
    @pytest.mark.parametrize("name", NAMES)
    @pytest.mark.parametrize("k", [4, 5, 6])
    def test_smoothing_lower_bound(self, name, k):
        t = get_truth(name)
        f0 = t.density()
        s = 2.0**-k
        g = convolve_onto(extend_f0(f0, padded_grid(f0, s, 0)), s, f0.grid)
        m = f0.values > 0
        assert np.min(g.values[m] / f0.values[m]) >= 0.3

    @pytest.mark.parametrize("name", ["truncnorm", "twobump", "uniform"])
    @pytest.mark.parametrize("j", [1, 2])
    def test_fj_lower_bound(self, name, j):
        t = get_truth(name)
        f0 = t.density()
        s = 2.0**-5
        rho = rho_hat(f0, s, t.extension)
        fj = fj_on_support(build_fj_binomial(f0, s, j, extension=t.extension), f0, j, True)
        m = f0.values > 0
        assert np.all(fj.values[m] - (1.0 - j * rho) * f0.values[m] >= -1e-12)

    def test_normalizer_report(self, tn):
        rep = normalizer_check(tn, 1, extension=get_truth("truncnorm").extension)
        assert rep.threshold is not None
        assert all(rep.positive)
        assert rep.fit.slope >= 2.0 - 0.5

    def test_bump_never_positive(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = normalizer_check(get_truth("bump").density(), 1)
        assert rep.threshold is None
        assert rep.fit is None


class TestOrderFit:
    def test_exact_power(self):
        s = [0.1, 0.05, 0.025]
        fit = fit_order(s, [3.0 * x**2 for x in s])
        assert fit.slope == pytest.approx(2.0, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
        assert not fit.floor_limited

    def test_floor_drop_warns(self):
        with pytest.warns(UserWarning, match="numerical floor"):
            fit = fit_order([0.1, 0.05, 0.025], [1e-4, 1e-8, NUMERICAL_FLOOR / 10])
        assert fit.floor_limited
        assert fit.dropped == (0.025,)

    def test_invariants(self):
        with pytest.raises(ValueError):
            OrderFit((0.1, 0.2), (1.0, 1.0), 0.0, 0.0)
        with pytest.raises(ValueError):
            OrderFit((0.2, 0.1), (1.0, 0.0), 0.0, 0.0)

    @settings(max_examples=30, deadline=None)
    @given(p=st.floats(0.5, 6.0), c=st.floats(0.1, 10.0))
    def test_recovers_power(self, p, c):
        s = [2.0**-k for k in range(2, 6)]
        fit = fit_order(s, [c * x**p for x in s], floor=1e-300)
        assert fit.slope == pytest.approx(p, abs=1e-9)

    def test_interior_interval(self, tn):
        lo, hi = interior_interval(tn, [0.125], 0)
        assert lo == pytest.approx(-1.0) and hi == pytest.approx(1.0)
        with pytest.raises(NumericsError, match="no interior"):
            interior_interval(tn, [0.5], 0)


class TestOrders:
    def test_sup_orders(self, tn):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            f0 = order_check_sup(tn, 0)
            f1 = order_check_sup(tn, 1)
        assert f0.slope == pytest.approx(2.0, abs=0.2)
        assert f1.slope == pytest.approx(4.0, abs=0.4)
        assert f1.slope - f0.slope >= 1.5

    def test_flat_relative_error_on_plateau(self):
        f0 = get_truth("uniform").density()
        s = 2.0**-5
        g = convolve_onto(build_fj_binomial(f0, s, 1), s, f0.grid)
        m = (f0.x >= 0.4) & (f0.x <= 0.6)
        rel = g.values[m] / f0.values[m] - 1.0
        assert np.max(np.abs(rel)) <= 1e-12

    def test_kl_order(self, tn):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = kl_order_check(tn, 0)
        assert fit.slope == pytest.approx(4.0, abs=0.5)
        assert min(fit.errors) >= -1e-9

    def test_target_validation(self, tn):
        with pytest.raises(ValueError):
            order_check_sup(tn, 0, target="other")
        with pytest.raises(ValueError):
            order_check_sup(tn, 0, sigmas=[0.1])


class TestTails:
    def test_strictly_positive_empty(self, tn):
        s = 2.0**-4
        a, b = tail_integrals(tn, 0, s, 4.0)
        assert a == 0.0
        assert abs(b) <= 1e-8

    def test_bump_positive_and_bounded(self):
        t = get_truth("bump")
        s = 2.0**-4
        a, b = tail_integrals(t.density(), 0, s, 4.0)
        assert a > 0 and b > 0
        assert a <= s**4 * (t.support[1] - t.support[0])

    def test_bump_slope(self):
        t = get_truth("bump")
        fit, _ = tail_order_check(t.density(), t.beta, H=4.0)
        assert fit.slope >= 2 * t.beta - 0.5

    def test_h_too_small(self):
        with pytest.raises(ValueError):
            tail_order_check(get_truth("bump").density(), 2.0, H=3.0)

    def test_sublevel_linear_exact(self):
        # level x on [0,1], integrand 1: measure of {x < 0.3} is 0.3
        lv = GridFunction.sample(lambda x: x, 0.0, 1.0, 11)
        one = GridFunction(0.0, 1.0, np.ones(11))
        assert sublevel_integral(lv, one, 0.3) == pytest.approx(0.3, abs=1e-14)
        assert sublevel_integral(lv, lv, 0.35) == pytest.approx(0.35**2 / 2, abs=1e-14)
