import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as spi
from scipy.optimize import brentq
from scipy.special import erf

from nllvm.numerics import (
    DEFAULT_N,
    Density,
    Grid,
    GridFunction,
    KernelSpec,
    NumericsError,
    TransferFunction,
    cdf_and_quantile,
    cdf_at,
    common_grid,
    gaussian_convolve,
    gaussian_pdf,
    integrate,
    inverse_cdf,
    l1_diff,
    sup_diff,
)


def _truncnorm():
    z = erf(2.0 / math.sqrt(2.0))
    return Density.from_pdf(lambda x: gaussian_pdf(x) / z, -2.0, 2.0)


class TestGridFunction:
    def test_rejects_bad_domain(self):
        with pytest.raises(ValueError):
            GridFunction(1.0, 0.0, [1.0, 2.0])
        with pytest.raises(ValueError):
            GridFunction(0.0, 1.0, [1.0])
        with pytest.raises(ValueError):
            GridFunction(0.0, 1.0, [1.0, np.nan])

    def test_spacing(self):
        f = GridFunction(0.0, 2.0, np.zeros(5))
        assert f.dx == pytest.approx(0.5)
        np.testing.assert_allclose(f.x, [0.0, 0.5, 1.0, 1.5, 2.0])

    def test_zero_outside_domain(self):
        f = GridFunction(0.0, 1.0, np.ones(11))
        np.testing.assert_array_equal(f(np.array([-0.5, 1.5])), [0.0, 0.0])
        assert f(0.35) == pytest.approx(1.0)

    def test_csv_round_trip(self, tmp_path):
        f = GridFunction.sample(np.sin, 0.1, 2.3, 37)
        f.to_csv(tmp_path / "f.csv")
        g = GridFunction.from_csv(tmp_path / "f.csv")
        assert g.lo == f.lo and g.hi == f.hi
        np.testing.assert_array_equal(g.values, f.values)
        assert (tmp_path / "f.csv").read_text().splitlines()[0] == "x,value"

    def test_embed_halves_jump(self):
        f = GridFunction(0.0, 1.0, np.ones(11))
        g = f.embed(f.grid.extended(3))
        assert g.lo == pytest.approx(-0.3)
        assert g(0.0) == pytest.approx(0.5)
        assert g(1.0) == pytest.approx(0.5)
        # trapezoid mass of the halved embedding equals the exact step mass
        assert integrate(g) == pytest.approx(1.0, abs=1e-12)


class TestDensity:
    def test_mass_check(self):
        with pytest.raises(NumericsError):
            Density(GridFunction(0.0, 1.0, 2.0 * np.ones(11)))

    def test_small_negatives_clamped(self):
        v = 2.0 * np.linspace(0.0, 1.0, 101)
        v[0] = -1e-10
        d = Density(GridFunction(0.0, 1.0, v), mass_tol=1e-8)
        assert d.values.min() == 0.0

    def test_normalized(self):
        d = Density.normalized(GridFunction(0.0, 1.0, 3.0 * np.ones(11)))
        assert integrate(d.f) == pytest.approx(1.0)


class TestIntegrate:
    def test_constant(self):
        assert integrate(GridFunction(0.0, 1.0, np.ones(101))) == 1.0

    def test_linear_exact(self):
        assert integrate(GridFunction.sample(lambda x: x, 0.0, 1.0, 101)) == pytest.approx(0.5, abs=1e-15)

    def test_normal_pdf(self):
        f = GridFunction.sample(gaussian_pdf, -8.0, 8.0, DEFAULT_N)
        exact = erf(8.0 / math.sqrt(2.0))
        assert integrate(f) == pytest.approx(exact, abs=1e-10)

    def test_simpson_opt_in(self):
        f = GridFunction.sample(lambda x: x**3, 0.0, 1.0, 11)
        assert integrate(f, "simpson") == pytest.approx(0.25, abs=1e-14)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            integrate(GridFunction(0.0, 1.0, [0.0, np.inf]))

    def test_refinement_order(self):
        errs = []
        ns = [33, 65, 129, 257]
        for n in ns:
            errs.append(abs(integrate(GridFunction.sample(np.exp, 0.0, 1.0, n)) - (math.e - 1.0)))
        slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
        assert slope >= 1.9


class TestConvolution:
    def test_gaussian_self_convolution(self):
        f = GridFunction.sample(lambda x: gaussian_pdf(x, 0.1), -1.5, 1.5, DEFAULT_N)
        g = gaussian_convolve(f, KernelSpec(0.1))
        exact = gaussian_pdf(g.x, 0.1 * math.sqrt(2.0))
        assert np.max(np.abs(g.values - exact)) < 1e-8

    def test_plateau_against_adaptive_quadrature(self):
        f = GridFunction(0.0, 1.0, np.ones(DEFAULT_N))
        g = gaussian_convolve(f, KernelSpec(0.05))
        oracle = spi.quad(lambda t: gaussian_pdf(0.5 - t, 0.05), 0.0, 1.0, epsabs=1e-14)[0]
        # the zero-extended step has exact convolution Phi((x)/s) - Phi((x-1)/s)
        assert g(0.5) == pytest.approx(oracle, abs=1e-6)

    def test_fold_identity(self):
        f = _truncnorm().f
        s = 2.0**-5
        once = gaussian_convolve(f, KernelSpec(s, fold=3))
        it = f
        for _ in range(3):
            it = gaussian_convolve(it, KernelSpec(s))
        a, b = common_grid(once, it)
        assert np.max(np.abs(a.values - b.values)) < 1e-8

    def test_under_resolved(self):
        f = GridFunction(0.0, 1.0, np.ones(11))
        with pytest.raises(NumericsError, match="under-resolved"):
            gaussian_convolve(f, KernelSpec(0.01))

    def test_bad_pad(self):
        f = _truncnorm().f
        with pytest.raises(ValueError):
            gaussian_convolve(f, KernelSpec(0.1), pad=0.1)

    def test_kernel_spec(self):
        with pytest.raises(ValueError):
            KernelSpec(0.0)
        with pytest.raises(ValueError):
            KernelSpec(0.1, fold=0)
        assert KernelSpec(0.1, fold=4).bandwidth == pytest.approx(0.2)

    @settings(max_examples=15, deadline=None)
    @given(k=st.integers(2, 8), shift=st.floats(-1.0, 1.0))
    def test_mass_conservation(self, k, shift):
        f = _truncnorm().f
        f = GridFunction(f.lo + shift, f.hi + shift, f.values)
        g = gaussian_convolve(f, KernelSpec(2.0**-k))
        assert abs(integrate(g) - integrate(f)) <= 1e-9


class TestNorms:
    def test_identity_and_offset(self):
        f = GridFunction.sample(np.cos, 0.0, 1.0, 51)
        assert sup_diff(f, f) == 0.0
        zero = GridFunction(0.0, 1.0, np.zeros(21))
        c = GridFunction(0.0, 1.0, np.full(21, -0.7))
        assert sup_diff(zero, c) == pytest.approx(0.7)
        assert l1_diff(zero, c) == pytest.approx(0.7)

    def test_shifted_normals(self):
        f = GridFunction.sample(gaussian_pdf, -8.0, 8.0, 2**14 + 1)
        g = GridFunction.sample(lambda x: gaussian_pdf(x, 1.0, 0.1), -8.0, 8.0, 2**14 + 1)
        xs = np.linspace(-3, 3, 2_000_001)
        oracle = np.max(np.abs(gaussian_pdf(xs) - gaussian_pdf(xs, 1.0, 0.1)))
        assert sup_diff(f, g) == pytest.approx(oracle, abs=1e-6)

    def test_disjoint_domains(self):
        with pytest.raises(NumericsError):
            sup_diff(GridFunction(0.0, 1.0, np.ones(3)), GridFunction(2.0, 3.0, np.ones(3)))


class TestQuantile:
    def test_uniform_identity(self):
        mu = cdf_and_quantile(Density(GridFunction(0.0, 1.0, np.ones(DEFAULT_N))), 257)
        np.testing.assert_allclose(mu.values, np.linspace(0, 1, 257), atol=1e-10)

    def test_uniform_affine(self):
        mu = cdf_and_quantile(Density(GridFunction(2.0, 5.0, np.full(DEFAULT_N, 1.0 / 3.0))), 129)
        np.testing.assert_allclose(mu.values, 2.0 + 3.0 * np.linspace(0, 1, 129), atol=1e-9)

    def test_truncnorm_against_root_finding(self):
        d = _truncnorm()
        z = erf(2.0 / math.sqrt(2.0))

        def cdf(x):
            return (erf(x / math.sqrt(2.0)) + z) / (2.0 * z)

        u = 0.8413447460685429
        oracle = brentq(lambda x: cdf(x) - u, -2.0, 2.0, xtol=1e-14)
        assert float(inverse_cdf(d, 0.5)) == pytest.approx(0.0, abs=1e-8)
        assert float(inverse_cdf(d, u)) == pytest.approx(oracle, abs=1e-6)

    def test_interior_zero(self):
        x = np.linspace(0, 1, 1001)
        v = np.where(np.abs(x - 0.5) < 0.05, 0.0, 1.0)
        d = Density.normalized(GridFunction(0.0, 1.0, v))
        with pytest.raises(NumericsError, match="quantile undefined"):
            cdf_and_quantile(d, 65)

    def test_round_trip(self):
        d = _truncnorm()
        mu = cdf_and_quantile(d, 513)
        u = np.linspace(0, 1, 513)
        np.testing.assert_allclose(cdf_at(d, mu.values), u, atol=2 * d.dx)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=20))
    def test_monotone(self, us):
        d = _truncnorm()
        u = np.sort(np.asarray(us))
        q = inverse_cdf(d, u)
        assert np.all(np.diff(q) >= 0)
        assert np.all((q >= -2.0) & (q <= 2.0))


class TestTransferFunction:
    def test_interpolation_and_refine(self):
        mu = TransferFunction(np.array([0.0, 1.0, 0.0]))
        assert mu(0.25) == pytest.approx(0.5)
        np.testing.assert_allclose(mu.refined(5).values, [0.0, 0.5, 1.0, 0.5, 0.0])
        assert mu.sup_distance(TransferFunction(np.zeros(3))) == 1.0

    def test_requires_two_nodes(self):
        with pytest.raises(ValueError):
            TransferFunction(np.array([1.0]))


class TestGridHelpers:
    def test_covering_keeps_lattice(self):
        g = Grid(0.0, 1.0, 11)
        c = g.covering(-0.25, 1.31)
        assert c.dx == pytest.approx(g.dx)
        assert c.lo <= -0.25 and c.hi >= 1.31
        assert ((0.0 - c.lo) / c.dx) == pytest.approx(round((0.0 - c.lo) / c.dx))
