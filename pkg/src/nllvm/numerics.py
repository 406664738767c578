"""Uniform-grid functions, quadrature, Gaussian smoothing and CDF inversion.

Every function in the package is carried as samples on an equally spaced
grid that includes both endpoints.  Outside its domain a grid function is
taken to be zero.  When a function is zero-extended onto a wider lattice,
its endpoint samples are halved (the midpoint of the jump), which makes the
trapezoid rule on the wide lattice reproduce the trapezoid rule on the
original domain exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate as _spi
from scipy.special import ndtr

DEFAULT_N = 2**12 + 1
MASS_TOL = 1e-8
# sampled Gaussian kernels are cut where exp(-t^2/2) underflows
_KERNEL_HALF_WIDTH = 40.0
_RESOLUTION_FACTOR = 3.0


class NumericsError(ValueError):
    """Raised for invalid grids or under-resolved operations."""


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    """Equally spaced nodes ``lo, lo + dx, ..., hi``."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise NumericsError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self.n < 2:
            raise NumericsError("a grid needs at least 2 nodes")

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def extended(self, left: int, right: int | None = None) -> Grid:
        """Same lattice with ``left``/``right`` extra nodes on each side."""
        right = left if right is None else right
        dx = self.dx
        return Grid(self.lo - left * dx, self.hi + right * dx, self.n + left + right)

    def covering(self, lo: float, hi: float) -> Grid:
        """Smallest extension of this lattice containing ``[lo, hi]``."""
        dx = self.dx
        left = max(0, math.ceil((self.lo - lo) / dx - 1e-9))
        right = max(0, math.ceil((hi - self.hi) / dx - 1e-9))
        return self.extended(left, right)


@dataclass(frozen=True)
class GridFunction:
    """Real function sampled at the nodes of a uniform grid on ``[lo, hi]``."""

    lo: float
    hi: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _readonly(self.values)
        if vals.ndim != 1 or vals.size < 2:
            raise NumericsError("values must be a 1-d sequence of length >= 2")
        if not np.all(np.isfinite(vals)):
            raise NumericsError("grid function values must be finite")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        Grid(self.lo, self.hi, vals.size)

    @classmethod
    def on(cls, grid: Grid, values) -> GridFunction:
        return cls(grid.lo, grid.hi, values)

    @classmethod
    def sample(cls, fn, lo: float, hi: float, n: int = DEFAULT_N) -> GridFunction:
        x = np.linspace(lo, hi, n)
        return cls(lo, hi, np.asarray(fn(x), dtype=float) * np.ones_like(x))

    @property
    def grid(self) -> Grid:
        return Grid(self.lo, self.hi, self.values.size)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def __call__(self, x) -> np.ndarray:
        """Linear interpolation, zero outside ``[lo, hi]``."""
        return np.interp(x, self.x, self.values, left=0.0, right=0.0)

    def with_values(self, values) -> GridFunction:
        return GridFunction(self.lo, self.hi, values)

    def embed(self, grid: Grid) -> GridFunction:
        """Zero-extend onto a wider grid on the same lattice."""
        offset = _lattice_offset(self.grid, grid)
        if offset is None or offset < 0 or offset + self.n > grid.n:
            raise NumericsError("target grid does not contain this function's lattice")
        out = np.zeros(grid.n)
        vals = self.values.copy()
        if offset > 0:
            vals[0] *= 0.5
        if offset + self.n < grid.n:
            vals[-1] *= 0.5
        out[offset:offset + self.n] = vals
        return GridFunction.on(grid, out)

    def restrict(self, lo: float, hi: float) -> GridFunction:
        """Samples at the nodes lying inside ``[lo, hi]``."""
        x = self.x
        tol = 1e-9 * self.dx
        idx = np.nonzero((x >= lo - tol) & (x <= hi + tol))[0]
        if idx.size < 2:
            raise NumericsError(f"fewer than 2 nodes inside [{lo}, {hi}]")
        return GridFunction(x[idx[0]], x[idx[-1]], self.values[idx])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "value"])
            for xi, vi in zip(self.x, self.values):
                writer.writerow([f"{xi:.17g}", f"{vi:.17g}"])

    @classmethod
    def from_csv(cls, path) -> GridFunction:
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
        x = np.array([float(r["x"]) for r in rows])
        v = np.array([float(r["value"]) for r in rows])
        if x.size >= 3 and not np.allclose(np.diff(x), x[1] - x[0], rtol=1e-9, atol=0):
            raise NumericsError("CSV nodes are not equally spaced")
        return cls(x[0], x[-1], v)


@dataclass(frozen=True)
class Density:
    """Nonnegative, unit-mass grid function.

    Values down to ``-mass_tol`` are accepted (quadrature noise) and read back
    clamped at zero.
    """

    f: GridFunction
    mass_tol: float = MASS_TOL

    def __post_init__(self):
        vals = self.f.values
        if vals.min() < -self.mass_tol:
            raise NumericsError(f"density has negative value {vals.min():.3g}")
        mass = integrate(self.f)
        if abs(mass - 1.0) > self.mass_tol:
            raise NumericsError(f"density mass {mass!r} differs from 1 by more than {self.mass_tol}")
        clamped = np.clip(vals, 0.0, None)
        object.__setattr__(self, "f", self.f.with_values(clamped))

    @classmethod
    def normalized(cls, f: GridFunction, mass_tol: float = MASS_TOL) -> Density:
        clamped = f.with_values(np.clip(f.values, 0.0, None))
        mass = integrate(clamped)
        if mass <= 0:
            raise NumericsError("cannot normalize a function with no positive mass")
        return cls(clamped.with_values(clamped.values / mass), mass_tol)

    @classmethod
    def from_pdf(cls, pdf, lo: float, hi: float, n: int = DEFAULT_N,
                 mass_tol: float = MASS_TOL) -> Density:
        return cls.normalized(GridFunction.sample(pdf, lo, hi, n), mass_tol)

    @property
    def values(self) -> np.ndarray:
        return self.f.values

    @property
    def lo(self) -> float:
        return self.f.lo

    @property
    def hi(self) -> float:
        return self.f.hi

    @property
    def x(self) -> np.ndarray:
        return self.f.x

    @property
    def dx(self) -> float:
        return self.f.dx

    @property
    def grid(self) -> Grid:
        return self.f.grid

    def __call__(self, x) -> np.ndarray:
        return self.f(x)


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel of bandwidth ``sigma`` applied ``fold`` times."""

    sigma: float
    fold: int = 1

    def __post_init__(self):
        if not self.sigma > 0:
            raise NumericsError(f"kernel bandwidth must be positive, got {self.sigma}")
        if int(self.fold) != self.fold or self.fold < 1:
            raise NumericsError(f"fold must be a positive integer, got {self.fold}")

    @property
    def bandwidth(self) -> float:
        return self.sigma * math.sqrt(self.fold)


@dataclass(frozen=True)
class TransferFunction:
    """Function on ``[0, 1]`` given at ``M`` equally spaced nodes, linear in between."""

    values: np.ndarray

    def __post_init__(self):
        vals = _readonly(self.values)
        if vals.ndim != 1 or vals.size < 2:
            raise NumericsError("a transfer function needs at least 2 nodes")
        if not np.all(np.isfinite(vals)):
            raise NumericsError("transfer function values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m)

    def __call__(self, u) -> np.ndarray:
        return np.interp(u, self.nodes, self.values)

    def refined(self, m: int) -> TransferFunction:
        return TransferFunction(self(np.linspace(0.0, 1.0, m)))

    def sup_distance(self, other: TransferFunction) -> float:
        if other.m == self.m:
            return float(np.max(np.abs(self.values - other.values)))
        m = max(self.m, other.m)
        u = np.linspace(0.0, 1.0, m)
        return float(np.max(np.abs(self(u) - other(u))))

    def as_grid_function(self) -> GridFunction:
        return GridFunction(0.0, 1.0, self.values)


# ---------------------------------------------------------------------------
# quadrature


def trapezoid_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


def integrate(f: GridFunction, rule: str = "trapezoid") -> float:
    """Integral of ``f`` over ``[lo, hi]``.

    ``rule="simpson"`` uses composite Simpson (odd node counts give the
    classical rule; even counts fall back to scipy's end correction).
    """
    vals = np.asarray(f.values, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericsError("cannot integrate non-finite values")
    if rule == "trapezoid":
        dx = f.dx
        return float(dx * (vals.sum() - 0.5 * (vals[0] + vals[-1])))
    if rule == "simpson":
        return float(_spi.simpson(vals, dx=f.dx))
    raise NumericsError(f"unknown quadrature rule {rule!r}")


def cumulative(f: GridFunction) -> np.ndarray:
    """Running trapezoid integral from ``lo`` to each node."""
    vals = f.values
    out = np.zeros(vals.size)
    out[1:] = np.cumsum(0.5 * f.dx * (vals[1:] + vals[:-1]))
    return out


# ---------------------------------------------------------------------------
# lattices


def _lattice_offset(inner: Grid, outer: Grid) -> int | None:
    """Node offset of ``inner`` inside ``outer`` if they share one lattice."""
    if not math.isclose(inner.dx, outer.dx, rel_tol=1e-9):
        return None
    shift = (inner.lo - outer.lo) / outer.dx
    k = round(shift)
    if abs(shift - k) > 1e-6:
        return None
    return int(k)


def common_grid(f: GridFunction, g: GridFunction) -> tuple[GridFunction, GridFunction]:
    """Represent ``f`` and ``g`` on one grid spanning both domains.

    Functions on a shared lattice are zero-extended exactly.  Otherwise both
    are linearly interpolated onto the finer spacing over the union of the
    domains (zero outside each one's own domain).
    """
    if f.hi < g.lo or g.hi < f.lo:
        raise NumericsError("functions have disjoint domains")
    off = _lattice_offset(g.grid, f.grid)
    if off is not None:
        lo_node = min(0, off)
        hi_node = max(f.n - 1, off + g.n - 1)
        grid = f.grid.extended(-lo_node, hi_node - (f.n - 1))
        return f.embed(grid), g.embed(grid)
    dx = min(f.dx, g.dx)
    lo, hi = min(f.lo, g.lo), max(f.hi, g.hi)
    n = int(math.ceil((hi - lo) / dx - 1e-9)) + 1
    grid = Grid(lo, hi, n)
    x = grid.x
    return GridFunction.on(grid, f(x)), GridFunction.on(grid, g(x))


def _as_function(f) -> GridFunction:
    return f.f if isinstance(f, Density) else f


def sup_diff(f, g) -> float:
    """Maximum over nodes of ``|f - g|`` after placing both on a common grid."""
    f, g = common_grid(_as_function(f), _as_function(g))
    return float(np.max(np.abs(f.values - g.values)))


def l1_diff(f, g) -> float:
    f, g = common_grid(_as_function(f), _as_function(g))
    return integrate(f.with_values(np.abs(f.values - g.values)))


# ---------------------------------------------------------------------------
# Gaussian smoothing


def gaussian_pdf(x, sigma: float = 1.0, mean: float = 0.0) -> np.ndarray:
    z = (np.asarray(x, dtype=float) - mean) / sigma
    return np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * sigma)


def check_resolution(bandwidth: float, dx: float) -> None:
    if bandwidth < _RESOLUTION_FACTOR * dx * (1 - 1e-12):
        raise NumericsError(
            f"kernel under-resolved: bandwidth {bandwidth:.4g} < {_RESOLUTION_FACTOR:g} x dx ({dx:.4g})"
        )


def convolve_onto(f: GridFunction, bandwidth: float, grid: Grid) -> GridFunction:
    """Direct quadrature of ``(phi_bw * f)(y)`` at the nodes of ``grid``.

    ``grid`` must lie on the lattice of ``f``.  The sum at each output node is
    the trapezoid rule on ``f``'s own domain; it is evaluated as a discrete
    convolution with the sampled kernel (no FFT).
    """
    if not bandwidth > 0:
        raise NumericsError(f"bandwidth must be positive, got {bandwidth}")
    dx = f.dx
    check_resolution(bandwidth, dx)
    off = _lattice_offset(f.grid, grid)
    if off is None:
        raise NumericsError("output grid is not on the input lattice")
    weighted = f.values.copy()
    weighted[0] *= 0.5
    weighted[-1] *= 0.5
    # output node m sits at input index m - off; needed kernel lags span
    # (m - off) - k for k in [0, n_in)
    n_in, n_out = f.n, grid.n
    max_lag = max(abs(-off - (n_in - 1)), abs(n_out - 1 - off))
    half = min(max_lag, int(math.ceil(_KERNEL_HALF_WIDTH * bandwidth / dx)))
    lags = np.arange(-half, half + 1) * dx
    kernel = gaussian_pdf(lags, bandwidth) * dx
    full = np.convolve(weighted, kernel)  # index t <-> input index t - half
    idx = np.arange(n_out) - off + half
    out = np.zeros(n_out)
    ok = (idx >= 0) & (idx < full.size)
    out[ok] = full[idx[ok]]
    return GridFunction.on(grid, out)


def gaussian_convolve(f: GridFunction, k: KernelSpec, pad: float | None = None) -> GridFunction:
    """``phi_{sigma sqrt(fold)} * f`` on ``[lo - pad, hi + pad]``.

    ``pad`` defaults to (and must be at least) six bandwidths; it is rounded
    up to a whole number of grid steps.
    """
    f = _as_function(f)
    bw = k.bandwidth
    min_pad = 6.0 * bw
    pad = min_pad if pad is None else pad
    if pad < min_pad * (1 - 1e-12):
        raise NumericsError(f"pad {pad:.4g} is smaller than 6 bandwidths ({min_pad:.4g})")
    nodes = int(math.ceil(pad / f.dx - 1e-9))
    return convolve_onto(f, bw, f.grid.extended(nodes))


# ---------------------------------------------------------------------------
# CDF inversion


def support_nodes(f: GridFunction) -> tuple[int, int]:
    pos = np.nonzero(f.values > 0)[0]
    if pos.size < 2:
        raise NumericsError("density has fewer than two positive nodes")
    return int(pos[0]), int(pos[-1])


def inverse_cdf(f, u) -> np.ndarray:
    """Quantiles of a gridded density at probabilities ``u``.

    The CDF is the exact integral of the piecewise-linear interpolant of
    ``f`` (equal to the cumulative trapezoid sums at the nodes); inside each
    cell the quadratic is inverted in closed form, so the inverse is
    monotone and round-trips the cumulative trapezoid CDF.
    """
    f = _as_function(f)
    i0, i1 = support_nodes(f)
    vals = np.clip(f.values[i0:i1 + 1], 0.0, None)
    if np.any(vals[1:-1] <= 0):
        raise NumericsError("quantile undefined: density has an interior zero on its support")
    dx = f.dx
    x0 = f.lo + i0 * dx
    cdf = np.zeros(vals.size)
    cdf[1:] = np.cumsum(0.5 * dx * (vals[1:] + vals[:-1]))
    total = cdf[-1]
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise NumericsError("probabilities must lie in [0, 1]")
    target = u * total
    k = np.clip(np.searchsorted(cdf, target, side="right") - 1, 0, vals.size - 2)
    rem = np.clip(target - cdf[k], 0.0, None)
    fa, fb = vals[k], vals[k + 1]
    slope = (fb - fa) / dx
    # solve fa t + slope t^2 / 2 = rem for t in [0, dx]
    disc = np.sqrt(np.maximum(fa * fa + 2.0 * slope * rem, 0.0))
    denom = fa + disc
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0, 2.0 * rem / denom, 0.0)
    t = np.clip(t, 0.0, dx)
    return x0 + k * dx + t


def cdf_and_quantile(f: Density, m: int = DEFAULT_N) -> TransferFunction:
    """Quantile function of ``f`` sampled at ``m`` equally spaced levels in [0, 1]."""
    if m < 2:
        raise NumericsError("need at least 2 quantile nodes")
    return TransferFunction(inverse_cdf(f, np.linspace(0.0, 1.0, m)))


def cdf_at(f, x) -> np.ndarray:
    """CDF of the piecewise-linear interpolant of ``f`` at points ``x``."""
    f = _as_function(f)
    vals = f.values
    dx = f.dx
    cum = cumulative(f)
    total = cum[-1]
    x = np.asarray(x, dtype=float)
    s = np.clip((x - f.lo) / dx, 0.0, f.n - 1)
    k = np.clip(np.floor(s).astype(int), 0, f.n - 2)
    t = (s - k) * dx
    fa, fb = vals[k], vals[k + 1]
    return (cum[k] + fa * t + 0.5 * (fb - fa) / dx * t * t) / total


def normal_cdf(x) -> np.ndarray:
    return ndtr(x)
