"""Convolution corrections ``f_j`` and the normalized density ``h_beta``.

``f_j`` is built from ``f0`` by the recursion
``f_{k+1} = f0 - (phi_sigma * f_k - f_k)`` or, equivalently, by the binomial
combination ``sum_i (-1)^i C(j+1, i+1) phi_{sigma sqrt(i)} * f0``.  Both are
computed on a padded grid that shares ``f0``'s lattice.

Outside the support, ``f0`` can be zero-extended (the default) or continued
with a supplied formula (the analytic extension).  Zero extension creates a
jump at the support ends.  On the padded grid the jump nodes carry the
midpoint value, so restricting ``f_j`` back to the support adds the missing
half jump ``(j + 1) f0(end) / 2``.

Order checks measure errors on a fixed interior interval, the support shrunk
by ``MARGIN_FACTOR * sigma_max * sqrt(j + 1)`` on each side, so that every rung
of a ladder is compared on the same set.  They compare ``f0`` with either
``phi_sigma * f_j`` (``target="fj"``, the default) or with ``phi_sigma * h_beta``
for the support-restricted, renormalized ``h_beta`` (``target="hbeta"``).
Under zero extension ``f_j`` has unit mass over the line, so the first target
is ``f_j`` normalized over the line.  Restricting to the support changes the
mass by ``O(sigma)`` (zero extension) or ``O(sigma^2)`` (analytic extension),
and that change dominates the second target for ``j >= 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .divergences import kl
from .numerics import (
    Density,
    Grid,
    GridFunction,
    NumericsError,
    check_resolution,
    convolve_onto,
    integrate,
)

SIGMA_LADDER = tuple(2.0**-k for k in range(3, 8))
NUMERICAL_FLOOR = 1e-13
MARGIN_FACTOR = 8.0
PAD_FACTOR = 12.0

Extension = Callable[[np.ndarray], np.ndarray]


class PositivityError(NumericsError):
    """``f_j`` is not positive on the support: sigma too large."""


def binomial_coefficients(j: int) -> list[int]:
    """Weights ``(-1)^i C(j+1, i+1)`` of ``phi_{sigma sqrt(i)} * f0``, i = 0..j."""
    if j < 0:
        raise ValueError("j must be nonnegative")
    return [(-1) ** i * math.comb(j + 1, i + 1) for i in range(j + 1)]


def default_pad(sigma: float, j: int) -> float:
    return PAD_FACTOR * sigma * math.sqrt(j + 1)


def padded_grid(f0: Density, sigma: float, j: int, pad: float | None = None) -> Grid:
    pad = default_pad(sigma, j) if pad is None else pad
    nodes = int(math.ceil(pad / f0.dx - 1e-9))
    return f0.grid.extended(nodes)


def extend_f0(f0: Density, grid: Grid, extension: Extension | None = None) -> GridFunction:
    """``f0`` on a wider grid of its lattice, zero- or formula-extended."""
    if extension is None:
        return f0.f.embed(grid)
    inner = f0.f.embed(grid).values.copy()
    x = grid.x
    # match the grid normalization of f0
    k = int(np.argmax(f0.values))
    raw = float(np.asarray(extension(np.array([f0.x[k]])))[0])
    scale = f0.values[k] / raw if raw > 0 else 1.0
    tol = 1e-9 * f0.dx
    outside = (x < f0.lo - tol) | (x > f0.hi + tol)
    inner[outside] = scale * np.asarray(extension(x[outside]), dtype=float)
    ends = np.isclose(x, f0.lo, atol=tol, rtol=0) | np.isclose(x, f0.hi, atol=tol, rtol=0)
    inner[ends] = f0.f(x[ends])
    return GridFunction.on(grid, inner)


def _guard(f0: Density, sigma: float, j: int) -> None:
    if j < 0 or int(j) != j:
        raise ValueError("j must be a nonnegative integer")
    if not sigma > 0:
        raise NumericsError("sigma must be positive")
    check_resolution(sigma, f0.dx)


def build_fj_iterative(f0: Density, sigma: float, j: int, pad: float | None = None,
                       extension: Extension | None = None) -> GridFunction:
    """Apply ``f_{k+1} = f0 - (phi_sigma * f_k - f_k)`` ``j`` times on the padded grid."""
    _guard(f0, sigma, j)
    grid = padded_grid(f0, sigma, j, pad)
    base = extend_f0(f0, grid, extension)
    fk = base
    for _ in range(j):
        smooth = convolve_onto(fk, sigma, grid)
        fk = base.with_values(base.values - smooth.values + fk.values)
    return fk


def build_fj_binomial(f0: Density, sigma: float, j: int, pad: float | None = None,
                      extension: Extension | None = None) -> GridFunction:
    """Closed form ``sum_i (-1)^i C(j+1, i+1) phi_{sigma sqrt(i)} * f0``."""
    _guard(f0, sigma, j)
    grid = padded_grid(f0, sigma, j, pad)
    base = extend_f0(f0, grid, extension)
    coefs = binomial_coefficients(j)
    out = coefs[0] * base.values
    for i in range(1, j + 1):
        out = out + coefs[i] * convolve_onto(base, sigma * math.sqrt(i), grid).values
    return base.with_values(out)


def fj_on_support(fj: GridFunction, f0: Density, j: int, extended: bool = False) -> GridFunction:
    """Restrict a padded ``f_j`` to ``[a0, b0]`` with one-sided endpoint values."""
    inner = fj.restrict(f0.lo, f0.hi)
    if inner.n != f0.f.n:
        raise NumericsError("f_j is not on the lattice of f0")
    if extended:
        return inner
    vals = inner.values.copy()
    ends = f0.values[[0, -1]]
    on_lo = fj.lo < f0.lo - 1e-9 * f0.dx
    on_hi = fj.hi > f0.hi + 1e-9 * f0.dx
    if on_lo:
        vals[0] += 0.5 * (j + 1) * ends[0]
    if on_hi:
        vals[-1] += 0.5 * (j + 1) * ends[1]
    return inner.with_values(vals)


def normalize_to_hbeta(fj: GridFunction, f0: Density, j: int = 0,
                       extended: bool = False) -> tuple[Density, float]:
    """Restrict ``f_j`` to the support of ``f0`` and normalize it.

    Returns ``(h_beta, normalizer)`` with ``normalizer = int_{a0}^{b0} f_j``.
    Raises :class:`PositivityError` if ``f_j <= 0`` at a node where ``f0 > 0``.
    """
    inner = fj_on_support(fj, f0, j, extended)
    pos = f0.values > 0
    if np.any(inner.values[pos] <= 0):
        worst = float(inner.values[pos].min())
        raise PositivityError(f"sigma too large for positivity: min f_j on support is {worst:.3g}")
    vals = np.where(pos, inner.values, np.clip(inner.values, 0.0, None))
    z = integrate(inner.with_values(vals))
    return Density(inner.with_values(vals / z)), z


@dataclass(frozen=True)
class CorrectionSequence:
    f0: Density = field(repr=False)
    sigma: float
    j: int
    fj: GridFunction = field(repr=False)
    hbeta: Density = field(repr=False)
    normalizer: float
    extended: bool = False

    @classmethod
    def build(cls, f0: Density, sigma: float, j: int, extension: Extension | None = None,
              method: str = "binomial") -> CorrectionSequence:
        if method == "binomial":
            fj = build_fj_binomial(f0, sigma, j, extension=extension)
        elif method == "iterative":
            fj = build_fj_iterative(f0, sigma, j, extension=extension)
        else:
            raise ValueError(f"unknown construction {method!r}")
        extended = extension is not None
        hb, z = normalize_to_hbeta(fj, f0, j, extended)
        return cls(f0, sigma, j, fj, hb, z, extended)

    def smoothed(self, grid: Grid | None = None) -> GridFunction:
        """``phi_sigma * h_beta`` on ``grid`` (default: the support grid)."""
        grid = self.f0.grid if grid is None else grid
        return convolve_onto(self.hbeta.f, self.sigma, grid)


# ---------------------------------------------------------------------------
# order fits


@dataclass(frozen=True)
class OrderFit:
    """Least-squares slope of ``log error`` against ``log sigma``."""

    sigmas: tuple
    errors: tuple
    slope: float
    intercept: float
    residuals: tuple = ()
    dropped: tuple = ()
    floor: float = NUMERICAL_FLOOR
    metric: str = ""

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=float)
        if np.any(np.diff(s) >= 0):
            raise ValueError("sigmas must be strictly decreasing")
        if np.any(np.asarray(self.errors, dtype=float) <= 0):
            raise ValueError("errors must be strictly positive")

    @property
    def floor_limited(self) -> bool:
        return len(self.dropped) > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["floor_limited"] = self.floor_limited
        return d


def fit_order(sigmas: Sequence[float], errors: Sequence[float], floor: float = NUMERICAL_FLOOR,
              metric: str = "") -> OrderFit:
    """Fit ``log err = slope log sigma + intercept`` on the rungs above ``floor``.

    Rungs with error below ``floor`` are dropped with a warning.  With fewer
    than two surviving rungs the slope is ``nan``.
    """
    sig = np.asarray(sigmas, dtype=float)
    err = np.asarray(errors, dtype=float)
    order = np.argsort(-sig)
    sig, err = sig[order], err[order]
    keep = err >= floor
    dropped = tuple(float(s) for s in sig[~keep])
    if dropped:
        warnings.warn(f"{metric or 'error'} below numerical floor {floor:g} at sigma {dropped}; rungs dropped",
                      stacklevel=2)
    sig, err = sig[keep], err[keep]
    if sig.size < 2:
        # fully floor-limited: report the surviving rungs without a slope
        return OrderFit(tuple(map(float, sig)), tuple(map(float, err)), math.nan, math.nan,
                        (), dropped, floor, metric)
    X = np.log(sig)
    Y = np.log(err)
    slope, intercept = np.polyfit(X, Y, 1)
    res = Y - (slope * X + intercept)
    return OrderFit(tuple(map(float, sig)), tuple(map(float, err)), float(slope), float(intercept),
                    tuple(map(float, res)), dropped, floor, metric)


def interior_interval(f0: Density, sigmas: Sequence[float], j: int,
                      margin: float | None = None) -> tuple[float, float]:
    """Support shrunk by ``margin`` (default scales with the widest bandwidth)."""
    if margin is None:
        margin = MARGIN_FACTOR * max(sigmas) * math.sqrt(j + 1)
    lo, hi = f0.lo + margin, f0.hi - margin
    if hi - lo < 2 * f0.dx:
        raise NumericsError(f"interior margin {margin:.3g} leaves no interior")
    return lo, hi


def _check_ladder(f0: Density, sigmas: Sequence[float]) -> None:
    if len(sigmas) < 2:
        raise ValueError("a ladder needs at least two bandwidths")
    check_resolution(min(sigmas), f0.dx)


def smoothed_target(f0: Density, sigma: float, j: int, target: str = "fj",
                    extension: Extension | None = None) -> GridFunction:
    """``phi_sigma * f_j`` or ``phi_sigma * h_beta`` on the support grid of ``f0``."""
    if target == "fj":
        return convolve_onto(build_fj_binomial(f0, sigma, j, extension=extension), sigma, f0.grid)
    if target == "hbeta":
        return CorrectionSequence.build(f0, sigma, j, extension).smoothed()
    raise ValueError(f"unknown target {target!r}; use 'fj' or 'hbeta'")


def sup_errors(f0: Density, j: int, sigmas: Sequence[float], interval, target: str = "fj",
               extension: Extension | None = None) -> list[float]:
    lo, hi = interval
    mask = (f0.x >= lo) & (f0.x <= hi)
    out = []
    for s in sigmas:
        g = smoothed_target(f0, s, j, target, extension)
        out.append(float(np.max(np.abs(g.values[mask] - f0.values[mask]))))
    return out


def order_check_sup(f0: Density, j: int, sigmas: Sequence[float] = SIGMA_LADDER,
                    margin: float | None = None, target: str = "fj",
                    extension: Extension | None = None) -> OrderFit:
    """Order of ``sup |phi_sigma * f_j - f0|`` over the interior interval."""
    _check_ladder(f0, sigmas)
    interval = interior_interval(f0, sigmas, j, margin)
    sig = sorted(sigmas, reverse=True)
    errs = sup_errors(f0, j, sig, interval, target, extension)
    return fit_order(sig, errs, metric=f"sup-{target}")


def kl_errors(f0: Density, j: int, sigmas: Sequence[float], interval, target: str = "fj",
              extension: Extension | None = None, form: str = "bregman") -> list[float]:
    out = []
    for s in sigmas:
        g = smoothed_target(f0, s, j, target, extension)
        out.append(kl(f0, g, eval_set=interval, form=form))
    return out


def kl_order_check(f0: Density, j: int, sigmas: Sequence[float] = SIGMA_LADDER,
                   margin: float | None = None, target: str = "fj",
                   extension: Extension | None = None, form: str = "bregman") -> OrderFit:
    """Order of the interior KL divergence ``K(f0, phi_sigma * f_j)``.

    The default ``form="bregman"`` integrates ``f log(f/g) - f + g`` which is
    nonnegative pointwise.  On a sub-interval the plain ``f log(f/g)`` keeps a
    first-order term that cancels only over the whole line.
    """
    _check_ladder(f0, sigmas)
    interval = interior_interval(f0, sigmas, j, margin)
    sig = sorted(sigmas, reverse=True)
    errs = kl_errors(f0, j, sig, interval, target, extension, form)
    return fit_order(sig, errs, metric=f"kl-{form}-{target}")


# ---------------------------------------------------------------------------
# tails


def sublevel_integral(level: GridFunction, integrand: GridFunction, thr: float) -> float:
    """Integral of the interpolant of ``integrand`` over ``{level < thr}``.

    Both functions share one grid; inside each cell the set is located from
    the linear interpolant of ``level`` and the integral is exact for the
    linear interpolant of ``integrand``.
    """
    if level.n != integrand.n or not math.isclose(level.lo, integrand.lo):
        raise NumericsError("level and integrand must share a grid")
    fa, fb = level.values[:-1], level.values[1:]
    ga, gb = integrand.values[:-1], integrand.values[1:]
    dx = level.dx
    # fraction interval [t0, t1] of each cell where level < thr
    below_a, below_b = fa < thr, fb < thr
    with np.errstate(divide="ignore", invalid="ignore"):
        tc = np.where(fb != fa, (thr - fa) / (fb - fa), 0.0)
    tc = np.clip(tc, 0.0, 1.0)
    t0 = np.where(below_a, 0.0, tc)
    t1 = np.where(below_b, 1.0, tc)
    t1 = np.where(below_a | below_b, t1, t0)
    # integral of ga + (gb - ga) t over [t0, t1], times dx
    part = ga * (t1 - t0) + 0.5 * (gb - ga) * (t1 * t1 - t0 * t0)
    return float(dx * part.sum())


def tail_integrals(f0: Density, j: int, sigma: float, H: float,
                   extension: Extension | None = None) -> tuple[float, float]:
    """``(int_{A^c} f0, int_{A^c} phi_sigma * f_j)`` with ``A = {f0 >= sigma^H}``.

    The complement is taken inside the support of ``f0``.
    """
    thr = sigma**H
    fj = build_fj_binomial(f0, sigma, j, extension=extension)
    smooth = convolve_onto(fj, sigma, f0.grid)
    return sublevel_integral(f0.f, f0.f, thr), sublevel_integral(f0.f, smooth, thr)


def tail_order_check(f0: Density, beta: float, sigmas: Sequence[float] = SIGMA_LADDER,
                     H: float | None = None, j: int | None = None) -> tuple[OrderFit, list]:
    """Ladder fit of ``int_{A^c} f0`` (default ``H = 2 beta``)."""
    from .truths import beta_to_j

    H = 2.0 * beta if H is None else H
    if H < 2.0 * beta:
        raise ValueError("H must be at least 2 beta")
    j = beta_to_j(beta) if j is None else j
    sig = sorted(sigmas, reverse=True)
    pairs = [tail_integrals(f0, j, s, H) for s in sig]
    fit = fit_order(sig, [p[0] for p in pairs], floor=1e-300, metric="tail")
    return fit, pairs


# ---------------------------------------------------------------------------
# normalizer and positivity


@dataclass(frozen=True)
class NormalizerReport:
    sigmas: tuple
    normalizers: tuple
    positive: tuple
    min_ratio: tuple
    threshold: float | None
    fit: OrderFit | None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit"] = None if self.fit is None else self.fit.to_dict()
        return d


def rho_hat(f0: Density, sigma: float, extension: Extension | None = None) -> float:
    """``max over the support of |phi_sigma * f0 / f0 - 1|``."""
    grid = padded_grid(f0, sigma, 0)
    g = convolve_onto(extend_f0(f0, grid, extension), sigma, f0.grid)
    pos = f0.values > 0
    return float(np.max(np.abs(g.values[pos] / f0.values[pos] - 1.0)))


def normalizer_check(f0: Density, j: int, sigmas: Sequence[float] = SIGMA_LADDER,
                     extension: Extension | None = None) -> NormalizerReport:
    """``|int_{a0}^{b0} f_j - 1|`` and positivity of ``f_j`` across a ladder.

    ``threshold`` is the largest bandwidth below which every scanned rung is
    positive (``None`` if even the smallest fails).  The slope is fitted on
    the accepted rungs.
    """
    sig = sorted(sigmas, reverse=True)
    extended = extension is not None
    zs, pos, ratios = [], [], []
    for s in sig:
        fj = build_fj_binomial(f0, s, j, extension=extension)
        inner = fj_on_support(fj, f0, j, extended)
        m = f0.values > 0
        zs.append(integrate(inner))
        pos.append(bool(np.all(inner.values[m] > 0)))
        ratios.append(float(np.min(inner.values[m] / f0.values[m])))
    threshold = None
    for s, ok in zip(reversed(sig), reversed(pos)):
        if not ok:
            break
        threshold = s
    acc = [(s, abs(z - 1.0)) for s, z, ok in zip(sig, zs, pos) if threshold is not None and s <= threshold]
    fit = None
    if len(acc) >= 2:
        try:
            fit = fit_order([a[0] for a in acc], [a[1] for a in acc], metric="normalizer")
        except NumericsError:
            fit = None
    return NormalizerReport(tuple(sig), tuple(zs), tuple(pos), tuple(ratios), threshold, fit)
