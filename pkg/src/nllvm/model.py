"""Induced density of the latent variable model and its mixing measure.

With ``eta ~ U(0, 1)`` and ``y = mu(eta) + sigma * eps`` the density of ``y`` is

    f_{mu, sigma}(y) = int_0^1 phi_sigma(y - mu(u)) du.

``mu`` is piecewise linear between its nodes.  ``method="trapezoid"`` applies
the trapezoid rule in ``u`` on the nodes of ``mu``.  ``method="exact"``
integrates each linear segment in closed form through normal CDF
differences, which is the exact density of the piecewise-linear model.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtr

from .numerics import (
    DEFAULT_N,
    Density,
    Grid,
    GridFunction,
    NumericsError,
    TransferFunction,
    cdf_and_quantile,
    check_resolution,
    gaussian_convolve,
    gaussian_pdf,
    KernelSpec,
    l1_diff,
    trapezoid_weights,
)
from .divergences import hellinger2, lemma1_bound

__all__ = [
    "TransferFunction",
    "ModelDensity",
    "eval_model_density",
    "model_values",
    "segment_weights",
    "ygrid_for",
    "induced_mixing_measure",
    "mixture_from_histogram",
    "support_check",
    "SupportReport",
    "lemma1_empirical",
]

MODEL_MASS_TOL = 1e-6
COVER_SIGMAS = 6.0
# segments flatter than this (relative to sigma) use a Taylor expansion
_FLAT_SEGMENT = 1e-3
_BLOCK = 2**22


def ygrid_for(mu: TransferFunction, sigma: float, cover: float = 8.0,
              per_sigma: float = 8.0, like: Grid | None = None) -> Grid:
    """A y-grid covering ``range(mu) +- cover * sigma``.

    With ``like`` the grid is an extension of that lattice; otherwise the
    spacing is ``sigma / per_sigma``.
    """
    lo = float(mu.values.min()) - cover * sigma
    hi = float(mu.values.max()) + cover * sigma
    if like is not None:
        return like.covering(lo, hi)
    n = int(math.ceil((hi - lo) * per_sigma / sigma)) + 1
    return Grid(lo, hi, max(n, 2))


def _check_cover(mu: TransferFunction, sigma: float, grid: Grid) -> None:
    lo = float(mu.values.min()) - COVER_SIGMAS * sigma
    hi = float(mu.values.max()) + COVER_SIGMAS * sigma
    slack = 1e-9 * grid.dx
    if grid.lo > lo + slack or grid.hi < hi - slack:
        raise NumericsError(
            f"mass leakage: y grid [{grid.lo:.4g}, {grid.hi:.4g}] does not cover "
            f"range(mu) +- {COVER_SIGMAS:g} sigma = [{lo:.4g}, {hi:.4g}]"
        )


def _trapezoid_values(m: np.ndarray, sigma: float, y: np.ndarray) -> np.ndarray:
    w = trapezoid_weights(m.size, 1.0 / (m.size - 1))
    out = np.empty(y.size)
    step = max(1, _BLOCK // m.size)
    for s in range(0, y.size, step):
        z = (y[s:s + step, None] - m[None, :]) / sigma
        out[s:s + step] = np.exp(-0.5 * z * z) @ w
    return out / (math.sqrt(2.0 * math.pi) * sigma)


def segment_weights(m: np.ndarray, sigma: float, y: np.ndarray) -> np.ndarray:
    """``int_{segment k} phi_sigma(y_i - mu(u)) du`` for every ``(i, k)``.

    Exact for piecewise-linear ``mu``; nearly flat segments use a Taylor
    expansion of the same integral.
    """
    h = 1.0 / (m.size - 1)
    ma, mb = m[:-1], m[1:]
    dm = mb - ma
    flat = np.abs(dm) < _FLAT_SEGMENT * sigma
    safe = np.where(flat, 1.0, dm)
    c = 1.0 / (math.sqrt(2.0 * math.pi) * sigma)
    yy = np.asarray(y, dtype=float)[:, None]
    z = (yy - m[None, :]) / sigma
    # one tail probability per node: Phi(z) = T for z <= 0 and 1 - T above,
    # so differences on the same side never cancel
    tail = ndtr(-np.abs(z))
    pos = z > 0
    ta, tb = tail[:, :-1], tail[:, 1:]
    pa, pb = pos[:, :-1], pos[:, 1:]
    diff = np.where(pa, np.where(pb, tb - ta, 1.0 - ta - tb), np.where(pb, ta + tb - 1.0, ta - tb))
    seg = h * diff / safe[None, :]
    if np.any(flat):
        zm = (yy - 0.5 * (ma + mb)[None, :]) / sigma
        r2 = (dm[None, :] / sigma) ** 2
        taylor = h * c * np.exp(-0.5 * zm * zm) * (1.0 + r2 * (zm * zm - 1.0) / 24.0)
        seg = np.where(flat[None, :], taylor, seg)
    return seg


def _exact_values(m: np.ndarray, sigma: float, y: np.ndarray) -> np.ndarray:
    out = np.empty(y.size)
    step = max(1, _BLOCK // m.size)
    for s in range(0, y.size, step):
        out[s:s + step] = segment_weights(m, sigma, y[s:s + step]).sum(axis=1)
    return out


def model_values(mu: TransferFunction, sigma: float, y, method: str = "trapezoid") -> np.ndarray:
    """``f_{mu, sigma}`` at arbitrary points ``y`` (no coverage checks)."""
    if not sigma > 0:
        raise NumericsError("sigma must be positive")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    m = np.asarray(mu.values, dtype=float)
    if method == "trapezoid":
        return _trapezoid_values(m, sigma, y)
    if method == "exact":
        return _exact_values(m, sigma, y)
    raise ValueError(f"unknown latent quadrature {method!r}")


def eval_model_density(mu: TransferFunction, sigma: float, ygrid: Grid | GridFunction,
                       method: str = "trapezoid", mass_tol: float = MODEL_MASS_TOL) -> Density:
    """``f_{mu, sigma}`` at the nodes of ``ygrid``.

    The result is not renormalized.  Its trapezoid mass must be within
    ``mass_tol`` of one, otherwise the grid is too coarse and an error is
    raised.
    """
    if isinstance(ygrid, GridFunction):
        ygrid = ygrid.grid
    if not sigma > 0:
        raise NumericsError("sigma must be positive")
    _check_cover(mu, sigma, ygrid)
    check_resolution(sigma, ygrid.dx)
    vals = model_values(mu, sigma, ygrid.x, method)
    return Density(GridFunction.on(ygrid, vals), mass_tol)


@dataclass(frozen=True)
class ModelDensity:
    mu: TransferFunction
    sigma: float
    grid: Grid

    def density(self, method: str = "trapezoid") -> Density:
        return eval_model_density(self.mu, self.sigma, self.grid, method)


# ---------------------------------------------------------------------------
# mixing measure


def _occupation(m: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Lebesgue measure of ``{u : mu(u) <= t}`` for piecewise-linear ``mu``."""
    h = 1.0 / (m.size - 1)
    lo = np.minimum(m[:-1], m[1:])
    hi = np.maximum(m[:-1], m[1:])
    span = hi - lo
    out = np.empty(t.size)
    step = max(1, _BLOCK // lo.size)
    for s in range(0, t.size, step):
        tt = t[s:s + step, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(span > 0, (tt - lo) / np.where(span > 0, span, 1.0), (tt >= lo) * 1.0)
        out[s:s + step] = h * np.clip(frac, 0.0, 1.0).sum(axis=1)
    return out


def induced_mixing_measure(mu: TransferFunction, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of the pushforward of ``U(0, 1)`` under ``mu``.

    Returns ``(edges, masses)`` over ``bins`` equal bins spanning range(mu);
    the bin masses are exact for the piecewise-linear ``mu``.
    """
    if bins < 1:
        raise ValueError("bins must be at least 1")
    m = np.asarray(mu.values, dtype=float)
    lo, hi = float(m.min()), float(m.max())
    if hi == lo:
        return np.array([lo, hi]), np.array([1.0])
    edges = np.linspace(lo, hi, bins + 1)
    occ = _occupation(m, edges)
    # a flat piece sitting exactly on lo belongs to the first bin
    occ[0] = 0.0
    occ[-1] = 1.0
    return edges, np.diff(occ)


def mixture_from_histogram(edges: np.ndarray, masses: np.ndarray, sigma: float, y) -> np.ndarray:
    """Gaussian kernel mixture with atoms at the bin centres."""
    centres = 0.5 * (edges[:-1] + edges[1:])
    y = np.asarray(y, dtype=float)
    return gaussian_pdf(y[:, None], sigma, centres[None, :]) @ masses


# ---------------------------------------------------------------------------
# support construction


@dataclass(frozen=True)
class SupportReport:
    eps: float
    sigma0: float
    smoothing_l1: float
    model_l1: float
    success: bool
    reason: str
    sigmas_tried: tuple

    def to_dict(self) -> dict:
        return asdict(self)


def support_check(f0: Density, eps: float, m: int = DEFAULT_N - 1, sigma_start: float = 0.1,
                  method: str = "trapezoid") -> SupportReport:
    """Build ``mu0`` and ``sigma0`` with ``|| f_{mu0, sigma0} - f0 ||_1 < eps``.

    ``mu0`` is the quantile function of ``f0`` on ``m`` latent nodes;
    ``sigma0`` is found by halving from ``sigma_start`` until
    ``|| phi_sigma * f0 - f0 ||_1 < eps / 2``.  If the resolution guard stops
    the search first the report records the failure and the best L1 reached.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    mu0 = cdf_and_quantile(f0, m)
    sigma = sigma_start
    tried = []
    best = (math.inf, sigma)
    while True:
        try:
            check_resolution(sigma, f0.dx)
        except NumericsError:
            break
        tried.append(sigma)
        smooth = l1_diff(gaussian_convolve(f0.f, KernelSpec(sigma)), f0)
        if smooth < best[0]:
            best = (smooth, sigma)
        if smooth < eps / 2:
            break
        sigma /= 2.0
    smooth_l1, sigma0 = best
    grid = ygrid_for(mu0, sigma0, like=f0.grid)
    dens = eval_model_density(mu0, sigma0, grid, method, mass_tol=1e-4)
    model_l1 = l1_diff(dens, f0)
    if smooth_l1 >= eps / 2:
        return SupportReport(eps, sigma0, smooth_l1, model_l1, False,
                             "resolution guard reached before the smoothing target", tuple(tried))
    ok = model_l1 < eps
    reason = "ok" if ok else "model density misses the L1 target"
    return SupportReport(eps, sigma0, smooth_l1, model_l1, ok, reason, tuple(tried))


def lemma1_empirical(mu1: TransferFunction, mu2: TransferFunction, s1: float, s2: float,
                     method: str = "exact", per_sigma: float = 8.0) -> tuple[float, float]:
    """``(h^2(f1, f2) / 2, lemma1_bound)`` for two model densities."""
    smin = min(s1, s2)
    lo = min(mu1.values.min(), mu2.values.min()) - 10.0 * max(s1, s2)
    hi = max(mu1.values.max(), mu2.values.max()) + 10.0 * max(s1, s2)
    n = int(math.ceil((hi - lo) * per_sigma / smin)) + 1
    grid = Grid(lo, hi, n)
    f1 = GridFunction.on(grid, model_values(mu1, s1, grid.x, method))
    f2 = GridFunction.on(grid, model_values(mu2, s2, grid.x, method))
    return 0.5 * hellinger2(f1, f2), lemma1_bound(mu1, mu2, s1, s2)
