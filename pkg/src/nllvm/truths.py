"""Catalog of compactly supported ground-truth densities.

Each entry carries a closed-form pdf, a nominal smoothness ``beta`` and an
interval on which the density is bounded away from zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate as _spi
from scipy.special import erf

from .numerics import DEFAULT_N, Density, NumericsError

MONOTONE_TOL = 1e-10


@dataclass(frozen=True)
class TruthSpec:
    name: str
    support: tuple[float, float]
    beta: float
    flat_interval: tuple[float, float]
    pdf: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    log_derivs: dict = field(default_factory=dict, repr=False)
    strictly_positive: bool = False
    # the pdf formula continued past the support (same scale as ``pdf``);
    # ``None`` means the zero extension is already the smooth one
    extension: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def density(self, n: int = DEFAULT_N) -> Density:
        return _density(self.name, n)

    @property
    def min_on_support(self) -> float:
        """Lower bound of the pdf over its support (0 if it vanishes)."""
        if not self.strictly_positive:
            return 0.0
        x = np.linspace(*self.support, 20001)
        return float(self.pdf(x).min())


_TN_Z = erf(2.0 / math.sqrt(2.0))


def _truncnorm_ext(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi) / _TN_Z


def _truncnorm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 2.0, _truncnorm_ext(x), 0.0)


def _bump_raw(x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    safe = np.where(inside, x, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - safe * safe)), 0.0)


_BUMP_Z = _spi.quad(_bump_raw, -1.0, 1.0, epsabs=1e-15, epsrel=1e-13)[0]


def _bump_pdf(x):
    return _bump_raw(x) / _BUMP_Z


def _beta33_ext(x):
    x = np.asarray(x, dtype=float)
    return 30.0 * x**2 * (1.0 - x) ** 2


def _beta33_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= 1), _beta33_ext(x), 0.0)


def _uniform_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= 1), 1.0, 0.0)


# two Gaussian bumps on a flat floor, normalized on [0, 1]
_TB = ((0.3, 0.08, 1.0), (0.72, 0.1, 0.8))
_TB_FLOOR = 0.25


def _twobump_raw(x):
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, _TB_FLOOR)
    for m, s, w in _TB:
        out = out + w * np.exp(-0.5 * ((x - m) / s) ** 2)
    return out


def _twobump_mass():
    total = _TB_FLOOR
    for m, s, w in _TB:
        a, b = (0.0 - m) / (s * math.sqrt(2)), (1.0 - m) / (s * math.sqrt(2))
        total += w * s * math.sqrt(math.pi / 2) * (math.erf(b) - math.erf(a))
    return total


_TB_Z = _twobump_mass()


def _twobump_ext(x):
    return _twobump_raw(x) / _TB_Z


def _twobump_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= 1), _twobump_raw(x) / _TB_Z, 0.0)


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _const(c):
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


_CATALOG = (
    TruthSpec(
        "truncnorm", (-2.0, 2.0), 2.0, (-0.5, 0.5), _truncnorm_pdf,
        {1: lambda x: -np.asarray(x, dtype=float), 2: _const(-1.0), 3: _zero, 4: _zero},
        strictly_positive=True, extension=_truncnorm_ext,
    ),
    TruthSpec(
        "bump", (-1.0, 1.0), 2.0, (-0.5, 0.5), _bump_pdf,
        {
            1: lambda x: -2.0 * x / (1.0 - x * x) ** 2,
            2: lambda x: -2.0 / (1.0 - x * x) ** 2 - 8.0 * x * x / (1.0 - x * x) ** 3,
        },
    ),
    TruthSpec(
        "beta33", (0.0, 1.0), 2.0, (0.25, 0.75), _beta33_pdf,
        {
            1: lambda x: 2.0 / x - 2.0 / (1.0 - x),
            2: lambda x: -2.0 / x**2 - 2.0 / (1.0 - x) ** 2,
        },
        extension=_beta33_ext,
    ),
    TruthSpec(
        "twobump", (0.0, 1.0), 2.0, (0.0, 1.0), _twobump_pdf,
        strictly_positive=True, extension=_twobump_ext,
    ),
    TruthSpec(
        "uniform", (0.0, 1.0), 2.0, (0.0, 1.0), _uniform_pdf,
        {1: _zero, 2: _zero, 3: _zero, 4: _zero}, strictly_positive=True,
        extension=_const(1.0),
    ),
)


def catalog() -> list[TruthSpec]:
    return list(_CATALOG)


def get_truth(name: str) -> TruthSpec:
    for t in _CATALOG:
        if t.name == name:
            return t
    raise KeyError(f"unknown truth {name!r}; choose from {[t.name for t in _CATALOG]}")


@lru_cache(maxsize=64)
def _density(name: str, n: int) -> Density:
    t = get_truth(name)
    return Density.from_pdf(t.pdf, *t.support, n=n)


def check_assumption2(f: Density, a: float, b: float) -> tuple[bool, dict]:
    """Monotone tails around ``[a, b]`` and a positive floor on it."""
    x, v = f.x, f.values
    if a < f.lo - 1e-12 or b > f.hi + 1e-12 or a > b:
        raise NumericsError(f"[{a}, {b}] is not inside the support [{f.lo}, {f.hi}]")
    tol = 1e-9 * f.dx
    left = v[x <= a + tol]
    right = v[x >= b - tol]
    mid = v[(x >= a - tol) & (x <= b + tol)]
    left_ok = bool(np.all(np.diff(left) >= -MONOTONE_TOL)) if left.size > 1 else True
    right_ok = bool(np.all(np.diff(right) <= MONOTONE_TOL)) if right.size > 1 else True
    floor = float(mid.min()) if mid.size else 0.0
    ok = left_ok and right_ok and floor > 0
    return ok, {
        "nondecreasing_left": left_ok,
        "nonincreasing_right": right_ok,
        "min_on_interval": floor,
        "passed": ok,
    }


def log_deriv(truth: TruthSpec, j: int, x: float, h: float | None = None) -> float:
    """``d^j/dx^j log f0`` at an interior point.

    Uses the closed form when the truth provides one; otherwise a central
    difference of order ``j`` with step ``h`` (default: the default grid step).
    """
    a0, b0 = truth.support
    if j < 0 or int(j) != j:
        raise ValueError("derivative order must be a nonnegative integer")
    if j > max(1, math.floor(truth.beta)) and j not in truth.log_derivs:
        raise ValueError(f"derivative order {j} exceeds floor(beta) for {truth.name}")
    if not (a0 < x < b0):
        raise NumericsError(f"x={x} is not interior to the support [{a0}, {b0}]")
    if j == 0:
        return float(np.log(truth.pdf(np.array([x])))[0])
    if j in truth.log_derivs:
        return float(np.asarray(truth.log_derivs[j](np.array([x], dtype=float)))[0])
    return fd_log_deriv(truth, j, x, h)


def fd_log_deriv(truth: TruthSpec, j: int, x: float, h: float | None = None) -> float:
    a0, b0 = truth.support
    h = (b0 - a0) / (DEFAULT_N - 1) if h is None else h
    k = np.arange(j + 1)
    pts = x + (j / 2.0 - k) * h
    if pts.min() <= a0 or pts.max() >= b0:
        raise NumericsError("finite-difference stencil leaves the support")
    coef = np.array([(-1) ** kk * math.comb(j, kk) for kk in k], dtype=float)
    return float(coef @ np.log(truth.pdf(pts)) / h**j)


def beta_to_j(beta: float) -> int:
    """Correction level ``j`` with ``beta`` in ``(2j, 2j + 2]``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    return max(0, math.ceil(beta / 2.0) - 1)
