"""Divergences between gridded densities and the closed-form model bounds.

Hellinger convention: ``hellinger2`` returns ``int (sqrt f - sqrt g)^2``,
which ranges over ``[0, 2]``.  The model bound ``lemma1_bound`` is written in
the affinity form ``1 - int sqrt(f g)`` and is compared to ``hellinger2 / 2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .numerics import (
    Density,
    GridFunction,
    NumericsError,
    TransferFunction,
    _as_function,
    common_grid,
    integrate,
)

KL_FLOOR = 1e-12
KL_SUPPORT = 1e-10


class InfiniteDivergence(NumericsError):
    pass


@dataclass(frozen=True)
class DivergenceReport:
    h2: float
    kl: float
    v: float
    l1: float
    logsup: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> DivergenceReport:
        return cls(**json.loads(text))


def _masked_integral(f: GridFunction, values: np.ndarray, mask: np.ndarray | None) -> float:
    if mask is not None:
        values = np.where(mask, values, 0.0)
    return integrate(f.with_values(values))


def _interval_mask(x, eval_set):
    if eval_set is None:
        return None
    lo, hi = eval_set
    return (x >= lo - 1e-12) & (x <= hi + 1e-12)


def hellinger2(f, g) -> float:
    """``int (sqrt f - sqrt g)^2`` on a common grid (range ``[0, 2]``)."""
    f, g = common_grid(_as_function(f), _as_function(g))
    d = np.sqrt(np.clip(f.values, 0, None)) - np.sqrt(np.clip(g.values, 0, None))
    return integrate(f.with_values(d * d))


def hellinger(f, g) -> float:
    return math.sqrt(max(hellinger2(f, g), 0.0))


def l1(f, g) -> float:
    f, g = common_grid(_as_function(f), _as_function(g))
    return integrate(f.with_values(np.abs(f.values - g.values)))


def _interval_integral(g: GridFunction, a: float, b: float) -> float:
    """Trapezoid integral of ``g`` over ``[a, b]`` at spacing no coarser than ``g.dx``."""
    a, b = max(a, g.lo), min(b, g.hi)
    if b <= a:
        return 0.0
    n = max(int(math.ceil((b - a) / g.dx - 1e-9)) + 1, 2)
    return integrate(GridFunction(a, b, g(np.linspace(a, b, n))))


def _log_ratio_terms(f, g, floor, support, eval_set):
    # evaluated on f's own nodes: f log(f/g) is smooth inside the support of f
    # even when f jumps at its ends, so no halved jump value enters the log
    if not floor > 0:
        raise ValueError("floor must be positive")
    f, g = _as_function(f), _as_function(g)
    if f.hi < g.lo or g.hi < f.lo:
        raise NumericsError("functions have disjoint domains")
    fv = np.clip(f.values, 0.0, None)
    gv = g(f.x)
    active = fv > support
    emask = _interval_mask(f.x, eval_set)
    if emask is not None:
        active &= emask
    if not np.any(active):
        return f, fv, gv, active, np.zeros_like(fv)
    if np.all(gv[active] <= 0):
        raise InfiniteDivergence("infinite divergence: g vanishes wherever f is positive")
    gc = np.maximum(gv, floor)
    logr = np.zeros_like(fv)
    logr[active] = np.log(fv[active] / gc[active])
    return f, fv, gc, active, logr


def kl(f, g, floor: float = KL_FLOOR, eval_set=None, form: str = "plain",
       support: float = KL_SUPPORT) -> float:
    """Kullback-Leibler divergence ``int f log(f / g)``.

    Only nodes with ``f > support`` contribute and ``g`` is clamped below at
    ``floor``.  With ``eval_set=(lo, hi)`` the integral is restricted to that
    interval.  ``form="bregman"`` integrates the pointwise-nonnegative
    ``f log(f/g) - f + g`` instead, which equals the plain form over the whole
    line for unit-mass pairs and is the meaningful local version on a
    sub-interval.
    """
    ff, fv, gv, active, logr = _log_ratio_terms(f, g, floor, support, eval_set)
    if form == "plain":
        return _masked_integral(ff, np.where(active, fv * logr, 0.0), None)
    if form != "bregman":
        raise ValueError(f"unknown KL form {form!r}")
    vals = np.zeros_like(fv)
    r = np.zeros_like(fv)
    r[active] = (gv[active] - fv[active]) / fv[active]
    # f * (r - log(1 + r)) without cancellation for small r
    vals[active] = fv[active] * (r[active] - np.log1p(r[active]))
    # where f vanishes the integrand reduces to g
    inactive = np.where(active, 0.0, np.clip(gv, 0.0, None))
    if eval_set is not None:
        inactive = np.where(_interval_mask(ff.x, eval_set), inactive, 0.0)
    out = _masked_integral(ff, vals + inactive, None)
    gg = _as_function(g)
    lo, hi = (gg.lo, gg.hi) if eval_set is None else eval_set
    out += _interval_integral(gg, lo, min(hi, ff.lo)) + _interval_integral(gg, max(lo, ff.hi), hi)
    return out


def v_div(f, g, floor: float = KL_FLOOR, eval_set=None, support: float = KL_SUPPORT) -> float:
    """``int f log(f / g)^2`` with the same conventions as :func:`kl`."""
    f, fv, _, active, logr = _log_ratio_terms(f, g, floor, support, eval_set)
    return _masked_integral(f, np.where(active, fv * logr * logr, 0.0), None)


def lemma1_bound(mu1: TransferFunction | None, mu2: TransferFunction | None,
                 s1: float, s2: float, sup_dist: float | None = None) -> float:
    """Affinity-form Hellinger bound between two model densities.

    ``1 - sqrt(2 s1 s2 / (s1^2 + s2^2)) exp(-d^2 / (4 (s1^2 + s2^2)))`` with
    ``d`` the sup distance between the transfer functions.
    """
    if not (s1 > 0 and s2 > 0):
        raise ValueError("bandwidths must be positive")
    if sup_dist is None:
        sup_dist = mu1.sup_distance(mu2)
    ss = s1 * s1 + s2 * s2
    return 1.0 - math.sqrt(2.0 * s1 * s2 / ss) * math.exp(-sup_dist**2 / (4.0 * ss))


def lemma2_ratio(f0, fmodel, eval_set) -> float:
    """``log max f0 / fmodel`` over the nodes in ``eval_set``."""
    f, g = common_grid(_as_function(f0), _as_function(fmodel))
    mask = _interval_mask(f.x, eval_set)
    if not np.any(mask):
        raise NumericsError("evaluation set contains no grid nodes")
    gv = g.values[mask]
    fv = np.clip(f.values[mask], 0.0, None)
    if np.any(gv <= 0):
        raise NumericsError("model density vanishes on the evaluation set")
    return float(np.log(np.max(fv / gv)))


def report(f, g, eval_set=None, floor: float = KL_FLOOR) -> DivergenceReport:
    if eval_set is None:
        ff = _as_function(f)
        eval_set = (ff.lo, ff.hi)
    try:
        logsup = lemma2_ratio(f, g, eval_set)
    except NumericsError:
        logsup = math.inf
    return DivergenceReport(
        h2=hellinger2(f, g), kl=kl(f, g, floor), v=v_div(f, g, floor), l1=l1(f, g), logsup=logsup
    )

