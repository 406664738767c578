"""Verification suites for the approximation lemmas, the prior and the sampler.

Every suite takes ``seed`` and ``quick`` keywords and returns a JSON-ready
dict with a ``status`` of ``"pass"`` or ``"fail"`` plus the numbers the
verdict rests on.  ``quick=True`` shrinks ladders and Monte Carlo sizes for
smoke runs; the verdicts are only meaningful at the default sizes.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import stats

from .approx import (
    NUMERICAL_FLOOR,
    SIGMA_LADDER,
    build_fj_binomial,
    build_fj_iterative,
    fit_order,
    kl_order_check,
    normalizer_check,
    order_check_sup,
    tail_order_check,
)
from .divergences import lemma1_bound
from .model import eval_model_density, lemma1_empirical, support_check, ygrid_for
from .numerics import TransferFunction, cdf_and_quantile, gaussian_convolve, KernelSpec, sup_diff
from .prior import GPConfig, RescaleDensity, smallball_mc_multi
from .sampler import SamplerConfig, prior_reference, run_chain
from .truths import catalog, get_truth

SUP_TARGETS = {0: (2.0, 0.2), 1: (4.0, 0.4)}
KL_TARGET = (4.0, 0.5)
KL_J1_MIN = 6.0
BOUND_SLACK = 1e-6
SUPPORT_EPS = 0.05
SMALLBALL_DELTAS = (2.0, 1.0, 0.5, 0.25)
SMALLBALL_SE = 3.0
KS_MAX = 0.05


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def _fit_dict(fit) -> dict:
    d = fit.to_dict()
    return {k: d[k] for k in ("slope", "intercept", "sigmas", "errors", "dropped", "floor_limited", "floor")}


def binomial_equivalence(quick: bool = False) -> dict:
    """Largest ``sup |f_j iterative - f_j binomial|`` over truths, ``j`` and ``sigma``."""
    sigmas = (2.0**-4,) if quick else (2.0**-4, 2.0**-5, 2.0**-6)
    js = (1, 2) if quick else (1, 2, 3, 4)
    worst, cells = 0.0, []
    for t in catalog():
        f0 = t.density()
        for j in js:
            for s in sigmas:
                d = sup_diff(build_fj_iterative(f0, s, j), build_fj_binomial(f0, s, j))
                cells.append({"truth": t.name, "j": j, "sigma": s, "sup_diff": d})
                worst = max(worst, d)
    return {"status": _status(worst <= 1e-10), "max_sup_diff": worst, "cells": cells}


def change_of_variables(quick: bool = False, method: str = "trapezoid") -> dict:
    """``sup |f_{mu0, sigma} - phi_sigma * f0|`` with ``mu0`` the quantile function."""
    sigmas = (2.0**-3, 2.0**-6) if quick else tuple(2.0**-k for k in range(3, 7))
    worst, cells = 0.0, []
    for t in catalog():
        if not t.strictly_positive:
            continue
        f0 = t.density()
        mu0 = cdf_and_quantile(f0, f0.f.n - 1)
        for s in sigmas:
            grid = ygrid_for(mu0, s, like=f0.grid)
            dens = eval_model_density(mu0, s, grid, method)
            smooth = gaussian_convolve(f0.f, KernelSpec(s))
            d = sup_diff(dens, smooth)
            cells.append({"truth": t.name, "sigma": s, "sup_diff": d})
            worst = max(worst, d)
    return {"status": _status(worst <= 1e-4), "max_sup_diff": worst, "cells": cells}


def approx_order(seed: int = 0, quick: bool = False) -> dict:
    f0 = get_truth("truncnorm").density()
    ladder = SIGMA_LADDER[:3] if quick else SIGMA_LADDER
    out, ok = {}, True
    for j in (0, 1, 2):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = order_check_sup(f0, j, ladder)
        out[f"j{j}"] = _fit_dict(fit)
        if j in SUP_TARGETS:
            target, tol = SUP_TARGETS[j]
            ok &= abs(fit.slope - target) <= tol
    return {"status": _status(ok), "truth": "truncnorm", "slopes": {k: v["slope"] for k, v in out.items()},
            "fits": out}


def kl_order(seed: int = 0, quick: bool = False) -> dict:
    f0 = get_truth("truncnorm").density()
    ladder = SIGMA_LADDER[:3] if quick else SIGMA_LADDER
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f0fit = kl_order_check(f0, 0, ladder)
        f1fit = kl_order_check(f0, 1, ladder)
    ok0 = abs(f0fit.slope - KL_TARGET[0]) <= KL_TARGET[1]
    ok1 = f1fit.slope >= KL_J1_MIN if not f1fit.floor_limited else True
    return {
        "status": _status(ok0 and ok1), "truth": "truncnorm",
        "slopes": {"j0": f0fit.slope, "j1": f1fit.slope},
        "j1_floor_limited": f1fit.floor_limited, "floor": f1fit.floor,
        "fits": {"j0": _fit_dict(f0fit), "j1": _fit_dict(f1fit)},
    }


def tail(seed: int = 0, quick: bool = False) -> dict:
    bump = get_truth("bump")
    ladder = SIGMA_LADDER[:3] if quick else SIGMA_LADDER
    fit, pairs = tail_order_check(bump.density(), bump.beta, ladder)
    ok = fit.slope >= 2.0 * bump.beta - 0.5
    zeros = {}
    for t in catalog():
        if not t.strictly_positive:
            continue
        H = 2.0 * t.beta
        floor = t.min_on_support
        rungs = [s for s in ladder if s**H < floor]
        with warnings.catch_warnings():
            # exact zeros are the expected outcome here
            warnings.simplefilter("ignore")
            _, pp = tail_order_check(t.density(), t.beta, rungs, H=H) if len(rungs) >= 2 else (None, [])
        vals = [p[0] for p in pp]
        zeros[t.name] = {"sigmas": rungs, "tail": vals, "floor": floor}
        ok &= all(v == 0.0 for v in vals)
    return {"status": _status(ok), "truth": "bump", "H": 2.0 * bump.beta, "slope": fit.slope,
            "fit": _fit_dict(fit), "smooth_tails": [p[1] for p in pairs], "strictly_positive": zeros}


def normalizer(seed: int = 0, quick: bool = False, j: int = 1) -> dict:
    """Normalizer order and positivity of ``f_j`` with the analytic extension of ``f0``.

    The zero-extension normalizer is reported alongside as a diagnostic.
    """
    ladder = SIGMA_LADDER[:3] if quick else SIGMA_LADDER
    per, ok = {}, True
    for t in catalog():
        f0 = t.density()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = normalizer_check(f0, j, ladder, extension=t.extension)
            zrep = normalizer_check(f0, j, ladder)
        slope = None if rep.fit is None else rep.fit.slope
        # normalizer order over every rung, positive or not (diagnostic)
        devs = [abs(z - 1.0) for z in rep.normalizers]
        all_slope = None
        if sum(d >= NUMERICAL_FLOOR for d in devs) >= 2:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                all_slope = fit_order(rep.sigmas, devs).slope
        exact = rep.threshold is not None and max(abs(z - 1.0) for z in rep.normalizers) < 1e-12
        entry = {
            "threshold": rep.threshold, "normalizers": rep.normalizers, "positive": rep.positive,
            "min_ratio": rep.min_ratio, "slope": slope, "exact": exact, "slope_all_rungs": all_slope,
            "zero_extension": {"normalizers": zrep.normalizers,
                               "slope": None if zrep.fit is None else zrep.fit.slope},
        }
        if rep.threshold is not None:
            accepted = [p for s, p in zip(rep.sigmas, rep.positive) if s <= rep.threshold]
            slope_ok = exact or (slope is not None and not math.isnan(slope) and slope >= t.beta - 0.5)
            entry["pass"] = bool(slope_ok and all(accepted))
            ok &= entry["pass"]
        else:
            entry["pass"] = None
        per[t.name] = entry
    return {"status": _status(ok), "j": j, "extension": "analytic", "truths": per,
            "thresholds": {k: v["threshold"] for k, v in per.items()}}


def _random_transfer(rng, m: int) -> TransferFunction:
    kind = rng.integers(3)
    if kind == 0:
        v = np.cumsum(np.abs(rng.normal(size=m))) / m * rng.uniform(0.5, 4.0)
    elif kind == 1:
        v = rng.normal(scale=rng.uniform(0.1, 2.0), size=m)
    else:
        u = np.linspace(0.0, 1.0, m)
        v = rng.uniform(-2, 2) * np.sin(2 * np.pi * rng.uniform(0.5, 3.0) * u + rng.uniform(0, 6))
    return TransferFunction(v + rng.uniform(-1, 1))


def hellinger_bound(seed: int = 0, quick: bool = False) -> dict:
    rng = np.random.default_rng(seed)
    trials = 50 if quick else 1000
    violations, worst_gap, ratios = 0, -math.inf, []
    for _ in range(trials):
        m = int(rng.integers(4, 33))
        mu1 = _random_transfer(rng, m)
        mu2 = TransferFunction(mu1.values + rng.normal(scale=rng.uniform(0.01, 1.0), size=m)) \
            if rng.random() < 0.5 else _random_transfer(rng, m)
        s1, s2 = np.exp(rng.uniform(math.log(0.05), math.log(1.0), 2))
        h2half, bound = lemma1_empirical(mu1, mu2, float(s1), float(s2))
        gap = h2half - bound
        worst_gap = max(worst_gap, gap)
        violations += gap > BOUND_SLACK
        if bound > 0:
            ratios.append(h2half / bound)
    return {"status": _status(violations == 0), "trials": trials, "violations": int(violations),
            "max_excess": worst_gap, "median_tightness": float(np.median(ratios))}


def support(seed: int = 0, quick: bool = False) -> dict:
    per, ok = {}, True
    for t in catalog():
        rep = support_check(t.density(), SUPPORT_EPS)
        per[t.name] = rep.to_dict()
        ok &= rep.success
    return {"status": _status(ok), "eps": SUPPORT_EPS, "truths": per}


def smallball(seed: int = 0, quick: bool = False, n_draws: int | None = None) -> dict:
    cfg = GPConfig()
    rd = RescaleDensity()
    n_draws = (20_000 if quick else 400_000) if n_draws is None else n_draws
    truths = catalog()
    mu0s = [cdf_and_quantile(t.density(), cfg.M * 16) for t in truths]
    res = smallball_mc_multi(mu0s, SMALLBALL_DELTAS, n_draws, rd, cfg, rng_seed=seed)
    per, ok = {}, True
    for t, row in zip(truths, res):
        est = [b.estimate for b in row]
        se = [b.se for b in row]
        i = SMALLBALL_DELTAS.index(0.5)
        positive = est[i] > 0 and est[i] >= SMALLBALL_SE * se[i]
        monotone = all(b <= a for a, b in zip(est, est[1:]))
        per[t.name] = {"deltas": SMALLBALL_DELTAS, "estimates": est, "se": se,
                       "hits": [b.hits for b in row], "positive_at_0.5": bool(positive),
                       "monotone": bool(monotone)}
        ok &= positive and monotone
    return {"status": _status(ok), "n_draws": n_draws, "truths": per}


def prior_recovery(seed: int = 0, quick: bool = False, keep: int | None = None,
                   rescale_update: str = "interweave") -> dict:
    keep = (2000 if quick else 10_000) if keep is None else keep
    cfg = SamplerConfig(burn_in=2000, keep=keep, thin=5, rescale_update=rescale_update)
    chain = run_chain(np.zeros(0), cfg, seed, record_every_sweep=False)
    ref = prior_reference(cfg, 100_000, seed + 1)
    ks = {
        "sigma": float(stats.kstest(chain.column("sigma"), cfg.sigma.cdf).statistic),
        "a": float(stats.kstest(chain.column("a"), cfg.rescale.cdf).statistic),
        "mu_sup": float(stats.ks_2samp(chain.column("mu_sup"), ref["mu_sup"]).statistic),
    }
    return {"status": _status(all(v < KS_MAX for v in ks.values())), "kept": keep, "ks": ks,
            "rescale_update": rescale_update, "acceptance": chain.acceptance_rates}


SUITES = {
    "approx_order": approx_order,
    "kl_order": kl_order,
    "tail": tail,
    "normalizer": normalizer,
    "hellinger_bound": hellinger_bound,
    "support": support,
    "smallball": smallball,
    "prior_recovery": prior_recovery,
}
