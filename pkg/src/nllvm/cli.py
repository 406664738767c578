"""Command-line entry point: ``python -m nllvm <command> ...``.

Commands
--------
approx-check   sup-error order of ``phi_sigma * f_j`` over a bandwidth ladder
model-eval     model density for the quantile transfer of a truth
support-check  L1 support construction for a truth
fit            run the sampler on a CSV of observations
ratebench      posterior contraction experiment from a JSON config
run-all        every verification suite, summarized in one JSON file
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import approx, ratebench
from .model import eval_model_density, support_check, ygrid_for
from .numerics import (
    DEFAULT_N,
    KernelSpec,
    NumericsError,
    cdf_and_quantile,
    gaussian_convolve,
    integrate,
    sup_diff,
)
from .sampler import SamplerConfig, run_chain
from .truths import catalog, get_truth

log = logging.getLogger("nllvm")


def _ladder(text: str) -> list[float]:
    """Comma-separated bandwidths; ``2^-k`` and ``2**-k`` are accepted."""
    out = []
    for tok in text.split(","):
        tok = tok.strip().replace("**", "^")
        if "^" in tok:
            base, exp = tok.split("^")
            out.append(float(base) ** float(exp))
        else:
            out.append(float(tok))
    return out


def _dump(obj, path: Path | None) -> None:
    text = json.dumps(obj, indent=2, default=ratebench._json_default)
    if path is None:
        print(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def cmd_approx_check(args) -> int:
    f0 = get_truth(args.truth).density()
    ext = get_truth(args.truth).extension if args.extension == "analytic" else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore" if args.quiet else "default")
        fit = approx.order_check_sup(f0, args.j, args.sigma_ladder, margin=args.margin,
                                     target=args.target, extension=ext)
    out = Path(args.out) if args.out else None
    _dump({"truth": args.truth, "j": args.j, "target": args.target, **fit.to_dict()},
          out / "order_fit.json" if out else None)
    if out:
        with open(out / "rungs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sigma", "sup_error"])
            w.writerows(zip(fit.sigmas, fit.errors))
    return 0


def cmd_model_eval(args) -> int:
    f0 = get_truth(args.truth).density()
    mu0 = cdf_and_quantile(f0, args.m)
    grid = ygrid_for(mu0, args.sigma, like=f0.grid)
    dens = eval_model_density(mu0, args.sigma, grid, args.method, mass_tol=1e-4)
    smooth = gaussian_convolve(f0.f, KernelSpec(args.sigma))
    rep = {"truth": args.truth, "sigma": args.sigma, "m": args.m, "method": args.method,
           "mass": integrate(dens.f),
           "sup_diff_vs_smoothed_truth": sup_diff(dens, smooth)}
    out = Path(args.out) if args.out else None
    _dump(rep, out / "model_eval.json" if out else None)
    if out:
        dens.f.to_csv(out / "model_density.csv")
    return 0


def cmd_support_check(args) -> int:
    f0 = get_truth(args.truth).density()
    rep = support_check(f0, args.eps)
    out = Path(args.out) if args.out else None
    _dump({"truth": args.truth, **rep.to_dict()}, out / "support.json" if out else None)
    if out:
        mu0 = cdf_and_quantile(f0, DEFAULT_N - 1)
        grid = ygrid_for(mu0, rep.sigma0, like=f0.grid)
        eval_model_density(mu0, rep.sigma0, grid, mass_tol=1e-4).f.to_csv(out / "support_density.csv")
    return 0 if rep.success else 1


def _read_y(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and "y" not in rows[0]:
        raise ValueError("data CSV needs a column named 'y'")
    return np.array([float(r["y"]) for r in rows])


def cmd_fit(args) -> int:
    cfg = SamplerConfig.from_json(args.config) if args.config else SamplerConfig()
    y = _read_y(args.data)
    log.info("fitting n=%d observations, %d sweeps", y.size, cfg.burn_in + cfg.keep * cfg.thin)
    chain = run_chain(y, cfg, args.seed)
    chain.write(args.out)
    log.info("wrote %s (%.1f s)", args.out, chain.runtime_s)
    return 0


def cmd_ratebench(args) -> int:
    cfg = ratebench.RateExperimentConfig.from_json(args.config)
    if args.workers is not None:
        from dataclasses import replace

        cfg = replace(cfg, workers=args.workers)

    def progress(row):
        log.info("n=%d r=%d h=%.4f (%.1f s)%s", row["n"], row["replicate"], row["hellinger"],
                 row["runtime_s"], " FAILED" if row["failed"] else "")

    rep = ratebench.run_ratebench(cfg, progress=progress)
    rep.write(args.out)
    log.info("plain slope %.3f, window [%.3f, %.3f], pass=%s", rep.fit["plain_slope"], *rep.window, rep.passed)
    return 0 if rep.passed else 1


def cmd_run_all(args) -> int:
    summary = ratebench.run_all_checks(args.out, seed=args.seed, quick=args.quick)
    for name, res in summary["suites"].items():
        log.info("%-16s %s (%.1f s)", name, res["status"], res["runtime_s"])
    return 0 if all(r["status"] == "pass" for r in summary["suites"].values()) else 1


def build_parser() -> argparse.ArgumentParser:
    names = [t.name for t in catalog()]
    p = argparse.ArgumentParser(prog="nllvm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("approx-check", help="order of the convolution corrections")
    a.add_argument("--truth", choices=names, required=True)
    a.add_argument("--j", type=int, default=0)
    a.add_argument("--sigma-ladder", type=_ladder, default=list(approx.SIGMA_LADDER))
    a.add_argument("--target", choices=("fj", "hbeta"), default="fj")
    a.add_argument("--extension", choices=("zero", "analytic"), default="zero")
    a.add_argument("--margin", type=float, default=None)
    a.add_argument("--out", default=None, help="directory for order_fit.json and rungs.csv")
    a.add_argument("--quiet", action="store_true", help="silence floor warnings")
    a.set_defaults(func=cmd_approx_check)

    m = sub.add_parser("model-eval", help="model density at the quantile transfer of a truth")
    m.add_argument("--truth", choices=names, required=True)
    m.add_argument("--sigma", type=float, required=True)
    m.add_argument("--m", type=int, default=DEFAULT_N - 1, help="latent nodes")
    m.add_argument("--method", choices=("trapezoid", "exact"), default="trapezoid")
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_model_eval)

    s = sub.add_parser("support-check", help="L1 support construction")
    s.add_argument("--truth", choices=names, required=True)
    s.add_argument("--eps", type=float, default=0.05)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_support_check)

    f = sub.add_parser("fit", help="run the sampler on observed data")
    f.add_argument("--data", required=True, help="CSV with a 'y' column")
    f.add_argument("--config", default=None, help="JSON sampler config")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("ratebench", help="posterior contraction experiment")
    r.add_argument("--config", required=True, help="JSON experiment config")
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int, default=None)
    r.set_defaults(func=cmd_ratebench)

    k = sub.add_parser("run-all", help="every verification suite")
    k.add_argument("--out", default="checks_out")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--quick", action="store_true", help="smaller ladders and Monte Carlo sizes")
    k.set_defaults(func=cmd_run_all)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (NumericsError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
