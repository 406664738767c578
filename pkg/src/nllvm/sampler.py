"""Gibbs / Metropolis sampler for ``(mu, sigma, A, eta_1..eta_n)``.

Each sweep updates, in order,

* ``eta`` given ``(mu, sigma)``: independent draws from
  ``p(eta_i | .) ~ phi_sigma(y_i - mu(eta_i))`` on ``(0, 1)``.  The default
  ``eta_method="segment"`` is exact for piecewise-linear ``mu``: a segment is
  chosen by its integrated weight and ``mu(eta_i)`` is then a truncated
  normal inside that segment.  ``"griddy"`` weighs the latent nodes and
  jitters uniformly within the chosen node's cell.
* ``mu`` given ``(eta, sigma, A)``: exact conjugate Gaussian draw.  The GP is
  whitened, ``mu = L_a z`` with ``K_a + jitter I = L_a L_a^T``, and the
  interpolation matrix ``B`` from node values to ``mu(eta_i)`` enters the
  posterior precision ``I + L_a^T B^T B L_a / sigma^2``.
* ``sigma``: random-walk Metropolis on ``log sigma`` (inverse-gamma prior on
  ``sigma``).
* ``A``: random-walk Metropolis on ``log a``.  The default ``"whitened"``
  move keeps ``z`` fixed so ``mu`` moves with ``a`` and the ratio uses the
  data likelihood.  ``"centered"`` keeps ``mu`` fixed and uses the GP density
  ratio of ``mu`` under ``K_a'`` versus ``K_a``.  ``"interweave"`` runs the
  whitened move and then the centered one, each with its own step size; the
  two parameterizations are slow in opposite regimes (small and large ``n``).

Step sizes adapt towards the target acceptance during burn-in only.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import ndtr, ndtri

from .model import model_values, segment_weights
from .numerics import Density, Grid, GridFunction, NumericsError, TransferFunction, integrate
from .prior import FactorizationError, GPConfig, RescaleDensity, SigmaPrior, gp_cholesky, sigma_prior_logpdf

ETA_EPS = 1e-9
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SamplerConfig:
    gp: GPConfig = field(default_factory=GPConfig)
    rescale: RescaleDensity = field(default_factory=RescaleDensity)
    sigma: SigmaPrior = field(default_factory=SigmaPrior)
    burn_in: int = 2000
    keep: int = 2000
    thin: int = 5
    target_accept: float = 0.35
    sigma_step: float = 0.2
    a_step: float = 0.5
    eta_method: str = "segment"
    rescale_update: str = "interweave"
    density_nodes: int = 1025
    store_etas: bool = True

    def __post_init__(self):
        if self.burn_in < 0 or self.keep < 0 or self.thin < 1:
            raise ValueError("burn_in, keep must be >= 0 and thin >= 1")
        if self.eta_method not in ("segment", "griddy"):
            raise ValueError(f"unknown eta_method {self.eta_method!r}")
        if self.rescale_update not in ("whitened", "centered", "interweave"):
            raise ValueError(f"unknown rescale_update {self.rescale_update!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SamplerConfig:
        """Build from a mapping with optional ``gp``, ``rescale`` and ``sigma``
        sections (``sigma`` takes ``a``, ``b``).  Sampler settings may sit at
        the top level or in a ``sampler`` section; unknown keys are errors."""
        d = dict(d)
        gp = GPConfig(**d.pop("gp", {}))
        rescale = RescaleDensity(**d.pop("rescale", {}))
        sig = d.pop("sigma", {})
        sp = SigmaPrior(sig.get("a", sig.get("a_sigma", 2.0)), sig.get("b", sig.get("b_sigma", 0.5)))
        flat = {**d.pop("sampler", {}), **d}
        return cls(gp=gp, rescale=rescale, sigma=sp, **flat)

    @classmethod
    def from_json(cls, path) -> SamplerConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ModelState:
    mu: TransferFunction
    sigma: float
    a: float
    etas: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be positive and finite")
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError("a must be positive and finite")
        if self.etas is not None:
            e = np.asarray(self.etas)
            if e.size and (np.any(e <= 0) | np.any(e >= 1) | ~np.all(np.isfinite(e))):
                raise ValueError("etas must lie strictly inside (0, 1)")


@dataclass
class Chain:
    states: list
    acceptance_rates: dict
    seed: int
    config: dict
    diagnostics: list = field(repr=False, default_factory=list)
    density_grid: Grid | None = None
    posterior_mean: np.ndarray | None = field(repr=False, default=None)
    forced_eta_moves: int = 0
    runtime_s: float = 0.0

    def posterior_mean_density(self, mass_tol: float = 1e-3) -> Density:
        if self.posterior_mean is None:
            raise NumericsError("chain has no posterior-mean density (no data or no kept states)")
        return Density(GridFunction.on(self.density_grid, self.posterior_mean), mass_tol)

    def posterior_mass(self) -> float:
        return integrate(GridFunction.on(self.density_grid, self.posterior_mean))

    def column(self, name: str) -> np.ndarray:
        if name == "mu_sup":
            return np.array([float(np.max(np.abs(s.mu.values))) for s in self.states])
        return np.array([getattr(s, name) for s in self.states])

    def summary(self) -> dict:
        out = {
            "seed": self.seed,
            "kept": len(self.states),
            "acceptance_rates": self.acceptance_rates,
            "forced_eta_moves": self.forced_eta_moves,
            "runtime_s": self.runtime_s,
            "config": self.config,
        }
        if self.states:
            for name in ("sigma", "a", "mu_sup"):
                col = self.column(name)
                out[name] = {"mean": float(col.mean()), "sd": float(col.std()),
                             "q05": float(np.quantile(col, 0.05)), "q95": float(np.quantile(col, 0.95))}
        if self.posterior_mean is not None:
            out["posterior_mass"] = self.posterior_mass()
        return out

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "chain_summary.json").write_text(json.dumps(self.summary(), indent=2, default=str))
        if self.posterior_mean is not None:
            GridFunction.on(self.density_grid, self.posterior_mean).to_csv(out / "posterior_mean_density.csv")
        if self.diagnostics:
            with open(out / "diagnostics.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(self.diagnostics[0]))
                w.writeheader()
                w.writerows(self.diagnostics)


class ChainError(RuntimeError):
    def __init__(self, msg, partial: Chain):
        super().__init__(msg)
        self.partial = partial


# ---------------------------------------------------------------------------
# helpers


def interp_rows(etas: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Left node index and weight of the right node for each ``eta``."""
    s = np.asarray(etas) * (m - 1)
    k = np.clip(np.floor(s).astype(int), 0, m - 2)
    return k, s - k


def mu_at(mu: np.ndarray, etas: np.ndarray) -> np.ndarray:
    k, w = interp_rows(etas, mu.size)
    return (1.0 - w) * mu[k] + w * mu[k + 1]


def _gram(etas: np.ndarray, y: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """``B^T B`` and ``B^T y`` for the linear-interpolation design."""
    k, w = interp_rows(etas, m)
    btb = np.zeros((m, m))
    np.add.at(btb, (k, k), (1.0 - w) ** 2)
    np.add.at(btb, (k + 1, k + 1), w * w)
    off = np.zeros(m - 1)
    np.add.at(off, k, (1.0 - w) * w)
    idx = np.arange(m - 1)
    btb[idx, idx + 1] += off
    btb[idx + 1, idx] += off
    bty = np.zeros(m)
    np.add.at(bty, k, (1.0 - w) * y)
    np.add.at(bty, k + 1, w * y)
    return btb, bty


def loglik(y: np.ndarray, mu: np.ndarray, etas: np.ndarray, sigma: float) -> float:
    if y.size == 0:
        return 0.0
    r = y - mu_at(mu, etas)
    return float(-y.size * (math.log(sigma) + 0.5 * _LOG_2PI) - 0.5 * (r @ r) / sigma**2)


def gp_logpdf(mu: np.ndarray, L: np.ndarray) -> float:
    v = solve_triangular(L, mu, lower=True)
    return float(-np.sum(np.log(np.diag(L))) - 0.5 * (v @ v) - 0.5 * mu.size * _LOG_2PI)


class _Cholesky:
    """``L_a`` factors for the current and proposed rescale values."""

    def __init__(self, cfg: GPConfig):
        self.cfg = cfg
        self._cache: dict[float, np.ndarray] = {}

    def __call__(self, a: float) -> np.ndarray:
        L = self._cache.get(a)
        if L is None:
            L, _ = gp_cholesky(a, self.cfg.M, self.cfg.jitter)
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[a] = L
        return L


# ---------------------------------------------------------------------------
# block updates


def update_mu_z(z_state: dict, y: np.ndarray, rng, L: np.ndarray) -> np.ndarray:
    """Conjugate draw of the whitened coordinates ``z`` (``mu = L z``)."""
    m = L.shape[0]
    xi = rng.standard_normal(m)
    etas, sigma = z_state["etas"], z_state["sigma"]
    if y.size == 0:
        return xi
    btb, bty = _gram(etas, y, m)
    P = np.eye(m) + L.T @ btb @ L / sigma**2
    b = L.T @ bty / sigma**2
    try:
        C = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("posterior precision is not positive definite") from exc
    mean = cho_solve((C, True), b)
    return mean + solve_triangular(C.T, xi, lower=False)


def update_mu(state: ModelState, data, rng, cfg: GPConfig | None = None) -> TransferFunction:
    """Exact conjugate draw of ``mu`` at the latent nodes given ``(eta, sigma, a)``."""
    cfg = GPConfig(M=state.mu.m) if cfg is None else cfg
    y = np.asarray(data, dtype=float)
    L, _ = gp_cholesky(state.a, cfg.M, cfg.jitter)
    etas = np.zeros(0) if state.etas is None else np.asarray(state.etas)
    z = update_mu_z({"etas": etas, "sigma": state.sigma}, y, rng, L)
    return TransferFunction(L @ z)


def _truncnorm_between(y, sigma, lo, hi, u):
    """Draws from ``N(y, sigma^2)`` truncated to ``[lo, hi]`` by inversion."""
    a = (lo - y) / sigma
    b = (hi - y) / sigma
    upper = (a + b) > 0
    # lower side: Phi(a) + u (Phi(b) - Phi(a)); upper side mirrored
    pa = np.where(upper, ndtr(-b), ndtr(a))
    pb = np.where(upper, ndtr(-a), ndtr(b))
    z = ndtri(np.clip(pa + u * (pb - pa), 1e-300, 1.0))
    z = np.where(upper, -z, z)
    z = np.where(pb > pa, z, 0.5 * (a + b))
    return y + sigma * np.clip(z, a, b)


def eta_weights(mu: np.ndarray, sigma: float, y: np.ndarray, method: str = "segment") -> np.ndarray:
    """Normalized conditional weights of each segment (or node) for every ``y_i``."""
    if method == "segment":
        w = segment_weights(mu, sigma, y)
    else:
        h = 1.0 / (mu.size - 1)
        cw = np.full(mu.size, h)
        cw[0] = cw[-1] = 0.5 * h
        z = (y[:, None] - mu[None, :]) / sigma
        w = np.exp(-0.5 * z * z) * cw[None, :]
    tot = w.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, w / tot, 0.0)


def update_etas(state: ModelState, data, rng, method: str = "segment") -> tuple[np.ndarray, int]:
    """Draw every ``eta_i`` from its conditional; returns ``(etas, forced)``.

    ``forced`` counts observations whose weights all underflowed; those
    ``eta_i`` are redrawn from ``U(0, 1)``.
    """
    y = np.asarray(data, dtype=float)
    n = y.size
    if n == 0:
        return np.zeros(0), 0
    mu = np.asarray(state.mu.values)
    m = mu.size
    h = 1.0 / (m - 1)
    if method == "segment":
        raw = segment_weights(mu, state.sigma, y)
    else:
        cw = np.full(m, h)
        cw[0] = cw[-1] = 0.5 * h
        zz = (y[:, None] - mu[None, :]) / state.sigma
        raw = np.exp(-0.5 * zz * zz) * cw[None, :]
    cum = np.cumsum(raw, axis=1)
    tot = cum[:, -1]
    forced = ~(tot > 0)
    u1 = rng.random(n)
    u2 = rng.random(n)
    k = np.minimum((cum < (u1 * tot)[:, None]).sum(axis=1), raw.shape[1] - 1)
    if method == "segment":
        ma, mb = mu[k], mu[k + 1]
        dm = mb - ma
        flat = np.abs(dm) < 1e-12 * max(state.sigma, 1.0)
        lo, hi = np.minimum(ma, mb), np.maximum(ma, mb)
        x = _truncnorm_between(y, state.sigma, lo, hi, u2)
        frac = np.where(flat, u2, (x - ma) / np.where(flat, 1.0, dm))
        etas = (k + np.clip(frac, 0.0, 1.0)) * h
    else:
        left = np.maximum(k * h - 0.5 * h, 0.0)
        right = np.minimum(k * h + 0.5 * h, 1.0)
        etas = left + u2 * (right - left)
    r = rng.random(n)
    etas = np.where(forced, r, etas)
    return np.clip(etas, ETA_EPS, 1.0 - ETA_EPS), int(forced.sum())


def _mh(logp_cur: float, logp_new: float, rng) -> bool:
    d = logp_new - logp_cur
    return bool(d >= 0 or rng.random() < math.exp(d))


def update_sigma(state: ModelState, data, rng, sp: SigmaPrior, step: float) -> tuple[float, bool]:
    """One random-walk Metropolis step on ``log sigma``."""
    y = np.asarray(data, dtype=float)
    etas = np.zeros(0) if state.etas is None else np.asarray(state.etas)
    mu = np.asarray(state.mu.values)
    s0 = state.sigma
    s1 = s0 * math.exp(step * rng.standard_normal())
    if not (s1 > 0 and math.isfinite(s1)):
        return s0, False

    def target(s):
        return loglik(y, mu, etas, s) + sigma_prior_logpdf(s, sp) + math.log(s)

    if _mh(target(s0), target(s1), rng):
        return s1, True
    return s0, False


def update_rescale(state: ModelState, data, rng, rd: RescaleDensity, cfg: GPConfig, step: float,
                   z: np.ndarray | None = None, mode: str = "whitened",
                   chol=None) -> tuple[float, np.ndarray, bool]:
    """One random-walk Metropolis step on ``log a``; returns ``(a, mu, accepted)``.

    A failed factorization or a proposal outside the truncation is rejected.
    """
    chol = _Cholesky(cfg) if chol is None else chol
    y = np.asarray(data, dtype=float)
    etas = np.zeros(0) if state.etas is None else np.asarray(state.etas)
    mu = np.asarray(state.mu.values)
    a0 = state.a
    a1 = a0 * math.exp(step * rng.standard_normal())
    u = rng.random()
    if not rd.in_support(a1):
        return a0, mu, False
    try:
        L1 = chol(a1)
        L0 = chol(a0)
    except FactorizationError:
        return a0, mu, False
    prior = float(rd.log_unnorm(a1) - rd.log_unnorm(a0)) + math.log(a1 / a0)
    if mode == "whitened":
        if z is None:
            z = solve_triangular(L0, mu, lower=True)
        mu1 = L1 @ z
        d = loglik(y, mu1, etas, state.sigma) - loglik(y, mu, etas, state.sigma) + prior
    else:
        mu1 = mu
        d = gp_logpdf(mu, L1) - gp_logpdf(mu, L0) + prior
    if d >= 0 or u < math.exp(d):
        return a1, mu1, True
    return a0, mu, False


# ---------------------------------------------------------------------------
# chain driver


def _adapt(log_step: float, accepted: bool, t: int, target: float) -> float:
    return log_step + (float(accepted) - target) / (t + 10) ** 0.6


def default_density_grid(y: np.ndarray, nodes: int) -> Grid | None:
    if y.size == 0:
        return None
    lo, hi = float(y.min()), float(y.max())
    w = max(hi - lo, 1e-3)
    return Grid(lo - 0.5 * w, hi + 0.5 * w, nodes)


def _initial_state(y: np.ndarray, cfg: SamplerConfig, rng, chol) -> tuple[dict, np.ndarray]:
    m = cfg.gp.M
    if cfg.gp.a_fixed is not None:
        a = cfg.gp.a_fixed
    else:
        a = float(cfg.rescale.sample(1, rng)[0])
    if y.size == 0:
        sigma = float(cfg.sigma.sample(1, rng)[0])
        z = rng.standard_normal(m)
        mu = chol(a) @ z
        etas = np.zeros(0)
    else:
        sigma = max(0.1 * float(np.std(y)), 1e-3)
        mu = np.quantile(y, np.linspace(0.0, 1.0, m))
        z = np.zeros(m)
        order = np.argsort(y)
        etas = np.empty(y.size)
        etas[order] = (np.arange(y.size) + 0.5) / y.size
    return {"mu": mu, "sigma": sigma, "a": a, "etas": etas}, z


def run_chain(data, config: SamplerConfig | None = None, seed: int = 0,
              density_grid: Grid | None = None, record_every_sweep: bool = True) -> Chain:
    """Burn-in, then ``keep`` states taken every ``thin`` sweeps."""
    cfg = SamplerConfig() if config is None else config
    y = np.asarray(data, dtype=float).ravel()
    rng = np.random.default_rng(seed)
    chol = _Cholesky(cfg.gp)
    st, z = _initial_state(y, cfg, rng, chol)
    grid = default_density_grid(y, cfg.density_nodes) if density_grid is None else density_grid
    dens_sum = None if grid is None else np.zeros(grid.n)
    log_ss, log_sa = math.log(cfg.sigma_step), math.log(cfg.a_step)
    log_sc = log_sa
    counts = {"sigma": [0, 0], "a": [0, 0]}
    if cfg.rescale_update == "interweave":
        counts["a_centered"] = [0, 0]
    kept: list[ModelState] = []
    diag: list[dict] = []
    forced_total = 0
    total = cfg.burn_in + cfg.keep * cfg.thin
    t0 = time.perf_counter()
    chain = Chain(kept, {}, seed, cfg.to_dict(), diag, grid)
    fix_a = cfg.gp.a_fixed is not None
    try:
        for t in range(total):
            burn = t < cfg.burn_in
            state = ModelState(TransferFunction(st["mu"]), st["sigma"], st["a"], None)
            etas, forced = update_etas(replace(state, etas=None), y, rng, cfg.eta_method)
            forced_total += forced
            st["etas"] = etas
            L = chol(st["a"])
            z = update_mu_z(st, y, rng, L)
            st["mu"] = L @ z
            state = ModelState(TransferFunction(st["mu"]), st["sigma"], st["a"], st["etas"])
            s_new, acc_s = update_sigma(state, y, rng, cfg.sigma, math.exp(log_ss))
            st["sigma"] = s_new
            acc_a = acc_c = False
            if not fix_a:
                first = "whitened" if cfg.rescale_update == "interweave" else cfg.rescale_update
                state = ModelState(TransferFunction(st["mu"]), st["sigma"], st["a"], st["etas"])
                a_new, mu_new, acc_a = update_rescale(state, y, rng, cfg.rescale, cfg.gp, math.exp(log_sa),
                                                      z=z, mode=first, chol=chol)
                if acc_a:
                    st["a"], st["mu"] = a_new, mu_new
                if cfg.rescale_update == "interweave":
                    state = ModelState(TransferFunction(st["mu"]), st["sigma"], st["a"], st["etas"])
                    st["a"], _, acc_c = update_rescale(state, y, rng, cfg.rescale, cfg.gp, math.exp(log_sc),
                                                       mode="centered", chol=chol)
            if burn:
                log_ss = _adapt(log_ss, acc_s, t, cfg.target_accept)
                if not fix_a:
                    log_sa = _adapt(log_sa, acc_a, t, cfg.target_accept)
                    log_sc = _adapt(log_sc, acc_c, t, cfg.target_accept)
            else:
                counts["sigma"][0] += acc_s
                counts["sigma"][1] += 1
                counts["a"][0] += acc_a
                counts["a"][1] += 1
                if "a_centered" in counts:
                    counts["a_centered"][0] += acc_c
                    counts["a_centered"][1] += 1
            if record_every_sweep:
                diag.append({
                    "sweep": t, "burn_in": int(burn), "sigma": st["sigma"], "a": st["a"],
                    "mu_sup": float(np.max(np.abs(st["mu"]))), "accept_sigma": int(acc_s),
                    "accept_a": int(acc_a), "forced_eta": forced,
                })
            if not burn and (t - cfg.burn_in + 1) % cfg.thin == 0:
                mu_tf = TransferFunction(st["mu"].copy())
                kept.append(ModelState(mu_tf, st["sigma"], st["a"],
                                       st["etas"].copy() if cfg.store_etas else None))
                if dens_sum is not None:
                    dens_sum += model_values(mu_tf, st["sigma"], grid.x, "exact")
    except Exception as exc:
        chain.forced_eta_moves = forced_total
        raise ChainError(f"chain aborted at sweep {t}: {exc}", chain) from exc
    chain.acceptance_rates = {
        k: (v[0] / v[1] if v[1] else float("nan")) for k, v in counts.items()
    }
    chain.acceptance_rates["sigma_step"] = math.exp(log_ss)
    chain.acceptance_rates["a_step"] = math.exp(log_sa)
    if cfg.rescale_update == "interweave":
        chain.acceptance_rates["a_centered_step"] = math.exp(log_sc)
    chain.forced_eta_moves = forced_total
    if dens_sum is not None and kept:
        chain.posterior_mean = dens_sum / len(kept)
    chain.runtime_s = time.perf_counter() - t0
    return chain


def posterior_mean_from_states(states, grid: Grid) -> np.ndarray:
    """Average of ``f_{mu_t, sigma_t}`` over ``states`` on ``grid``."""
    acc = np.zeros(grid.n)
    for s in states:
        acc += model_values(s.mu, s.sigma, grid.x, "exact")
    return acc / len(states)


# ---------------------------------------------------------------------------
# Geweke successive-conditional test


@dataclass
class GewekeResult:
    sigma: np.ndarray
    a: np.ndarray
    mu_sup: np.ndarray
    eta: np.ndarray


def geweke_successive(n: int, config: SamplerConfig, n_iter: int, seed: int = 0,
                      thin: int = 1) -> GewekeResult:
    """Alternate one sampler sweep given ``y`` with a fresh ``y ~ p(y | theta)``.

    If every block leaves the posterior invariant, the recorded ``theta``
    marginals follow the prior.  Step sizes are fixed (no adaptation) so the
    kernel is time-homogeneous.
    """
    cfg = config
    rng = np.random.default_rng(seed)
    chol = _Cholesky(cfg.gp)
    m = cfg.gp.M
    a = float(cfg.rescale.sample(1, rng)[0]) if cfg.gp.a_fixed is None else cfg.gp.a_fixed
    sigma = float(cfg.sigma.sample(1, rng)[0])
    z = rng.standard_normal(m)
    mu = chol(a) @ z
    etas = np.clip(rng.random(n), ETA_EPS, 1 - ETA_EPS)
    out = {"sigma": [], "a": [], "mu_sup": [], "eta": []}
    for t in range(n_iter * thin):
        y = mu_at(mu, etas) + sigma * rng.standard_normal(n)
        state = ModelState(TransferFunction(mu), sigma, a, None)
        etas, _ = update_etas(state, y, rng, cfg.eta_method)
        L = chol(a)
        z = update_mu_z({"etas": etas, "sigma": sigma}, y, rng, L)
        mu = L @ z
        state = ModelState(TransferFunction(mu), sigma, a, etas)
        sigma, _ = update_sigma(state, y, rng, cfg.sigma, cfg.sigma_step)
        if cfg.gp.a_fixed is None:
            state = ModelState(TransferFunction(mu), sigma, a, etas)
            first = "whitened" if cfg.rescale_update == "interweave" else cfg.rescale_update
            a_new, mu_new, acc = update_rescale(state, y, rng, cfg.rescale, cfg.gp, cfg.a_step,
                                                z=z, mode=first, chol=chol)
            if acc:
                a, mu = a_new, mu_new
            if cfg.rescale_update == "interweave":
                state = ModelState(TransferFunction(mu), sigma, a, etas)
                a, _, _ = update_rescale(state, y, rng, cfg.rescale, cfg.gp, cfg.a_step,
                                         mode="centered", chol=chol)
        if (t + 1) % thin == 0:
            out["sigma"].append(sigma)
            out["a"].append(a)
            out["mu_sup"].append(float(np.max(np.abs(mu))))
            out["eta"].append(float(etas[0]) if n else math.nan)
    return GewekeResult(**{k: np.asarray(v) for k, v in out.items()})


def prior_reference(config: SamplerConfig, n_draws: int, seed: int = 0) -> dict:
    """Direct draws of ``sigma``, ``a`` and ``||mu||_inf`` from the prior."""
    rng = np.random.default_rng(seed)
    cfg = config
    a = cfg.rescale.sample(n_draws, rng) if cfg.gp.a_fixed is None else np.full(n_draws, cfg.gp.a_fixed)
    from .prior import _batched_cholesky

    sups = np.empty(n_draws)
    for s in range(0, n_draws, 4096):
        aa = a[s:s + 4096]
        L = _batched_cholesky(aa, cfg.gp.M, cfg.gp.jitter)
        paths = (L @ rng.standard_normal((aa.size, cfg.gp.M, 1)))[..., 0]
        sups[s:s + 4096] = np.max(np.abs(paths), axis=1)
    return {"sigma": cfg.sigma.sample(n_draws, rng), "a": a, "mu_sup": sups}
