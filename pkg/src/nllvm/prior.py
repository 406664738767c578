"""Prior on ``(mu, sigma, A)``.

``mu | A = a`` is a centred Gaussian process with squared-exponential
covariance ``exp(-a^2 (s - t)^2)`` observed at ``M`` equally spaced nodes of
``[0, 1]``; ``A`` has density ``g(a) ~ a^p exp(-D a log^q a)`` truncated to
``[a_min, a_max]``; ``sigma`` is inverse-gamma on ``sigma`` itself.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from .numerics import GridFunction, NumericsError, TransferFunction, inverse_cdf, cumulative

JITTER_MAX = 1e-6
_RESCALE_GRID = 2**15 + 1


class FactorizationError(NumericsError):
    pass


def se_cov(a: float, s, t) -> np.ndarray:
    """Squared-exponential covariance ``exp(-a^2 (s - t)^2)``."""
    if not a > 0:
        raise ValueError("rescale a must be positive")
    d = np.asarray(s, dtype=float) - np.asarray(t, dtype=float)
    return np.exp(-(a * d) ** 2)


def se_matrix(a: float, m: int) -> np.ndarray:
    u = np.linspace(0.0, 1.0, m)
    return se_cov(a, u[:, None], u[None, :])


@dataclass(frozen=True)
class GPConfig:
    M: int = 64
    jitter: float = 1e-10
    a_fixed: float | None = None

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("need at least 2 latent nodes")
        if not (1e-12 <= self.jitter <= 1e-6):
            raise ValueError("jitter must lie in [1e-12, 1e-6]")
        if self.a_fixed is not None and not self.a_fixed > 0:
            raise ValueError("a_fixed must be positive")


def gp_cholesky(a: float, m: int, jitter: float = 1e-10) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K_a + jitter I``, escalating jitter by 10x."""
    K = se_matrix(a, m)
    jit = jitter
    while True:
        try:
            return np.linalg.cholesky(K + jit * np.eye(m)), jit
        except np.linalg.LinAlgError:
            if jit >= JITTER_MAX * (1 - 1e-9):
                raise FactorizationError(f"Cholesky failed at a={a:.4g} even with jitter {jit:.1e}")
            jit = min(jit * 10.0, JITTER_MAX)


def sample_gp_path(cfg: GPConfig, a: float, rng_seed) -> TransferFunction:
    """One prior draw of ``mu`` at the ``cfg.M`` latent nodes given ``A = a``."""
    rng = np.random.default_rng(rng_seed)
    L, _ = gp_cholesky(a, cfg.M, cfg.jitter)
    return TransferFunction(L @ rng.standard_normal(cfg.M))


@dataclass(frozen=True)
class RescaleDensity:
    """Truncated ``g(a) ~ a^p exp(-D a log^q a)`` on ``[a_min, a_max]``.

    For non-integer ``q`` the power of the logarithm keeps its sign,
    ``sign(log a) |log a|^q``.
    """

    p: float = 1.0
    q: float = 1.0
    D: float = 1.0
    a_min: float = 0.5
    a_max: float = 200.0

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ValueError("p and q must be nonnegative")
        if not self.D > 0:
            raise ValueError("D must be positive")
        if not (0 < self.a_min <= self.a_max):
            raise ValueError("need 0 < a_min <= a_max")

    @property
    def degenerate(self) -> bool:
        return self.a_min == self.a_max

    def log_unnorm(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        la = np.log(a)
        lq = la if self.q == 1 else np.sign(la) * np.abs(la) ** self.q
        return self.p * la - self.D * a * lq

    def in_support(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return (a >= self.a_min) & (a <= self.a_max)

    def logpdf(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        out = self.log_unnorm(np.clip(a, self.a_min, self.a_max)) - self.log_norm
        return np.where(self.in_support(a), out, -np.inf)

    @cached_property
    def _table(self) -> tuple[GridFunction, float]:
        x = np.linspace(self.a_min, self.a_max, _RESCALE_GRID)
        lv = self.log_unnorm(x)
        return GridFunction(self.a_min, self.a_max, np.exp(lv - lv.max())), float(lv.max())

    @cached_property
    def log_norm(self) -> float:
        if self.degenerate:
            return 0.0
        g, shift = self._table
        return math.log(cumulative(g)[-1]) + shift

    def cdf(self, a) -> np.ndarray:
        from .numerics import cdf_at

        g, _ = self._table
        return cdf_at(g, a)

    def mean(self) -> float:
        if self.degenerate:
            return self.a_min
        g, _ = self._table
        num = g.with_values(g.values * g.x)
        return float(cumulative(num)[-1] / cumulative(g)[-1])

    def sample(self, size, rng) -> np.ndarray:
        if self.degenerate:
            return np.full(size, self.a_min)
        g, _ = self._table
        return np.clip(inverse_cdf(g, rng.random(size)), self.a_min, self.a_max)


def sample_rescale(rd: RescaleDensity, rng_seed, size: int | None = None):
    """Inverse-CDF draw(s) of ``A`` from ``rd`` on a fine grid."""
    rng = np.random.default_rng(rng_seed)
    out = rd.sample(1 if size is None else size, rng)
    return float(out[0]) if size is None else out


@dataclass(frozen=True)
class SigmaPrior:
    a_sigma: float = 2.0
    b_sigma: float = 0.5

    def __post_init__(self):
        if not (self.a_sigma > 0 and self.b_sigma > 0):
            raise ValueError("inverse-gamma parameters must be positive")

    def sample(self, size, rng) -> np.ndarray:
        return self.b_sigma / rng.gamma(self.a_sigma, 1.0, size)

    def cdf(self, s) -> np.ndarray:
        from scipy.special import gammaincc

        return gammaincc(self.a_sigma, self.b_sigma / np.asarray(s, dtype=float))


def sigma_prior_logpdf(s: float, sp: SigmaPrior) -> float:
    """Inverse-gamma log density ``a log b - log Gamma(a) - (a+1) log s - b / s``."""
    if not s > 0:
        raise ValueError("sigma must be positive")
    a, b = sp.a_sigma, sp.b_sigma
    return float(a * math.log(b) - gammaln(a) - (a + 1.0) * math.log(s) - b / s)


@dataclass(frozen=True)
class SmallBall:
    estimate: float
    se: float
    hits: int
    n_draws: int
    delta: float

    def to_dict(self) -> dict:
        return asdict(self)


def _batched_cholesky(a: np.ndarray, m: int, jitter: float) -> np.ndarray:
    u = np.linspace(0.0, 1.0, m)
    d2 = (u[:, None] - u[None, :]) ** 2
    K = np.exp(-(a[:, None, None] ** 2) * d2[None])
    K += jitter * np.eye(m)[None]
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return np.stack([gp_cholesky(ai, m, jitter)[0] for ai in a])


def smallball_mc_multi(mu0s, deltas, n_draws: int, rd: RescaleDensity, cfg: GPConfig,
                       rng_seed=0, chunk: int = 4096) -> list[list[SmallBall]]:
    """Small-ball estimates for several centres and radii from one set of paths.

    The same prior draws are reused for every ``(mu0, delta)`` pair (common
    random numbers), so estimates are exactly nested in ``delta``.
    """
    deltas = list(deltas)
    if any(not d > 0 for d in deltas):
        raise ValueError("delta must be positive")
    rng = np.random.default_rng(rng_seed)
    targets = np.stack([mu.refined(cfg.M).values for mu in mu0s])
    hits = np.zeros((len(targets), len(deltas)), dtype=np.int64)
    done = 0
    while done < n_draws:
        k = min(chunk, n_draws - done)
        a = rd.sample(k, rng) if cfg.a_fixed is None else np.full(k, cfg.a_fixed)
        L = _batched_cholesky(a, cfg.M, cfg.jitter)
        paths = (L @ rng.standard_normal((k, cfg.M, 1)))[..., 0]
        for i, tgt in enumerate(targets):
            dist = np.max(np.abs(paths - tgt[None]), axis=1)
            for j, d in enumerate(deltas):
                hits[i, j] += int(np.count_nonzero(dist <= d))
        done += k
    out = []
    for i in range(len(targets)):
        row = []
        for j, d in enumerate(deltas):
            p = hits[i, j] / n_draws
            row.append(SmallBall(p, math.sqrt(p * (1.0 - p) / n_draws), int(hits[i, j]), n_draws, d))
        out.append(row)
    return out


def smallball_mc(mu0: TransferFunction, delta: float, n_draws: int, rd: RescaleDensity,
                 cfg: GPConfig, rng_seed=0, chunk: int = 4096) -> SmallBall:
    """Monte Carlo ``P(||mu - mu0||_inf <= delta)`` with ``A`` drawn from ``rd``.

    ``mu0`` is interpolated to the ``cfg.M`` latent nodes; both functions are
    linear between those nodes so the sup norm is attained at a node.
    """
    return smallball_mc_multi([mu0], [delta], n_draws, rd, cfg, rng_seed, chunk)[0][0]
