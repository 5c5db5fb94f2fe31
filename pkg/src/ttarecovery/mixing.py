"""Temporally correlated gradient noise from a symmetric two-state Markov chain.

The chain stays in its state with probability ``p`` and flips otherwise; each
step emits ``+sigma`` or ``-sigma``.  Its second eigenvalue ``2p - 1`` is the
geometric mixing rate, the lag-``i`` autocovariance is ``sigma**2 * (2p-1)**i``
and the emissions are bounded and centered under stationarity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SeedLike = int | np.random.SeedSequence | None


def c_phi(rho_mix: float) -> float:
    """Variance-inflation factor of a correlated batch mean."""
    if not 0 <= rho_mix < 1:
        raise ValueError(f"rho_mix must lie in [0, 1), got {rho_mix!r}")
    s = math.sqrt(rho_mix)
    return 1.0 + 4.0 * s / (1.0 - s)


def b_eff(batch_B: int, rho_mix: float) -> float:
    """Equivalent i.i.d. batch size ``B / C_phi``."""
    if batch_B < 1:
        raise ValueError(f"batch_B must be >= 1, got {batch_B!r}")
    return batch_B / c_phi(rho_mix)


def stay_prob_for(rho_mix: float) -> float:
    return (1.0 + rho_mix) / 2.0


class MixingProcess:
    """Stateful two-state chain; one owner per stream of draws.

    Parameters
    ----------
    stay_prob : float
        Probability of keeping the current state, in ``[0.5, 1)``.
    emission_sigma : float
        Magnitude of the emitted noise.
    rng_seed : int or SeedSequence
        Seeds both the initial (stationary) state and every transition.
    """

    def __init__(self, stay_prob: float, emission_sigma: float, rng_seed: SeedLike = 0):
        if not 0.5 <= stay_prob < 1:
            raise ValueError(f"stay_prob must lie in [0.5, 1), got {stay_prob!r}")
        if emission_sigma < 0:
            raise ValueError("emission_sigma must be >= 0")
        self.stay_prob = float(stay_prob)
        self.emission_sigma = float(emission_sigma)
        self.rng_seed = rng_seed
        self._rng = np.random.default_rng(rng_seed)
        # state before the first emission; uniform is stationary for the symmetric chain
        self.state = 1 if self._rng.random() < 0.5 else -1

    @classmethod
    def from_rho(cls, rho_mix: float, emission_sigma: float, rng_seed: SeedLike = 0) -> "MixingProcess":
        return cls(stay_prob_for(rho_mix), emission_sigma, rng_seed)

    @property
    def rho_mix(self) -> float:
        return 2.0 * self.stay_prob - 1.0

    def states(self, n: int) -> np.ndarray:
        """Advance the chain ``n`` steps and return the visited states (+1/-1)."""
        flips = np.where(self._rng.random(n) < self.stay_prob, 1, -1).astype(np.int8)
        path = self.state * np.cumprod(flips, dtype=np.int8)
        if n:
            self.state = int(path[-1])
        return path

    def sample(self, n: int) -> np.ndarray:
        return self.emission_sigma * self.states(n).astype(float)

    def batch_means(self, n_batches: int, batch_B: int) -> np.ndarray:
        """Means of ``n_batches`` consecutive windows of ``batch_B`` draws."""
        draws = self.sample(n_batches * batch_B).reshape(n_batches, batch_B)
        return draws.mean(axis=1)


def sample_correlated_batch(proc: MixingProcess, batch_B: int) -> np.ndarray:
    if batch_B < 1:
        raise ValueError(f"batch_B must be >= 1, got {batch_B!r}")
    return proc.sample(batch_B)


def autocov_exact(stay_prob: float, sigma: float, lag: int) -> float:
    return sigma ** 2 * (2.0 * stay_prob - 1.0) ** lag


def batch_mean_variance_exact(stay_prob: float, sigma: float, batch_B: int) -> float:
    """Closed-form variance of the mean of ``batch_B`` consecutive stationary draws."""
    lam = 2.0 * stay_prob - 1.0
    k = np.arange(1, batch_B)
    cross = 2.0 * float(np.sum((batch_B - k) * lam ** k))
    return sigma ** 2 * (batch_B + cross) / batch_B ** 2


def covariance_bound(sigma: float, rho_mix: float, lag: int) -> float:
    """Covariance-control bound ``2 sigma^2 rho^(lag/2)``."""
    return 2.0 * sigma ** 2 * rho_mix ** (lag / 2.0)


@dataclass(frozen=True)
class LagRow:
    lag: int
    cov: float
    bound: float
    ratio: float
    stderr: float

    @property
    def ok(self) -> bool:
        """``|cov| <= bound`` within three standard errors."""
        return abs(self.cov) - 3.0 * self.stderr <= self.bound


def _block_stderr(values: np.ndarray, n_blocks: int = 100) -> float:
    # batch-means standard error; robust to the serial correlation of the products
    usable = values.size - values.size % n_blocks
    blocks = values[:usable].reshape(n_blocks, -1).mean(axis=1)
    return float(blocks.std(ddof=1) / math.sqrt(n_blocks))


def empirical_phi_report(proc: MixingProcess, max_lag: int, n_samples: int) -> list[LagRow]:
    """Empirical lag covariances against the covariance-control bound.

    ``ratio`` is ``|cov| / bound`` and ``stderr`` is the standard error of
    ``cov``.  When the bound is zero (independent chain) the ratio is ``inf``
    for any nonzero covariance; ``LagRow.ok`` compares covariances directly so
    it stays meaningful there.
    """
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if n_samples < 100 * (max_lag + 1):
        raise ValueError("n_samples too small for a standard error")
    x = proc.sample(n_samples)
    x = x - x.mean()
    sigma, rho = proc.emission_sigma, proc.rho_mix
    rows = []
    for lag in range(1, max_lag + 1):
        prods = x[:-lag] * x[lag:]
        cov = float(prods.mean())
        bound = covariance_bound(sigma, rho, lag)
        if bound > 0:
            ratio = abs(cov) / bound
        else:
            ratio = math.inf if cov != 0 else 0.0
        rows.append(LagRow(lag, cov, bound, ratio, _block_stderr(prods)))
    return rows


@dataclass(frozen=True)
class BatchVarianceCheck:
    batch_B: int
    stay_prob: float
    variance: float
    stderr: float
    bound: float
    exact: float

    @property
    def ok(self) -> bool:
        return self.variance - 3.0 * self.stderr <= self.bound


def check_batch_variance(proc: MixingProcess, batch_B: int, n_batches: int) -> BatchVarianceCheck:
    """Empirical variance of correlated batch means against ``sigma^2 C_phi / B``."""
    means = proc.batch_means(n_batches, batch_B)
    sq = (means - means.mean()) ** 2
    var = float(sq.mean())
    se = _block_stderr(sq)
    sigma = proc.emission_sigma
    return BatchVarianceCheck(
        batch_B=batch_B, stay_prob=proc.stay_prob, variance=var, stderr=se,
        bound=sigma ** 2 * c_phi(proc.rho_mix) / batch_B,
        exact=batch_mean_variance_exact(proc.stay_prob, sigma, batch_B),
    )
