"""Proxy-gradient test-time adaptation baseline: one noisy step per batch."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mixing import MixingProcess, c_phi
from .model import NonInteriorError, ProblemInstance, QuadraticInstance
from .streams import DistributionTrajectory

ETA_RULES = ("manual", "theorem2-prescription")


class InvalidEta(ValueError):
    pass


class EtaTooLarge(InvalidEta):
    """The prescribed step exceeds 1 / (4 alpha mu); shrink the constant c."""


def eta_limit(problem: ProblemInstance) -> float:
    return 1.0 / (4.0 * problem.alpha * problem.pl_mu)


def prescribed_eta(problem: ProblemInstance, c: float = 1.0) -> float:
    """Step size ``c B alpha mu eps delta / (L sigma^2 C_phi)``."""
    if not c > 0:
        raise InvalidEta(f"c must be > 0, got {c!r}")
    p = problem
    if p.sigma == 0:
        raise InvalidEta("the prescribed step is undefined for sigma == 0")
    eta = c * p.batch_B * p.alpha * p.pl_mu * p.eps * p.delta / (
        p.smooth_L * p.sigma ** 2 * c_phi(p.rho_mix))
    limit = eta_limit(p)
    if eta > limit * (1 + 1e-12):
        raise EtaTooLarge(f"eta = {eta!r} exceeds 1/(4 alpha mu) = {limit!r}; reduce c below "
                          f"{max_prescription_c(p)!r}")
    return min(eta, limit)


def max_prescription_c(problem: ProblemInstance) -> float:
    """Largest c whose prescribed step still satisfies ``eta <= 1/(4 alpha mu)``."""
    p = problem
    unit = p.batch_B * p.alpha * p.pl_mu * p.eps * p.delta / (
        p.smooth_L * p.sigma ** 2 * c_phi(p.rho_mix))
    return eta_limit(p) / unit


@dataclass(frozen=True)
class BaselineConfig:
    eta: float
    horizon_T: int
    master_seed: int = 0
    eta_rule: str = "manual"
    eta_c: float = 1.0
    restore_on_boundary: bool = True

    def __post_init__(self) -> None:
        if self.eta_rule not in ETA_RULES:
            raise InvalidEta(f"unknown eta_rule {self.eta_rule!r}")
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise InvalidEta(f"eta must be finite and >= 0, got {self.eta!r}")
        if self.horizon_T < 1:
            raise ValueError("horizon_T must be >= 1")

    @classmethod
    def prescribed(cls, problem: ProblemInstance, c: float, horizon_T: int,
                   master_seed: int = 0, **kw) -> "BaselineConfig":
        return cls(eta=prescribed_eta(problem, c), horizon_T=horizon_T, master_seed=master_seed,
                   eta_rule="theorem2-prescription", eta_c=c, **kw)

    def validate_for(self, problem: ProblemInstance) -> None:
        if self.eta_rule == "theorem2-prescription":
            expected = prescribed_eta(problem, self.eta_c)
            if not math.isclose(self.eta, expected, rel_tol=1e-12):
                raise InvalidEta(f"eta {self.eta!r} does not match the prescription {expected!r}")


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    thetas: np.ndarray
    excess: np.ndarray
    grad_samples: np.ndarray
    boundary_hits: int

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "theta", "excess"])
            for t, (th, e) in enumerate(zip(self.thetas, self.excess), start=1):
                w.writerow([t, repr(float(th)), repr(float(e))])


def run_seed(master_seed: int, *indices: int) -> np.random.SeedSequence:
    """Independent stream for one (point, run) cell of an experiment."""
    return np.random.SeedSequence([int(master_seed), *map(int, indices)])


def _locations(traj: DistributionTrajectory, horizon_T: int) -> np.ndarray:
    if traj.horizon_T < horizon_T:
        traj = traj.extended(horizon_T)
    return traj.locations[:horizon_T]


def _check_interior(inst: QuadraticInstance, locs: np.ndarray) -> None:
    opts = locs - inst.proxy_shift
    far = np.abs(opts - inst.theta_init) >= inst.problem.radius_r
    if far.any():
        t = int(np.argmax(far)) + 1
        raise NonInteriorError(f"proxy optimum at t={t} is not interior to the r-neighborhood")


def simulate(inst: QuadraticInstance, locations: np.ndarray, noise: np.ndarray, eta: float,
             restore_on_boundary: bool = True):
    """Vectorized recursion over runs.

    ``noise`` has shape ``(n_runs, T)`` (batch-mean noise per step).  Returns
    thetas, excess, gradients (all ``(n_runs, T)``) and per-run boundary hits.
    """
    p = inst.problem
    aL = p.alpha * p.smooth_L
    half_L = 0.5 * p.smooth_L
    xi = inst.bias_xi
    shift = inst.proxy_shift
    R = half_L * shift * shift
    lo, hi = inst.theta_init - p.radius_r, inst.theta_init + p.radius_r
    n_runs, T = noise.shape
    thetas = np.empty((n_runs, T))
    grads = np.empty((n_runs, T))
    hits = np.zeros(n_runs, dtype=np.int64)
    theta = np.full(n_runs, float(inst.theta_init))
    for t in range(T):
        m = locations[t]
        thetas[:, t] = theta
        g = aL * (theta - m) + xi + noise[:, t]
        grads[:, t] = g
        theta = theta - eta * g
        if restore_on_boundary:
            out = (theta < lo) | (theta > hi)
            if out.any():
                hits += out
                theta = np.clip(theta, lo, hi)
    d = thetas - locations[None, :T]
    excess = half_L * d * d - R
    return thetas, excess, grads, hits


def run_baseline(inst: QuadraticInstance, traj: DistributionTrajectory, proc: MixingProcess,
                 cfg: BaselineConfig) -> TrajectoryRecord:
    """One adaptation run over ``cfg.horizon_T`` steps.

    At each step the excess risk of the current parameter is recorded against
    that step's competitor, then a proxy-gradient step is taken with the
    batch-mean of ``B`` correlated noise draws added to the mean gradient.
    The trajectory is continued at its last location if shorter than the
    horizon.
    """
    cfg.validate_for(inst.problem)
    locs = _locations(traj, cfg.horizon_T)
    _check_interior(inst, locs)
    noise = proc.batch_means(cfg.horizon_T, inst.problem.batch_B)
    thetas, excess, grads, hits = simulate(inst, locs, noise[None, :], cfg.eta,
                                           cfg.restore_on_boundary)
    return TrajectoryRecord(thetas[0], excess[0], grads[0], int(hits[0]))


def run_many(inst: QuadraticInstance, traj: DistributionTrajectory, cfg: BaselineConfig,
             n_runs: int, point_index: int = 0):
    """``n_runs`` independent baselines, run ``i`` seeded by (master_seed, point_index, i).

    Each run matches ``run_baseline`` with
    ``MixingProcess.from_rho(rho, sigma, run_seed(master_seed, point_index, i))``
    bit for bit.
    """
    p = inst.problem
    cfg.validate_for(p)
    locs = _locations(traj, cfg.horizon_T)
    _check_interior(inst, locs)
    noise = np.empty((n_runs, cfg.horizon_T))
    for i in range(n_runs):
        proc = MixingProcess.from_rho(p.rho_mix, p.sigma, run_seed(cfg.master_seed, point_index, i))
        noise[i] = proc.batch_means(cfg.horizon_T, p.batch_B)
    return simulate(inst, locs, noise, cfg.eta, cfg.restore_on_boundary)
