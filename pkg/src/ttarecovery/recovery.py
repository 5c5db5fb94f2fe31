"""Monte Carlo estimates of recovery time and of the long-run violation rate."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .adapt import BaselineConfig, run_many
from .bounds import upper_bound_table
from .model import QuadraticInstance
from .streams import DistributionTrajectory

ESTIMATORS = ("uniform-tail", "mean-hitting-time")
HITTING_RULES = ("sustained", "first-crossing")
MIN_RUNS = 30


class NoRecoveryWithinHorizon(UserWarning):
    pass


class InfeasibleRegime(UserWarning):
    """Proxy bias too large for (eps, delta)-recovery: zeta/(alpha mu) > eps delta / 2."""


def binomial_stderr(p: np.ndarray, n: int) -> np.ndarray:
    return np.sqrt(p * (1.0 - p) / n)


def uniform_tail_time(failure_curve: np.ndarray, delta: float) -> int | None:
    """Smallest 1-based ``t`` with ``max_{u >= t} P(E_u > eps) <= delta`` over the horizon."""
    tail = np.maximum.accumulate(failure_curve[::-1])[::-1]
    ok = np.flatnonzero(tail <= delta)
    return int(ok[0]) + 1 if ok.size else None


def hitting_times(excess: np.ndarray, eps: float, rule: str = "sustained") -> np.ndarray:
    """Per-run 1-based hitting times; ``-1`` where a run never recovers.

    ``sustained``: first ``t`` after which every step up to the horizon is
    within ``eps``.  ``first-crossing``: first ``t`` with ``E_t <= eps``.
    """
    good = excess <= eps
    n_runs, T = good.shape
    if rule == "first-crossing":
        hit = good.argmax(axis=1) + 1
        return np.where(good.any(axis=1), hit, -1)
    if rule != "sustained":
        raise ValueError(f"unknown hitting rule {rule!r}")
    bad = ~good
    # index of the last violation; recovery starts right after it
    last_bad = T - 1 - bad[:, ::-1].argmax(axis=1)
    hit = np.where(bad.any(axis=1), last_bad + 2, 1)
    return np.where(hit <= T, hit, -1)


@dataclass(frozen=True, eq=False)
class RecoveryEstimate:
    tau_hat: float | None
    estimator: str
    n_runs: int
    horizon_T_max: int
    failure_curve: np.ndarray
    stderr_curve: np.ndarray
    tau_uniform_tail: int | None
    tau_mean_sustained: float | None
    tau_mean_first_crossing: float | None
    tau_mean_stderr: float | None
    tau_mean_sustained_stderr: float | None
    tau_mean_first_crossing_stderr: float | None
    hitting_rule: str
    feasible: bool

    @property
    def recovered(self) -> bool:
        return self.tau_hat is not None

    def summary(self) -> dict:
        return {
            "tau_hat": self.tau_hat,
            "estimator": self.estimator,
            "hitting_rule": self.hitting_rule,
            "n_runs": self.n_runs,
            "T_max": self.horizon_T_max,
            "feasible": self.feasible,
            "recovered": self.recovered,
            "tau_uniform_tail": self.tau_uniform_tail,
            "tau_mean_sustained": self.tau_mean_sustained,
            "tau_mean_first_crossing": self.tau_mean_first_crossing,
            "tail_sup_truncated_at_horizon": True,
        }


def _mean_time(times: np.ndarray) -> tuple[float | None, float | None]:
    if (times < 0).any():
        return None, None
    se = float(times.std(ddof=1) / math.sqrt(times.size)) if times.size > 1 else 0.0
    return float(times.mean()), se


def default_horizon(inst: QuadraticInstance) -> int:
    """Twenty times the closed-form upper bound, at least 50 steps."""
    ub = upper_bound_table(inst.problem)
    return max(50, 20 * math.ceil(ub))


def check_alignment(inst: QuadraticInstance, eps: float) -> bool:
    p = inst.problem
    feasible = p.zeta / (p.alpha * p.pl_mu) <= eps * p.delta / 2
    if not feasible:
        warnings.warn(f"zeta/(alpha mu) = {p.zeta / (p.alpha * p.pl_mu)!r} exceeds eps delta/2 = "
                      f"{eps * p.delta / 2!r}; recovery is not guaranteed", InfeasibleRegime,
                      stacklevel=3)
    return feasible


def estimate_recovery(inst: QuadraticInstance, traj: DistributionTrajectory, cfg: BaselineConfig,
                      n_runs: int = 100, T_max: int | None = None,
                      estimator: str = "uniform-tail", hitting_rule: str = "sustained",
                      eps: float | None = None, delta: float | None = None,
                      point_index: int = 0) -> RecoveryEstimate:
    """Recovery time after a single shift at ``t = 1``.

    ``traj`` must be stationary (one location repeated); it is continued to
    ``T_max``.  Every run's noise comes from its own two-state chain with the
    instance's ``rho_mix`` and ``sigma``, seeded by ``(cfg.master_seed,
    point_index, run)``.  The supremum over the tail only covers the simulated
    horizon.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    if hitting_rule not in HITTING_RULES:
        raise ValueError(f"unknown hitting rule {hitting_rule!r}")
    if n_runs < MIN_RUNS:
        raise ValueError(f"n_runs must be >= {MIN_RUNS}")
    locs = traj.locations
    if not np.all(locs == locs[0]):
        raise ValueError("recovery needs a trajectory that is stationary after t = 1")
    p = inst.problem
    eps = p.eps if eps is None else eps
    delta = p.delta if delta is None else delta
    feasible = check_alignment(inst, eps)
    T_max = default_horizon(inst) if T_max is None else int(T_max)
    run_cfg = BaselineConfig(eta=cfg.eta, horizon_T=T_max, master_seed=cfg.master_seed,
                             eta_rule=cfg.eta_rule, eta_c=cfg.eta_c,
                             restore_on_boundary=cfg.restore_on_boundary)
    _, excess, _, _ = run_many(inst, traj, run_cfg, n_runs, point_index)

    fail = (excess > eps).mean(axis=0)
    se = binomial_stderr(fail, n_runs)
    tau_ut = uniform_tail_time(fail, delta)
    mean_sus, se_sus = _mean_time(hitting_times(excess, eps, "sustained"))
    mean_first, se_first = _mean_time(hitting_times(excess, eps, "first-crossing"))

    if estimator == "uniform-tail":
        tau_hat = tau_ut
        tau_se = None
    elif hitting_rule == "sustained":
        tau_hat, tau_se = mean_sus, se_sus
    else:
        tau_hat, tau_se = mean_first, se_first
    if tau_hat is None:
        warnings.warn(f"no recovery within T_max = {T_max} ({estimator}, {hitting_rule})",
                      NoRecoveryWithinHorizon, stacklevel=2)
    return RecoveryEstimate(
        tau_hat=tau_hat, estimator=estimator, n_runs=n_runs, horizon_T_max=T_max,
        failure_curve=fail, stderr_curve=se, tau_uniform_tail=tau_ut,
        tau_mean_sustained=mean_sus, tau_mean_first_crossing=mean_first,
        tau_mean_stderr=tau_se, tau_mean_sustained_stderr=se_sus,
        tau_mean_first_crossing_stderr=se_first, hitting_rule=hitting_rule, feasible=feasible,
    )


@dataclass(frozen=True, eq=False)
class LearnabilityEstimate:
    rho_hat: float
    rho_stderr: float
    per_t_violation: np.ndarray
    per_t_stderr: np.ndarray
    mean_excess: np.ndarray
    cumulative_excess: float
    cumulative_excess_stderr: float
    n_runs: int


def estimate_learnability(inst: QuadraticInstance, traj: DistributionTrajectory,
                          cfg: BaselineConfig, n_runs: int = 100, eps: float | None = None,
                          point_index: int = 0) -> LearnabilityEstimate:
    """Average per-step probability of exceeding ``eps`` along ``traj``.

    The standard errors use per-run aggregates, which are independent across
    runs even though steps within a run are not.
    """
    if n_runs < MIN_RUNS:
        raise ValueError(f"n_runs must be >= {MIN_RUNS}")
    eps = inst.problem.eps if eps is None else eps
    run_cfg = BaselineConfig(eta=cfg.eta, horizon_T=traj.horizon_T, master_seed=cfg.master_seed,
                             eta_rule=cfg.eta_rule, eta_c=cfg.eta_c,
                             restore_on_boundary=cfg.restore_on_boundary)
    _, excess, _, _ = run_many(inst, traj, run_cfg, n_runs, point_index)
    viol = excess > eps
    per_run_rate = viol.mean(axis=1)
    per_run_cum = excess.sum(axis=1)
    per_t = viol.mean(axis=0)
    sqrt_n = math.sqrt(n_runs)
    return LearnabilityEstimate(
        rho_hat=float(per_run_rate.mean()),
        rho_stderr=float(per_run_rate.std(ddof=1) / sqrt_n),
        per_t_violation=per_t,
        per_t_stderr=binomial_stderr(per_t, n_runs),
        mean_excess=excess.mean(axis=0),
        cumulative_excess=float(per_run_cum.mean()),
        cumulative_excess_stderr=float(per_run_cum.std(ddof=1) / sqrt_n),
        n_runs=n_runs,
    )
