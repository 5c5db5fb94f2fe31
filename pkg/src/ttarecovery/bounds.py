"""Closed-form recovery bounds, learnability transfer and regret."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

from .mixing import c_phi
from .model import ProblemInstance


class BridgeInfeasible(ValueError):
    """Target excess error does not exceed the quantization cost Lambda * delta_W."""


@dataclass(frozen=True)
class Flag:
    ok: bool
    lhs: float
    rhs: float
    relation: str


def _check_delta(delta: float) -> None:
    if not 0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 0.5), got {delta!r}")


def bridge_constant(p: ProblemInstance) -> float:
    """``Lambda = L_x + G * L_grad_psi / mu``."""
    return p.lip_x + p.grad_bound_G * p.lip_grad_psi / p.pl_mu


def required_shift_budget(p: ProblemInstance) -> float:
    a = p.zeta / p.alpha
    return 2.0 * math.sqrt(a + 2.0 * p.eps) + 2.0 * math.sqrt(a)


def lower_bound(p: ProblemInstance) -> float:
    """Two-point minimax lower bound on the recovery time.

    ``sigma^2 C_phi (1 - 2 delta)^2 / (B alpha (sqrt(zeta + 2 alpha eps) + sqrt(zeta))^2)``.
    Vacuous (but still evaluated) when the shift budget is too small; see
    ``feasibility_report``.
    """
    _check_delta(p.delta)
    sep = math.sqrt(p.zeta + 2.0 * p.alpha * p.eps) + math.sqrt(p.zeta)
    return p.sigma ** 2 * c_phi(p.rho_mix) * (1.0 - 2.0 * p.delta) ** 2 / (
        p.batch_B * p.alpha * sep * sep)


def upper_bound_table(p: ProblemInstance) -> float:
    """Order-form upper bound with multiplicative constant ``sigma^2``.

    ``sigma^2 C_phi log((delta_W + eps) / eps) / (B alpha^2 eps)``.
    """
    return p.sigma ** 2 * c_phi(p.rho_mix) * math.log((p.delta_W + p.eps) / p.eps) / (
        p.batch_B * p.alpha ** 2 * p.eps)


def default_initial_excess(p: ProblemInstance) -> float:
    return 2.0 * bridge_constant(p) * p.delta_W + p.eps


def upper_bound_explicit(p: ProblemInstance, eta_c: float = 1.0,
                         initial_excess: float | None = None) -> float:
    """Explicit recovery time of the baseline under the prescribed step size.

    ``1 + L sigma^2 C_phi / (2 c B alpha^2 mu^2 eps delta) * log(4 E_1 / (eps delta))``
    where ``E_1`` is the post-shift initial excess (default ``2 Lambda delta_W + eps``).
    """
    _check_delta(p.delta)
    if not eta_c > 0:
        raise ValueError("eta_c must be > 0")
    e1 = default_initial_excess(p) if initial_excess is None else initial_excess
    rate = p.smooth_L * p.sigma ** 2 * c_phi(p.rho_mix) / (
        2.0 * eta_c * p.batch_B * p.alpha ** 2 * p.pl_mu ** 2 * p.eps * p.delta)
    return 1.0 + rate * math.log(4.0 * e1 / (p.eps * p.delta))


def eps_prime(p: ProblemInstance) -> float:
    return p.eps - bridge_constant(p) * p.delta_W


def learnability_transfer(p: ProblemInstance, K_S: int, tau: float, T: int) -> float:
    """Violation-rate bound ``delta + (K_S + 1) tau / T`` on the original stream.

    ``tau`` must be the recovery time priced at ``eps_prime(p)``.
    """
    if not p.eps > bridge_constant(p) * p.delta_W:
        raise BridgeInfeasible(
            f"eps = {p.eps!r} must exceed Lambda * delta_W = {bridge_constant(p) * p.delta_W!r}")
    if T < 1 or K_S < 0 or tau < 0:
        raise ValueError("need T >= 1, K_S >= 0, tau >= 0")
    return p.delta + (K_S + 1) * tau / T


def regret_bound(eps: float, M: float, rho: float, T: int) -> float:
    """Dynamic regret bound ``T (eps + M rho)``."""
    if M < 0 or not 0 <= rho <= 1 or T < 0 or eps < 0:
        raise ValueError("need M >= 0, rho in [0, 1], T >= 0, eps >= 0")
    return T * (eps + M * rho)


def default_excess_cap(p: ProblemInstance) -> float:
    """Almost-sure excess bound ``L (r + delta_W)^2 / 2 + zeta / (2 alpha mu)``."""
    return 0.5 * p.smooth_L * (p.radius_r + p.delta_W) ** 2 + p.zeta / (2.0 * p.alpha * p.pl_mu)


def feasibility_report(p: ProblemInstance) -> dict[str, Flag]:
    lam = bridge_constant(p)
    cphi = c_phi(p.rho_mix)
    budget = required_shift_budget(p)
    bias = p.zeta / (p.alpha * p.pl_mu)
    return {
        "shift_budget_ok": Flag(p.delta_W >= budget, p.delta_W, budget, ">="),
        "alignment_ok": Flag(bias <= p.eps * p.delta / 2, bias, p.eps * p.delta / 2, "<="),
        "bridge_ok": Flag(p.eps > lam * p.delta_W and bias <= (p.eps - lam * p.delta_W) * p.delta / 2,
                          lam * p.delta_W, p.eps, "<"),
        "canonical_regime_ok": Flag(p.batch_B * p.grad_bound_G ** 2 <= p.sigma ** 2 * cphi,
                                    p.batch_B * p.grad_bound_G ** 2, p.sigma ** 2 * cphi, "<="),
    }


@dataclass(frozen=True)
class BoundReport:
    lb: float
    ub: float
    ub_explicit_delta: float
    lambda_bridge: float
    eps_prime: float
    rho_bound: float | None
    regret_bound: float | None
    excess_cap_M: float
    feasibility: dict[str, Flag] = field(default_factory=dict)
    eta_c: float = 1.0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def evaluate(p: ProblemInstance, *, eta_c: float = 1.0, K_S: int = 0, tau: float | None = None,
             T: int | None = None, M: float | None = None) -> BoundReport:
    """Every closed-form quantity for one instance.

    The transfer and regret values need a recovery time and horizon; without
    them, or when the bridge is infeasible, they are ``None``.
    """
    flags = feasibility_report(p)
    M = default_excess_cap(p) if M is None else M
    rho = reg = None
    if tau is not None and T is not None and flags["bridge_ok"].lhs < flags["bridge_ok"].rhs:
        rho = learnability_transfer(p, K_S, tau, T)
        reg = regret_bound(p.eps, M, min(rho, 1.0), T)
    return BoundReport(
        lb=lower_bound(p), ub=upper_bound_table(p),
        ub_explicit_delta=upper_bound_explicit(p, eta_c),
        lambda_bridge=bridge_constant(p), eps_prime=eps_prime(p),
        rho_bound=rho, regret_bound=reg, excess_cap_M=M, feasibility=flags, eta_c=eta_c,
    )
