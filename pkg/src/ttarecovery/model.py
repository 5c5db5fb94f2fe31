"""Problem constants and the 1-D quadratic task/proxy family.

The task loss at location ``m`` is ``0.5 * L * (theta - m)**2`` and the proxy
gradient is ``alpha * L * (theta - m) + xi``: an aligned descent signal plus a
constant bias.  Excess risk is measured against the proxy optimum, not the
task minimizer.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Any


class NonInteriorError(ValueError):
    """The proxy optimum lies on or outside the r-neighborhood of theta_init."""


@dataclass(frozen=True)
class ProblemInstance:
    """All problem constants of one test-time adaptation setting."""

    alpha: float
    zeta: float
    smooth_L: float
    pl_mu: float
    sigma: float
    grad_bound_G: float
    lip_x: float
    lip_grad_psi: float
    radius_r: float
    delta_W: float
    eps: float
    delta: float
    batch_B: int
    rho_mix: float

    def __post_init__(self) -> None:
        positive = ("alpha", "smooth_L", "pl_mu", "grad_bound_G", "lip_x",
                    "lip_grad_psi", "radius_r", "delta_W", "eps")
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if not (math.isfinite(self.zeta) and self.zeta >= 0):
            raise ValueError(f"zeta must be >= 0, got {self.zeta!r}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be >= 0, got {self.sigma!r}")
        if not 0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in (0, 0.5), got {self.delta!r}")
        if not 0 <= self.rho_mix < 1:
            raise ValueError(f"rho_mix must lie in [0, 1), got {self.rho_mix!r}")
        if int(self.batch_B) != self.batch_B or self.batch_B < 1:
            raise ValueError(f"batch_B must be an integer >= 1, got {self.batch_B!r}")
        object.__setattr__(self, "batch_B", int(self.batch_B))

    @property
    def default_bias(self) -> float:
        """zeta / (2 * delta_W), or exactly 0 when zeta == 0."""
        return self.zeta / (2.0 * self.delta_W) if self.zeta > 0 else 0.0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def with_(self, **changes: Any) -> "ProblemInstance":
        return replace(self, **changes)


def quadratic_constants(alpha: float, zeta: float, smooth_L: float, sigma: float,
                        radius_r: float, delta_W: float,
                        bias_xi: float | None = None) -> dict[str, float]:
    """Data-Lipschitz and gradient constants forced by the quadratic family.

    ``lip_x = L * (r + delta_W)`` bounds ``|theta - m|`` over the neighborhood,
    ``lip_grad_psi = alpha * L`` and ``G`` covers realized gradients out to
    three noise standard deviations.
    """
    xi = (zeta / (2.0 * delta_W) if zeta > 0 else 0.0) if bias_xi is None else bias_xi
    reach = radius_r + delta_W
    return {
        "lip_x": smooth_L * reach,
        "lip_grad_psi": alpha * smooth_L,
        "grad_bound_G": alpha * smooth_L * reach + abs(xi) + 3.0 * sigma,
    }


def make_problem(*, alpha: float, zeta: float = 0.0, smooth_L: float = 1.0,
                 pl_mu: float | None = None, sigma: float = 0.0, radius_r: float = 10.0,
                 delta_W: float = 3.0, eps: float = 1.0, delta: float = 0.1,
                 batch_B: int = 1, rho_mix: float = 0.0,
                 grad_bound_G: float | None = None, lip_x: float | None = None,
                 lip_grad_psi: float | None = None) -> ProblemInstance:
    """Build a ProblemInstance, filling G, L_x and L_grad_psi from the quadratic family.

    ``pl_mu`` defaults to ``smooth_L`` (the quadratic is exactly L-strongly convex).
    """
    derived = quadratic_constants(alpha, zeta, smooth_L, sigma, radius_r, delta_W)
    return ProblemInstance(
        alpha=alpha, zeta=zeta, smooth_L=smooth_L,
        pl_mu=smooth_L if pl_mu is None else pl_mu,
        sigma=sigma,
        grad_bound_G=derived["grad_bound_G"] if grad_bound_G is None else grad_bound_G,
        lip_x=derived["lip_x"] if lip_x is None else lip_x,
        lip_grad_psi=derived["lip_grad_psi"] if lip_grad_psi is None else lip_grad_psi,
        radius_r=radius_r, delta_W=delta_W, eps=eps, delta=delta,
        batch_B=batch_B, rho_mix=rho_mix,
    )


def synthetic_preset(**overrides: Any) -> ProblemInstance:
    """Canonical synthetic setting: L = mu = 1, sigma = 3, delta_W = 3, zeta = 1e-3.

    ``delta = 0.1`` is the failure budget that makes the closed-form lower
    bound reproduce the published table rows.
    """
    params: dict[str, Any] = dict(alpha=0.2, zeta=1e-3, smooth_L=1.0, sigma=3.0,
                                  radius_r=10.0, delta_W=3.0, eps=1.0, delta=0.1,
                                  batch_B=16, rho_mix=0.0)
    params.update(overrides)
    return make_problem(**params)


def hard_instance_preset(alpha: float, **overrides: Any) -> ProblemInstance:
    """Alternate constants L = mu = alpha used by the two-point construction."""
    overrides.setdefault("smooth_L", alpha)
    return synthetic_preset(alpha=alpha, **overrides)


@dataclass(frozen=True)
class QuadraticInstance:
    """The quadratic family at one location, with the proxy bias and start point."""

    problem: ProblemInstance
    location_m: float = 0.0
    bias_xi: float | None = None
    theta_init: float = 0.0

    def __post_init__(self) -> None:
        p = self.problem
        if self.bias_xi is None:
            object.__setattr__(self, "bias_xi", p.default_bias)
        xi = float(self.bias_xi)
        if p.zeta == 0 and xi != 0:
            raise ValueError("bias_xi must be 0 when zeta == 0")
        if abs(xi) > p.zeta / (2.0 * p.delta_W) * (1 + 1e-12):
            raise ValueError(f"|bias_xi| must not exceed zeta/(2 delta_W), got {xi!r}")
        need = p.delta_W / 2 + abs(xi) / p.alpha
        if not p.radius_r > need:
            raise ValueError(f"radius_r must exceed delta_W/2 + |xi|/alpha = {need!r}")

    @property
    def proxy_shift(self) -> float:
        """Offset of the proxy optimum from the task minimizer, ``xi / (alpha L)``."""
        return self.bias_xi / (self.problem.alpha * self.problem.smooth_L)

    def at(self, location_m: float) -> "QuadraticInstance":
        return replace(self, location_m=location_m)


def task_loss(inst: QuadraticInstance, theta: float) -> float:
    d = theta - inst.location_m
    return 0.5 * inst.problem.smooth_L * d * d


def task_grad(inst: QuadraticInstance, theta: float) -> float:
    return inst.problem.smooth_L * (theta - inst.location_m)


def proxy_grad_mean(inst: QuadraticInstance, theta: float) -> float:
    p = inst.problem
    return p.alpha * p.smooth_L * (theta - inst.location_m) + inst.bias_xi


def proxy_optimum(inst: QuadraticInstance) -> float:
    """Minimizer of the proxy inside the r-neighborhood of ``theta_init``.

    Raises NonInteriorError when the unconstrained minimizer is not strictly
    interior, since clipping it would break the first-order condition the
    competitor relies on.
    """
    opt = inst.location_m - inst.proxy_shift
    if abs(opt - inst.theta_init) >= inst.problem.radius_r:
        raise NonInteriorError(
            f"proxy optimum {opt!r} not interior to [{inst.theta_init - inst.problem.radius_r!r}, "
            f"{inst.theta_init + inst.problem.radius_r!r}]")
    return opt


def competitive_target(inst: QuadraticInstance) -> float:
    """Task risk at the proxy optimum."""
    return task_loss(inst, proxy_optimum(inst))


def excess_risk(inst: QuadraticInstance, theta: float) -> float:
    return task_loss(inst, theta) - competitive_target(inst)


def error_floor(problem: ProblemInstance) -> float:
    """Lowest excess risk any parameter can reach, ``-zeta / (2 alpha mu)``."""
    return -problem.zeta / (2.0 * problem.alpha * problem.pl_mu)
