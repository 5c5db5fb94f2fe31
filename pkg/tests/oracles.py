"""Independent reference implementations used to freeze expected values.

Plain-Python loops and closed forms; nothing here imports the package.
"""
from __future__ import annotations

import math


def geometric_excess(t: int, shift: float = 3.0, eta_alpha: float = 0.1, L: float = 1.0) -> float:
    """Noiseless excess after a shift: 0.5 L (shift (1 - eta alpha L)^(t-1))^2."""
    return 0.5 * L * (shift * (1.0 - eta_alpha * L) ** (t - 1)) ** 2


def first_time_below(eps: float, **kw) -> int:
    t = 1
    while geometric_excess(t, **kw) > eps:
        t += 1
    return t


def greedy_reference(locs: list[float], delta_W: float):
    """Literal transcription: anchor a <- 1; re-anchor whenever |m_t - m_a| > delta_W / 2."""
    a = 0
    anchors = [locs[0]]
    flags = []
    for t in range(1, len(locs)):
        if abs(locs[t] - locs[a]) <= delta_W / 2:
            anchors.append(locs[a])
            flags.append(False)
        else:
            a = t
            anchors.append(locs[t])
            flags.append(True)
    return anchors, flags


def lower_bound_ref(alpha, B, sigma=3.0, zeta=1e-3, eps=1.0, delta=0.1, rho=0.0) -> float:
    cphi = 1 + 4 * math.sqrt(rho) / (1 - math.sqrt(rho))
    return sigma ** 2 * cphi * (1 - 2 * delta) ** 2 / (
        B * alpha * (math.sqrt(zeta + 2 * alpha * eps) + math.sqrt(zeta)) ** 2)


def upper_bound_ref(alpha, B, sigma=3.0, delta_W=3.0, eps=1.0, rho=0.0) -> float:
    cphi = 1 + 4 * math.sqrt(rho) / (1 - math.sqrt(rho))
    return sigma ** 2 * cphi * math.log((delta_W + eps) / eps) / (B * alpha ** 2 * eps)


def chain_autocov(p: float, sigma: float, lag: int) -> float:
    """Lag covariance from the 2x2 transition matrix raised to ``lag`` (no eigen shortcut)."""
    P = [[p, 1 - p], [1 - p, p]]
    M = [[1.0, 0.0], [0.0, 1.0]]
    for _ in range(lag):
        M = [[sum(M[i][k] * P[k][j] for k in range(2)) for j in range(2)] for i in range(2)]
    vals = (sigma, -sigma)
    # stationary law is uniform; E[X_0 X_lag]
    return sum(0.5 * vals[i] * M[i][j] * vals[j] for i in range(2) for j in range(2))


def batch_var_ref(p: float, sigma: float, B: int) -> float:
    """Variance of a batch mean by summing the full covariance matrix."""
    total = 0.0
    for i in range(B):
        for j in range(B):
            total += chain_autocov(p, sigma, abs(i - j))
    return total / B ** 2


def sustained_hit(excess: list[float], eps: float) -> int:
    """1-based first t after which every value is <= eps; -1 if the last value violates."""
    T = len(excess)
    for t in range(T):
        if all(e <= eps for e in excess[t:]):
            return t + 1
    return -1


def first_hit(excess: list[float], eps: float) -> int:
    for t, e in enumerate(excess):
        if e <= eps:
            return t + 1
    return -1


def uniform_tail_ref(curve: list[float], delta: float) -> int | None:
    for t in range(len(curve)):
        if max(curve[t:]) <= delta:
            return t + 1
    return None
