"""Distribution trajectories over a 1-D location family and their quantization.

All distributions in a trajectory share one shape and differ only by their
location, so the Wasserstein-1 distance between two of them is exactly the
gap between locations.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

KINDS = ("piecewise-constant", "linear-drift", "random-walk", "custom")


class SingleStepViolation(ValueError):
    """Two consecutive locations are further apart than delta_W / 2."""


class BadParams(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


def _frozen(values: Iterable[float]) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DistributionTrajectory:
    """Locations ``m_1..m_T`` of a same-shape distribution family."""

    locations: np.ndarray
    kind: str = "custom"

    def __post_init__(self) -> None:
        locs = _frozen(self.locations)
        if locs.ndim != 1 or locs.size == 0:
            raise BadParams("a trajectory needs at least one location")
        if not np.all(np.isfinite(locs)):
            raise BadParams("locations must be finite")
        if self.kind not in KINDS:
            raise BadParams(f"unknown trajectory kind {self.kind!r}")
        object.__setattr__(self, "locations", locs)

    @property
    def horizon_T(self) -> int:
        return int(self.locations.size)

    @property
    def steps(self) -> np.ndarray:
        return np.abs(np.diff(self.locations))

    @property
    def path_variation(self) -> float:
        """Total W1 length ``V_T``."""
        return float(self.steps.sum())

    def check_single_step(self, delta_W: float, rtol: float = 1e-9) -> None:
        # rtol absorbs rounding from cumulative sums of exactly-admissible steps
        steps = self.steps
        if steps.size and steps.max() > delta_W / 2 * (1 + rtol):
            t = int(np.argmax(steps)) + 1
            raise SingleStepViolation(
                f"|m_{t + 1} - m_{t}| = {float(steps[t - 1])!r} exceeds delta_W/2 = {delta_W / 2!r}")

    def extended(self, horizon_T: int) -> "DistributionTrajectory":
        """Pad with the final location (stationary continuation) or truncate."""
        locs = self.locations
        if horizon_T <= locs.size:
            return DistributionTrajectory(locs[:horizon_T], self.kind)
        pad = np.full(horizon_T - locs.size, locs[-1])
        return DistributionTrajectory(np.concatenate([locs, pad]), self.kind)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DistributionTrajectory):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.locations, other.locations)


@dataclass(frozen=True, eq=False)
class QuantizedStream:
    """Piecewise-constant surrogate of a trajectory.

    ``shift_flags[k]`` is the indicator for time ``t = k + 2``; ``anchor_indices``
    are the 1-based start times of the stationary segments.
    """

    anchor_locations: np.ndarray
    shift_flags: np.ndarray
    anchor_indices: tuple[int, ...]

    @property
    def shift_count(self) -> int:
        return int(np.count_nonzero(self.shift_flags))

    @property
    def segments(self) -> list[tuple[int, int]]:
        """Inclusive 1-based ``(start, end)`` of each stationary segment."""
        T = int(self.anchor_locations.size)
        bounds = list(self.anchor_indices) + [T + 1]
        return [(bounds[i], bounds[i + 1] - 1) for i in range(len(self.anchor_indices))]


def w1_location(m_a: float, m_b: float) -> float:
    return abs(m_a - m_b)


def w1_empirical(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Exact W1 between two equal-size empirical measures on the line.

    The optimal coupling matches order statistics, so the distance is the mean
    absolute difference of the sorted samples.
    """
    a = np.sort(np.asarray(xs, dtype=float))
    b = np.sort(np.asarray(ys, dtype=float))
    if a.size != b.size:
        raise LengthMismatch(f"sample counts differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise LengthMismatch("empty samples")
    return float(np.mean(np.abs(a - b)))


def greedy_quantize(traj: DistributionTrajectory, delta_W: float) -> QuantizedStream:
    """Greedy anchor quantization.

    Keep the current anchor while the new location is within ``delta_W / 2``
    of it, otherwise declare a shift and re-anchor at the current time.
    """
    if not delta_W > 0:
        raise BadParams(f"delta_W must be > 0, got {delta_W!r}")
    traj.check_single_step(delta_W)
    locs = traj.locations
    T = locs.size
    half = delta_W / 2
    anchors = np.empty(T)
    flags = np.zeros(max(T - 1, 0), dtype=bool)
    a = 0
    anchors[0] = locs[0]
    starts = [1]
    for t in range(1, T):
        if w1_location(locs[t], locs[a]) <= half:
            anchors[t] = locs[a]
        else:
            flags[t - 1] = True
            a = t
            anchors[t] = locs[t]
            starts.append(t + 1)
    anchors.setflags(write=False)
    flags.setflags(write=False)
    return QuantizedStream(anchors, flags, tuple(starts))


def shift_count_bound(path_variation: float, delta_W: float) -> int:
    return math.ceil(2.0 * path_variation / delta_W)


def gen_trajectory(kind: str, horizon_T: int, delta_W: float,
                   drift_params: Mapping[str, Any] | None = None,
                   seed: int = 0) -> DistributionTrajectory:
    """Generate an admissible trajectory.

    ``piecewise-constant``
        ``start`` and ``jumps`` as ``[[t, size], ...]``; a jump starting at time
        ``t`` is spread over the fewest steps of size at most ``delta_W / 2``.
    ``linear-drift``
        ``start`` and per-step ``slope`` with ``|slope| <= delta_W / 2``.
    ``random-walk``
        ``start`` and Gaussian ``step_std``; steps are clipped to ``delta_W / 2``.
    ``custom``
        explicit ``locations``.
    """
    params = dict(drift_params or {})
    if int(horizon_T) != horizon_T or horizon_T < 1:
        raise BadParams(f"horizon_T must be an integer >= 1, got {horizon_T!r}")
    if not delta_W > 0:
        raise BadParams(f"delta_W must be > 0, got {delta_W!r}")
    half = delta_W / 2
    start = float(params.pop("start", 0.0))

    if kind == "piecewise-constant":
        jumps = params.pop("jumps", [])
        steps = np.zeros(horizon_T)
        for t, size in jumps:
            t = int(t)
            if not 2 <= t <= horizon_T:
                raise BadParams(f"jump time {t} outside [2, {horizon_T}]")
            n = max(1, math.ceil(abs(size) / half - 1e-12))
            if t + n - 1 > horizon_T:
                raise BadParams(f"jump of {size!r} at t={t} does not fit in the horizon")
            steps[t - 1:t - 1 + n] += size / n
        locs = start + np.cumsum(steps)
    elif kind == "linear-drift":
        slope = float(params.pop("slope", 0.0))
        if abs(slope) > half:
            raise BadParams(f"|slope| {slope!r} exceeds delta_W/2")
        locs = start + slope * np.arange(horizon_T)
    elif kind == "random-walk":
        step_std = float(params.pop("step_std", half / 2))
        if step_std < 0:
            raise BadParams("step_std must be >= 0")
        rng = np.random.default_rng(seed)
        steps = np.clip(rng.normal(0.0, step_std, horizon_T - 1), -half, half)
        locs = start + np.concatenate([[0.0], np.cumsum(steps)])
    elif kind == "custom":
        locs = np.asarray(params.pop("locations", []), dtype=float)
        if locs.size != horizon_T:
            raise BadParams(f"custom locations must have length {horizon_T}")
    else:
        raise BadParams(f"unknown trajectory kind {kind!r}")
    if params:
        raise BadParams(f"unused drift parameters for {kind}: {sorted(params)}")

    traj = DistributionTrajectory(locs, kind)
    traj.check_single_step(delta_W)
    return traj


def write_trajectory_csv(traj: DistributionTrajectory, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "location"])
        for t, m in enumerate(traj.locations, start=1):
            writer.writerow([t, repr(float(m))])


def read_trajectory_csv(path: str | Path, kind: str = "custom") -> DistributionTrajectory:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "location"]:
            raise BadParams(f"{path}: expected header 't,location', got {header!r}")
        rows = [r for r in reader if r]
    ts = [int(r[0]) for r in rows]
    if ts != list(range(1, len(ts) + 1)):
        raise BadParams(f"{path}: t column must run 1..T without gaps")
    return DistributionTrajectory([float(r[1]) for r in rows], kind)
