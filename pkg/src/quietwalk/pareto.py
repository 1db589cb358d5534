"""Pareto dominance, front extraction, 2-D hypervolume, sparsity, and the
scalar evaluation metrics (average cost violation, average tracking error).

Both objectives are minimized: normalized cost on x, tracking error on y.
Hypervolume is the exact area dominated by the front relative to a reference
point, computed by a sorted sweep over the front's staircase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class InvalidRef(ValueError):
    """Hypervolume reference point unusable for the given front."""


@dataclass(frozen=True)
class SolutionPoint:
    cost: float
    tracking_error: float
    tag: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.cost) and math.isfinite(self.tracking_error)):
            raise ValueError("objectives must be finite")


@dataclass(frozen=True)
class RefPoint:
    cost_ref: float = 1.0
    err_ref: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.cost_ref) and math.isfinite(self.err_ref)):
            raise InvalidRef("reference components must be finite")


@dataclass(frozen=True)
class ParetoFront:
    """Non-dominated points sorted by cost ascending (error strictly falls)."""

    points: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.points)


def dominates(p: SolutionPoint, q: SolutionPoint) -> bool:
    """p dominates q: no worse in both objectives, strictly better in one."""
    return (
        p.cost <= q.cost
        and p.tracking_error <= q.tracking_error
        and (p.cost < q.cost or p.tracking_error < q.tracking_error)
    )


def pareto_filter(points) -> ParetoFront:
    """Extract the non-dominated subset; exact coordinate ties keep the first."""
    points = list(points)
    if not points:
        raise ValueError("pareto_filter requires at least one point")
    seen = set()
    unique = []
    for p in points:
        key = (p.cost, p.tracking_error)
        if key not in seen:
            seen.add(key)
            unique.append(p)
    front = [
        p for p in unique
        if not any(dominates(q, p) for q in unique if q is not p)
    ]
    front.sort(key=lambda p: (p.cost, p.tracking_error))
    return ParetoFront(points=tuple(front))


def hypervolume_2d(front: ParetoFront, ref: RefPoint) -> float:
    """Area of the union of rectangles [cost_i, cost_ref] x [err_i, err_ref].

    Points that do not strictly dominate the reference are clipped out.
    """
    inside = [
        p for p in front.points
        if p.cost < ref.cost_ref and p.tracking_error < ref.err_ref
    ]
    if not inside:
        return 0.0
    inside = pareto_filter(inside).points
    area = 0.0
    prev_err = ref.err_ref
    for p in inside:  # cost ascending, error descending
        area += (ref.cost_ref - p.cost) * (prev_err - p.tracking_error)
        prev_err = p.tracking_error
    return area


def sparsity(front: ParetoFront) -> float:
    """Population standard deviation of gaps between adjacent front points."""
    pts = front.points
    if len(pts) <= 2:
        return 0.0
    gaps = [
        math.hypot(b.cost - a.cost, b.tracking_error - a.tracking_error)
        for a, b in zip(pts, pts[1:])
    ]
    mean = sum(gaps) / len(gaps)
    return math.sqrt(sum((g - mean) ** 2 for g in gaps) / len(gaps))


def avg_cost_violation(evals) -> float:
    """Mean of max(0, measured_cost - eps) over (cost, eps) pairs."""
    evals = list(evals)
    if not evals:
        raise ValueError("avg_cost_violation requires at least one entry")
    return sum(max(0.0, c - eps) for c, eps in evals) / len(evals)


def avg_tracking_error(evals) -> float:
    """Mean over evals of the mean absolute velocity deviation per rollout."""
    evals = list(evals)
    if not evals:
        raise ValueError("avg_tracking_error requires at least one entry")
    per_rollout = []
    for v_series, v_target in evals:
        series = list(v_series)
        if not series:
            raise ValueError("empty velocity series")
        per_rollout.append(sum(abs(v - v_target) for v in series) / len(series))
    return sum(per_rollout) / len(per_rollout)
