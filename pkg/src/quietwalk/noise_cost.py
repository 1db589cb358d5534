"""Physics-informed footstep noise cost and its [0, 1] normalization.

The cost grows with per-foot contact force and squared impact velocity.
Two sign conventions are provided:

* ``monotone`` (default): cost increases with force and impact velocity,
  matching the positive correlation the cost is meant to capture.
* ``literal``: exponents as originally printed (decreasing in both), kept
  behind a flag for fidelity studies.

Normalization is an affine min-max rescale over the input box
[0, F_max]^4 x [0, v_clip]^4, with inputs clamped to the box first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

CONVENTIONS = ("monotone", "literal")
NUM_FEET = 4


class InvalidParams(ValueError):
    """Raised when cost parameters or contact data violate their invariants."""


@dataclass(frozen=True)
class ContactSnapshot:
    """Per-foot contact force magnitudes (N) and impact speeds (m/s)."""

    forces: tuple
    impact_velocities: tuple

    def __post_init__(self):
        forces = tuple(float(f) for f in self.forces)
        vels = tuple(float(v) for v in self.impact_velocities)
        if len(forces) != NUM_FEET or len(vels) != NUM_FEET:
            raise InvalidParams(
                f"expected {NUM_FEET} feet, got {len(forces)} forces / {len(vels)} velocities"
            )
        for name, values in (("force", forces), ("impact velocity", vels)):
            for x in values:
                if not math.isfinite(x) or x < 0.0:
                    raise InvalidParams(f"{name} entries must be finite and >= 0, got {x}")
        object.__setattr__(self, "forces", forces)
        object.__setattr__(self, "impact_velocities", vels)


@dataclass(frozen=True)
class CostParams:
    """Weights and scales of the contact-noise cost.

    ``F_max`` is a force reference, ``v_clip`` caps impact velocities for
    normalization purposes only.
    """

    lambda1: float = 0.5
    lambda2: float = 0.5
    sigma_F: float = 50.0
    sigma_v: float = 0.5
    F_max: float = 100.0
    v_clip: float = 2.0
    convention: str = "monotone"

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidParams("lambda1 and lambda2 must be >= 0")
        if self.sigma_F <= 0 or self.sigma_v <= 0:
            raise InvalidParams("sigma_F and sigma_v must be > 0")
        if self.F_max <= 0:
            raise InvalidParams("F_max must be > 0")
        if self.v_clip <= 0:
            raise InvalidParams("v_clip must be > 0")
        if self.convention not in CONVENTIONS:
            raise InvalidParams(f"convention must be one of {CONVENTIONS}")


def raw_cost(snapshot: ContactSnapshot, params: CostParams) -> float:
    """Unnormalized noise cost of one contact snapshot.

    monotone: lambda1 * sum_i exp((F_i - F_max)/sigma_F)
              + lambda2 * sum_i (1 - exp(-v_i^2 / sigma_v))
    literal:  lambda1 * sum_i exp((F_max - F_i)/sigma_F)
              + lambda2 * sum_i exp(-v_i^2 / sigma_v)
    """
    force_term = 0.0
    vel_term = 0.0
    if params.convention == "monotone":
        for f in snapshot.forces:
            force_term += math.exp((f - params.F_max) / params.sigma_F)
        for v in snapshot.impact_velocities:
            vel_term += 1.0 - math.exp(-(v * v) / params.sigma_v)
    else:
        for f in snapshot.forces:
            force_term += math.exp((params.F_max - f) / params.sigma_F)
        for v in snapshot.impact_velocities:
            vel_term += math.exp(-(v * v) / params.sigma_v)
    return params.lambda1 * force_term + params.lambda2 * vel_term


def _clamped(snapshot: ContactSnapshot, params: CostParams) -> ContactSnapshot:
    forces = tuple(min(max(f, 0.0), params.F_max) for f in snapshot.forces)
    vels = tuple(min(max(v, 0.0), params.v_clip) for v in snapshot.impact_velocities)
    return ContactSnapshot(forces, vels)


def normalization_bounds(params: CostParams) -> tuple:
    """(raw_min, raw_max) of the clamped input box under the monotone convention."""
    zeros = ContactSnapshot((0.0,) * NUM_FEET, (0.0,) * NUM_FEET)
    tops = ContactSnapshot((params.F_max,) * NUM_FEET, (params.v_clip,) * NUM_FEET)
    return raw_cost(zeros, params), raw_cost(tops, params)


def normalized_cost(snapshot: ContactSnapshot, params: CostParams) -> float:
    """Affine min-max rescale of ``raw_cost`` to [0, 1].

    Inputs are clamped elementwise to [0, F_max] and [0, v_clip] before
    evaluation; the output is clamped to [0, 1]. Defined for the monotone
    convention only.
    """
    if params.convention != "monotone":
        raise InvalidParams("normalized_cost is defined for the monotone convention only")
    raw_min, raw_max = normalization_bounds(params)
    if raw_max <= raw_min:
        raise InvalidParams("degenerate normalization range (raw_max <= raw_min)")
    raw = raw_cost(_clamped(snapshot, params), params)
    return min(max((raw - raw_min) / (raw_max - raw_min), 0.0), 1.0)


def single_foot_cost(force: float, impact_velocity: float, params: CostParams) -> float:
    """Normalized cost of a snapshot with one striking foot, the others idle."""
    snap = ContactSnapshot(
        (force, 0.0, 0.0, 0.0), (impact_velocity, 0.0, 0.0, 0.0)
    )
    return normalized_cost(snap, params)
