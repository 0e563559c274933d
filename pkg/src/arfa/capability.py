"""Operator capability beliefs and requirement scoring.

Each operator carries one belief interval ``(lower, upper)`` per capability
dimension. A failure's requirement vector is scored against those intervals
with a piecewise-linear match, then combined either as a weighted sum
(performance index) or a product (predicted success probability).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping

import numpy as np


class Dimension(str, Enum):
    PHYSICAL = "physical"
    COGNITIVE = "cognitive"
    RESPONSIVENESS = "responsiveness"


DIMENSIONS: tuple[Dimension, ...] = (
    Dimension.PHYSICAL,
    Dimension.COGNITIVE,
    Dimension.RESPONSIVENESS,
)

# Requirement component scored against each belief dimension. Urgency is
# matched against responsiveness.
REQUIREMENT_FIELD: dict[Dimension, str] = {
    Dimension.PHYSICAL: "physical",
    Dimension.COGNITIVE: "cognitive",
    Dimension.RESPONSIVENESS: "urgency",
}


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class CapabilityBelief:
    """Interval believed to contain an operator's true capability."""

    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self) -> None:
        _check_unit("lower", self.lower)
        _check_unit("upper", self.upper)
        if self.lower > self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class OperatorProfile:
    id: str
    beliefs: Mapping[Dimension, CapabilityBelief]

    def __post_init__(self) -> None:
        if set(self.beliefs) != set(DIMENSIONS):
            raise ValueError(f"profile {self.id!r} needs one belief per dimension")

    @classmethod
    def fresh(cls, operator_id: str) -> "OperatorProfile":
        return cls(operator_id, {d: CapabilityBelief(0.0, 1.0) for d in DIMENSIONS})

    def as_vector(self) -> np.ndarray:
        """Bounds flattened as ``[phys_l, phys_u, cog_l, cog_u, resp_l, resp_u]``."""
        out = np.empty(2 * len(DIMENSIONS))
        for k, dim in enumerate(DIMENSIONS):
            out[2 * k] = self.beliefs[dim].lower
            out[2 * k + 1] = self.beliefs[dim].upper
        return out

    @classmethod
    def from_vector(cls, operator_id: str, params: np.ndarray) -> "OperatorProfile":
        beliefs = {
            dim: CapabilityBelief(float(params[2 * k]), float(params[2 * k + 1]))
            for k, dim in enumerate(DIMENSIONS)
        }
        return cls(operator_id, beliefs)


@dataclass(frozen=True)
class FailureRequirements:
    physical: float
    cognitive: float
    urgency: float

    def __post_init__(self) -> None:
        _check_unit("physical", self.physical)
        _check_unit("cognitive", self.cognitive)
        _check_unit("urgency", self.urgency)

    def for_dimension(self, dim: Dimension) -> float:
        return getattr(self, REQUIREMENT_FIELD[dim])

    def as_array(self) -> np.ndarray:
        return np.array([self.physical, self.cognitive, self.urgency])


@dataclass(frozen=True)
class FailureSpec:
    id: str
    requirements: FailureRequirements
    type_label: str | None = None


@dataclass(frozen=True)
class DimensionWeights:
    physical: float = 1.0 / 3.0
    cognitive: float = 1.0 / 3.0
    responsiveness: float = 1.0 / 3.0

    def __post_init__(self) -> None:
        values = (self.physical, self.cognitive, self.responsiveness)
        if any(w < 0 for w in values):
            raise ValueError(f"weights must be non-negative, got {values}")
        if abs(sum(values) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(values)!r}")

    def __getitem__(self, dim: Dimension) -> float:
        return getattr(self, dim.value)

    def __iter__(self) -> Iterator[float]:
        return iter(self[d] for d in DIMENSIONS)

    @classmethod
    def from_mapping(cls, weights: Mapping[str, float]) -> "DimensionWeights":
        return cls(**{Dimension(k).value: float(v) for k, v in weights.items()})

    def to_dict(self) -> dict[str, float]:
        return {d.value: self[d] for d in DIMENSIONS}


def capability_score(belief: CapabilityBelief, requirement: float) -> float:
    """Piecewise-linear match of one requirement against one belief interval.

    1 when the requirement is at or below ``lower``, 0 above ``upper``,
    linear in between. A degenerate interval scores 1 up to and including
    its single point.
    """
    lo, hi = belief.lower, belief.upper
    if requirement <= lo:
        return 1.0
    if requirement > hi:
        return 0.0
    return (hi - requirement) / (hi - lo)


def performance_index(
    profile: OperatorProfile,
    requirements: FailureRequirements,
    weights: DimensionWeights = DimensionWeights(),
) -> float:
    return sum(
        weights[dim] * capability_score(profile.beliefs[dim], requirements.for_dimension(dim))
        for dim in DIMENSIONS
    )


def predicted_performance(profile: OperatorProfile, requirements: FailureRequirements) -> float:
    """Success probability predicted from the beliefs, assuming independent dimensions."""
    out = 1.0
    for dim in DIMENSIONS:
        out *= capability_score(profile.beliefs[dim], requirements.for_dimension(dim))
    return out
