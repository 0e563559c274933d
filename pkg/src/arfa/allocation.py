"""Expected-reward allocation of failures to operators, plus baseline policies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .capability import (
    DimensionWeights,
    FailureRequirements,
    FailureSpec,
    OperatorProfile,
    performance_index,
)

DEFAULT_EPSILON = 100.0
COLD_START_TAU = 0.5


class AllocationError(ValueError):
    pass


@dataclass(frozen=True)
class ResolutionRecord:
    failure_id: str
    operator_id: str
    duration: float
    succeeded: bool
    requirements: FailureRequirements

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration!r}")


@dataclass
class ResolutionLedger:
    """Append-only history of resolutions with cached per-operator aggregates."""

    records: list[ResolutionRecord] = field(default_factory=list)
    _count: dict[str, int] = field(default_factory=dict, repr=False)
    _duration: dict[str, float] = field(default_factory=dict, repr=False)
    _total: float = field(default=0.0, repr=False)

    def __post_init__(self) -> None:
        initial, self.records = list(self.records), []
        for rec in initial:
            self.append(rec)

    def append(self, record: ResolutionRecord) -> None:
        self.records.append(record)
        op = record.operator_id
        self._count[op] = self._count.get(op, 0) + 1
        self._duration[op] = self._duration.get(op, 0.0) + record.duration
        self._total += record.duration

    def __len__(self) -> int:
        return len(self.records)

    def count(self, operator_id: str) -> int:
        return self._count.get(operator_id, 0)

    def total_duration(self, operator_id: str | None = None) -> float:
        if operator_id is None:
            return self._total
        return self._duration.get(operator_id, 0.0)

    def for_operator(self, operator_id: str) -> list[ResolutionRecord]:
        return [r for r in self.records if r.operator_id == operator_id]


def performance_metric_tau(
    ledger: ResolutionLedger,
    operator_id: str,
    epsilon: float = DEFAULT_EPSILON,
    cold_start: float = COLD_START_TAU,
) -> float:
    """One minus the operator's mean resolution time over ``epsilon``.

    All assigned records count, successful or not. Operators without history
    get ``cold_start``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n = ledger.count(operator_id)
    if n == 0:
        return cold_start
    return 1.0 - ledger.total_duration(operator_id) / n / epsilon


def reward(urgency: float, tau: float) -> float:
    return urgency * (1.0 + tau) / (1.0 + urgency)


def cost(ledger: ResolutionLedger, operator_id: str) -> float:
    """Operator's share of all resolution time so far (0 for an empty ledger)."""
    total = ledger.total_duration()
    if total == 0:
        return 0.0
    return ledger.total_duration(operator_id) / total


def expected_reward(
    profile: OperatorProfile,
    requirements: FailureRequirements,
    ledger: ResolutionLedger,
    weights: DimensionWeights = DimensionWeights(),
    epsilon: float = DEFAULT_EPSILON,
    cold_start: float = COLD_START_TAU,
) -> float:
    capability = performance_index(profile, requirements, weights)
    tau = performance_metric_tau(ledger, profile.id, epsilon, cold_start)
    return capability * (reward(requirements.urgency, tau) - cost(ledger, profile.id))


@dataclass(frozen=True)
class AllocationDecision:
    failure_id: str
    operator_id: str
    # None for policies that do not score operators.
    expected_rewards: dict[str, float] | None = None


def _require_operators(operators: Sequence) -> None:
    if len(operators) == 0:
        raise AllocationError("cannot allocate a failure with no operators")


def allocate_arfa(
    failure: FailureSpec,
    operators: Sequence[OperatorProfile],
    ledger: ResolutionLedger,
    weights: DimensionWeights = DimensionWeights(),
    epsilon: float = DEFAULT_EPSILON,
    cold_start: float = COLD_START_TAU,
) -> AllocationDecision:
    """Assign to the operator with the highest expected reward.

    Exact ties go to the operator with less cumulative resolution time, then
    to the one registered first.
    """
    _require_operators(operators)
    scores = {
        op.id: expected_reward(op, failure.requirements, ledger, weights, epsilon, cold_start)
        for op in operators
    }
    best = min(
        range(len(operators)),
        key=lambda k: (-scores[operators[k].id], ledger.total_duration(operators[k].id), k),
    )
    return AllocationDecision(failure.id, operators[best].id, scores)


def allocate_random(
    failure: FailureSpec,
    operators: Sequence[OperatorProfile],
    rng: np.random.Generator,
) -> AllocationDecision:
    _require_operators(operators)
    k = int(rng.integers(len(operators)))
    return AllocationDecision(failure.id, operators[k].id)


def allocate_alternating(
    failure_index: int,
    operators: Sequence[OperatorProfile],
    failure_id: str | None = None,
) -> AllocationDecision:
    _require_operators(operators)
    op = operators[failure_index % len(operators)]
    return AllocationDecision(failure_id if failure_id is not None else str(failure_index), op.id)
