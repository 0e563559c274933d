"""Monte-Carlo harness: simulated operators, failure streams and trial loops.

Randomness is drawn from numpy generators derived from one root seed. Each
trial gets independent substreams keyed by ``(trial_index, stream)``, so the
failure sequence of a trial is the same for every policy and the duration
draws line up failure-by-failure (common random numbers).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .allocation import (
    COLD_START_TAU,
    DEFAULT_EPSILON,
    AllocationError,
    ResolutionLedger,
    ResolutionRecord,
    allocate_alternating,
    allocate_arfa,
    allocate_random,
)
from .capability import (
    DIMENSIONS,
    CapabilityBelief,
    Dimension,
    DimensionWeights,
    FailureRequirements,
    FailureSpec,
    OperatorProfile,
)
from .optimizer import DEFAULT_BIN_WIDTH, AdamConfig, BeliefOptimizer, SuccessTracker

POLICIES = ("arfa", "random", "alternating")

# Inner optimizer steps per resolution in experiments. At learning rate 1e-3
# the bounds can move at most ~1e-3 per step, so 10 steps per failure cannot
# settle within a 100-failure trial.
EXPERIMENT_STEPS = 200

_STREAM_FAILURES = 0
_STREAM_DURATIONS = 1
_STREAM_POLICY = 2


def trial_rng(seed: int, trial_index: int, stream: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial_index, stream, salt)))


@dataclass(frozen=True)
class SimulatedOperator:
    """Ground-truth operator model; its latent capabilities are hidden from the allocator."""

    id: str
    kind: str
    latent_capabilities: Mapping[Dimension, CapabilityBelief]
    base_time_range: tuple[float, float]
    overload_penalty: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("local", "remote"):
            raise ValueError(f"operator kind must be 'local' or 'remote', got {self.kind!r}")
        if set(self.latent_capabilities) != set(DIMENSIONS):
            raise ValueError(f"operator {self.id!r} needs a latent interval per dimension")
        lo, hi = self.base_time_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad base_time_range {self.base_time_range}")
        if self.overload_penalty < 0:
            raise ValueError("overload_penalty must be >= 0")

    @classmethod
    def local(cls, operator_id: str = "local", uppers=(1.0, 1.0, 1.0), **kw) -> "SimulatedOperator":
        latent = {d: CapabilityBelief(0.0, u) for d, u in zip(DIMENSIONS, uppers)}
        kw.setdefault("base_time_range", (10.0, 50.0))
        return cls(operator_id, "local", latent, **kw)

    @classmethod
    def remote(cls, operator_id: str = "remote", uppers=(0.45, 0.85, 0.55), **kw) -> "SimulatedOperator":
        latent = {d: CapabilityBelief(0.0, u) for d, u in zip(DIMENSIONS, uppers)}
        kw.setdefault("base_time_range", (40.0, 90.0))
        return cls(operator_id, "remote", latent, **kw)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "latent_capabilities": {
                d.value: [b.lower, b.upper] for d, b in self.latent_capabilities.items()
            },
            "base_time_range": list(self.base_time_range),
            "overload_penalty": self.overload_penalty,
        }


@dataclass(frozen=True)
class CatalogEntry:
    label: str
    physical: tuple[float, float]
    cognitive: tuple[float, float]
    urgency: tuple[float, float] = (0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "physical": list(self.physical),
            "cognitive": list(self.cognitive),
            "urgency": list(self.urgency),
        }


FAILURE_CATALOG: tuple[CatalogEntry, ...] = (
    CatalogEntry("Undetected", (0.2, 0.4), (0.4, 0.6)),
    CatalogEntry("Misplaced", (0.4, 0.6), (0.8, 1.0)),
    CatalogEntry("Expired", (0.3, 0.5), (0.2, 0.3)),
    CatalogEntry("Grasp error", (0.1, 0.3), (0.6, 0.7)),
    CatalogEntry("Non-graspable", (0.9, 1.0), (0.3, 0.4)),
)


@dataclass(frozen=True)
class FailureGenerator:
    mode: str = "uniform"
    catalog: tuple[CatalogEntry, ...] = FAILURE_CATALOG

    def __post_init__(self) -> None:
        if self.mode not in ("uniform", "catalog"):
            raise ValueError(f"failure mode must be 'uniform' or 'catalog', got {self.mode!r}")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "catalog": [c.to_dict() for c in self.catalog]}


def sample_failure(generator: FailureGenerator, rng: np.random.Generator, failure_id: str = "f0") -> FailureSpec:
    if generator.mode == "uniform":
        p, c, u = rng.uniform(0.0, 1.0, size=3)
        return FailureSpec(failure_id, FailureRequirements(float(p), float(c), float(u)))
    if not generator.catalog:
        raise ValueError("catalog mode needs a non-empty failure catalog")
    entry = generator.catalog[int(rng.integers(len(generator.catalog)))]
    p = rng.uniform(*entry.physical)
    c = rng.uniform(*entry.cognitive)
    u = rng.uniform(*entry.urgency)
    return FailureSpec(failure_id, FailureRequirements(float(p), float(c), float(u)), entry.label)


def generate_failures(generator: FailureGenerator, n: int, rng: np.random.Generator) -> list[FailureSpec]:
    return [sample_failure(generator, rng, f"f{k:04d}") for k in range(n)]


def simulate_resolution(
    operator: SimulatedOperator,
    requirements: FailureRequirements,
    rng: np.random.Generator,
) -> float:
    """Resolution time: a uniform base time inflated by requirements above the latent uppers."""
    base = rng.uniform(*operator.base_time_range)
    excess = sum(
        max(0.0, requirements.for_dimension(d) - operator.latent_capabilities[d].upper)
        for d in DIMENSIONS
    )
    return float(base * (1.0 + operator.overload_penalty * excess))


def success_threshold(epsilon: float, urgency: float) -> float:
    return epsilon / (1.0 + urgency)


@dataclass(frozen=True)
class TrialConfig:
    policy: str = "arfa"
    n_failures: int = 100
    epsilon: float = DEFAULT_EPSILON
    weights: DimensionWeights = DimensionWeights()
    seed: int = 0
    trial_index: int = 0
    phase_mode: str = "online"
    acquisition_length: int = 15
    # Stop learning once the acquisition phase ends (two_phase only).
    freeze_after_acquisition: bool = False
    generator: FailureGenerator = FailureGenerator()
    bin_width: float = DEFAULT_BIN_WIDTH
    optimizer_steps: int = EXPERIMENT_STEPS
    adam: AdamConfig = AdamConfig()
    cold_start_tau: float = COLD_START_TAU

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.phase_mode not in ("online", "two_phase"):
            raise ValueError(f"phase_mode must be 'online' or 'two_phase', got {self.phase_mode!r}")
        if self.n_failures < 0:
            raise ValueError("n_failures must be >= 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.phase_mode == "two_phase" and self.n_failures and not self.acquisition_length < self.n_failures:
            raise ValueError("acquisition_length must be smaller than n_failures")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["weights"] = self.weights.to_dict()
        out["generator"] = self.generator.to_dict()
        return out


def fingerprint(config: TrialConfig, operators: Sequence[SimulatedOperator]) -> str:
    payload = {"config": config.to_dict(), "operators": [op.to_dict() for op in operators]}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class TrialResult:
    config: TrialConfig
    fingerprint: str
    operator_ids: list[str]
    failures: list[FailureSpec]
    ledger: ResolutionLedger
    # (n_failures, n_operators, 3, 2) bounds after each failure; [..., 0] lower, [..., 1] upper.
    trajectories: np.ndarray
    initial_beliefs: np.ndarray
    # Whether each failure's outcome fed the optimizer.
    learned: list[bool] = field(default_factory=list)

    @property
    def final_beliefs(self) -> np.ndarray:
        return self.trajectories[-1] if len(self.trajectories) else self.initial_beliefs

    def final_profiles(self) -> dict[str, OperatorProfile]:
        return {
            op: OperatorProfile.from_vector(op, self.final_beliefs[k].reshape(-1))
            for k, op in enumerate(self.operator_ids)
        }


def _belief_array(profile: OperatorProfile) -> np.ndarray:
    return profile.as_vector().reshape(len(DIMENSIONS), 2)


def run_trial(
    config: TrialConfig,
    operators: Sequence[SimulatedOperator],
    failures: Sequence[FailureSpec] | None = None,
    initial_profiles: Mapping[str, OperatorProfile] | None = None,
) -> TrialResult:
    """Simulate one trial: allocate, resolve, score and learn, one failure at a time.

    ``failures`` overrides the trial's own failure stream (used to share
    streams across policies). ``initial_profiles`` seeds the beliefs, e.g.
    with bounds calibrated offline.
    """
    if not operators:
        raise AllocationError("run_trial needs at least one operator")
    ids = [op.id for op in operators]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate operator ids in {ids}")
    sims = {op.id: op for op in operators}
    initial_profiles = initial_profiles or {}
    profiles = {i: initial_profiles.get(i, OperatorProfile.fresh(i)) for i in ids}
    optimizers = {i: BeliefOptimizer(config.adam, config.optimizer_steps) for i in ids}
    tracker = SuccessTracker(config.bin_width)
    ledger = ResolutionLedger()

    if failures is None:
        failures = generate_failures(
            config.generator, config.n_failures, trial_rng(config.seed, config.trial_index, _STREAM_FAILURES)
        )
    failures = list(failures)[: config.n_failures]
    duration_rng = trial_rng(config.seed, config.trial_index, _STREAM_DURATIONS)
    policy_rng = trial_rng(config.seed, config.trial_index, _STREAM_POLICY)

    initial = np.stack([_belief_array(profiles[i]) for i in ids])
    snapshots = []
    learned = []
    two_phase = config.phase_mode == "two_phase"
    for idx, failure in enumerate(failures):
        acquiring = two_phase and idx < config.acquisition_length
        policy = "alternating" if acquiring else config.policy
        current = [profiles[i] for i in ids]
        if policy == "arfa":
            decision = allocate_arfa(
                failure, current, ledger, config.weights, config.epsilon, config.cold_start_tau
            )
        elif policy == "random":
            decision = allocate_random(failure, current, policy_rng)
        else:
            decision = allocate_alternating(idx, current, failure.id)

        op_id = decision.operator_id
        req = failure.requirements
        duration = simulate_resolution(sims[op_id], req, duration_rng)
        succeeded = duration <= success_threshold(config.epsilon, req.urgency)
        ledger.append(ResolutionRecord(failure.id, op_id, duration, succeeded, req))

        learn = acquiring or not (two_phase and config.freeze_after_acquisition)
        if learn:
            tracker.observe(op_id, req, succeeded)
            profiles[op_id] = optimizers[op_id].update(profiles[op_id], tracker)
        learned.append(learn)
        snapshots.append(np.stack([_belief_array(profiles[i]) for i in ids]))

    traj = np.stack(snapshots) if snapshots else np.empty((0, len(ids), len(DIMENSIONS), 2))
    return TrialResult(
        config=config,
        fingerprint=fingerprint(config, operators),
        operator_ids=ids,
        failures=failures,
        ledger=ledger,
        trajectories=traj,
        initial_beliefs=initial,
        learned=learned,
    )


def run_experiment(
    base_config: TrialConfig,
    operators: Sequence[SimulatedOperator],
    n_trials: int = 20,
    policies: Sequence[str] = ("arfa", "random"),
    shared_failure_stream: bool = True,
    initial_profiles: Mapping[str, OperatorProfile] | None = None,
) -> dict[str, list[TrialResult]]:
    """Run ``n_trials`` trials per policy.

    With ``shared_failure_stream`` every policy sees the identical failure
    sequence within a trial index; otherwise each policy draws its own.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    results: dict[str, list[TrialResult]] = {p: [] for p in policies}
    for trial in range(n_trials):
        shared = None
        if shared_failure_stream:
            shared = generate_failures(
                base_config.generator,
                base_config.n_failures,
                trial_rng(base_config.seed, trial, _STREAM_FAILURES),
            )
        for k, policy in enumerate(policies):
            config = replace(base_config, policy=policy, trial_index=trial)
            failures = shared
            if failures is None:
                failures = generate_failures(
                    config.generator, config.n_failures, trial_rng(config.seed, trial, _STREAM_FAILURES, k + 1)
                )
            results[policy].append(run_trial(config, operators, failures, initial_profiles))
    return results
