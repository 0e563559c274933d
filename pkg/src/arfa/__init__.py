"""Adaptive allocation of robot failures to human operators.

Operators are modelled by capability belief intervals; each failure goes to
the operator with the highest expected reward, and the intervals are refit
online from resolution outcomes.
"""

from .allocation import (
    AllocationDecision,
    AllocationError,
    ResolutionLedger,
    ResolutionRecord,
    allocate_alternating,
    allocate_arfa,
    allocate_random,
    cost,
    expected_reward,
    performance_metric_tau,
    reward,
)
from .capability import (
    DIMENSIONS,
    CapabilityBelief,
    Dimension,
    DimensionWeights,
    FailureRequirements,
    FailureSpec,
    OperatorProfile,
    capability_score,
    performance_index,
    predicted_performance,
)
from .optimizer import (
    AdamConfig,
    AdamState,
    BeliefOptimizer,
    SuccessTracker,
    adam_step,
    detect_convergence,
    empirical_success,
    loss,
    loss_gradient,
    observe_outcome,
    update_beliefs,
)
from .simulation import (
    FailureGenerator,
    SimulatedOperator,
    TrialConfig,
    TrialResult,
    run_experiment,
    run_trial,
    sample_failure,
    simulate_resolution,
    success_threshold,
)

__version__ = "0.1.0"
