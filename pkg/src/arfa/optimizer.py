"""Online calibration of capability bounds from resolution outcomes.

Outcomes are pooled per operator into requirement bins (``S`` successes out
of ``T`` attempts). The bounds are fitted by minimising the summed squared
gap between each bin's empirical success rate and the success probability
the bounds predict at the bin centre, using Adam with L2 weight decay and a
projection that keeps every interval inside ``[0, 1]`` with a minimum width.

Parameter vectors use the layout of :meth:`OperatorProfile.as_vector`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .capability import DIMENSIONS, FailureRequirements, OperatorProfile

RequirementBin = tuple[int, int, int]

DEFAULT_BIN_WIDTH = 0.2
DEFAULT_STEPS = 10


def requirement_bin(requirements: FailureRequirements, bin_width: float = DEFAULT_BIN_WIDTH) -> RequirementBin:
    top = math.ceil(1.0 / bin_width - 1e-9) - 1
    return tuple(  # type: ignore[return-value]
        min(int(math.floor(x / bin_width)), top) for x in requirements.as_array()
    )


def bin_center(key: RequirementBin, bin_width: float = DEFAULT_BIN_WIDTH) -> np.ndarray:
    return np.minimum((np.asarray(key, dtype=float) + 0.5) * bin_width, 1.0)


@dataclass
class SuccessTracker:
    """Per-operator success/attempt counts keyed by requirement bin."""

    bin_width: float = DEFAULT_BIN_WIDTH
    counts: dict[str, dict[RequirementBin, list[int]]] = field(default_factory=dict)

    def observe(self, operator_id: str, requirements: FailureRequirements, succeeded: bool) -> None:
        key = requirement_bin(requirements, self.bin_width)
        cell = self.counts.setdefault(operator_id, {}).setdefault(key, [0, 0])
        cell[0] += int(bool(succeeded))
        cell[1] += 1

    def get(self, operator_id: str, key: RequirementBin) -> tuple[int, int]:
        s, t = self.counts.get(operator_id, {}).get(key, (0, 0))
        return s, t

    def bins(self, operator_id: str) -> list[RequirementBin]:
        return sorted(self.counts.get(operator_id, {}))

    def is_empty(self, operator_id: str) -> bool:
        return not self.counts.get(operator_id)

    def arrays(self, operator_id: str) -> tuple[np.ndarray, np.ndarray]:
        """Bin centres ``(B, 3)`` and empirical success rates ``(B,)``."""
        keys = self.bins(operator_id)
        if not keys:
            return np.empty((0, 3)), np.empty(0)
        centers = np.stack([bin_center(k, self.bin_width) for k in keys])
        cells = self.counts[operator_id]
        rates = np.array([cells[k][0] / cells[k][1] for k in keys])
        return centers, rates


def observe_outcome(
    tracker: SuccessTracker,
    operator_id: str,
    requirements: FailureRequirements,
    succeeded: bool,
) -> SuccessTracker:
    tracker.observe(operator_id, requirements, succeeded)
    return tracker


def empirical_success(tracker: SuccessTracker, operator_id: str, key: RequirementBin) -> float:
    s, t = tracker.get(operator_id, key)
    if t == 0:
        raise KeyError(f"no observations for operator {operator_id!r} in bin {key}")
    return s / t


def _scores_and_partials(params: np.ndarray, reqs: np.ndarray):
    """Capability scores and their partials w.r.t. lower/upper, shape ``(B, 3)``.

    Partials use the middle-branch formula on the closed interval
    ``lower <= r <= upper`` and are zero elsewhere.
    """
    lo = params[0::2][None, :]
    hi = params[1::2][None, :]
    width = hi - lo
    safe = np.where(width > 0, width, 1.0)
    lam = np.where(reqs <= lo, 1.0, np.where(reqs > hi, 0.0, (hi - reqs) / safe))
    mid = (reqs >= lo) & (reqs <= hi) & (width > 0)
    d_lo = np.where(mid, (hi - reqs) / safe**2, 0.0)
    d_hi = np.where(mid, (reqs - lo) / safe**2, 0.0)
    return lam, d_lo, d_hi


def _loss_from_arrays(params: np.ndarray, centers: np.ndarray, rates: np.ndarray) -> float:
    if len(rates) == 0:
        return 0.0
    lam, _, _ = _scores_and_partials(params, centers)
    resid = rates - lam.prod(axis=1)
    return float(resid @ resid)


def _grad_from_arrays(params: np.ndarray, centers: np.ndarray, rates: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(params, dtype=float)
    if len(rates) == 0:
        return grad
    lam, d_lo, d_hi = _scores_and_partials(params, centers)
    resid = rates - lam.prod(axis=1)
    others = (lam[:, 1] * lam[:, 2], lam[:, 0] * lam[:, 2], lam[:, 0] * lam[:, 1])
    for j in range(len(DIMENSIONS)):
        coef = -2.0 * resid * others[j]
        grad[2 * j] = coef @ d_lo[:, j]
        grad[2 * j + 1] = coef @ d_hi[:, j]
    return grad


def loss(profile: OperatorProfile, tracker: SuccessTracker, operator_id: str | None = None) -> float:
    centers, rates = tracker.arrays(operator_id or profile.id)
    return _loss_from_arrays(profile.as_vector(), centers, rates)


def loss_gradient(profile: OperatorProfile, tracker: SuccessTracker, operator_id: str | None = None) -> np.ndarray:
    centers, rates = tracker.arrays(operator_id or profile.id)
    return _grad_from_arrays(profile.as_vector(), centers, rates)


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    min_width: float = 0.01


@dataclass
class AdamState:
    m: np.ndarray = field(default_factory=lambda: np.zeros(2 * len(DIMENSIONS)))
    v: np.ndarray = field(default_factory=lambda: np.zeros(2 * len(DIMENSIONS)))
    t: int = 0

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t)


def project_bounds(params: np.ndarray, min_width: float = 0.01) -> np.ndarray:
    """Clamp bounds to [0, 1], then widen narrow intervals about their midpoint."""
    out = np.clip(np.asarray(params, dtype=float), 0.0, 1.0)
    for k in range(0, len(out), 2):
        lo, hi = out[k], out[k + 1]
        if hi - lo < min_width:
            mid = 0.5 * (lo + hi)
            lo, hi = mid - 0.5 * min_width, mid + 0.5 * min_width
            if lo < 0.0:
                lo, hi = 0.0, min_width
            elif hi > 1.0:
                lo, hi = 1.0 - min_width, 1.0
            out[k], out[k + 1] = lo, hi
    return out


def adam_step(
    state: AdamState,
    params: np.ndarray,
    grad: np.ndarray,
    config: AdamConfig = AdamConfig(),
) -> tuple[np.ndarray, AdamState]:
    g = np.asarray(grad, dtype=float) + config.weight_decay * params
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * g
    v = config.beta2 * state.v + (1.0 - config.beta2) * g * g
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    stepped = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return project_bounds(stepped, config.min_width), AdamState(m, v, t)


@numba.njit(cache=True)
def _adam_run(params, m, v, t, centers, rates, steps, lr, wd, b1, b2, eps, min_width):
    # Compiled equivalent of ``steps`` calls to adam_step with the full-loss gradient.
    # Updates params, m and v in place; returns the new step counter.
    n_bins = rates.shape[0]
    g = np.empty(6)
    lam = np.empty(3)
    d_lo = np.empty(3)
    d_hi = np.empty(3)
    for _ in range(steps):
        g[:] = 0.0
        for b in range(n_bins):
            for j in range(3):
                lo = params[2 * j]
                hi = params[2 * j + 1]
                r = centers[b, j]
                w = hi - lo
                if r <= lo:
                    lam[j] = 1.0
                elif r > hi:
                    lam[j] = 0.0
                else:
                    lam[j] = (hi - r) / w
                if w > 0.0 and r >= lo and r <= hi:
                    d_lo[j] = (hi - r) / (w * w)
                    d_hi[j] = (r - lo) / (w * w)
                else:
                    d_lo[j] = 0.0
                    d_hi[j] = 0.0
            resid = rates[b] - lam[0] * lam[1] * lam[2]
            c0 = -2.0 * resid * (lam[1] * lam[2])
            c1 = -2.0 * resid * (lam[0] * lam[2])
            c2 = -2.0 * resid * (lam[0] * lam[1])
            g[0] += c0 * d_lo[0]
            g[1] += c0 * d_hi[0]
            g[2] += c1 * d_lo[1]
            g[3] += c1 * d_hi[1]
            g[4] += c2 * d_lo[2]
            g[5] += c2 * d_hi[2]
        t += 1
        for k in range(6):
            gk = g[k] + wd * params[k]
            m[k] = b1 * m[k] + (1.0 - b1) * gk
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk
            m_hat = m[k] / (1.0 - b1**t)
            v_hat = v[k] / (1.0 - b2**t)
            params[k] = params[k] - lr * m_hat / (np.sqrt(v_hat) + eps)
        for k in range(0, 6, 2):
            lo = min(max(params[k], 0.0), 1.0)
            hi = min(max(params[k + 1], 0.0), 1.0)
            if hi - lo < min_width:
                mid = 0.5 * (lo + hi)
                lo = mid - 0.5 * min_width
                hi = mid + 0.5 * min_width
                if lo < 0.0:
                    lo = 0.0
                    hi = min_width
                elif hi > 1.0:
                    lo = 1.0 - min_width
                    hi = 1.0
            params[k] = lo
            params[k + 1] = hi
    return t


class BeliefOptimizer:
    """Adam state for one operator; call :meth:`update` after each observed outcome."""

    def __init__(self, config: AdamConfig = AdamConfig(), steps: int = DEFAULT_STEPS):
        self.config = config
        self.steps = steps
        self.state = AdamState()

    def update(self, profile: OperatorProfile, tracker: SuccessTracker) -> OperatorProfile:
        profile, self.state = update_beliefs(
            profile, tracker, profile.id, self.state, self.steps, self.config
        )
        return profile


def update_beliefs(
    profile: OperatorProfile,
    tracker: SuccessTracker,
    operator_id: str | None = None,
    state: AdamState | None = None,
    steps: int = DEFAULT_STEPS,
    config: AdamConfig = AdamConfig(),
) -> tuple[OperatorProfile, AdamState]:
    """Run ``steps`` Adam iterations on the full accumulated loss.

    An operator with no observations is left untouched, so weight decay never
    moves a fresh profile away from ``(0, 1)``.
    """
    state = AdamState() if state is None else state
    op = operator_id or profile.id
    if tracker.is_empty(op):
        return profile, state
    centers, rates = tracker.arrays(op)
    params = profile.as_vector()
    state = state.copy()
    c = config
    state.t = int(
        _adam_run(
            params, state.m, state.v, state.t, centers, rates, steps,
            c.learning_rate, c.weight_decay, c.beta1, c.beta2, c.epsilon, c.min_width,
        )
    )
    return OperatorProfile.from_vector(profile.id, params), state


def detect_convergence(history: Sequence[np.ndarray] | np.ndarray, window: int = 20, tol: float = 0.02) -> np.ndarray:
    """Per-bound flag: did the bound move less than ``tol`` over the last ``window`` snapshots.

    Movement is the spread (max minus min) across the window, so slow drift
    counts as well as oscillation. ``history`` has snapshots on axis 0.
    """
    arr = np.asarray(history, dtype=float)
    if arr.shape[0] < window:
        raise ValueError(f"history has {arr.shape[0]} snapshots, window needs {window}")
    tail = arr[-window:]
    return (tail.max(axis=0) - tail.min(axis=0)) < tol


def settling_index(trajectory: Sequence[float] | np.ndarray, window: int = 20, tol: float = 0.02) -> int | None:
    """Smallest ``n`` such that every snapshot from ``n`` on stays within a ``tol`` band.

    Only windows of at least ``window`` snapshots count. Returns None when the
    trajectory never settles.
    """
    x = np.asarray(trajectory, dtype=float)
    if len(x) < window:
        return None
    # Suffix spreads, scanning from the end.
    hi = np.maximum.accumulate(x[::-1])[::-1]
    lo = np.minimum.accumulate(x[::-1])[::-1]
    ok = (hi - lo) < tol
    last = len(x) - window
    n = None
    for k in range(last, -1, -1):
        if not ok[k]:
            break
        n = k
    return n
