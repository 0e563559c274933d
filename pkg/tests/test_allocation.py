import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arfa.allocation import (
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
from arfa.capability import (
    DIMENSIONS,
    CapabilityBelief,
    DimensionWeights,
    FailureRequirements,
    FailureSpec,
    OperatorProfile,
)

REQ = FailureRequirements(0.3, 0.4, 0.6)


def rec(op, duration, ok=True, req=REQ, fid="f"):
    return ResolutionRecord(fid, op, duration, ok, req)


def ledger_of(*pairs):
    return ResolutionLedger([rec(op, d) for op, d in pairs])


def profile(op_id, *pairs):
    return OperatorProfile(op_id, {d: CapabilityBelief(*p) for d, p in zip(DIMENSIONS, pairs)})


def test_tau_examples():
    led = ledger_of(("a", 40.0), ("a", 60.0), ("b", 100.0))
    assert performance_metric_tau(led, "a", 100.0) == pytest.approx(0.5, abs=1e-12)
    assert performance_metric_tau(led, "b", 100.0) == pytest.approx(0.0, abs=1e-12)
    assert performance_metric_tau(led, "nobody", 100.0) == 0.5


def test_tau_uses_failed_records_and_can_go_negative():
    led = ResolutionLedger([rec("a", 150.0, ok=False), rec("a", 50.0, ok=True)])
    assert performance_metric_tau(led, "a", 100.0) == pytest.approx(0.0, abs=1e-12)
    assert performance_metric_tau(ledger_of(("a", 250.0)), "a", 100.0) == pytest.approx(-1.5)


@pytest.mark.parametrize("u, tau, expected", [(0.0, 0.7, 0.0), (1.0, 0.5, 0.75), (1.0, 0.0, 0.5)])
def test_reward_examples(u, tau, expected):
    assert reward(u, tau) == pytest.approx(expected, abs=1e-12)


def test_cost_examples():
    led = ledger_of(("a", 30.0), ("b", 90.0))
    assert cost(led, "a") == pytest.approx(0.25, abs=1e-12)
    assert cost(ResolutionLedger(), "a") == 0.0
    assert cost(ledger_of(("a", 10.0), ("a", 5.0)), "a") == 1.0


def test_expected_reward_examples():
    # Lambda = 0.5 (scores 1, 0.5, 0), R = 0.75 (urgency 1, tau 0.5), C = 0.25.
    prof = profile("a", (0.2, 0.8), (0.2, 0.8), (0.0, 0.5))
    req = FailureRequirements(0.1, 0.5, 1.0)
    led = ledger_of(("a", 40.0), ("a", 60.0), ("b", 300.0))
    assert expected_reward(prof, req, led) == pytest.approx(0.5 * (0.75 - 0.25), abs=1e-12)
    zero = profile("a", (0.0, 0.1), (0.0, 0.1), (0.0, 0.1))
    assert expected_reward(zero, FailureRequirements(0.5, 0.5, 0.5), led) == 0.0


def _oracle_er(beliefs, req, durations, op, eps=100.0, w=(1 / 3, 1 / 3, 1 / 3)):
    # Independent hand transcription of the scoring chain.
    def lam(lo, hi, r):
        if r <= lo:
            return 1.0
        if r > hi:
            return 0.0
        return (hi - r) / (hi - lo)

    r = (req.physical, req.cognitive, req.urgency)
    Lam = sum(wj * lam(lo, hi, rj) for wj, (lo, hi), rj in zip(w, beliefs, r))
    mine = [d for o, d in durations if o == op]
    tau = 1 - (sum(mine) / len(mine)) / eps if mine else 0.5
    R = r[2] * (1 + tau) / (1 + r[2])
    total = sum(d for _, d in durations)
    C = sum(mine) / total if total else 0.0
    return Lam * (R - C)


def test_two_operator_toy_matches_brute_force():
    beliefs = {
        "local": [(0.3, 0.9), (0.1, 0.7), (0.2, 1.0)],
        "remote": [(0.0, 0.4), (0.2, 0.9), (0.0, 0.6)],
    }
    durations = [("local", 22.0), ("remote", 71.0), ("local", 35.0), ("remote", 58.0), ("local", 19.0)]
    led = ledger_of(*durations)
    ops = [profile(k, *v) for k, v in beliefs.items()]
    for req in [FailureRequirements(0.5, 0.5, 0.5), FailureRequirements(0.35, 0.8, 0.1), FailureRequirements(0.95, 0.2, 0.9)]:
        decision = allocate_arfa(FailureSpec("x", req), ops, led)
        expected = {k: _oracle_er(v, req, durations, k) for k, v in beliefs.items()}
        assert decision.expected_rewards == pytest.approx(expected, abs=1e-12)
        assert decision.operator_id == max(expected, key=expected.get)


def test_arfa_argmax_and_singleton():
    strong = profile("A", (0.0, 1.0), (0.0, 1.0), (0.5, 1.0))
    weak = profile("B", (0.0, 0.3), (0.0, 0.3), (0.0, 0.3))
    f = FailureSpec("f", FailureRequirements(0.2, 0.2, 0.8))
    d = allocate_arfa(f, [weak, strong], ResolutionLedger())
    assert d.operator_id == "A"
    assert d.expected_rewards["A"] > d.expected_rewards["B"]
    assert allocate_arfa(f, [weak], ResolutionLedger()).operator_id == "B"


def test_arfa_tie_breaks_on_cumulative_duration_then_order():
    a, b = OperatorProfile.fresh("A"), OperatorProfile.fresh("B")
    f = FailureSpec("f", FailureRequirements(0.5, 0.5, 0.0))
    # urgency 0 and equal cost share -> identical ER; B has worked less.
    led = ResolutionLedger([rec("A", 30.0), rec("B", 20.0), rec("B", 10.0)])
    d = allocate_arfa(f, [a, b], led)
    assert d.expected_rewards["A"] == d.expected_rewards["B"]
    # Equal totals -> equal ER, then registration order decides.
    assert d.operator_id == "A"
    led2 = ResolutionLedger([rec("A", 40.0), rec("B", 20.0), rec("B", 20.0)])
    d2 = allocate_arfa(FailureSpec("g", FailureRequirements(0.5, 0.5, 0.0)), [a, b], led2)
    assert d2.operator_id == "A"
    # Symmetric profiles, empty ledger: ER equal, no durations -> first registered.
    assert allocate_arfa(f, [b, a], ResolutionLedger()).operator_id == "B"


def test_arfa_tie_prefers_less_worked_operator():
    a, b = OperatorProfile.fresh("A"), OperatorProfile.fresh("B")
    # Lambda = 0 for both (all requirements above the upper bound of degenerate beliefs)
    zero_a = profile("A", (0.0, 0.01), (0.0, 0.01), (0.0, 0.01))
    zero_b = profile("B", (0.0, 0.01), (0.0, 0.01), (0.0, 0.01))
    led = ResolutionLedger([rec("A", 50.0), rec("B", 20.0)])
    d = allocate_arfa(FailureSpec("f", FailureRequirements(0.5, 0.5, 0.5)), [zero_a, zero_b], led)
    assert d.expected_rewards == {"A": 0.0, "B": 0.0}
    assert d.operator_id == "B"


def test_cold_start_first_assignment_driven_by_capability():
    # Empty ledger: tau = 0.5 and C = 0 for everyone, so ER = Lambda * R and
    # the operator with the larger performance index wins.
    strong = profile("S", (0.6, 1.0), (0.6, 1.0), (0.6, 1.0))
    weak = profile("W", (0.0, 0.5), (0.0, 0.5), (0.0, 0.5))
    for req in [FailureRequirements(0.55, 0.3, 0.7), FailureRequirements(0.9, 0.9, 0.2)]:
        d = allocate_arfa(FailureSpec("f", req), [weak, strong], ResolutionLedger())
        assert d.operator_id == "S"
        assert d.expected_rewards["W"] <= d.expected_rewards["S"]


def test_empty_operator_list_errors():
    f = FailureSpec("f", REQ)
    with pytest.raises(AllocationError):
        allocate_arfa(f, [], ResolutionLedger())
    with pytest.raises(AllocationError):
        allocate_random(f, [], np.random.default_rng(0))
    with pytest.raises(AllocationError):
        allocate_alternating(0, [])


def test_random_frequencies_and_determinism():
    ops = [OperatorProfile.fresh("A"), OperatorProfile.fresh("B")]
    f = FailureSpec("f", REQ)
    rng = np.random.default_rng(123)
    picks = [allocate_random(f, ops, rng).operator_id for _ in range(10_000)]
    assert 0.49 <= picks.count("A") / 10_000 <= 0.51
    r1, r2 = np.random.default_rng(7), np.random.default_rng(7)
    s1 = [allocate_random(f, ops, r1).operator_id for _ in range(50)]
    s2 = [allocate_random(f, ops, r2).operator_id for _ in range(50)]
    assert s1 == s2
    assert allocate_random(f, ops[:1], rng).operator_id == "A"
    assert allocate_random(f, ops, rng).expected_rewards is None


@pytest.mark.parametrize("idx, n, expected", [(0, 2, "A"), (1, 2, "B"), (5, 3, "C")])
def test_alternating(idx, n, expected):
    ops = [OperatorProfile.fresh(x) for x in "ABC"[:n]]
    assert allocate_alternating(idx, ops).operator_id == expected


durations = st.lists(
    st.tuples(st.sampled_from(["A", "B", "C"]), st.floats(0.5, 200.0)), min_size=0, max_size=30
)


@given(durations)
def test_ledger_aggregates_match_recomputation(rows):
    led = ResolutionLedger()
    for op, d in rows:
        led.append(rec(op, d))
    for op in "ABC":
        mine = [d for o, d in rows if o == op]
        assert led.count(op) == len(mine)
        assert led.total_duration(op) == pytest.approx(sum(mine), rel=1e-12, abs=1e-12)
        if mine:
            assert performance_metric_tau(led, op, 100.0) == pytest.approx(1 - np.mean(mine) / 100.0)
    assert led.total_duration() == pytest.approx(sum(d for _, d in rows), rel=1e-12, abs=1e-12)


@given(durations.filter(bool))
def test_costs_sum_to_one(rows):
    led = ledger_of(*rows)
    assert sum(cost(led, op) for op in "ABC") == pytest.approx(1.0, abs=1e-9)


@given(st.floats(0.01, 1.0), st.floats(-2.0, 2.0), st.floats(1e-3, 1.0))
def test_reward_increasing_in_tau(u, tau, dt):
    assert reward(u, tau + dt) > reward(u, tau)


@given(st.floats(0.0, 0.99), st.floats(-0.99, 2.0), st.floats(1e-3, 1.0))
def test_reward_increasing_in_urgency(u, tau, du):
    u2 = min(1.0, u + du)
    assert reward(u2, tau) > reward(u, tau)


@given(st.floats(1.0, 100.0), st.floats(1.0, 100.0))
def test_er_decreases_as_cost_share_grows(extra, other):
    prof = profile("A", (0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
    req = FailureRequirements(0.3, 0.3, 0.5)
    # Same mean duration (tau fixed), larger share of total time.
    base = ledger_of(("A", 50.0), ("B", other))
    heavier = ledger_of(("A", 50.0), ("A", 50.0), ("B", other))
    assert expected_reward(prof, req, heavier) < expected_reward(prof, req, base)


@st.composite
def allocation_case(draw):
    n = draw(st.integers(1, 4))
    ops = []
    for k in range(n):
        pairs = []
        for _ in range(3):
            a, b = draw(st.floats(0, 1)), draw(st.floats(0, 1))
            pairs.append((min(a, b), max(a, b)))
        ops.append(profile(f"op{k}", *pairs))
    rows = draw(st.lists(st.tuples(st.sampled_from([o.id for o in ops]), st.floats(1.0, 100.0)), max_size=10))
    req = FailureRequirements(draw(st.floats(0, 1)), draw(st.floats(0, 1)), draw(st.floats(0, 1)))
    perm = draw(st.permutations(list(range(n))))
    return ops, rows, req, perm


@settings(max_examples=150)
@given(allocation_case())
def test_arfa_choice_in_argmax_set_under_permutation(case):
    ops, rows, req, perm = case
    led = ledger_of(*rows)
    f = FailureSpec("f", req)
    d1 = allocate_arfa(f, ops, led)
    d2 = allocate_arfa(f, [ops[k] for k in perm], led)
    best = max(d1.expected_rewards.values())
    argmax = {k for k, v in d1.expected_rewards.items() if v == best}
    assert d1.operator_id in argmax and d2.operator_id in argmax
    assert d1.expected_rewards == d2.expected_rewards


def test_weights_change_the_index():
    prof = profile("A", (0.0, 0.2), (0.0, 1.0), (0.0, 1.0))
    req = FailureRequirements(0.5, 0.0, 1.0)
    led = ResolutionLedger()
    physical_only = DimensionWeights(1.0, 0.0, 0.0)
    cognitive_only = DimensionWeights(0.0, 1.0, 0.0)
    assert expected_reward(prof, req, led, physical_only) == 0.0
    assert expected_reward(prof, req, led, cognitive_only) == pytest.approx(0.75)
