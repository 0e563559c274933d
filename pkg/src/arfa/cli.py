"""Command-line front end: ``arfa simulate | compare | calibrate``.

Exit status: 0 on success, 1 for bad input (usage, scenario, ledger), 2 for
I/O failures while writing results.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Mapping, Sequence

from .capability import DIMENSIONS, CapabilityBelief, FailureRequirements, OperatorProfile
from .metrics import (
    LedgerFormatError,
    ReportError,
    emit_report,
    read_ledger,
    summarize,
    write_ledger,
    write_trajectories,
)
from .optimizer import BeliefOptimizer, SuccessTracker
from .scenario import Scenario, ScenarioError, builtin_scenario, load_scenario, with_overrides
from .simulation import POLICIES, run_experiment

BELIEF_FILE_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # bad usage exits 1; 2 is reserved for I/O failures
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_out() -> str:
    return os.environ.get("ARFA_OUT_DIR", "results")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario JSON file (default: built-in default scenario)")
    p.add_argument("--out", default=None, help="output directory (default: $ARFA_OUT_DIR or ./results)")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--failures", type=int, dest="n_failures")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--bin-width", type=float)
    p.add_argument("--steps", type=int, dest="optimizer_steps", help="optimizer steps per resolution")
    p.add_argument("--phase-mode", choices=("online", "two_phase"))
    p.add_argument("--acquisition-length", type=int)
    p.add_argument("--freeze-beliefs", action="store_true", default=None, dest="freeze_after_acquisition",
                   help="stop learning after the acquisition phase (two_phase only)")
    p.add_argument("--initial-beliefs", help="belief file used as the starting profiles")
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arfa", description="Adaptive failure allocation simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run one policy over several trials")
    _add_experiment_flags(sim)
    sim.add_argument("--policy", choices=POLICIES)

    cmp_ = sub.add_parser("compare", help="run several policies on shared failure streams")
    _add_experiment_flags(cmp_)
    cmp_.add_argument("--policies", nargs="+", help="policies to compare, e.g. arfa random")

    cal = sub.add_parser("calibrate", help="replay a ledger export through the belief optimizer")
    cal.add_argument("--ledger", required=True, help="ledger CSV written by simulate/compare")
    cal.add_argument("--initial-profile", help="belief file with starting bounds (default: (0, 1))")
    cal.add_argument("--scenario", help="scenario supplying optimizer settings")
    cal.add_argument("--trial", type=int, help="trial to replay when the ledger holds several")
    cal.add_argument("--steps", type=int, dest="optimizer_steps")
    cal.add_argument("--bin-width", type=float)
    cal.add_argument("--out", help="belief file to write (default: <out dir>/beliefs.json)")
    return parser


def _load(path: str | None) -> Scenario:
    return load_scenario(path) if path else builtin_scenario("default")


def write_beliefs(profiles: Mapping[str, OperatorProfile], path: Path) -> Path:
    data = {
        "version": BELIEF_FILE_VERSION,
        "operators": {
            op: {d.value: [p.beliefs[d].lower, p.beliefs[d].upper] for d in DIMENSIONS}
            for op, p in profiles.items()
        },
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2) + "\n")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_beliefs(path: str | Path) -> dict[str, OperatorProfile]:
    try:
        data = json.loads(Path(path).read_text())
        if data.get("version", BELIEF_FILE_VERSION) != BELIEF_FILE_VERSION:
            raise ValueError(f"unsupported version {data.get('version')!r}")
        return {
            op: OperatorProfile(op, {d: CapabilityBelief(*map(float, dims[d.value])) for d in DIMENSIONS})
            for op, dims in data["operators"].items()
        }
    except FileNotFoundError as exc:
        raise ScenarioError(f"belief file not found: {path}") from exc
    except (OSError, ValueError, KeyError, TypeError, AttributeError) as exc:
        raise ScenarioError(f"{path}: malformed belief file ({exc})") from exc


def _write_outputs(scenario: Scenario, results, out: Path, fmt: str, command: str, extra: dict) -> None:
    config = {"command": command, **extra, "scenario": scenario.to_dict()}
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "effective_config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ReportError(f"cannot write to {out}: {exc.strerror or exc}") from exc
    for policy, res in results.items():
        write_ledger(res, out / f"ledger_{policy}.csv")
        write_trajectories(res, out / f"trajectories_{policy}.csv")
    summary = summarize(
        results,
        paired=scenario.shared_failure_stream,
        seed=scenario.base_config.seed,
    )
    if fmt in ("json", "both"):
        emit_report(summary, "json", out / "summary.json")
    if fmt in ("csv", "both"):
        emit_report(summary, "csv", out / "summary.csv")
    for policy, s in summary.policies.items():
        ops = ", ".join(f"{op} {st.mean:.1%}" for op, st in s.operator_success.items())
        print(f"{policy:>12}: team {s.team_success.mean:.1%} ({ops}); "
              f"idle {s.idle_time.mean:.1f} s; gap {s.workload_gap.mean:.1f} s; "
              f"converged {s.convergence_rate:.1%}")
    for pair, ps in summary.p_values.items():
        print(f"{pair:>12}: p(team_success) = {ps['team_success']:.4g}")
    print(f"results written to {out}")


def _run(args: argparse.Namespace, policies: Sequence[str]) -> int:
    scenario = _load(args.scenario)
    overrides = {k: getattr(args, k, None) for k in (
        "seed", "trials", "n_failures", "epsilon", "bin_width", "optimizer_steps",
        "phase_mode", "acquisition_length", "freeze_after_acquisition",
    )}
    try:
        scenario = with_overrides(scenario, policies=list(policies), policy=policies[0], **overrides)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    initial = read_beliefs(args.initial_beliefs) if args.initial_beliefs else None
    results = run_experiment(
        scenario.base_config,
        scenario.operators,
        n_trials=scenario.trials,
        policies=scenario.policies,
        shared_failure_stream=scenario.shared_failure_stream,
        initial_profiles=initial,
    )
    out = Path(args.out or _default_out())
    extra = {"initial_beliefs": args.initial_beliefs}
    _write_outputs(scenario, results, out, args.format, args.command, extra)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.policy:
        policy = args.policy
    else:
        policy = (load_scenario(args.scenario) if args.scenario else builtin_scenario()).policies[0]
    return _run(args, [policy])


def cmd_compare(args: argparse.Namespace) -> int:
    scenario_policies = None
    if not args.policies:
        scenario_policies = _load(args.scenario).policies
    policies = args.policies or scenario_policies
    policies = [p for item in policies for p in item.split(",") if p]
    unknown = [p for p in policies if p not in POLICIES]
    if unknown:
        raise UsageError(f"unknown policies {unknown}; choose from {list(POLICIES)}")
    if len(policies) < 2 or len(set(policies)) != len(policies):
        raise UsageError("compare needs at least two distinct policies")
    return _run(args, policies)


def calibrate(
    rows,
    initial: Mapping[str, OperatorProfile],
    bin_width: float,
    steps: int,
    adam,
) -> dict[str, OperatorProfile]:
    """Replay ledger rows in order, updating each resolving operator's beliefs."""
    profiles = dict(initial)
    optimizers: dict[str, BeliefOptimizer] = {}
    tracker = SuccessTracker(bin_width)
    for row in rows:
        op = row.operator_id
        if op not in profiles:
            profiles[op] = OperatorProfile.fresh(op)
        if not row.belief_update:
            continue
        opt = optimizers.setdefault(op, BeliefOptimizer(adam, steps))
        tracker.observe(op, FailureRequirements(row.physical, row.cognitive, row.urgency), row.succeeded)
        profiles[op] = opt.update(profiles[op], tracker)
    return profiles


def cmd_calibrate(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario)
    cfg = scenario.base_config
    try:
        rows = read_ledger(args.ledger)
    except FileNotFoundError as exc:
        raise ScenarioError(f"ledger file not found: {args.ledger}") from exc
    trials = sorted({r.trial for r in rows})
    if args.trial is not None:
        rows = [r for r in rows if r.trial == args.trial]
        if not rows and trials:
            raise UsageError(f"trial {args.trial} not in ledger (found {trials})")
    elif len(trials) > 1:
        raise UsageError(f"ledger holds trials {trials}; pick one with --trial")
    initial = read_beliefs(args.initial_profile) if args.initial_profile else {}
    profiles = calibrate(
        rows,
        initial,
        args.bin_width or cfg.bin_width,
        args.optimizer_steps or cfg.optimizer_steps,
        cfg.adam,
    )
    if not profiles:
        for op in scenario.operators:
            profiles[op.id] = OperatorProfile.fresh(op.id)
    out = Path(args.out) if args.out else Path(_default_out()) / "beliefs.json"
    write_beliefs(profiles, out)
    for op, p in profiles.items():
        bounds = "  ".join(f"{d.value} [{p.beliefs[d].lower:.3f}, {p.beliefs[d].upper:.3f}]" for d in DIMENSIONS)
        print(f"{op}: {bounds}")
    print(f"beliefs written to {out}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "calibrate": cmd_calibrate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"arfa {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ScenarioError, LedgerFormatError) as exc:
        print(f"arfa {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"arfa {args.command}: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
