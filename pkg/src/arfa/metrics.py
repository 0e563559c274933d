"""Trial metrics, cross-trial summaries, significance tests and report files."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .capability import DIMENSIONS
from .optimizer import detect_convergence
from .simulation import TrialResult

__all__ = [
    "TrialResult",
    "Stat",
    "PolicySummary",
    "ExperimentSummary",
    "success_rates",
    "idle_time",
    "workload_gap",
    "convergence_rate",
    "permutation_test",
    "summarize",
    "emit_report",
    "load_summary",
    "write_ledger",
    "write_trajectories",
    "read_ledger",
]

CSV_HEADER = ["policy", "metric", "mean", "std", "n"]


class ReportError(OSError):
    pass


def success_rates(result: TrialResult) -> tuple[dict[str, float | None], float]:
    """Per-operator and team share of failures resolved within the threshold.

    Operators that were never assigned a failure map to None.
    """
    records = result.ledger.records
    if not records:
        raise ValueError("success rates are undefined for an empty ledger")
    per_op: dict[str, float | None] = {}
    for op in result.operator_ids:
        mine = [r.succeeded for r in records if r.operator_id == op]
        per_op[op] = sum(mine) / len(mine) if mine else None
    team = sum(r.succeeded for r in records) / len(records)
    return per_op, team


def idle_time(result: TrialResult) -> float:
    return result.ledger.total_duration()


def workload_gap(result: TrialResult) -> float:
    """Spread of cumulative resolution time across operators (max minus min)."""
    totals = [result.ledger.total_duration(op) for op in result.operator_ids]
    return max(totals) - min(totals) if totals else 0.0


def convergence_rate(results: Sequence[TrialResult], window: int = 20, tol: float = 0.02) -> float:
    flags = []
    for res in results:
        if len(res.trajectories) < window:
            raise ValueError(f"trial {res.config.trial_index} has fewer than {window} snapshots")
        flags.append(detect_convergence(res.trajectories, window, tol).ravel())
    if not flags:
        return float("nan")
    return float(np.concatenate(flags).mean())


def _canonical(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Order the pair so the resampling depends only on the unordered pair of samples.
    ka = (len(a), tuple(np.sort(a)))
    kb = (len(b), tuple(np.sort(b)))
    return (a, b) if ka <= kb else (b, a)


def permutation_test(
    samples_a: Sequence[float],
    samples_b: Sequence[float],
    resamples: int = 10_000,
    rng: np.random.Generator | int | None = 0,
    paired: bool = False,
) -> float:
    """Two-sided permutation p-value for a difference in means.

    Unpaired: labels are reshuffled across the pooled samples. Paired
    (``paired=True``): signs of the per-pair differences are flipped. When
    the full permutation set is no larger than ``resamples`` it is
    enumerated exactly; otherwise a seeded Monte-Carlo estimate with the
    ``(k + 1) / (resamples + 1)`` correction is returned.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("permutation_test needs two non-empty samples")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    # Absorbs float noise when comparing permuted statistics to the observed one.
    slack = 1e-12

    if paired:
        if len(a) != len(b):
            raise ValueError("paired test needs equal-length samples")
        d = a - b
        n = len(d)
        observed = abs(d.mean())
        if 2**n <= resamples:
            signs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
            stats = np.abs(signs @ d) / n
            return float(np.mean(stats >= observed - slack))
        signs = rng.choice((1.0, -1.0), size=(resamples, n))
        stats = np.abs(signs @ d) / n
        return float((np.sum(stats >= observed - slack) + 1) / (resamples + 1))

    a, b = _canonical(a, b)
    pooled = np.concatenate([a, b])
    na, n = len(a), len(pooled)
    total = pooled.sum()
    observed = abs(a.mean() - b.mean())

    def stat(sum_a: np.ndarray) -> np.ndarray:
        return np.abs(sum_a / na - (total - sum_a) / (n - na))

    if math.comb(n, na) <= resamples:
        sums = np.array([pooled[list(idx)].sum() for idx in itertools.combinations(range(n), na)])
        return float(np.mean(stat(sums) >= observed - slack))
    perms = np.argsort(rng.random((resamples, n)), axis=1)[:, :na]
    sums = pooled[perms].sum(axis=1)
    return float((np.sum(stat(sums) >= observed - slack) + 1) / (resamples + 1))


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float
    n: int

    @classmethod
    def of(cls, values: Iterable[float | None]) -> "Stat":
        vals = [float(v) for v in values if v is not None]
        if not vals:
            return cls(float("nan"), float("nan"), 0)
        return cls(float(np.mean(vals)), float(np.std(vals)), len(vals))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n}


@dataclass
class PolicySummary:
    team_success: Stat
    operator_success: dict[str, Stat]
    idle_time: Stat
    workload_gap: Stat
    convergence_rate: float

    def to_dict(self) -> dict:
        return {
            "team_success": self.team_success.to_dict(),
            "operator_success": {k: v.to_dict() for k, v in self.operator_success.items()},
            "idle_time": self.idle_time.to_dict(),
            "workload_gap": self.workload_gap.to_dict(),
            "convergence_rate": self.convergence_rate,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PolicySummary":
        return cls(
            team_success=Stat(**d["team_success"]),
            operator_success={k: Stat(**v) for k, v in d["operator_success"].items()},
            idle_time=Stat(**d["idle_time"]),
            workload_gap=Stat(**d["workload_gap"]),
            convergence_rate=d["convergence_rate"],
        )


@dataclass
class ExperimentSummary:
    policies: dict[str, PolicySummary]
    # "<policy_a>|<policy_b>" -> metric -> p-value
    p_values: dict[str, dict[str, float]] = field(default_factory=dict)
    paired: bool = True

    def to_dict(self) -> dict:
        return {
            "policies": {k: v.to_dict() for k, v in self.policies.items()},
            "p_values": self.p_values,
            "paired": self.paired,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentSummary":
        return cls(
            policies={k: PolicySummary.from_dict(v) for k, v in d["policies"].items()},
            p_values={k: dict(v) for k, v in d.get("p_values", {}).items()},
            paired=d.get("paired", True),
        )

    def rows(self) -> list[list]:
        out = []
        for policy, s in self.policies.items():
            out.append([policy, "team_success", *_stat_cells(s.team_success)])
            for op, st in s.operator_success.items():
                out.append([policy, f"success:{op}", *_stat_cells(st)])
            out.append([policy, "idle_time", *_stat_cells(s.idle_time)])
            out.append([policy, "workload_gap", *_stat_cells(s.workload_gap)])
            out.append([policy, "convergence_rate", s.convergence_rate, 0.0, s.team_success.n])
        for pair, metrics in self.p_values.items():
            for metric, p in metrics.items():
                out.append([pair, f"p_value:{metric}", p, 0.0, self.policies[pair.split("|")[0]].team_success.n])
        return out


def _stat_cells(s: Stat) -> list:
    return [s.mean, s.std, s.n]


_COMPARED_METRICS = ("team_success", "idle_time", "workload_gap")


def _per_trial(results: Sequence[TrialResult]) -> dict[str, list[float]]:
    return {
        "team_success": [success_rates(r)[1] for r in results],
        "idle_time": [idle_time(r) for r in results],
        "workload_gap": [workload_gap(r) for r in results],
    }


def summarize(
    results: Mapping[str, Sequence[TrialResult]],
    paired: bool = True,
    resamples: int = 10_000,
    seed: int = 0,
    window: int = 20,
    tol: float = 0.02,
) -> ExperimentSummary:
    """Aggregate per-trial metrics over trials and compare every policy pair."""
    policies: dict[str, PolicySummary] = {}
    per_trial: dict[str, dict[str, list[float]]] = {}
    for policy, res in results.items():
        per_trial[policy] = _per_trial(res)
        op_ids = res[0].operator_ids if res else []
        op_rates = [success_rates(r)[0] for r in res]
        long_enough = [r for r in res if len(r.trajectories) >= window]
        policies[policy] = PolicySummary(
            team_success=Stat.of(per_trial[policy]["team_success"]),
            operator_success={op: Stat.of(rates[op] for rates in op_rates) for op in op_ids},
            idle_time=Stat.of(per_trial[policy]["idle_time"]),
            workload_gap=Stat.of(per_trial[policy]["workload_gap"]),
            convergence_rate=convergence_rate(long_enough, window, tol) if long_enough else float("nan"),
        )
    p_values: dict[str, dict[str, float]] = {}
    for pa, pb in itertools.combinations(list(results), 2):
        p_values[f"{pa}|{pb}"] = {
            m: permutation_test(per_trial[pa][m], per_trial[pb][m], resamples, seed, paired=paired)
            for m in _COMPARED_METRICS
        }
    return ExperimentSummary(policies, p_values, paired)


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_report(summary: ExperimentSummary, fmt: str, path: str | Path) -> Path:
    """Write the summary as CSV (``policy,metric,mean,std,n``) or JSON."""
    path = Path(path)
    if fmt == "json":
        with _open_for_write(path) as fh:
            json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif fmt == "csv":
        with _open_for_write(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for row in summary.rows():
                w.writerow([_fmt(x) for x in row])
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def load_summary(path: str | Path) -> ExperimentSummary:
    with open(path) as fh:
        return ExperimentSummary.from_dict(json.load(fh))


LEDGER_COLUMNS = [
    "trial", "index", "failure_id", "operator_id", "duration", "succeeded",
    "physical", "cognitive", "urgency", "type_label", "belief_update",
]
TRAJECTORY_COLUMNS = ["trial", "failure_index", "operator", "dimension", "lower", "upper"]


def write_ledger(results: Sequence[TrialResult], path: str | Path) -> Path:
    path = Path(path)
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for res in results:
            for k, (rec, learn) in enumerate(zip(res.ledger.records, res.learned)):
                req = rec.requirements
                label = res.failures[k].type_label or ""
                w.writerow([
                    res.config.trial_index, k, rec.failure_id, rec.operator_id, repr(rec.duration),
                    int(rec.succeeded), repr(req.physical), repr(req.cognitive), repr(req.urgency),
                    label, int(learn),
                ])
    return path


def write_trajectories(results: Sequence[TrialResult], path: str | Path) -> Path:
    """One row per (trial, failure index, operator, dimension) with the bounds after that failure."""
    path = Path(path)
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for res in results:
            for k, snap in enumerate(res.trajectories):
                for o, op in enumerate(res.operator_ids):
                    for d, dim in enumerate(DIMENSIONS):
                        w.writerow([
                            res.config.trial_index, k, op, dim.value,
                            repr(float(snap[o, d, 0])), repr(float(snap[o, d, 1])),
                        ])
    return path


class LedgerFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LedgerRow:
    trial: int
    index: int
    failure_id: str
    operator_id: str
    duration: float
    succeeded: bool
    physical: float
    cognitive: float
    urgency: float
    type_label: str
    belief_update: bool


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true"):
        return True
    if t in ("0", "false"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_ledger(path: str | Path) -> list[LedgerRow]:
    """Parse a ledger export; malformed rows raise :class:`LedgerFormatError` naming the line."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"operator_id", "duration", "succeeded", "physical", "cognitive", "urgency"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise LedgerFormatError(f"{path}: missing columns {sorted(missing)}")
        for line_no, raw in enumerate(reader, start=2):
            try:
                row = LedgerRow(
                    trial=int(raw.get("trial") or 0),
                    index=int(raw.get("index") or len(rows)),
                    failure_id=raw.get("failure_id") or f"row{line_no}",
                    operator_id=raw["operator_id"],
                    duration=float(raw["duration"]),
                    succeeded=_parse_bool(raw["succeeded"]),
                    physical=float(raw["physical"]),
                    cognitive=float(raw["cognitive"]),
                    urgency=float(raw["urgency"]),
                    type_label=raw.get("type_label") or "",
                    belief_update=_parse_bool(raw.get("belief_update") or "1"),
                )
                if not row.operator_id:
                    raise ValueError("empty operator_id")
                for name in ("physical", "cognitive", "urgency"):
                    v = getattr(row, name)
                    if not 0.0 <= v <= 1.0:
                        raise ValueError(f"{name}={v} outside [0, 1]")
                if not row.duration > 0:
                    raise ValueError(f"duration={row.duration} not positive")
            except (ValueError, TypeError, KeyError) as exc:
                raise LedgerFormatError(f"{path}: malformed ledger row at line {line_no}: {exc}") from exc
            rows.append(row)
    return rows
