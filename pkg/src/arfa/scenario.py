"""JSON scenario files: operators, failure catalog and experiment parameters.

Schema (``version`` 1)::

    {
      "version": 1,
      "operators": [
        {"id": "local", "kind": "local",
         "latent_capabilities": {"physical": [0, 1], "cognitive": [0, 1], "responsiveness": [0, 1]},
         "base_time_range": [10, 50], "overload_penalty": 1.0}
      ],
      "failures": {"mode": "uniform" | "catalog",
                   "catalog": [{"label": "...", "physical": [lo, hi], "cognitive": [lo, hi], "urgency": [lo, hi]}]},
      "experiment": {"epsilon": 100, "weights": {...}, "trials": 20, "failures": 100,
                     "policies": ["arfa", "random"], "seed": 42, "phase_mode": "online",
                     "acquisition_length": 15, "freeze_after_acquisition": false,
                     "bin_width": 0.2, "optimizer_steps": 200, "cold_start_tau": 0.5,
                     "shared_failure_stream": true, "trial_index": 0,
                     "adam": {"learning_rate": 0.001, ...}}
    }

Everything except ``operators`` is optional; missing keys take library defaults.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .capability import DIMENSIONS, CapabilityBelief, Dimension, DimensionWeights
from .optimizer import AdamConfig
from .simulation import (
    FAILURE_CATALOG,
    CatalogEntry,
    FailureGenerator,
    SimulatedOperator,
    TrialConfig,
)

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    operators: list[SimulatedOperator]
    base_config: TrialConfig
    trials: int = 20
    policies: list[str] = field(default_factory=lambda: ["arfa", "random"])
    shared_failure_stream: bool = True

    def to_dict(self) -> dict:
        cfg = self.base_config
        return {
            "version": SCHEMA_VERSION,
            "operators": [op.to_dict() for op in self.operators],
            "failures": cfg.generator.to_dict(),
            "experiment": {
                "epsilon": cfg.epsilon,
                "weights": cfg.weights.to_dict(),
                "trials": self.trials,
                "failures": cfg.n_failures,
                "policies": list(self.policies),
                "seed": cfg.seed,
                "trial_index": cfg.trial_index,
                "phase_mode": cfg.phase_mode,
                "acquisition_length": cfg.acquisition_length,
                "freeze_after_acquisition": cfg.freeze_after_acquisition,
                "bin_width": cfg.bin_width,
                "optimizer_steps": cfg.optimizer_steps,
                "cold_start_tau": cfg.cold_start_tau,
                "shared_failure_stream": self.shared_failure_stream,
                "adam": asdict(cfg.adam),
            },
        }


def _pair(value: Any, what: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"{what} must be a [low, high] pair, got {value!r}")
    lo, hi = (float(v) for v in value)
    if lo > hi:
        raise ScenarioError(f"{what} has low > high: {value!r}")
    return lo, hi


def _operator(raw: Mapping[str, Any], k: int) -> SimulatedOperator:
    where = f"operators[{k}]"
    try:
        latent_raw = raw["latent_capabilities"]
        latent = {}
        for dim in DIMENSIONS:
            lo, hi = _pair(latent_raw[dim.value], f"{where}.latent_capabilities.{dim.value}")
            latent[dim] = CapabilityBelief(lo, hi)
        extra = set(latent_raw) - {d.value for d in DIMENSIONS}
        if extra:
            raise ScenarioError(f"{where}: unknown capability dimensions {sorted(extra)}")
        return SimulatedOperator(
            id=str(raw["id"]),
            kind=raw.get("kind", "remote"),
            latent_capabilities=latent,
            base_time_range=_pair(raw["base_time_range"], f"{where}.base_time_range"),
            overload_penalty=float(raw.get("overload_penalty", 1.0)),
        )
    except KeyError as exc:
        raise ScenarioError(f"{where}: missing field {exc.args[0]!r}") from exc
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def _catalog(raw: list) -> tuple[CatalogEntry, ...]:
    out = []
    for k, entry in enumerate(raw):
        where = f"failures.catalog[{k}]"
        try:
            out.append(
                CatalogEntry(
                    label=str(entry["label"]),
                    physical=_pair(entry["physical"], f"{where}.physical"),
                    cognitive=_pair(entry["cognitive"], f"{where}.cognitive"),
                    urgency=_pair(entry.get("urgency", [0.0, 1.0]), f"{where}.urgency"),
                )
            )
        except KeyError as exc:
            raise ScenarioError(f"{where}: missing field {exc.args[0]!r}") from exc
        except TypeError as exc:
            raise ScenarioError(f"{where}: {exc}") from exc
    return tuple(out)


def scenario_from_dict(data: Mapping[str, Any]) -> Scenario:
    if not isinstance(data, Mapping):
        raise ScenarioError("scenario must be a JSON object")
    version = data.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario version {version!r}")
    ops_raw = data.get("operators")
    if not ops_raw:
        raise ScenarioError("scenario needs a non-empty 'operators' list")
    operators = [_operator(raw, k) for k, raw in enumerate(ops_raw)]

    fail_raw = data.get("failures", {})
    catalog = _catalog(fail_raw["catalog"]) if "catalog" in fail_raw else FAILURE_CATALOG
    exp = dict(data.get("experiment", {}))
    try:
        generator = FailureGenerator(fail_raw.get("mode", "uniform"), catalog)
        if generator.mode == "catalog" and not generator.catalog:
            raise ScenarioError("catalog mode needs a non-empty failure catalog")
        weights = DimensionWeights.from_mapping(exp["weights"]) if "weights" in exp else DimensionWeights()
        adam = AdamConfig(**exp.get("adam", {}))
        defaults = TrialConfig()
        config = TrialConfig(
            policy=exp.get("policies", ["arfa"])[0],
            n_failures=int(exp.get("failures", defaults.n_failures)),
            epsilon=float(exp.get("epsilon", defaults.epsilon)),
            weights=weights,
            seed=int(exp.get("seed", defaults.seed)),
            trial_index=int(exp.get("trial_index", 0)),
            phase_mode=exp.get("phase_mode", defaults.phase_mode),
            acquisition_length=int(exp.get("acquisition_length", defaults.acquisition_length)),
            freeze_after_acquisition=bool(exp.get("freeze_after_acquisition", False)),
            generator=generator,
            bin_width=float(exp.get("bin_width", defaults.bin_width)),
            optimizer_steps=int(exp.get("optimizer_steps", defaults.optimizer_steps)),
            adam=adam,
            cold_start_tau=float(exp.get("cold_start_tau", defaults.cold_start_tau)),
        )
        scenario = Scenario(
            operators=operators,
            base_config=config,
            trials=int(exp.get("trials", 20)),
            policies=list(exp.get("policies", ["arfa", "random"])),
            shared_failure_stream=bool(exp.get("shared_failure_stream", True)),
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError, KeyError, IndexError) as exc:
        raise ScenarioError(f"invalid experiment settings: {exc}") from exc
    if scenario.trials < 1:
        raise ScenarioError("experiment.trials must be >= 1")
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
    try:
        return scenario_from_dict(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def builtin_scenario(name: str = "default") -> Scenario:
    """Load one of the scenarios shipped with the package (``default``, ``catalog``, ``representative``)."""
    ref = resources.files("arfa") / "scenarios" / f"{name}.json"
    if not ref.is_file():
        raise ScenarioError(f"no built-in scenario named {name!r}")
    return scenario_from_dict(json.loads(ref.read_text()))


def with_overrides(scenario: Scenario, **overrides: Any) -> Scenario:
    """Return a copy with non-None overrides applied to the experiment settings."""
    cfg_fields = {
        "n_failures", "epsilon", "seed", "phase_mode", "acquisition_length",
        "freeze_after_acquisition", "bin_width", "optimizer_steps", "policy",
    }
    cfg_kw = {k: v for k, v in overrides.items() if k in cfg_fields and v is not None}
    out = replace(scenario, base_config=replace(scenario.base_config, **cfg_kw))
    if overrides.get("trials") is not None:
        out.trials = int(overrides["trials"])
    if overrides.get("policies") is not None:
        out.policies = list(overrides["policies"])
    return out
