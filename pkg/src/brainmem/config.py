"""Engine configuration and its on-disk key-value format.

The config file is INI with a single ``[engine]`` section::

    [engine]
    cap_hippocampus = 20000
    rrf_k = 60
    soul_weights = 0.5, 0.3, 0.2
    disabled_regions = amygdala

Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import BadWeights, InvariantViolation

REGIONS = ("hippocampus", "temporal_lobe", "amygdala", "prefrontal", "basal_ganglia")


@dataclass
class EngineConfig:
    # region capacities
    cap_hippocampus: int = 20000
    cap_temporal_lobe: int = 70000
    cap_amygdala: int = 1000
    cap_prefrontal: int = 10
    cap_basal_ganglia: int = 500

    rrf_k: float = 60.0
    ema_lambda: float = 0.3
    soul_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    embed_dim: int = 64
    frozen: bool = False
    disabled_regions: tuple[str, ...] = ()

    # lexical ranker
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    top_k: int = 10

    # retrieval control
    uncertainty_threshold: float = 0.45
    round2_graph_boost: float = 1.5
    temporal_gate: float = 0.3

    # episodic dynamics
    initial_stability: float = 0.5
    stability_step: float = 0.1
    novelty_window: int = 50

    # salience
    protection_threshold: float = 0.8

    # consolidation / forgetting
    consolidation_access_threshold: int = 3
    consolidation_salience_threshold: float = 0.7
    stale_salience: float = 0.1
    stale_horizon_days: float = 90.0

    def __post_init__(self) -> None:
        self.soul_weights = tuple(float(w) for w in self.soul_weights)
        self.disabled_regions = tuple(sorted(set(self.disabled_regions)))
        self.validate()

    def validate(self) -> None:
        for name in ("cap_hippocampus", "cap_temporal_lobe", "cap_amygdala",
                     "cap_prefrontal", "cap_basal_ganglia", "embed_dim", "top_k"):
            if int(getattr(self, name)) <= 0:
                raise InvariantViolation(name, "must be positive")
        if not self.rrf_k > 0:
            raise InvariantViolation("rrf_k", "must be positive")
        if not 0.0 < self.ema_lambda < 1.0:
            raise InvariantViolation("ema_lambda", "must lie in (0, 1)")
        check_soul_weights(self.soul_weights)
        for region in self.disabled_regions:
            if region not in REGIONS:
                raise InvariantViolation("disabled_regions", f"unknown region {region!r}")

    def enabled(self, region: str) -> bool:
        return region not in self.disabled_regions

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["soul_weights"] = list(self.soul_weights)
        d["disabled_regions"] = list(self.disabled_regions)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise InvariantViolation(sorted(extra)[0], "unknown config key")
        kwargs = dict(data)
        if "soul_weights" in kwargs:
            kwargs["soul_weights"] = tuple(kwargs["soul_weights"])
        if "disabled_regions" in kwargs:
            kwargs["disabled_regions"] = tuple(kwargs["disabled_regions"])
        return cls(**kwargs)


def check_soul_weights(weights) -> None:
    if len(weights) != 3:
        raise BadWeights("soul weights must be a triple (alpha, beta, gamma)")
    if any(w < 0 or math.isnan(w) for w in weights):
        raise BadWeights("soul weights must be nonnegative")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise BadWeights(f"soul weights must sum to 1 (got {sum(weights)!r})")


def _coerce(f: dataclasses.Field, raw: str):
    default = f.default if f.default is not dataclasses.MISSING else None
    raw = raw.strip()
    if f.name == "soul_weights":
        return tuple(float(x) for x in raw.split(","))
    if f.name == "disabled_regions":
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise InvariantViolation(f.name, f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    return float(raw)


def load_config(path: str | Path) -> EngineConfig:
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    if not parser.has_section("engine"):
        return EngineConfig()
    by_name = {f.name: f for f in fields(EngineConfig)}
    values = {}
    for key, raw in parser.items("engine"):
        if key not in by_name:
            raise InvariantViolation(key, "unknown config key")
        try:
            values[key] = _coerce(by_name[key], raw)
        except ValueError as exc:
            raise InvariantViolation(key, str(exc)) from exc
    return EngineConfig(**values)


def dump_config(config: EngineConfig) -> str:
    lines = ["[engine]"]
    for f in fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            text = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
