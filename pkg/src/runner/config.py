"""Experiment configuration: loading, validation and inter-parameter checks."""

from __future__ import annotations

import json
import logging
import tomllib
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.errors import ConfigurationError
from src.lattice.models import P_C, LatticeSpec, LawKind
from src.runner.registry import EXPERIMENTS, ExperimentParams, get_experiment

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path("config/experiments.yaml")


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: str
    lattice: LatticeSpec = Field(default_factory=LatticeSpec)
    params: dict[str, Any] = Field(default_factory=dict)
    seed: int = 0
    reps: int = Field(default=1, ge=1)
    out: Path = Path("results")
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_params(self) -> ExperimentConfig:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; known: {', '.join(sorted(EXPERIMENTS))}"
            )
        # normalise params through the experiment's model so defaults are explicit
        self.params = self.typed_params().model_dump(mode="json")
        return self

    def typed_params(self) -> ExperimentParams:
        return get_experiment(self.experiment).params_model.model_validate(self.params)

    def canonical_json(self) -> str:
        """Stable serialization of everything that affects the outputs."""
        payload = self.model_dump(mode="json", exclude={"workers", "out"})
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _read(path: Path) -> Any:
    if not path.exists():
        raise ConfigurationError(f"Config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".json":
            return json.loads(text) if text.strip() else None
        if path.suffix == ".toml":
            return tomllib.loads(text)
        return yaml.safe_load(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, yaml.YAMLError) as e:
        raise ConfigurationError(f"Cannot parse {path}: {e}") from e


def _format_errors(err: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in err.errors()
    )


def build_config(data: Any, **overrides: Any) -> ExperimentConfig:
    """Validate a raw mapping (plus non-None overrides) into an ExperimentConfig."""
    if not data:
        raise ConfigurationError("Empty configuration")
    if not isinstance(data, dict):
        raise ConfigurationError("Configuration must be a mapping")
    merged = dict(data)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigurationError(_format_errors(e)) from e


def load_defaults(experiment: str, path: Path | str = DEFAULT_CONFIG_PATH) -> dict[str, Any]:
    """Default block of one experiment from the experiments file, or a bare stub."""
    path = Path(path)
    if not path.exists():
        return {"experiment": experiment}
    data = _read(path) or {}
    block = dict(data.get("experiments", {}).get(experiment, {}))
    block["experiment"] = experiment
    return block


def load_config(path: Path | str, experiment: str | None = None, **overrides: Any) -> ExperimentConfig:
    """Load a config file; files with an ``experiments`` table pick the named block."""
    path = Path(path)
    data = _read(path)
    if isinstance(data, dict) and "experiments" in data:
        if experiment is None:
            raise ConfigurationError(f"{path} holds several experiments; name one")
        if experiment not in data["experiments"]:
            raise ConfigurationError(f"{path} has no block for {experiment!r}")
        data = dict(data["experiments"][experiment] or {})
        data["experiment"] = experiment
    elif experiment is not None and isinstance(data, dict):
        data.setdefault("experiment", experiment)
    logger.debug("Loaded config from %s", path)
    return build_config(data, **overrides)


def lattice_violations(spec: LatticeSpec) -> list[str]:
    if spec.law != LawKind.DILUTE:
        return []
    p_c = P_C.get(spec.d)
    if p_c is not None and spec.p0 >= p_c:
        return [f"p0 = {spec.p0:g} is not below the bond threshold p_c({spec.d}) = {p_c:g}"]
    return []


def validate_config(config: ExperimentConfig) -> list[str]:
    """Inter-parameter rules, as readable violations (empty when all hold)."""
    violations = lattice_violations(config.lattice)
    violations.extend(config.typed_params().violations(config.lattice))
    for v in violations:
        logger.warning("Config violation: %s", v)
    return violations
