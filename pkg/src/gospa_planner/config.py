"""Versioned run configuration (YAML or JSON)."""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError

SCHEMA_VERSION = 1
PolicyName = Literal["myopic", "suboptimal", "optimal", "baseline"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScenarioSection(_Strict):
    name: Literal["unimodal", "bimodal", "trimodal"] = "bimodal"
    p_d: float = Field(1.0, ge=0.0, le=1.0)
    lambda_fa_per_km2: float = Field(0.0, ge=0.0)
    sigma_km: Optional[float] = Field(None, gt=0.0)
    fov_radius_km: float = Field(10.0, gt=0.0)
    existence_r: float = Field(0.8, ge=0.0, le=1.0)
    cutoff_c_km: float = Field(10.0, gt=0.0)


class PlanningSection(_Strict):
    policy: PolicyName = "optimal"
    horizon_T: int = Field(2, ge=1)
    discount: float = Field(1.0, ge=0.0, le=1.0)
    sensing_cost_km2: float = Field(0.0, ge=0.0)
    n_h: Optional[int] = Field(None, ge=1)


class EvaluationSection(_Strict):
    policies: list[PolicyName] = ["baseline", "suboptimal", "optimal"]
    runs: int = Field(20, ge=1)
    workers: int = Field(1, ge=1)


class RunConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = Field(0, ge=0)
    scenario: ScenarioSection = ScenarioSection()
    planning: PlanningSection = PlanningSection()
    evaluation: EvaluationSection = EvaluationSection()
    output_dir: str = "out"


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    try:
        return RunConfig.model_validate(raw or {})
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
