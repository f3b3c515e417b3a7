"""
Simlab Config - Monte-Carlo study configuration
One JSON document describes the whole study grid
"""

import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

from simlab.exceptions import ConfigError
from simlab.models.krr import AUTO, DEFAULT_RIDGE
from simlab.simgen import SCENARIOS, ScenarioSpec
from simlab.stats import GREATER, TWO_SIDED

DEFAULT_SAMPLE_SIZES = [50, 100, 200, 400, 800]
MIN_SAMPLE_SIZE = 10

_TOP_LEVEL_KEYS = {
    "scenarios", "sample_sizes", "replicates", "seed", "model", "estimators",
    "mc_draws", "alpha", "ci_level", "alternative", "scenario",
}


@dataclass(frozen=True)
class CvSettings:
    folds: int
    repeats: int


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: List[int] = field(default_factory=lambda: list(SCENARIOS))
    sample_sizes: List[int] = field(default_factory=lambda: list(DEFAULT_SAMPLE_SIZES))
    replicates: int = 100
    seed: int = 0
    bandwidth: Union[float, str] = AUTO
    ridge: float = DEFAULT_RIDGE
    empirical: bool = True
    cv: Optional[CvSettings] = None
    mc_draws: int = 1_000_000
    alpha: float = 0.05
    ci_level: float = 0.95
    alternative: str = GREATER
    covariate_range: Tuple[float, float] = (-2.0, 2.0)
    noise_sd: float = 1.0
    nuisance_dims: int = 1

    def __post_init__(self):
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        bad = [s for s in self.scenarios if s not in SCENARIOS]
        if bad:
            raise ConfigError(f"unknown scenarios {bad}; valid ones are {list(SCENARIOS)}")
        if not self.sample_sizes:
            raise ConfigError("at least one sample size is required")
        small = [n for n in self.sample_sizes if n < MIN_SAMPLE_SIZE]
        if small:
            raise ConfigError(f"sample sizes must be at least {MIN_SAMPLE_SIZE}, got {small}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be at least 1, got {self.replicates}")
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")
        if isinstance(self.bandwidth, str) and self.bandwidth != AUTO:
            raise ConfigError(f"model.krr.bandwidth must be a positive number or '{AUTO}'")
        if not isinstance(self.bandwidth, str) and not self.bandwidth > 0:
            raise ConfigError(f"model.krr.bandwidth must be positive, got {self.bandwidth}")
        if not self.ridge > 0:
            raise ConfigError(f"model.krr.ridge must be positive, got {self.ridge}")
        if self.cv is not None:
            if self.cv.folds < 2 or self.cv.folds > min(self.sample_sizes):
                raise ConfigError(f"cv folds must lie in 2..{min(self.sample_sizes)}, got {self.cv.folds}")
            if self.cv.repeats < 1:
                raise ConfigError(f"cv repeats must be at least 1, got {self.cv.repeats}")
        if self.mc_draws < 100_000:
            raise ConfigError(f"mc_draws must be at least 100000, got {self.mc_draws}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.ci_level < 1:
            raise ConfigError(f"ci_level must lie in (0, 1), got {self.ci_level}")
        if self.alternative not in (GREATER, TWO_SIDED):
            raise ConfigError(f"alternative must be '{GREATER}' or '{TWO_SIDED}'")
        try:
            self.scenario_spec(self.scenarios[0])
        except ValueError as e:
            raise ConfigError(f"invalid scenario settings: {e}") from e

    def scenario_spec(self, scenario_id: int) -> ScenarioSpec:
        return ScenarioSpec(
            scenario_id=scenario_id,
            covariate_range=tuple(self.covariate_range),
            noise_sd=self.noise_sd,
            nuisance_dims=self.nuisance_dims,
        )

    @property
    def estimators(self) -> List[Union[str, Dict[str, Any]]]:
        names: List[Union[str, Dict[str, Any]]] = ["jackknife"]
        if self.empirical:
            names.append("empirical")
        if self.cv is not None:
            names.append({"cv": {"folds": self.cv.folds, "repeats": self.cv.repeats}})
        return names

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenarios": list(self.scenarios),
            "sample_sizes": list(self.sample_sizes),
            "replicates": self.replicates,
            "seed": self.seed,
            "model": {"krr": {"bandwidth": self.bandwidth, "ridge": self.ridge}},
            "estimators": self.estimators,
            "mc_draws": self.mc_draws,
            "alpha": self.alpha,
            "ci_level": self.ci_level,
            "alternative": self.alternative,
            "scenario": {
                "covariate_range": list(self.covariate_range),
                "noise_sd": self.noise_sd,
                "nuisance_dims": self.nuisance_dims,
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("the study config must be a JSON object")
        unknown = set(data) - _TOP_LEVEL_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        kwargs: Dict[str, Any] = {}
        for key in ("scenarios", "sample_sizes"):
            if key in data:
                kwargs[key] = [int(v) for v in data[key]]
        for key in ("replicates", "seed", "mc_draws"):
            if key in data:
                kwargs[key] = int(data[key])
        for key in ("alpha", "ci_level"):
            if key in data:
                kwargs[key] = float(data[key])
        if "alternative" in data:
            kwargs["alternative"] = str(data["alternative"])

        model = data.get("model", {})
        krr = model.get("krr", {})
        unknown = (set(model) - {"krr"}) | (set(krr) - {"bandwidth", "ridge"})
        if unknown:
            raise ConfigError(f"unknown model settings: {sorted(unknown)}")
        if "bandwidth" in krr:
            kwargs["bandwidth"] = krr["bandwidth"] if isinstance(krr["bandwidth"], str) else float(krr["bandwidth"])
        if "ridge" in krr:
            kwargs["ridge"] = float(krr["ridge"])

        if "estimators" in data:
            kwargs.update(_parse_estimators(data["estimators"]))

        scenario = data.get("scenario", {})
        unknown = set(scenario) - {"covariate_range", "noise_sd", "nuisance_dims"}
        if unknown:
            raise ConfigError(f"unknown scenario settings: {sorted(unknown)}")
        if "covariate_range" in scenario:
            kwargs["covariate_range"] = tuple(float(v) for v in scenario["covariate_range"])
        if "noise_sd" in scenario:
            kwargs["noise_sd"] = float(scenario["noise_sd"])
        if "nuisance_dims" in scenario:
            kwargs["nuisance_dims"] = int(scenario["nuisance_dims"])

        return cls(**kwargs)


def _parse_estimators(entries: List[Any]) -> Dict[str, Any]:
    settings: Dict[str, Any] = {"empirical": False, "cv": None}
    seen_jackknife = False
    for entry in entries:
        if entry == "jackknife":
            seen_jackknife = True
        elif entry == "empirical":
            settings["empirical"] = True
        elif isinstance(entry, dict) and set(entry) == {"cv"}:
            cv = entry["cv"]
            try:
                settings["cv"] = CvSettings(folds=int(cv["folds"]), repeats=int(cv.get("repeats", 1)))
            except (KeyError, TypeError) as e:
                raise ConfigError(f"cv estimator needs {{'folds': K, 'repeats': M}}, got {cv}") from e
        else:
            raise ConfigError(f"unknown estimator entry: {entry}")
    if not seen_jackknife:
        raise ConfigError("the jackknife estimator drives every table and cannot be disabled")
    return settings


def load_config(path: str) -> ExperimentConfig:
    """Load and validate a study configuration from a JSON file"""
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from e
    try:
        return ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid value in {path}: {e}") from e
