"""
Synthetic randomized trials
Four decision-boundary scenarios: concentric circles (1), nested steps (2),
parallel diagonal lines (3) and nested parabolas (4). Three arms allocated
with equal probability, E[Y] = X1 + X2 + delta0(X1, X2, A).
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Tuple, Union

import numpy as np

from simlab.core import Dataset, SeedLike, make_generator
from simlab.models.base import DecisionRule
from simlab.propensity import PropensityModel, known_uniform

SCENARIOS = (1, 2, 3, 4)
ARM_COUNT = 3


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: int
    covariate_range: Tuple[float, float] = (-2.0, 2.0)
    noise_sd: float = 1.0
    arm_count: int = ARM_COUNT
    nuisance_dims: int = 1

    def __post_init__(self):
        lo, hi = (float(v) for v in self.covariate_range)
        object.__setattr__(self, "covariate_range", (lo, hi))
        if self.scenario_id not in SCENARIOS:
            raise ValueError(f"scenario_id must be one of {SCENARIOS}, got {self.scenario_id}")
        if not hi > 0 or lo != -hi:
            raise ValueError(f"covariate_range must be symmetric about 0, got ({lo}, {hi})")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be nonnegative, got {self.noise_sd}")
        if self.arm_count != ARM_COUNT:
            raise ValueError(f"scenarios have exactly {ARM_COUNT} arms")
        if self.nuisance_dims < 1:
            raise ValueError(f"nuisance_dims must be at least 1, got {self.nuisance_dims}")

    @property
    def dims(self) -> int:
        return 2 + self.nuisance_dims

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["covariate_range"] = list(self.covariate_range)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioSpec":
        data = dict(data)
        if "covariate_range" in data:
            data["covariate_range"] = tuple(data["covariate_range"])
        return cls(**data)


def delta0(spec: ScenarioSpec, x1, x2, a):
    """
    Treatment effect over arm 0 for the scenario

    Accepts scalars or equally shaped arrays. Every formula carries the
    factor 1{A > 0}, so arm 0 always scores 0; the second factor is raised
    to the power 1{A = 1}.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    a = np.asarray(a)
    if np.any((a < 0) | (a >= ARM_COUNT)):
        raise ValueError(f"arms must lie in 0..{ARM_COUNT - 1}")
    arm1 = a == 1
    arm2 = a == 2

    if spec.scenario_id == 1:
        r2 = x1 ** 2 + x2 ** 2
        value = (1.0 - r2) * np.where(arm1, r2 - 3.0, 1.0)
    elif spec.scenario_id == 2:
        step = np.ceil(x1 - 2.0 * arm2)
        value = np.where(x2 <= step, 1.0, -1.0)
    elif spec.scenario_id == 3:
        s = x1 + x2
        value = (s - 1.0) * np.where(arm1, -s - 1.0, 1.0)
    else:
        value = (x2 - x1 ** 2) * np.where(arm1, x1 ** 2 - x2 ** 2 - 2.0, 1.0)

    result = np.where(a > 0, value, 0.0)
    return float(result) if result.ndim == 0 else result


def mean_outcome(spec: ScenarioSpec, covariates: np.ndarray, arms: np.ndarray) -> np.ndarray:
    """E[Y | X, A] = X1 + X2 + delta0(X1, X2, A)"""
    x1, x2 = covariates[:, 0], covariates[:, 1]
    return x1 + x2 + delta0(spec, x1, x2, arms)


def sample_covariates(spec: ScenarioSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.covariate_range
    return rng.uniform(lo, hi, size=(n, spec.dims))


def generate(
    spec: ScenarioSpec, n: int, seed: Union[SeedLike, np.random.Generator]
) -> Tuple[Dataset, PropensityModel]:
    """Draw n subjects; the propensity is the known 1/3 allocation"""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else make_generator(seed)

    covariates = sample_covariates(spec, n, rng)
    arms = rng.integers(0, spec.arm_count, size=n)
    noise = rng.standard_normal(n) * spec.noise_sd
    outcomes = mean_outcome(spec, covariates, arms) + noise

    return Dataset(covariates, arms, outcomes, spec.arm_count), known_uniform(spec.arm_count)


@dataclass(frozen=True)
class OracleRule(DecisionRule):
    """argmax_a delta0(x1, x2, a), lowest arm on ties"""
    spec: ScenarioSpec

    @property
    def arm_count(self) -> int:
        return self.spec.arm_count

    def assign(self, covariates: np.ndarray) -> np.ndarray:
        covariates = np.atleast_2d(covariates)
        x1, x2 = covariates[:, 0], covariates[:, 1]
        effects = np.column_stack(
            [delta0(self.spec, x1, x2, np.full(len(x1), a)) for a in range(self.spec.arm_count)]
        )
        return np.argmax(effects, axis=1).astype(np.int64)


def oracle_rule(spec: ScenarioSpec) -> OracleRule:
    return OracleRule(spec)
