"""
Decision rules and rule fitters
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from simlab.core import Dataset


class DecisionRule(ABC):
    """Deterministic map from a covariate vector to an arm in {0..K-1}"""

    arm_count: int

    @abstractmethod
    def assign(self, covariates: np.ndarray) -> np.ndarray:
        """Arms for each row of an m×p covariate matrix"""
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> int:
        return int(self.assign(np.asarray(x, dtype=float).reshape(1, -1))[0])


class RuleFitter(ABC):
    """Trains a DecisionRule from a Dataset; deterministic for a given dataset"""

    name: str = "rule"

    @abstractmethod
    def fit(self, data: Dataset) -> DecisionRule:
        raise NotImplementedError


@dataclass(frozen=True)
class FixedArmRule(DecisionRule):
    """Recommends the same arm to everyone"""
    arm: int
    arm_count: int

    def __post_init__(self):
        if not 0 <= self.arm < self.arm_count:
            raise ValueError(f"arm {self.arm} is outside 0..{self.arm_count - 1}")

    def assign(self, covariates: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(covariates).shape[0], self.arm, dtype=np.int64)
