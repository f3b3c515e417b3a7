"""
Zero-order models
The best single arm, chosen by comparing the IPW value of every
constant rule
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from simlab.core import Dataset
from simlab.exceptions import DegenerateArmError
from simlab.models.base import DecisionRule, FixedArmRule, RuleFitter
from simlab.propensity import PropensityModel, estimate_propensity_empirical


@dataclass(frozen=True)
class ZomRule(DecisionRule):
    fixed_arm: int
    arm_values: Tuple[float, ...]

    @property
    def arm_count(self) -> int:
        return len(self.arm_values)

    def assign(self, covariates: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(covariates).shape[0], self.fixed_arm, dtype=np.int64)


def fit_zom(data: Dataset, prop: PropensityModel) -> ZomRule:
    """Pick the arm whose constant rule has the largest plug-in value, lowest arm on ties"""
    from simlab.estimators import value_plugin

    missing = data.missing_arms()
    if missing:
        raise DegenerateArmError(f"arms {missing} have no subjects")

    arm_values = tuple(
        value_plugin(data, FixedArmRule(a, data.arm_count), prop) for a in range(data.arm_count)
    )
    return ZomRule(fixed_arm=int(np.argmax(arm_values)), arm_values=arm_values)


@dataclass(frozen=True)
class ZomFitter(RuleFitter):
    """
    ZOM pipeline; without a propensity model the per-arm frequencies of
    each training set are used
    """
    propensity: Optional[PropensityModel] = None
    name: str = "zom"

    def fit(self, data: Dataset) -> ZomRule:
        prop = self.propensity if self.propensity is not None else estimate_propensity_empirical(data)
        return fit_zom(data, prop)
