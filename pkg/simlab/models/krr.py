"""
Kernel ridge regression Q-learning
One Gaussian-kernel ridge regression of Y on X per arm; the rule picks the
arm with the largest predicted outcome
"""

import logging
from dataclasses import dataclass, replace
from typing import Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist

from simlab.core import Dataset
from simlab.exceptions import InsufficientDataError, NumericalError
from simlab.models.base import DecisionRule, RuleFitter

logger = logging.getLogger(__name__)

DEFAULT_RIDGE = 1e-2
AUTO = "auto"

# Rows per kernel block when predicting on large covariate matrices
PREDICT_CHUNK = 4096


@dataclass(frozen=True)
class ArmRegression:
    """Dual solution of one arm's kernel ridge system"""
    support: np.ndarray
    weights: np.ndarray
    ridge: float


@dataclass(frozen=True)
class KrrQModel:
    arms: Tuple[ArmRegression, ...]
    bandwidth: float
    ridge: float

    @property
    def arm_count(self) -> int:
        return len(self.arms)


def gaussian_kernel(left: np.ndarray, right: np.ndarray, bandwidth: float) -> np.ndarray:
    """exp(-||x - x'||^2 / (2 h^2)) for every pair of rows"""
    return np.exp(-cdist(left, right, "sqeuclidean") / (2.0 * bandwidth ** 2))


def median_bandwidth(covariates: np.ndarray) -> float:
    """Median pairwise Euclidean distance between covariate rows"""
    distances = pdist(np.atleast_2d(covariates), "euclidean")
    if len(distances) == 0:
        raise ValueError("the median heuristic needs at least two covariate rows")
    median = float(np.median(distances))
    if median <= 0:
        raise ValueError("median pairwise distance is 0; set the bandwidth explicitly")
    return median


def resolve_bandwidth(bandwidth: Union[float, str], covariates: np.ndarray) -> float:
    if isinstance(bandwidth, str):
        if bandwidth != AUTO:
            raise ValueError(f"bandwidth must be a positive number or 'auto', got '{bandwidth}'")
        return median_bandwidth(covariates)
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    return float(bandwidth)


def fit_arm_regression(
    support: np.ndarray, outcomes: np.ndarray, bandwidth: float, ridge: float
) -> ArmRegression:
    """
    Solve (G + ridge I) w = y by Cholesky

    If the factorization fails the ridge is raised tenfold once before
    giving up.
    """
    support = np.atleast_2d(np.asarray(support, dtype=float))
    outcomes = np.asarray(outcomes, dtype=float)
    gram = gaussian_kernel(support, support, bandwidth)
    identity = np.eye(len(outcomes))

    for attempt_ridge in (ridge, 10.0 * ridge):
        try:
            factor = cho_factor(gram + attempt_ridge * identity, lower=True)
        except LinAlgError:
            logger.warning("Cholesky failed with ridge=%g on %d points", attempt_ridge, len(outcomes))
            continue
        weights = cho_solve(factor, outcomes)
        if np.all(np.isfinite(weights)):
            support.setflags(write=False)
            weights.setflags(write=False)
            return ArmRegression(support=support, weights=weights, ridge=attempt_ridge)

    raise NumericalError(f"kernel ridge system on {len(outcomes)} points is singular even with ridge={10.0 * ridge:g}")


def fit_krr_q(data: Dataset, bandwidth: Union[float, str] = AUTO, ridge: float = DEFAULT_RIDGE) -> KrrQModel:
    """Fit Q(x, a) with one kernel ridge regression per arm"""
    if not ridge > 0:
        raise ValueError(f"ridge must be positive, got {ridge}")
    counts = data.arm_counts()
    thin = [a for a in range(data.arm_count) if counts[a] < 2]
    if thin:
        raise InsufficientDataError(f"arms {thin} have fewer than 2 subjects")

    # The bandwidth is shared by all arms and taken from the full covariate matrix
    h = resolve_bandwidth(bandwidth, data.covariates)
    arms = []
    for a in range(data.arm_count):
        mask = data.treatments == a
        arms.append(fit_arm_regression(data.covariates[mask], data.outcomes[mask], h, ridge))
    return KrrQModel(arms=tuple(arms), bandwidth=h, ridge=float(ridge))


def _check_arm(model: KrrQModel, a: int):
    if not 0 <= int(a) < model.arm_count:
        raise ValueError(f"arm {a} is outside 0..{model.arm_count - 1}")


def predict_q_batch(model: KrrQModel, covariates: np.ndarray, a: int) -> np.ndarray:
    """Q-hat(x, a) for each row of covariates"""
    _check_arm(model, a)
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    arm = model.arms[int(a)]
    out = np.empty(covariates.shape[0])
    for start in range(0, covariates.shape[0], PREDICT_CHUNK):
        block = covariates[start:start + PREDICT_CHUNK]
        out[start:start + PREDICT_CHUNK] = gaussian_kernel(block, arm.support, model.bandwidth) @ arm.weights
    return out


def predict_q(model: KrrQModel, x: np.ndarray, a: int) -> float:
    """Q-hat(x, a) = sum_i w_i exp(-||x - x_i||^2 / (2 h^2)) over arm a's support"""
    return float(predict_q_batch(model, np.asarray(x, dtype=float).reshape(1, -1), a)[0])


def q_matrix(model: KrrQModel, covariates: np.ndarray) -> np.ndarray:
    """m×K matrix of predicted outcomes"""
    return np.column_stack([predict_q_batch(model, covariates, a) for a in range(model.arm_count)])


@dataclass(frozen=True)
class KrrRule(DecisionRule):
    """argmax_a Q-hat(x, a), ties to the lowest arm"""
    model: KrrQModel

    @property
    def arm_count(self) -> int:
        return self.model.arm_count

    def assign(self, covariates: np.ndarray) -> np.ndarray:
        # np.argmax returns the first maximum, which is the lowest arm on ties
        return np.argmax(q_matrix(self.model, covariates), axis=1).astype(np.int64)


def rule_from_q(model: KrrQModel) -> KrrRule:
    return KrrRule(model)


@dataclass(frozen=True)
class KrrFitter(RuleFitter):
    """KRR Q-learning pipeline with frozen hyperparameters"""
    bandwidth: Union[float, str] = AUTO
    ridge: float = DEFAULT_RIDGE
    name: str = "krr"

    def fit(self, data: Dataset) -> KrrRule:
        return rule_from_q(fit_krr_q(data, self.bandwidth, self.ridge))

    def frozen_for(self, data: Dataset) -> "KrrFitter":
        """Same fitter with an 'auto' bandwidth resolved once on data"""
        return replace(self, bandwidth=resolve_bandwidth(self.bandwidth, data.covariates))
