"""
Propensity score models
P(A|X) as a known constant, per-arm frequencies, or an L2-penalized
multinomial logistic regression fitted by gradient ascent
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from simlab.core import Dataset
from simlab.exceptions import DegenerateArmError

logger = logging.getLogger(__name__)

KNOWN_UNIFORM = "known_uniform"
EMPIRICAL = "empirical"
MULTINOMIAL_LOGISTIC = "multinomial_logistic"

# Fitted propensities are clipped to this band before entering any IPW denominator
PROPENSITY_FLOOR = 1e-3

# Logistic probabilities are kept this far from 0 and 1 so every arm stays possible
LOGISTIC_EPS = 1e-12


@dataclass(frozen=True)
class PropensityModel:
    kind: str
    arm_count: int
    frequencies: Optional[np.ndarray] = None
    coefficients: Optional[np.ndarray] = None
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        if self.kind not in (KNOWN_UNIFORM, EMPIRICAL, MULTINOMIAL_LOGISTIC):
            raise ValueError(f"Unknown propensity kind: {self.kind}")
        if self.arm_count < 2:
            raise ValueError(f"arm_count must be at least 2, got {self.arm_count}")
        if self.kind == EMPIRICAL and self.frequencies is None:
            raise ValueError("empirical propensity needs per-arm frequencies")
        if self.kind == MULTINOMIAL_LOGISTIC and self.coefficients is None:
            raise ValueError("multinomial logistic propensity needs coefficients")

    @property
    def fitted(self) -> bool:
        return self.kind != KNOWN_UNIFORM

    def probabilities(self, covariates: np.ndarray) -> np.ndarray:
        """m×K matrix of P(A=a|X=x) for each row of covariates"""
        covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
        m = covariates.shape[0]
        if self.kind == KNOWN_UNIFORM:
            return np.full((m, self.arm_count), 1.0 / self.arm_count)
        if self.kind == EMPIRICAL:
            return np.tile(self.frequencies, (m, 1))
        probs = np.clip(softmax(_logits(self.coefficients, covariates), axis=1), LOGISTIC_EPS, 1.0 - LOGISTIC_EPS)
        return probs / probs.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "arm_count": self.arm_count,
            "frequencies": None if self.frequencies is None else self.frequencies.tolist(),
            "coefficients": None if self.coefficients is None else self.coefficients.tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
        }


def known_uniform(arm_count: int) -> PropensityModel:
    """Randomized trial with equal allocation: P(A=a|X) = 1/K"""
    return PropensityModel(kind=KNOWN_UNIFORM, arm_count=int(arm_count))


def _require_all_arms(data: Dataset):
    missing = data.missing_arms()
    if missing:
        raise DegenerateArmError(f"arms {missing} have no subjects; their propensity would be zero")


def estimate_propensity_empirical(data: Dataset) -> PropensityModel:
    """Per-arm frequencies count(a)/n, independent of x"""
    _require_all_arms(data)
    frequencies = data.arm_counts() / float(data.n)
    frequencies.setflags(write=False)
    return PropensityModel(kind=EMPIRICAL, arm_count=data.arm_count, frequencies=frequencies)


def _design(covariates: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(covariates.shape[0]), covariates])


def _logits(coefficients: np.ndarray, covariates: np.ndarray) -> np.ndarray:
    # Arm 0 is the reference category with logit 0
    z = _design(covariates)
    return np.column_stack([np.zeros(z.shape[0]), z @ coefficients.T])


def _objective(coefficients, design, onehot, l2):
    log_probs = log_softmax(
        np.column_stack([np.zeros(design.shape[0]), design @ coefficients.T]), axis=1
    )
    penalty = 0.5 * l2 * np.sum(coefficients[:, 1:] ** 2)
    return float(np.sum(onehot * log_probs) / design.shape[0] - penalty)


def _gradient(coefficients, design, onehot, l2):
    probs = softmax(np.column_stack([np.zeros(design.shape[0]), design @ coefficients.T]), axis=1)
    grad = (onehot[:, 1:] - probs[:, 1:]).T @ design / design.shape[0]
    # The intercept is not penalized
    grad[:, 1:] -= l2 * coefficients[:, 1:]
    return grad


def fit_multinomial_logistic(
    data: Dataset,
    l2: float = 1e-3,
    max_iter: int = 500,
    tol: float = 1e-6,
    step: float = 1.0,
) -> PropensityModel:
    """
    Fit P(A|X) by L2-penalized multinomial logistic regression

    Gradient ascent on the mean log-likelihood; a step that fails to raise
    the objective is halved until it does. Stops once the gradient max-norm
    drops below tol or after max_iter iterations. Non-convergence (perfect
    separation with l2=0, for instance) is reported on the model, never raised.
    """
    if l2 < 0:
        raise ValueError(f"l2 must be nonnegative, got {l2}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    _require_all_arms(data)

    design = _design(data.covariates)
    onehot = np.eye(data.arm_count)[data.treatments]
    coefficients = np.zeros((data.arm_count - 1, design.shape[1]))
    current = _objective(coefficients, design, onehot, l2)

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        grad = _gradient(coefficients, design, onehot, l2)
        if np.max(np.abs(grad)) < tol:
            converged = True
            break

        for _ in range(60):
            candidate = coefficients + step * grad
            value = _objective(candidate, design, onehot, l2)
            if value > current:
                break
            step *= 0.5
        else:
            # No ascent direction left at float precision
            break
        coefficients, current = candidate, value

    if not converged:
        logger.warning(
            "Multinomial logistic fit stopped after %d iterations without converging (l2=%g)",
            iterations, l2,
        )

    coefficients.setflags(write=False)
    return PropensityModel(
        kind=MULTINOMIAL_LOGISTIC,
        arm_count=data.arm_count,
        coefficients=coefficients,
        converged=converged,
        iterations=iterations,
    )


def _check_arm(model: PropensityModel, a: int):
    if not 0 <= int(a) < model.arm_count:
        raise ValueError(f"arm {a} is outside 0..{model.arm_count - 1}")


def propensity(model: PropensityModel, x: np.ndarray, a: int) -> float:
    """P(A=a|X=x)"""
    _check_arm(model, a)
    return float(model.probabilities(np.asarray(x, dtype=float).reshape(1, -1))[0, int(a)])


def observed_propensities(model: PropensityModel, data: Dataset) -> Tuple[np.ndarray, int]:
    """
    P(A_i|X_i) for each subject, ready for an IPW denominator

    Fitted models are clipped to [PROPENSITY_FLOOR, 1 - PROPENSITY_FLOOR];
    returns the probabilities and the number of clipped subjects.
    """
    if model.arm_count != data.arm_count:
        raise ValueError(
            f"propensity model has {model.arm_count} arms but the dataset has {data.arm_count}"
        )
    probs = model.probabilities(data.covariates)[np.arange(data.n), data.treatments]
    if not model.fitted:
        return probs, 0

    clipped = np.clip(probs, PROPENSITY_FLOOR, 1.0 - PROPENSITY_FLOOR)
    count = int(np.count_nonzero(clipped != probs))
    if count:
        logger.warning("Clipped %d propensities to [%g, %g]", count, PROPENSITY_FLOOR, 1.0 - PROPENSITY_FLOOR)
    return clipped, count
