"""
Value function estimators
Plug-in, K-fold cross-validation and jackknife (leave-one-out) estimates of
a treatment rule's value, their influence-function residuals and standard
errors, the held-out empirical estimate, and Monte-Carlo ground truth
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from simlab.core import Dataset, SeedLike, ValueEstimate, make_generator
from simlab.exceptions import EmptyMatchError, RefitError
from simlab.models.base import DecisionRule, RuleFitter
from simlab.propensity import PropensityModel, observed_propensities
from simlab.simgen import ScenarioSpec, mean_outcome, sample_covariates

logger = logging.getLogger(__name__)

MIN_MC_DRAWS = 100_000
MC_CHUNK = 50_000


@dataclass(frozen=True)
class UWPair:
    """
    U_i = Y_i 1{A_i = d(X_i)} / P(A_i|X_i) and W_i = 1{A_i = d(X_i)} / P(A_i|X_i)
    """
    u: np.ndarray
    w: np.ndarray

    @property
    def n(self) -> int:
        return len(self.w)

    def ratio(self) -> float:
        """sum(U) / sum(W)"""
        total = self.w.sum()
        if not total > 0:
            raise EmptyMatchError("no subject received the arm the rule recommends")
        return float(self.u.sum() / total)


def _uw(data: Dataset, arms: np.ndarray, prop) -> Tuple[UWPair, int]:
    arms = np.asarray(arms)
    if arms.shape != (data.n,):
        raise ValueError(f"expected {data.n} rule outputs, got shape {arms.shape}")

    if isinstance(prop, PropensityModel):
        probs, clipped = observed_propensities(prop, data)
    else:
        probs, clipped = np.asarray(prop, dtype=float).reshape(-1), 0
        if len(probs) != data.n:
            raise ValueError(f"expected {data.n} propensities, got {len(probs)}")

    match = data.treatments == arms
    w = np.where(match, 1.0 / probs, 0.0)
    u = np.where(match, data.outcomes * w, 0.0)
    return UWPair(u=u, w=w), clipped


def compute_uw(data: Dataset, arms: Sequence[int], prop: Union[PropensityModel, np.ndarray]) -> UWPair:
    """
    Elementwise U and W for per-subject rule outputs

    prop is a PropensityModel or the already evaluated P(A_i|X_i) vector.
    """
    return _uw(data, np.asarray(arms), prop)[0]


def value_plugin(data: Dataset, rule: DecisionRule, prop: PropensityModel) -> float:
    """IPW-weighted mean outcome among subjects whose arm agrees with a fixed rule"""
    uw, _ = _uw(data, rule.assign(data.covariates), prop)
    return uw.ratio()


def residuals_jackknife(uw: UWPair) -> np.ndarray:
    """R_i = U_i / W-bar - U-bar W_i / W-bar^2; sums to zero"""
    w_bar = uw.w.mean()
    if not w_bar > 0:
        raise EmptyMatchError("W-bar is 0: no subject received the recommended arm")
    u_bar = uw.u.mean()
    return uw.u / w_bar - (u_bar / w_bar ** 2) * uw.w


def variance_jackknife(residuals: np.ndarray) -> float:
    """sum(R_i^2) / (n (n - 1))"""
    residuals = np.asarray(residuals, dtype=float)
    n = len(residuals)
    if n < 2:
        raise ValueError(f"the jackknife variance needs at least 2 residuals, got {n}")
    return float(np.sum(residuals ** 2) / (n * (n - 1)))


def _refit_fold(payload) -> np.ndarray:
    data, fitter, fold = payload
    rule = fitter.fit(data.drop(fold))
    return rule.assign(data.covariates[fold])


def _refit_error(k: int, folds: List[np.ndarray], per_subject: bool, error: Exception) -> RefitError:
    if per_subject:
        index = int(folds[k][0])
        return RefitError(f"refit leaving out subject {index} failed: {error}", index=index)
    return RefitError(f"refit leaving out fold {k} failed: {error}", fold=k)


def _out_of_fold_arms(
    data: Dataset, fitter: RuleFitter, folds: List[np.ndarray], jobs: int, per_subject: bool
) -> np.ndarray:
    """Arm recommended to each subject by the rule fitted without its fold"""
    arms = np.empty(data.n, dtype=np.int64)
    payloads = [(data, fitter, fold) for fold in folds]

    if jobs <= 1:
        for k, payload in enumerate(payloads):
            try:
                arms[folds[k]] = _refit_fold(payload)
            except Exception as e:
                raise _refit_error(k, folds, per_subject, e) from e
        return arms

    # Results are collected in fold order, whatever order the workers finish in
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_refit_fold, payload) for payload in payloads]
        for k, future in enumerate(futures):
            try:
                arms[folds[k]] = future.result()
            except Exception as e:
                for pending in futures[k + 1:]:
                    pending.cancel()
                raise _refit_error(k, folds, per_subject, e) from e
    return arms


def _estimate_from_arms(
    data: Dataset,
    arms_by_repeat: np.ndarray,
    prop: Union[PropensityModel, np.ndarray],
    method: str,
    metadata: Dict[str, Any],
) -> ValueEstimate:
    # Each subject's (U, W) pairs are averaged over repeats, then pooled
    pairs = []
    clipped = 0
    for arms in arms_by_repeat:
        uw, clipped = _uw(data, arms, prop)
        pairs.append(uw)
    uw = UWPair(
        u=np.mean([pair.u for pair in pairs], axis=0),
        w=np.mean([pair.w for pair in pairs], axis=0),
    )

    value = uw.ratio()
    residuals = residuals_jackknife(uw)
    std_error = math.sqrt(variance_jackknife(residuals))

    metadata = dict(metadata)
    metadata["clipped_propensities"] = clipped
    if isinstance(prop, PropensityModel):
        metadata["propensity"] = prop.kind
    metadata["matched"] = int(np.count_nonzero(uw.w))
    return ValueEstimate(
        value=value, residuals=residuals, std_error=std_error, n=data.n, method=method, metadata=metadata
    )


def value_jackknife(
    data: Dataset, fitter: RuleFitter, prop: Union[PropensityModel, np.ndarray], jobs: int = 1
) -> ValueEstimate:
    """
    Leave-one-out value estimate

    Subject i is scored by the rule fitted on everyone else; the value is
    sum(U)/sum(W) over all n subjects and the standard error comes from the
    influence-function residuals.
    """
    if data.n < 3:
        raise ValueError(f"the jackknife needs at least 3 subjects, got {data.n}")
    logger.info("Jackknife: %d %s refits", data.n, fitter.name)

    folds = [np.array([i]) for i in range(data.n)]
    arms = _out_of_fold_arms(data, fitter, folds, jobs, per_subject=True)
    return _estimate_from_arms(data, arms.reshape(1, -1), prop, "jackknife", {"fitter": fitter.name})


def value_cv(
    data: Dataset,
    fitter: RuleFitter,
    prop: Union[PropensityModel, np.ndarray],
    folds: int,
    repeats: int,
    seed: SeedLike,
    jobs: int = 1,
) -> ValueEstimate:
    """
    K-fold cross-validated value estimate repeated M times

    Each repeat draws a uniformly random permutation from its own stream and
    cuts it into near-equal folds. With K = n and M = 1 this is the
    jackknife.
    """
    if not 2 <= folds <= data.n:
        raise ValueError(f"folds must lie in 2..{data.n}, got {folds}")
    if repeats < 1:
        raise ValueError(f"repeats must be at least 1, got {repeats}")
    logger.info("Cross-validation: %d folds x %d repeats of %s", folds, repeats, fitter.name)

    arms_by_repeat = np.empty((repeats, data.n), dtype=np.int64)
    for m in range(repeats):
        permutation = make_generator(seed, m).permutation(data.n)
        fold_list = np.array_split(permutation, folds)
        try:
            arms_by_repeat[m] = _out_of_fold_arms(data, fitter, fold_list, jobs, per_subject=False)
        except RefitError as e:
            e.fold = m * folds + e.fold
            raise

    metadata = {"fitter": fitter.name, "folds": folds, "repeats": repeats}
    return _estimate_from_arms(data, arms_by_repeat, prop, "cv", metadata)


def value_empirical(train: Dataset, test: Dataset, fitter: RuleFitter, prop: PropensityModel) -> float:
    """Fit on the whole training set and apply the plug-in estimator to an independent test set"""
    rule = fitter.fit(train)
    return value_plugin(test, rule, prop)


def monte_carlo_truth(
    rule: DecisionRule,
    scenario: ScenarioSpec,
    draws: int,
    seed: Union[SeedLike, np.random.Generator],
) -> Tuple[float, float]:
    """
    Noise-free Monte-Carlo value of a rule under a scenario and its MC standard error

    Averages E[Y | X, A = rule(X)] over fresh covariate draws.
    """
    if draws < MIN_MC_DRAWS:
        raise ValueError(f"draws must be at least {MIN_MC_DRAWS}, got {draws}")
    rng = seed if isinstance(seed, np.random.Generator) else make_generator(seed)

    count, mean, m2 = 0, 0.0, 0.0
    for start in range(0, draws, MC_CHUNK):
        size = min(MC_CHUNK, draws - start)
        covariates = sample_covariates(scenario, size, rng)
        outcomes = mean_outcome(scenario, covariates, rule.assign(covariates))

        # Pairwise update of the running mean and sum of squared deviations
        chunk_mean = float(outcomes.mean())
        chunk_m2 = float(np.sum((outcomes - chunk_mean) ** 2))
        delta = chunk_mean - mean
        total = count + size
        mean += delta * size / total
        m2 += chunk_m2 + delta ** 2 * count * size / total
        count = total

    return mean, math.sqrt(m2 / (count - 1) / count)


def true_value_mc(
    rule: DecisionRule,
    scenario: ScenarioSpec,
    draws: int,
    seed: Union[SeedLike, np.random.Generator],
) -> float:
    """V0 of a rule: its expected outcome under the scenario's generative model"""
    return monte_carlo_truth(rule, scenario, draws, seed)[0]
