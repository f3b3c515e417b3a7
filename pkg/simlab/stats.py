"""
Model comparison and study statistics
Z-test between two value estimates, the truth-centred test statistic,
Shapiro-Wilk normality test (Royston's approximation), coverage and power
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import norm

from simlab.core import ValueEstimate
from simlab.exceptions import DegenerateComparisonError, DegenerateSampleError

GREATER = "greater"
TWO_SIDED = "two-sided"


@dataclass(frozen=True)
class ComparisonResult:
    t_stat: float
    p_value: float
    se_diff: float
    v_pmm: float
    v_zom: float
    alternative: str = GREATER

    def to_dict(self) -> dict:
        return {
            "t_stat": self.t_stat,
            "p_value": self.p_value,
            "se_diff": self.se_diff,
            "v_pmm": self.v_pmm,
            "v_zom": self.v_zom,
            "alternative": self.alternative,
        }


def _se_diff(pmm: ValueEstimate, zom: ValueEstimate) -> float:
    if pmm.residuals is None or zom.residuals is None:
        raise ValueError("both estimates need residuals to be compared")
    if len(pmm.residuals) != len(zom.residuals):
        raise ValueError(
            f"residual lengths differ ({len(pmm.residuals)} vs {len(zom.residuals)})"
        )
    n = len(pmm.residuals)
    if n < 2:
        raise ValueError("a comparison needs at least 2 subjects")
    se = math.sqrt(float(np.sum((pmm.residuals - zom.residuals) ** 2)) / (n * (n - 1)))
    if se == 0:
        raise DegenerateComparisonError("the two estimates have identical residuals")
    return se


def p_value_for(t_stat: float, alternative: str = GREATER) -> float:
    if alternative == GREATER:
        return float(norm.sf(t_stat))
    if alternative == TWO_SIDED:
        return float(min(1.0, 2.0 * norm.sf(abs(t_stat))))
    raise ValueError(f"alternative must be '{GREATER}' or '{TWO_SIDED}', got '{alternative}'")


def z_compare(pmm: ValueEstimate, zom: ValueEstimate, alternative: str = GREATER) -> ComparisonResult:
    """
    Z-test of a covariate-dependent rule (PMM) against a fixed-arm rule (ZOM)

    The default one-sided p-value tests whether PMM beats ZOM.
    """
    se = _se_diff(pmm, zom)
    t_stat = (pmm.value - zom.value) / se
    return ComparisonResult(
        t_stat=t_stat,
        p_value=p_value_for(t_stat, alternative),
        se_diff=se,
        v_pmm=pmm.value,
        v_zom=zom.value,
        alternative=alternative,
    )


def shifted_statistic(pmm: ValueEstimate, zom: ValueEstimate, v0_pmm: float, v0_zom: float) -> float:
    """T0: the Z statistic with the true value difference subtracted from the estimated one"""
    se = _se_diff(pmm, zom)
    return ((pmm.value - zom.value) - (v0_pmm - v0_zom)) / se


# Royston's polynomial coefficients, highest power first
_C1 = [-2.706056, 4.434685, -2.071190, -0.147981, 0.221157, 0.0]
_C2 = [-3.582633, 5.682633, -1.752461, -0.293762, 0.042981, 0.0]
_SMALL_GAMMA = [0.459, -2.273]
_SMALL_MEAN = [-0.0006714, 0.025054, -0.39978, 0.5440]
_SMALL_LOG_SD = [-0.0020322, 0.062767, -0.77857, 1.3822]
_LARGE_MEAN = [0.0038915, -0.083751, -0.31082, -1.5861]
_LARGE_LOG_SD = [0.0030302, -0.082676, -0.4803]


def _shapiro_coefficients(m: int) -> np.ndarray:
    if m == 3:
        return np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])

    scores = norm.ppf((np.arange(1, m + 1) - 0.375) / (m + 0.25))
    total = float(np.sum(scores ** 2))
    u = 1.0 / math.sqrt(m)
    coeffs = scores / math.sqrt(total)

    a_last = np.polyval(_C1, u) + coeffs[-1]
    if m > 5:
        a_second = np.polyval(_C2, u) + coeffs[-2]
        phi = (total - 2 * scores[-1] ** 2 - 2 * scores[-2] ** 2) / (1 - 2 * a_last ** 2 - 2 * a_second ** 2)
        coeffs = scores / math.sqrt(phi)
        coeffs[[0, 1, -2, -1]] = [-a_last, -a_second, a_second, a_last]
    else:
        phi = (total - 2 * scores[-1] ** 2) / (1 - 2 * a_last ** 2)
        coeffs = scores / math.sqrt(phi)
        coeffs[[0, -1]] = [-a_last, a_last]
    return coeffs


def shapiro_wilk(sample: Sequence[float]) -> Tuple[float, float]:
    """
    Shapiro-Wilk W statistic and p-value for 3 <= m <= 5000

    Uses Royston's approximation to the coefficients and to the null
    distribution of W (normalizing transform), with the exact p-value
    at m = 3.
    """
    x = np.sort(np.asarray(sample, dtype=float).reshape(-1))
    m = len(x)
    if not 3 <= m <= 5000:
        raise ValueError(f"Shapiro-Wilk needs 3 to 5000 observations, got {m}")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample must be finite")
    centred = x - x.mean()
    ss = float(np.sum(centred ** 2))
    if x[-1] - x[0] <= 0 or ss == 0:
        raise DegenerateSampleError("all observations are equal")

    coeffs = _shapiro_coefficients(m)
    w = min(1.0, float(np.dot(coeffs, centred)) ** 2 / ss)

    if m == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return w, float(min(1.0, max(0.0, p)))

    y = math.log1p(-w) if w < 1.0 else -math.inf
    if m <= 11:
        gamma = np.polyval(_SMALL_GAMMA, m)
        if y >= gamma:
            return w, 0.0
        y = -math.log(gamma - y)
        mean = np.polyval(_SMALL_MEAN, m)
        sd = math.exp(np.polyval(_SMALL_LOG_SD, m))
    else:
        log_m = math.log(m)
        mean = np.polyval(_LARGE_MEAN, log_m)
        sd = math.exp(np.polyval(_LARGE_LOG_SD, log_m))

    if y == -math.inf:
        return w, 1.0
    return w, float(norm.sf((y - mean) / sd))


def coverage_from_arrays(
    values: Sequence[float], std_errors: Sequence[float], truths: Sequence[float], level: float
) -> float:
    """Fraction of intervals value ± z_{(1+level)/2} SE that contain the truth"""
    values = np.asarray(values, dtype=float)
    std_errors = np.asarray(std_errors, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if len(values) == 0:
        raise ValueError("coverage needs at least one record")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if not len(values) == len(std_errors) == len(truths):
        raise ValueError("values, std_errors and truths must have equal length")
    z = norm.ppf((1.0 + level) / 2.0)
    covered = np.abs(truths - values) <= z * std_errors
    return float(np.count_nonzero(covered) / len(values))


def coverage(records: Sequence[Tuple[ValueEstimate, float]], level: float = 0.95) -> float:
    """Fraction of (estimate, truth) records whose confidence interval contains the truth"""
    if len(records) == 0:
        raise ValueError("coverage needs at least one record")
    return coverage_from_arrays(
        [estimate.value for estimate, _ in records],
        [estimate.std_error for estimate, _ in records],
        [truth for _, truth in records],
        level,
    )


def power(p_values: Sequence[float], alpha: float = 0.05) -> float:
    """Fraction of p-values strictly below alpha"""
    p_values = np.asarray(p_values, dtype=float)
    if len(p_values) == 0:
        raise ValueError("power needs at least one p-value")
    return float(np.count_nonzero(p_values < alpha) / len(p_values))
