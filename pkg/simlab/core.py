"""
Simlab Core - Domain types and dataset ingestion
Datasets of (X, A, Y) triplets, value estimates, CSV reading/writing and
the seeded random streams shared by every other module
"""

import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from simlab.exceptions import DatasetError, DatasetParseError

ESTIMATE_METHODS = ("plugin", "cv", "jackknife", "empirical")

SeedLike = Union[int, np.random.SeedSequence]


def make_generator(seed: SeedLike, *key: int) -> np.random.Generator:
    """
    Counter-based random stream for a task

    The stream is fully determined by the master seed and the integer key,
    so any subset of tasks can be regenerated in isolation and the order in
    which tasks are scheduled never changes their draws.
    """
    if isinstance(seed, np.random.SeedSequence):
        entropy = seed.entropy
        key = tuple(seed.spawn_key) + tuple(key)
    else:
        entropy = int(seed)
    if entropy < 0:
        raise ValueError(f"seed must be nonnegative, got {entropy}")
    sequence = np.random.SeedSequence(entropy, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


def _frozen(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class Dataset:
    """
    n subjects with covariates X (n×p), arms A in {0..K-1} and outcomes Y

    Higher outcomes are better everywhere in simlab.
    """
    covariates: np.ndarray
    treatments: np.ndarray
    outcomes: np.ndarray
    arm_count: int

    def __post_init__(self):
        covariates = np.array(self.covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1)
        treatments_raw = np.asarray(self.treatments)
        outcomes = np.array(self.outcomes, dtype=float).reshape(-1)

        if covariates.ndim != 2:
            raise DatasetError("covariates must be an n×p matrix")
        n, p = covariates.shape
        if treatments_raw.ndim != 1 or len(treatments_raw) != n or len(outcomes) != n:
            raise DatasetError(
                f"covariates, treatments and outcomes disagree on n "
                f"({n}, {treatments_raw.size}, {outcomes.size})"
            )
        if n < 2:
            raise DatasetError(f"a dataset needs at least 2 subjects, got {n}")
        if p < 1:
            raise DatasetError("a dataset needs at least one covariate")
        if int(self.arm_count) < 2:
            raise DatasetError(f"arm_count must be at least 2, got {self.arm_count}")
        if not np.all(np.isfinite(covariates)) or not np.all(np.isfinite(outcomes)):
            raise DatasetError("covariates and outcomes must be finite")

        treatments = treatments_raw.astype(np.int64)
        if not np.array_equal(treatments, treatments_raw):
            raise DatasetError("treatment labels must be integers")
        bad = (treatments < 0) | (treatments >= int(self.arm_count))
        if np.any(bad):
            row = int(np.flatnonzero(bad)[0])
            raise DatasetError(
                f"treatment label {treatments[row]} at subject {row} is outside 0..{int(self.arm_count) - 1}"
            )

        object.__setattr__(self, "covariates", _frozen(covariates))
        object.__setattr__(self, "treatments", _frozen(treatments))
        object.__setattr__(self, "outcomes", _frozen(outcomes))
        object.__setattr__(self, "arm_count", int(self.arm_count))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def arm_counts(self) -> np.ndarray:
        """Number of subjects on each arm"""
        return np.bincount(self.treatments, minlength=self.arm_count)

    def missing_arms(self) -> List[int]:
        return [int(a) for a in np.flatnonzero(self.arm_counts() == 0)]

    def take(self, indices: Sequence[int]) -> "Dataset":
        """Subjects at the given indices, in the given order"""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.covariates[indices],
            self.treatments[indices],
            self.outcomes[indices],
            self.arm_count,
        )

    def drop(self, indices: Sequence[int]) -> "Dataset":
        """Everyone except the given indices, original order preserved"""
        keep = np.delete(np.arange(self.n), np.asarray(indices, dtype=np.int64))
        return self.take(keep)


@dataclass(frozen=True)
class ValueEstimate:
    """An estimated rule value with its influence-function residuals"""
    value: float
    residuals: Optional[np.ndarray]
    std_error: float
    n: int
    method: str
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ESTIMATE_METHODS:
            raise ValueError(f"Unknown estimate method: {self.method}")
        if self.std_error < 0 or math.isnan(self.std_error):
            raise ValueError(f"std_error must be nonnegative, got {self.std_error}")
        if self.residuals is not None:
            residuals = _frozen(np.array(self.residuals, dtype=float).reshape(-1))
            if len(residuals) != self.n:
                raise ValueError(f"expected {self.n} residuals, got {len(residuals)}")
            object.__setattr__(self, "residuals", residuals)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": float(self.value),
            "residuals": None if self.residuals is None else [float(r) for r in self.residuals],
            "std_error": float(self.std_error),
            "n": int(self.n),
            "method": self.method,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ValueEstimate":
        try:
            residuals = data.get("residuals")
            return cls(
                value=float(data["value"]),
                residuals=None if residuals is None else np.asarray(residuals, dtype=float),
                std_error=float(data["std_error"]),
                n=int(data["n"]),
                method=str(data["method"]),
                metadata=dict(data.get("metadata", {})),
            )
        except KeyError as e:
            raise ValueError(f"Value estimate is missing field {e}") from e


def _parse_cell(text: str, line: int, column: str) -> float:
    try:
        number = float(text)
    except ValueError:
        raise DatasetParseError(
            f"line {line}, column '{column}': '{text}' is not a number", row=line, column=column
        ) from None
    if not math.isfinite(number):
        raise DatasetParseError(
            f"line {line}, column '{column}': '{text}' is not finite", row=line, column=column
        )
    return number


def _expected_header(columns: List[str]) -> bool:
    if len(columns) < 3 or columns[-2:] != ["a", "y"]:
        return False
    return columns[:-2] == [f"x{j}" for j in range(1, len(columns) - 1)]


def load_dataset(path: str, arm_count: int) -> Dataset:
    """
    Read a dataset CSV with header x1..xp,a,y

    Errors name the file line (the header is line 1) and the column of the
    offending cell.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Dataset file not found: {path}")

    frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    columns = [c.strip() for c in frame.columns]
    if not _expected_header(columns):
        raise DatasetParseError(f"expected header x1,...,xp,a,y but found {','.join(columns)}", row=1)

    parsed = {}
    for column, raw in zip(columns, frame.columns):
        cells = frame[raw].tolist()
        parsed[column] = np.array(
            [_parse_cell(text.strip(), i + 2, column) for i, text in enumerate(cells)], dtype=float
        )

    arms = parsed["a"]
    not_integral = np.flatnonzero(arms != np.floor(arms))
    if len(not_integral):
        line = int(not_integral[0]) + 2
        raise DatasetParseError(f"line {line}, column 'a': arm labels must be integers", row=line, column="a")

    covariates = np.column_stack([parsed[c] for c in columns[:-2]])
    return Dataset(covariates, arms.astype(np.int64), parsed["y"], arm_count)


def write_dataset(data: Dataset, path: str) -> str:
    """Write a dataset CSV; shortest round-trip float text keeps values bit-exact"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    header = [f"x{j}" for j in range(1, data.p + 1)] + ["a", "y"]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row, arm, outcome in zip(data.covariates, data.treatments, data.outcomes):
            cells = [repr(float(v)) for v in row] + [str(int(arm)), repr(float(outcome))]
            f.write(",".join(cells) + "\n")
    return path
