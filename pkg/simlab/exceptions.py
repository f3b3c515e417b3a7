"""
Simlab exceptions
Typed failures raised by the estimation library and the study harness
"""

from typing import Optional


class SimlabError(Exception):
    """Base class for every error raised on purpose by simlab"""


class DatasetError(SimlabError, ValueError):
    """A dataset violates a structural invariant"""


class DatasetParseError(DatasetError):
    """A CSV cell could not be read as a finite number"""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateArmError(SimlabError, ValueError):
    """An arm has no subjects where at least one is needed"""


class InsufficientDataError(SimlabError, ValueError):
    """Too few subjects to fit a model"""


class NumericalError(SimlabError, ArithmeticError):
    """A linear system could not be solved"""


class EmptyMatchError(SimlabError, ValueError):
    """No subject received the arm recommended by the rule"""


class RefitError(SimlabError, RuntimeError):
    """A leave-out refit failed"""

    def __init__(self, message: str, index: Optional[int] = None, fold: Optional[int] = None):
        super().__init__(message)
        self.index = index
        self.fold = fold


class DegenerateComparisonError(SimlabError, ValueError):
    """Two value estimates have identical residuals"""


class DegenerateSampleError(SimlabError, ValueError):
    """A sample has zero spread"""


class ConfigError(SimlabError, ValueError):
    """An experiment configuration is invalid"""


class StudyError(SimlabError, RuntimeError):
    """A Monte-Carlo study aborted"""
