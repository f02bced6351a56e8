"""Exception types shared across the package.

The split mirrors the CLI exit-code contract: configuration problems map to
exit code 1, data problems to 2, numerical failures to 3.
"""
from __future__ import annotations


class DesignError(ValueError):
    """Structural problem with a dataset: shape mismatch, non-finite
    entries, or an identification condition that fails to hold."""


class RankDeficiencyError(DesignError):
    """A matrix that must have full column rank does not.

    Attributes
    ----------
    rank : int
        Numerical rank detected by the pivoted factorization.
    """

    def __init__(self, message: str, rank: int):
        super().__init__(message)
        self.rank = rank


class SingularWeightError(ArithmeticError):
    """A per-row reweighting denominator hit zero or went negative.

    Attributes
    ----------
    row : int
        0-based index of the first offending observation.
    """

    def __init__(self, message: str, row: int):
        super().__init__(message)
        self.row = row


class NearSingularError(ArithmeticError):
    """The estimator's linear system is numerically singular.

    Attributes
    ----------
    cond : float
        Condition estimate that tripped the failure.
    """

    def __init__(self, message: str, cond: float):
        super().__init__(message)
        self.cond = cond


class OracleInfeasibleError(ArithmeticError):
    """A leave-one-out first stage lost column rank, so the brute-force
    jackknife oracle is undefined on this dataset."""


class DataFileError(ValueError):
    """A dataset file could not be turned into a usable design."""
