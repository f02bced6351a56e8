"""Data model and numerical primitives for simultaneous-equations designs.

A design is the observation bundle (y, X*, W, Z*): outcome, endogenous
regressors, exogenous controls, and excluded instruments. Everything the
estimators need reduces to three primitives over this bundle: stacking the
blocks into the full regressor/instrument matrices, an orthonormal basis of
an instrument column space together with per-row leverages, and
partialling-out (residualizing on W). The projector onto col(Z) is never
materialized as an N x N array; all downstream code works through the basis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DesignError, RankDeficiencyError

__all__ = [
    "DesignData",
    "StackedDesign",
    "ProjectionDecomposition",
    "PartialledData",
    "LeverageReport",
    "as_matrix",
    "as_vector",
    "stack",
    "project",
    "partial_out",
    "leverage_report",
]

DEFAULT_BA_THRESHOLD = 0.05


def as_vector(values, name: str, n_rows: int | None = None) -> np.ndarray:
    """Coerce to a finite float64 1-D array, validating length.

    Parameters
    ----------
    values : array_like
        Input vector.
    name : str
        Label used in error messages.
    n_rows : int, optional
        Required length.

    Returns
    -------
    numpy.ndarray of shape (n,)
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise DesignError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if n_rows is not None and arr.shape[0] != n_rows:
        raise DesignError(
            f"{name} has {arr.shape[0]} rows but {n_rows} were expected"
        )
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise DesignError(f"{name} contains a non-finite value at row {bad}")
    return arr


def as_matrix(values, name: str, n_rows: int | None = None) -> np.ndarray:
    """Coerce to a finite float64 2-D array, validating the row count.

    A 1-D input is treated as a single column. ``None`` becomes an
    (n_rows, 0) block so empty control sets need no special casing.
    """
    if values is None:
        if n_rows is None:
            raise DesignError(f"{name} is None and no row count is available")
        return np.empty((n_rows, 0), dtype=np.float64)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DesignError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if n_rows is not None and arr.shape[0] != n_rows:
        raise DesignError(
            f"{name} has {arr.shape[0]} rows but {n_rows} were expected"
        )
    if arr.size and not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise DesignError(f"{name} contains a non-finite value at row {bad}")
    return arr


@dataclass(frozen=True)
class DesignData:
    """Raw observation bundle for one simultaneous-equations design.

    Parameters
    ----------
    y : numpy.ndarray of shape (n,)
        Outcome.
    x_star : numpy.ndarray of shape (n, l1)
        Endogenous regressors.
    w : numpy.ndarray of shape (n, l2)
        Exogenous controls; may have zero columns. By convention the
        intercept, when present, is the first column.
    z_star : numpy.ndarray of shape (n, k1)
        Excluded instruments.

    Notes
    -----
    Construction validates the identification conditions: all blocks share
    the row count, n exceeds k1 + l2, and k1 >= l1. Arrays are copied and
    frozen so instances can be shared across threads.
    """

    y: np.ndarray
    x_star: np.ndarray
    w: np.ndarray
    z_star: np.ndarray

    def __post_init__(self):
        y = as_vector(self.y, "y")
        n = y.shape[0]
        x_star = as_matrix(self.x_star, "x_star", n)
        w = as_matrix(self.w, "w", n)
        z_star = as_matrix(self.z_star, "z_star", n)
        if x_star.shape[1] < 1:
            raise DesignError("x_star must have at least one column")
        if z_star.shape[1] < x_star.shape[1]:
            raise DesignError(
                f"under-identified: {z_star.shape[1]} instruments for "
                f"{x_star.shape[1]} endogenous regressors"
            )
        if n <= z_star.shape[1] + w.shape[1]:
            raise DesignError(
                f"n={n} must exceed k1+l2={z_star.shape[1] + w.shape[1]}"
            )
        for name, arr in (("y", y), ("x_star", x_star), ("w", w),
                          ("z_star", z_star)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def l1(self) -> int:
        return self.x_star.shape[1]

    @property
    def l2(self) -> int:
        return self.w.shape[1]

    @property
    def k1(self) -> int:
        return self.z_star.shape[1]


@dataclass(frozen=True)
class StackedDesign:
    """Column-concatenated regressor and instrument matrices.

    ``x`` is [x_star | w]; ``z`` is [z_star | w]; ``l`` and ``k`` are their
    column counts.
    """

    x: np.ndarray
    z: np.ndarray
    l: int
    k: int


@dataclass(frozen=True)
class ProjectionDecomposition:
    """Orthonormal basis of an instrument column space with row leverages.

    ``basis`` has orthonormal columns spanning col(Z); ``rank`` is the
    numerical rank; ``leverages[i]`` is the i-th diagonal entry of the
    projector, computed as the squared i-th row norm of the basis.
    """

    basis: np.ndarray
    rank: int
    leverages: np.ndarray

    @property
    def n(self) -> int:
        return self.basis.shape[0]


@dataclass(frozen=True)
class PartialledData:
    """Residuals of (y, x_star, z_star) after projecting out W."""

    y_t: np.ndarray
    x_t: np.ndarray
    z_t: np.ndarray
    source_dims: tuple[int, int, int]


@dataclass(frozen=True)
class LeverageReport:
    """Maximum-leverage diagnostic for the bounded-away assumption.

    ``margin`` is 1 - max_leverage; ``ba_flag`` is True when the margin
    falls below the configured threshold. ``max_index`` is 0-based.
    """

    max_leverage: float
    max_index: int
    margin: float
    ba_flag: bool


def stack(data: DesignData) -> StackedDesign:
    """Concatenate blocks into X = [x_star | w] and Z = [z_star | w].

    Parameters
    ----------
    data : DesignData

    Returns
    -------
    StackedDesign
    """
    x = np.column_stack([data.x_star, data.w])
    z = np.column_stack([data.z_star, data.w])
    return StackedDesign(x=x, z=z, l=x.shape[1], k=z.shape[1])


def project(z, *, allow_rank_deficient: bool = False) -> ProjectionDecomposition:
    """Orthonormal basis and leverages for the column space of ``z``.

    Uses a column-pivoted QR factorization; the numerical rank is the count
    of pivots exceeding max(n, k) * eps * (largest column norm). The
    projector itself is never formed.

    Parameters
    ----------
    z : array_like of shape (n, k)
        Instrument matrix, n >= k.
    allow_rank_deficient : bool, optional
        When True, a rank-deficient ``z`` yields the reduced basis instead
        of raising.

    Returns
    -------
    ProjectionDecomposition

    Raises
    ------
    RankDeficiencyError
        If rank < k and ``allow_rank_deficient`` is False. The detected
        rank rides on the exception.
    """
    z = as_matrix(z, "z")
    n, k = z.shape
    if n < k:
        raise DesignError(f"z has more columns ({k}) than rows ({n})")
    if k == 0:
        return ProjectionDecomposition(
            basis=np.empty((n, 0)), rank=0, leverages=np.zeros(n)
        )
    q, r, _ = scipy.linalg.qr(z, mode="economic", pivoting=True)
    col_norms = np.linalg.norm(z, axis=0)
    tol = max(n, k) * np.finfo(np.float64).eps * col_norms.max()
    rank = int(np.sum(np.abs(np.diag(r)) > tol))
    if rank < k and not allow_rank_deficient:
        raise RankDeficiencyError(
            f"instrument matrix has numerical rank {rank} < {k} columns; "
            f"pass allow_rank_deficient=True to project on the reduced space",
            rank=rank,
        )
    basis = q[:, :rank]
    leverages = np.einsum("ij,ij->i", basis, basis)
    return ProjectionDecomposition(basis=basis, rank=rank, leverages=leverages)


def partial_out(data: DesignData) -> PartialledData:
    """Residualize y, x_star and z_star on the controls W.

    Parameters
    ----------
    data : DesignData
        Must have at least one control column.

    Returns
    -------
    PartialledData
        Each block replaced by its residual after projection on col(W).

    Raises
    ------
    DesignError
        If there are no controls.
    RankDeficiencyError
        If W is rank deficient.
    """
    if data.l2 == 0:
        raise DesignError("partial_out requires at least one control column")
    try:
        w_decomp = project(data.w)
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(
            f"controls are rank deficient (rank {exc.rank} of {data.l2})",
            rank=exc.rank,
        ) from exc
    basis = w_decomp.basis

    def strip(m):
        return m - basis @ (basis.T @ m)

    return PartialledData(
        y_t=strip(data.y),
        x_t=strip(data.x_star),
        z_t=strip(data.z_star),
        source_dims=(data.n, data.l1, data.k1),
    )


def leverage_report(
    decomp: ProjectionDecomposition,
    threshold: float = DEFAULT_BA_THRESHOLD,
) -> LeverageReport:
    """Locate the maximum leverage and test the bounded-away margin.

    Parameters
    ----------
    decomp : ProjectionDecomposition
    threshold : float, optional
        Minimum acceptable margin 1 - max leverage. The flag is advisory;
        nothing downstream blocks on it.

    Returns
    -------
    LeverageReport
    """
    idx = int(np.argmax(decomp.leverages))
    max_lev = float(decomp.leverages[idx])
    margin = 1.0 - max_lev
    return LeverageReport(
        max_leverage=max_lev,
        max_index=idx,
        margin=margin,
        ba_flag=margin < threshold,
    )
