"""The unified C-matrix estimator engine.

Every estimator here has the closed form (X'C'X)^{-1} X'C'y for a matrix C
built from the projector P onto the instrument column space, the diagonal
D of that projector (leverages), and one scalar parameter. Five parametric
families cover the whole zoo:

==========  =============================================
family      C
==========  =============================================
kclass      (1-k) I + k P
lambda1     (I - lambda D)^{-1} (P - lambda D)
lambda2     P - lambda D
omega1      (I - D + omega I)^{-1} (P - D + omega I)
omega2      P - D + omega I
==========  =============================================

Named estimators are (family, parameter, input-mode) triples; the parameter
formulas live in :func:`resolve_named`. C is applied through the basis of
the projection decomposition in O(n * rank * c) and is never materialized.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .design import (
    DesignData,
    PartialledData,
    ProjectionDecomposition,
    partial_out,
    project,
    stack,
)
from .errors import (
    DesignError,
    NearSingularError,
    OracleInfeasibleError,
    SingularWeightError,
)

__all__ = [
    "FAMILY_KINDS",
    "Family",
    "k_class",
    "lambda1",
    "lambda2",
    "omega1",
    "omega2",
    "EstimatorSpec",
    "EstimateResult",
    "NAMED_ESTIMATORS",
    "apply_c",
    "estimate",
    "resolve_named",
    "spec_for",
    "standard_errors",
    "jive1_loo_oracle",
]

FAMILY_KINDS = ("kclass", "lambda1", "lambda2", "omega1", "omega2")

#: Condition-number ceiling beyond which the Gram system is treated as
#: singular rather than solved into garbage.
COND_LIMIT = 1e12


@dataclass(frozen=True)
class Family:
    """One member of a C-matrix family: a kind tag plus its parameter."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(
                f"unknown family kind {self.kind!r}; expected one of "
                f"{FAMILY_KINDS}"
            )
        object.__setattr__(self, "param", float(self.param))


def k_class(k: float) -> Family:
    """C = (1-k) I + k P. k=0 is OLS, k=1 is TSLS."""
    return Family("kclass", k)


def lambda1(lam: float) -> Family:
    """C = (I - lambda D)^{-1} (P - lambda D). Requires lambda D_i < 1."""
    return Family("lambda1", lam)


def lambda2(lam: float) -> Family:
    """C = P - lambda D."""
    return Family("lambda2", lam)


def omega1(om: float) -> Family:
    """C = (I - D + omega I)^{-1} (P - D + omega I).

    Requires 1 - D_i + omega > 0 for every row. omega=0 is the
    leave-one-out jackknife; omega -> infinity recovers OLS.
    """
    return Family("omega1", om)


def omega2(om: float) -> Family:
    """C = P - D + omega I. omega=0 is the second jackknife variant."""
    return Family("omega2", om)


@dataclass(frozen=True)
class EstimatorSpec:
    """A fully determined estimator: family, input mode and display label.

    ``partialled`` selects whether the estimator runs on the raw stacked
    design or on data with the controls projected out first. ``note``
    carries resolution warnings (e.g. a partialled-mode name applied to a
    design without controls).
    """

    family: Family
    partialled: bool
    label: str
    note: str | None = None


@dataclass(frozen=True)
class EstimateResult:
    """Output of one estimator on one dataset.

    ``beta_hat`` has length L = l1 + l2 in raw mode (endogenous
    coefficients first) and l1 in partialled mode. ``sigma2_hat`` is the
    second-stage residual variance and ``cond`` the condition estimate of
    the Gram matrix X'C'X.
    """

    beta_hat: np.ndarray
    se: np.ndarray
    sigma2_hat: float
    cond: float
    n_used: int


NAMED_ESTIMATORS = (
    "OLS",
    "TSLS",
    "Nagar",
    "AUK",
    "JIVE1",
    "JIVE2",
    "IJIVE1",
    "IJIVE2",
    "UIJIVE1",
    "UIJIVE2",
    "TSJI1",
    "TSJI2",
    "UOJIVE1",
    "UOJIVE2",
)

_CANONICAL = {name.upper(): name for name in NAMED_ESTIMATORS}


def _weights_omega1(leverages, omega, n):
    den = 1.0 - leverages + omega
    if np.any(den <= 0.0):
        row = int(np.flatnonzero(den <= 0.0)[0])
        raise SingularWeightError(
            f"omega1 weight 1 - D_i + omega is {den[row]:.3e} at row {row}; "
            f"leverage {leverages[row]:.6f} with omega={omega:g}",
            row=row,
        )
    return den


def _weights_lambda1(leverages, lam):
    den = 1.0 - lam * leverages
    if np.any(den <= 0.0):
        row = int(np.flatnonzero(den <= 0.0)[0])
        raise SingularWeightError(
            f"lambda1 weight 1 - lambda*D_i is {den[row]:.3e} at row {row}; "
            f"leverage {leverages[row]:.6f} with lambda={lam:g}",
            row=row,
        )
    return den


def apply_c(
    family: Family,
    decomp: ProjectionDecomposition,
    m,
    *,
    transpose: bool = False,
) -> np.ndarray:
    """Apply the family's C matrix (or its transpose) to a vector or matrix.

    Parameters
    ----------
    family : Family
    decomp : ProjectionDecomposition
        Decomposition of the instrument matrix the estimator projects on.
    m : array_like of shape (n,) or (n, c)
    transpose : bool, optional
        When True, return C' m instead of C m. The two differ only for the
        lambda1 and omega1 families, whose C is a row-reweighted projector.

    Returns
    -------
    numpy.ndarray
        Same shape as ``m``. Cost is O(n * rank * c); no n x n array is
        ever formed.

    Raises
    ------
    SingularWeightError
        If a lambda1/omega1 reweighting denominator is <= 0 at any row
        (a leverage too close to 1 for the given parameter).
    """
    arr = np.asarray(m, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[:, None]
    if arr.shape[0] != decomp.n:
        raise DesignError(
            f"operand has {arr.shape[0]} rows but the decomposition was "
            f"built for {decomp.n}"
        )
    basis = decomp.basis
    d = decomp.leverages
    kind, p = family.kind, family.param

    def proj(u):
        return basis @ (basis.T @ u)

    if kind == "kclass":
        out = (1.0 - p) * arr + p * proj(arr)
    elif kind == "lambda2":
        out = proj(arr) - p * (d[:, None] * arr)
    elif kind == "omega2":
        out = proj(arr) - d[:, None] * arr + p * arr
    elif kind == "lambda1":
        den = _weights_lambda1(d, p)
        if transpose:
            u = arr / den[:, None]
            out = proj(u) - p * (d[:, None] * u)
        else:
            out = (proj(arr) - p * (d[:, None] * arr)) / den[:, None]
    elif kind == "omega1":
        den = _weights_omega1(d, p, decomp.n)
        if transpose:
            u = arr / den[:, None]
            out = proj(u) - d[:, None] * u + p * u
        else:
            out = (proj(arr) - d[:, None] * arr + p * arr) / den[:, None]
    else:  # pragma: no cover - Family validates kind
        raise ValueError(kind)
    return out[:, 0] if squeeze else out


def _solve_gram(gram, rhs, cond_limit):
    """Solve the small Gram system by QR with one refinement pass."""
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > cond_limit:
        raise NearSingularError(
            f"X'C'X is numerically singular (condition estimate {cond:.3e} "
            f"exceeds {cond_limit:.1e})",
            cond=cond,
        )
    q, r = np.linalg.qr(gram)
    sol = scipy.linalg.solve_triangular(r, q.T @ rhs)
    resid = rhs - gram @ sol
    sol = sol + scipy.linalg.solve_triangular(r, q.T @ resid)
    return sol, cond


def _se_sandwich(gram, cx, sigma2):
    # just-identified IV with instrument CX under homoskedasticity:
    # sigma2 * (X'C'X)^{-1} (CX)'(CX) (X'CX)^{-1}
    a = np.linalg.inv(gram)
    cov = sigma2 * (a @ (cx.T @ cx) @ a.T)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def estimate(
    spec: EstimatorSpec,
    data: DesignData,
    *,
    decomp: ProjectionDecomposition | None = None,
    partialled: PartialledData | None = None,
    partialled_decomp: ProjectionDecomposition | None = None,
    sigma2_divisor: str = "n",
    cond_limit: float = COND_LIMIT,
) -> EstimateResult:
    """Evaluate one estimator on one dataset.

    Solves (X'C'X) b = X'C'y, then attaches the residual variance and
    standard errors. In partialled mode the controls are projected out of
    every block first and the coefficient vector covers only the
    endogenous regressors.

    Parameters
    ----------
    spec : EstimatorSpec
    data : DesignData
    decomp, partialled, partialled_decomp : optional
        Precomputed pieces, so a caller evaluating many estimators on one
        draw can share the expensive factorizations. ``decomp`` must be the
        decomposition of the stacked instrument matrix; ``partialled_decomp``
        of the partialled instruments.
    sigma2_divisor : {"n", "n-l"}, optional
        Divisor for the residual variance. The default matches the
        asymptotic plug-in; "n-l" applies the degrees-of-freedom correction.
    cond_limit : float, optional
        Condition ceiling for the Gram solve.

    Returns
    -------
    EstimateResult

    Raises
    ------
    NearSingularError
        X'C'X condition estimate beyond ``cond_limit``.
    SingularWeightError
        Propagated from the C application for lambda1/omega1.
    DesignError
        Partialled mode on a design without controls.
    """
    if sigma2_divisor not in ("n", "n-l"):
        raise ValueError(f"sigma2_divisor must be 'n' or 'n-l', got "
                         f"{sigma2_divisor!r}")
    if spec.partialled:
        pdata = partialled if partialled is not None else partial_out(data)
        y = pdata.y_t
        x = pdata.x_t
        dec = partialled_decomp if partialled_decomp is not None else project(
            pdata.z_t
        )
    else:
        stacked = stack(data)
        y = data.y
        x = stacked.x
        dec = decomp if decomp is not None else project(stacked.z)

    cx = apply_c(spec.family, dec, x)
    gram = cx.T @ x
    rhs = cx.T @ y
    beta, cond = _solve_gram(gram, rhs, cond_limit)
    resid = y - x @ beta
    divisor = y.shape[0] if sigma2_divisor == "n" else y.shape[0] - x.shape[1]
    sigma2 = float(resid @ resid) / divisor
    se = _se_sandwich(gram, cx, sigma2)
    return EstimateResult(
        beta_hat=beta,
        se=se,
        sigma2_hat=sigma2,
        cond=cond,
        n_used=y.shape[0],
    )


def resolve_named(
    name: str,
    n: int,
    k_total: int,
    l_total: int,
    l1: int,
) -> EstimatorSpec:
    """Resolve a named estimator to its (family, parameter, mode) triple.

    The parameter formulas are stated in terms of the dataset dimensions:
    n observations, k_total stacked instrument columns, l_total stacked
    regressor columns, l1 endogenous regressors.

    Partialled-mode names (IJIVE*, UIJIVE*) on a design without controls
    (l_total == l1) resolve to their raw-mode siblings, with ``note`` set
    on the returned spec.

    Parameters
    ----------
    name : str
        One of :data:`NAMED_ESTIMATORS`, case-insensitive.
    n, k_total, l_total, l1 : int

    Returns
    -------
    EstimatorSpec
    """
    canonical = _CANONICAL.get(str(name).upper())
    if canonical is None:
        raise ValueError(
            f"unknown estimator {name!r}; expected one of {NAMED_ESTIMATORS}"
        )
    if min(n, k_total, l_total, l1) < 1 or n <= k_total:
        raise DesignError(
            f"cannot resolve {canonical} for n={n}, k={k_total}, l={l_total}: "
            f"need positive dimensions and n > k"
        )

    no_controls = l_total == l1
    raw_sibling = {
        "IJIVE1": "JIVE1",
        "IJIVE2": "JIVE2",
        "UIJIVE1": "UOJIVE1",
        "UIJIVE2": "UOJIVE2",
    }
    if canonical in raw_sibling and no_controls:
        spec = resolve_named(raw_sibling[canonical], n, k_total, l_total, l1)
        return replace(
            spec,
            label=canonical,
            note=(f"{canonical} resolves to {raw_sibling[canonical]}: "
                  f"the design has no controls to partial out"),
        )

    if canonical == "OLS":
        fam, part = k_class(0.0), False
    elif canonical == "TSLS":
        fam, part = k_class(1.0), False
    elif canonical == "Nagar":
        fam, part = k_class(1.0 + (k_total - l_total - 1) / n), False
    elif canonical == "AUK":
        fam, part = k_class((n - l_total - 1) / (n - k_total)), False
    elif canonical == "TSJI1":
        fam, part = lambda1((k_total - l_total - 1) / k_total), False
    elif canonical == "TSJI2":
        fam, part = lambda2((k_total - l_total - 1) / k_total), False
    elif canonical == "JIVE1":
        fam, part = omega1(0.0), False
    elif canonical == "JIVE2":
        fam, part = omega2(0.0), False
    elif canonical == "UOJIVE1":
        fam, part = omega1((l_total + 1) / n), False
    elif canonical == "UOJIVE2":
        fam, part = omega2((l_total + 1) / n), False
    elif canonical == "IJIVE1":
        fam, part = omega1(0.0), True
    elif canonical == "IJIVE2":
        fam, part = omega2(0.0), True
    elif canonical == "UIJIVE1":
        fam, part = omega1((l1 + 1) / n), True
    else:  # UIJIVE2
        fam, part = omega2((l1 + 1) / n), True
    return EstimatorSpec(family=fam, partialled=part, label=canonical)


def spec_for(name: str, data: DesignData) -> EstimatorSpec:
    """Resolve a named estimator against a dataset's realized dimensions."""
    stacked = stack(data)
    return resolve_named(name, data.n, stacked.k, stacked.l, data.l1)


def standard_errors(
    spec: EstimatorSpec,
    data: DesignData,
    beta_hat,
    sigma2_hat: float,
) -> np.ndarray:
    """Standard errors for a coefficient vector produced by ``estimate``.

    Treats the estimator as just-identified IV with instrument CX under
    homoskedasticity: the covariance is
    sigma2 * (X'C'X)^{-1} (CX)'(CX) (X'CX)^{-1}.

    Parameters
    ----------
    spec : EstimatorSpec
    data : DesignData
    beta_hat : array_like
        Point estimate (unused by the formula; validated for length).
    sigma2_hat : float
        Residual variance plug-in.

    Returns
    -------
    numpy.ndarray
        One standard error per coefficient.
    """
    if spec.partialled:
        pdata = partial_out(data)
        x = pdata.x_t
        dec = project(pdata.z_t)
    else:
        stacked = stack(data)
        x = stacked.x
        dec = project(stacked.z)
    beta_hat = as_vector_like(beta_hat, x.shape[1])
    cx = apply_c(spec.family, dec, x)
    gram = cx.T @ x
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NearSingularError(
            f"X'C'X is numerically singular (condition estimate {cond:.3e})",
            cond=cond,
        )
    return _se_sandwich(gram, cx, float(sigma2_hat))


def as_vector_like(values, length: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.shape[0] != length:
        raise DesignError(
            f"coefficient vector has length {arr.shape[0]}, expected {length}"
        )
    return arr


def jive1_loo_oracle(data: DesignData) -> np.ndarray:
    """Brute-force leave-one-out jackknife IV estimate.

    Builds the first-stage fitted value for each observation from a
    regression that excludes that observation, then solves the IV system
    with the jackknifed fitted values as instruments. Exists purely as the
    independent oracle for the omega1(0) closed form; cost is n separate
    least-squares problems.

    Parameters
    ----------
    data : DesignData

    Returns
    -------
    numpy.ndarray
        Coefficient vector of length l1 + l2.

    Raises
    ------
    OracleInfeasibleError
        If any leave-one-out instrument matrix loses column rank.
    """
    stacked = stack(data)
    x, z, y = stacked.x, stacked.z, data.y
    n, k = z.shape
    fitted = np.empty_like(x)
    index = np.arange(n)
    for i in range(n):
        keep = index != i
        z_i = z[keep]
        if np.linalg.matrix_rank(z_i) < k:
            raise OracleInfeasibleError(
                f"leave-one-out instrument matrix loses rank when dropping "
                f"row {i}"
            )
        coef, *_ = np.linalg.lstsq(z_i, x[keep], rcond=None)
        fitted[i] = z[i] @ coef
    gram = fitted.T @ x
    sol, _ = _solve_gram(gram, fitted.T @ y, COND_LIMIT)
    return sol
