"""Finite-sample bias coefficients for the C-matrix estimator families.

To leading order, the bias of every estimator in this package is
proportional to the scalar tr(C) - L_eff - 1, where L_eff is the number of
regressor columns the estimator actually fits (all of them in raw mode,
only the endogenous ones in partialled mode). The proportionality factor
depends on unobservable error moments, so the dimensionless coefficient is
what gets computed: zero means approximately unbiased, and a coefficient
that shrinks as N grows means the bias washes out asymptotically.

Because every C here shares the projector's column space, the trace has a
closed form per family in terms of the rank K, the sample size N and the
leverages D_i:

==========  =============================
family      tr(C)
==========  =============================
kclass      k K + (1 - k) N
lambda1     sum (1-l) D_i / (1 - l D_i)
lambda2     K - l K
omega1      sum w / (1 - D_i + w)
omega2      N w
==========  =============================
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import DesignData, partial_out, project, stack
from .errors import DesignError
from .estimators import Family, _weights_lambda1, _weights_omega1, spec_for

__all__ = [
    "ADVISORY_TOL",
    "DEFAULT_TOL",
    "BiasCoefficient",
    "bias_coefficient",
    "bias_coefficient_for",
    "is_approximately_unbiased",
    "vanishing_probe",
    "vanishing_bound",
]

#: Absolute tolerance certifying an exactly-cancelling coefficient.
DEFAULT_TOL = 1e-9

#: Looser advisory tier for coefficients that only vanish asymptotically.
ADVISORY_TOL = 0.5


@dataclass(frozen=True)
class BiasCoefficient:
    """The scalar tr(C) - l_effective - 1 together with its ingredients."""

    value: float
    trace_c: float
    l_effective: int


def bias_coefficient(
    family: Family,
    leverages,
    n: int,
    l_effective: int,
    *,
    rank: int | None = None,
) -> BiasCoefficient:
    """Compute tr(C) - l_effective - 1 for one family member.

    Parameters
    ----------
    family : Family
    leverages : array_like of shape (n,)
        Diagonal of the projector the estimator is built on.
    n : int
        Number of observations; must match ``len(leverages)``.
    l_effective : int
        Regressor columns the estimator fits.
    rank : int, optional
        Rank of the projector. Defaults to ``round(sum(leverages))``; pass
        the exact rank from the decomposition to avoid relying on the
        floating-point trace identity.

    Returns
    -------
    BiasCoefficient

    Raises
    ------
    SingularWeightError
        lambda1/omega1 denominator <= 0 at some row.
    DesignError
        Dimension mismatch, or leverages whose sum is not close to an
        integer rank.
    """
    d = np.asarray(leverages, dtype=np.float64).ravel()
    if d.shape[0] != n:
        raise DesignError(
            f"got {d.shape[0]} leverages for n={n} observations"
        )
    lever_sum = float(d.sum())
    if rank is None:
        rank = int(round(lever_sum))
    if abs(lever_sum - rank) > 1e-6 * max(1.0, rank):
        raise DesignError(
            f"leverages sum to {lever_sum:.9f}, not consistent with rank "
            f"{rank}; pass leverages from a projection decomposition"
        )

    kind, p = family.kind, family.param
    if kind == "kclass":
        trace = p * rank + (1.0 - p) * n
    elif kind == "lambda1":
        den = _weights_lambda1(d, p)
        trace = float(np.sum((1.0 - p) * d / den))
    elif kind == "lambda2":
        trace = rank - p * rank
    elif kind == "omega1":
        den = _weights_omega1(d, p, n)
        trace = float(np.sum(p / den))
    else:  # omega2
        trace = n * p
    value = trace - l_effective - 1
    return BiasCoefficient(
        value=float(value),
        trace_c=float(trace),
        l_effective=int(l_effective),
    )


def is_approximately_unbiased(
    coef: BiasCoefficient, tol: float = DEFAULT_TOL
) -> bool:
    """True when the coefficient's magnitude is within ``tol`` of zero."""
    return abs(coef.value) <= tol


def bias_coefficient_for(name: str, data: DesignData) -> BiasCoefficient:
    """Bias coefficient of a named estimator on a concrete dataset.

    Resolves the name against the realized dimensions, builds the
    projection the estimator would use (partialled mode projects out the
    controls first), and evaluates the trace formula on its leverages.
    """
    spec = spec_for(name, data)
    if spec.partialled:
        pdata = partial_out(data)
        dec = project(pdata.z_t)
        l_eff = data.l1
    else:
        dec = project(stack(data).z)
        l_eff = data.l1 + data.l2
    return bias_coefficient(
        spec.family, dec.leverages, data.n, l_eff, rank=dec.rank
    )


def vanishing_probe(
    name: str, design_sequence
) -> list[tuple[int, float]]:
    """Bias-coefficient path of one named estimator along growing designs.

    Parameters
    ----------
    name : str
        A named estimator.
    design_sequence : iterable of DesignData
        Designs with strictly increasing sample size, typically drawn from
        a common data-generating process.

    Returns
    -------
    list of (int, float)
        ``(n, coefficient)`` per design, in input order. A path that
        shrinks toward zero indicates the estimator's leading bias term
        vanishes asymptotically; a constant nonzero path indicates it does
        not.
    """
    designs = list(design_sequence)
    if not designs:
        raise DesignError("design_sequence is empty")
    sizes = [d.n for d in designs]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise DesignError(
            f"design sizes must be strictly increasing, got {sizes}"
        )
    return [
        (data.n, bias_coefficient_for(name, data).value) for data in designs
    ]


def vanishing_bound(
    n: int, k1: int, l1: int, max_leverage: float
) -> float:
    """Upper bound on the jackknife-family coefficient magnitude.

    For the omega1 family with parameter (l1+1)/n on a partialled design
    with k1 instrument columns, the coefficient obeys

        |tr(C) - l1 - 1| <= (k1 (l1+1) + (l1+1)^2) / (m n + l1 + 1)

    where m = 1 - max leverage. The bound goes to zero as n grows whenever
    the maximum leverage stays bounded away from 1.

    Raises
    ------
    DesignError
        If ``max_leverage >= 1`` (bound undefined: a leverage of 1 pins an
        observation to the instrument span).
    """
    m = 1.0 - float(max_leverage)
    if m <= 0.0:
        raise DesignError(
            f"max leverage {max_leverage:.6f} leaves no margin; the "
            f"vanishing bound requires max leverage < 1"
        )
    l_plus = l1 + 1.0
    return (k1 * l_plus + l_plus * l_plus) / (m * n + l_plus)
