"""Scikit-learn style wrapper around the C-matrix estimator engine.

:class:`CMatrixIV` follows the estimator protocol (``get_params`` /
``set_params``, ``fit``, ``predict``, ``score``) with the instrumental
extension used by IV estimators in the ecosystem: ``X`` holds only the
endogenous regressors and the instruments/controls enter ``fit`` as the
keyword arguments ``Z`` and ``W``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .bias import bias_coefficient
from .design import (
    DesignData,
    as_matrix,
    as_vector,
    leverage_report,
    partial_out,
    project,
    stack,
)
from .errors import DesignError
from .estimators import (
    COND_LIMIT,
    EstimatorSpec,
    FAMILY_KINDS,
    Family,
    NAMED_ESTIMATORS,
    estimate,
    resolve_named,
)

__all__ = ["CMatrixIV"]


class CMatrixIV(RegressorMixin, BaseEstimator):
    """Instrumental-variable regression with a C-matrix estimator.

    Parameters
    ----------
    estimator : str, optional
        Named estimator to resolve against the fitted data's dimensions
        (default "UOJIVE2"). Ignored when ``family`` is given.
    family : str, optional
        Family kind ("kclass", "lambda1", "lambda2", "omega1", "omega2")
        for a custom member; requires ``param``.
    param : float, optional
        Family parameter for the custom member.
    partialled : bool, optional
        Run the custom member on control-partialled data (default False).
        Only meaningful with ``family``.
    add_intercept : bool, optional
        Prepend a column of ones to the controls (default True).
    sigma2_divisor : {"n", "n-l"}, optional
        Residual-variance divisor.
    cond_limit : float, optional
        Condition ceiling for the Gram solve.

    Attributes
    ----------
    coef_ : ndarray
        Fitted coefficients. In raw mode: endogenous regressors first,
        then the control columns (intercept first among them when added).
        In partialled mode: endogenous coefficients only.
    se_ : ndarray
        Standard errors aligned with ``coef_``.
    sigma2_ : float
        Residual variance.
    cond_ : float
        Condition estimate of the solved Gram system.
    spec_ : EstimatorSpec
        The resolved estimator.
    bias_coefficient_ : float
        The estimator's finite-sample bias coefficient on this design.
    leverage_report_ : LeverageReport
        Leverage diagnostic of the projection the estimator used.

    Examples
    --------
    >>> import numpy as np
    >>> rng = np.random.default_rng(0)
    >>> z = rng.standard_normal((200, 8))
    >>> x = z.sum(axis=1, keepdims=True) * 0.5 + rng.standard_normal((200, 1))
    >>> y = 0.3 * x[:, 0] + rng.standard_normal(200)
    >>> model = CMatrixIV(estimator="TSLS").fit(x, y, Z=z)
    >>> model.coef_.shape
    (2,)
    """

    def __init__(
        self,
        estimator: str = "UOJIVE2",
        family: str | None = None,
        param: float | None = None,
        partialled: bool = False,
        add_intercept: bool = True,
        sigma2_divisor: str = "n",
        cond_limit: float = COND_LIMIT,
    ):
        self.estimator = estimator
        self.family = family
        self.param = param
        self.partialled = partialled
        self.add_intercept = add_intercept
        self.sigma2_divisor = sigma2_divisor
        self.cond_limit = cond_limit

    def _build_design(self, X, y, Z, W) -> DesignData:
        if Z is None:
            raise DesignError(
                "fit requires instruments: pass Z with at least as many "
                "columns as X"
            )
        x = as_matrix(X, "X")
        n = x.shape[0]
        y = as_vector(y, "y", n_rows=n)
        z = as_matrix(Z, "Z", n_rows=n)
        w = as_matrix(W, "W", n_rows=n) if W is not None else None
        if self.add_intercept:
            ones = np.ones((n, 1))
            w = ones if w is None else np.column_stack([ones, w])
        return DesignData(y=y, x_star=x, w=w, z_star=z)

    def _resolve_spec(self, data: DesignData) -> EstimatorSpec:
        if self.family is not None:
            if self.family not in FAMILY_KINDS:
                raise DesignError(
                    f"family must be one of {FAMILY_KINDS}, got "
                    f"{self.family!r}"
                )
            if self.param is None:
                raise DesignError("family requires param")
            fam = Family(self.family, float(self.param))
            if self.partialled and data.l2 == 0:
                raise DesignError(
                    "partialled=True needs controls (W or add_intercept)"
                )
            return EstimatorSpec(
                family=fam,
                partialled=bool(self.partialled),
                label=f"{self.family}({float(self.param):g})",
            )
        if str(self.estimator).upper() not in {
            n.upper() for n in NAMED_ESTIMATORS
        }:
            raise DesignError(
                f"unknown estimator {self.estimator!r}; expected one of "
                f"{NAMED_ESTIMATORS} or a family/param pair"
            )
        stacked = stack(data)
        return resolve_named(
            self.estimator, data.n, stacked.k, stacked.l, data.l1
        )

    def fit(self, X, y, Z=None, W=None):
        """Fit the estimator.

        Parameters
        ----------
        X : array_like of shape (n, l1)
            Endogenous regressors.
        y : array_like of shape (n,)
            Outcome.
        Z : array_like of shape (n, k1)
            Instruments (required; keyword for scikit-learn signature
            compatibility).
        W : array_like of shape (n, l2), optional
            Exogenous controls.

        Returns
        -------
        self
        """
        if self.sigma2_divisor not in ("n", "n-l"):
            raise DesignError(
                f"sigma2_divisor must be 'n' or 'n-l', got "
                f"{self.sigma2_divisor!r}"
            )
        data = self._build_design(X, y, Z, W)
        spec = self._resolve_spec(data)
        result = estimate(
            spec,
            data,
            sigma2_divisor=self.sigma2_divisor,
            cond_limit=self.cond_limit,
        )
        if spec.partialled:
            dec = project(partial_out(data).z_t)
            l_eff = data.l1
        else:
            dec = project(stack(data).z)
            l_eff = data.l1 + data.l2
        coef = bias_coefficient(
            spec.family, dec.leverages, data.n, l_eff, rank=dec.rank
        )
        self.coef_ = result.beta_hat
        self.se_ = result.se
        self.sigma2_ = result.sigma2_hat
        self.cond_ = result.cond
        self.spec_ = spec
        self.bias_coefficient_ = coef.value
        self.leverage_report_ = leverage_report(dec)
        self.n_features_in_ = data.l1
        self._n_controls = data.l2
        self._intercept_added = bool(self.add_intercept)
        return self

    def predict(self, X, W=None) -> np.ndarray:
        """Predict outcomes from the fitted coefficients.

        In raw mode the prediction is ``[X, controls] @ coef_`` with the
        intercept column re-added when the model added one at fit time.
        In partialled mode the control coefficients were never estimated,
        so the prediction is ``X @ coef_`` — the endogenous contribution
        only, on the controls' residual scale.
        """
        if not hasattr(self, "coef_"):
            raise DesignError("predict called before fit")
        x = as_matrix(X, "X")
        if x.shape[1] != self.n_features_in_:
            raise DesignError(
                f"X has {x.shape[1]} columns; fit used "
                f"{self.n_features_in_}"
            )
        if self.spec_.partialled:
            return x @ self.coef_
        n = x.shape[0]
        w = as_matrix(W, "W", n_rows=n) if W is not None else None
        if self._intercept_added:
            ones = np.ones((n, 1))
            w = ones if w is None else np.column_stack([ones, w])
        l2 = 0 if w is None else w.shape[1]
        if l2 != self._n_controls:
            raise DesignError(
                f"prediction controls have {l2} columns; fit used "
                f"{self._n_controls}"
            )
        design = x if w is None else np.column_stack([x, w])
        return design @ self.coef_

    def score(self, X, y, sample_weight=None, W=None) -> float:
        """Coefficient of determination of ``predict(X, W)`` against y."""
        from sklearn.metrics import r2_score

        y = as_vector(y, "y", n_rows=np.asarray(X).shape[0])
        return float(
            r2_score(y, self.predict(X, W=W), sample_weight=sample_weight)
        )
