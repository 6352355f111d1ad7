"""Logistic regression by IRLS, plus model-level statistics.

The fitted model is ``logit P(I=1 | V) = b0 + sum_j b_j V_j``.  Besides the
fit itself this module provides the likelihood-ratio test between nested
fits, Wald p-values of the coefficients and variance inflation factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import chdtrc, expit, ndtr

from .data import Dataset, SelectionConfig

PROB_FLOOR = 1e-12


class SingularMatrixError(ValueError):
    """The design matrix is rank deficient (perfect collinearity)."""


class Direction(str, Enum):
    FIRST_BETTER = "FirstBetter"
    SECOND_BETTER = "SecondBetter"
    NONE = "None"

    def flipped(self) -> "Direction":
        if self is Direction.FIRST_BETTER:
            return Direction.SECOND_BETTER
        if self is Direction.SECOND_BETTER:
            return Direction.FIRST_BETTER
        return self


@dataclass(frozen=True)
class TestResult:
    """Outcome of a two-sided test.

    ``direction`` says which of the two compared objects the data favour;
    single-sample tests report ``Direction.NONE``.  A degenerate test (zero
    variance) always carries ``p_value == 1`` and no direction.
    """

    __test__ = False  # keep pytest from collecting this class

    statistic: float
    p_value: float
    direction: Direction = Direction.NONE
    degenerate: bool = False

    @classmethod
    def degenerate_result(cls) -> "TestResult":
        return cls(0.0, 1.0, Direction.NONE, True)


@dataclass(frozen=True, eq=False)
class FittedModel:
    variable_names: tuple[str, ...]
    intercept: float
    coefficients: np.ndarray
    fitted_probs: np.ndarray = field(repr=False)
    log_likelihood: float
    aic: float
    converged: bool
    coef_std_errors: np.ndarray
    iterations: int = 0

    @property
    def n_params(self) -> int:
        return len(self.variable_names) + 1

    @property
    def key(self) -> frozenset:
        return frozenset(self.variable_names)

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.variable_names.index(name)])

    def reordered(self, order: Sequence[str]) -> "FittedModel":
        """Same fit with its variables listed in ``order`` (a permutation)."""
        order = tuple(order)
        if order == self.variable_names:
            return self
        if sorted(order) != sorted(self.variable_names):
            raise ValueError("reordering must be a permutation of the model variables")
        perm = [self.variable_names.index(v) for v in order]
        se = self.coef_std_errors
        return FittedModel(
            variable_names=order,
            intercept=self.intercept,
            coefficients=self.coefficients[perm],
            fitted_probs=self.fitted_probs,
            log_likelihood=self.log_likelihood,
            aic=self.aic,
            converged=self.converged,
            coef_std_errors=np.concatenate([se[:1], se[1:][perm]]),
            iterations=self.iterations,
        )

    def describe(self) -> str:
        if not self.variable_names:
            return "(constant)"
        return " + ".join(self.variable_names)


def log_likelihood(probs: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return float(np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


_ETA_LIMIT = float(np.log((1.0 - PROB_FLOOR) / PROB_FLOOR))


def _ll_from_eta(eta: np.ndarray, y: np.ndarray) -> float:
    # equals log_likelihood(expit(eta), y) with the same probability clamp
    eta = np.clip(eta, -_ETA_LIMIT, _ETA_LIMIT)
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def _aic(ll: float, n_params: int) -> float:
    return 2.0 * n_params - 2.0 * ll


def _rank_deficient(X: np.ndarray) -> bool:
    gram = X.T @ X
    scale = np.sqrt(np.diag(gram))
    if np.any(scale == 0):
        return True
    eig = np.linalg.eigvalsh(gram / np.outer(scale, scale))
    return bool(eig[0] < 1e-10 * X.shape[1])


def fit_logistic(data: Dataset, variables: Sequence[str], config: SelectionConfig) -> FittedModel:
    """Maximum-likelihood logistic fit by iteratively reweighted least squares.

    Convergence means the largest absolute Newton update fell below
    ``config.fit_tolerance`` within ``config.fit_max_iterations`` iterations.
    Separated data show up as ``converged=False``.

    Raises
    ------
    SingularMatrixError
        If the intercept plus the requested columns are linearly dependent.
    """
    variables = tuple(variables)
    if len(set(variables)) != len(variables):
        raise ValueError("variable names must be distinct")
    y = data.response
    n = data.n
    ybar = y.mean()

    if not variables:
        probs = np.full(n, ybar)
        ll = log_likelihood(probs, y)
        se0 = 1.0 / np.sqrt(n * ybar * (1.0 - ybar))
        return FittedModel((), float(np.log(ybar / (1.0 - ybar))), np.empty(0), probs,
                           ll, _aic(ll, 1), True, np.array([se0]), 0)

    X = np.empty((n, len(variables) + 1))
    X[:, 0] = 1.0
    X[:, 1:] = data.design(variables)
    if _rank_deficient(X):
        raise SingularMatrixError(f"singular matrix: columns {list(variables)} are collinear")

    beta = np.zeros(X.shape[1])
    beta[0] = np.log(ybar / (1.0 - ybar))
    eta = X @ beta
    probs = expit(eta)
    ll = _ll_from_eta(eta, y)
    converged = False
    it = 0
    for it in range(1, config.fit_max_iterations + 1):
        w = probs * (1.0 - probs)
        info = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(info, X.T @ (y - probs))
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        new_beta = beta + step
        new_eta = X @ new_beta
        new_ll = _ll_from_eta(new_eta, y)
        # step halving guards against overshoot far from the optimum
        halvings = 0
        while new_ll < ll - 1e-10 and halvings < 30:
            step = step / 2.0
            new_beta = beta + step
            new_eta = X @ new_beta
            new_ll = _ll_from_eta(new_eta, y)
            halvings += 1
        beta, ll = new_beta, new_ll
        probs = expit(new_eta)
        if np.max(np.abs(step)) < config.fit_tolerance:
            converged = True
            break

    probs = np.clip(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    w = probs * (1.0 - probs)
    try:
        cov = np.linalg.inv(X.T @ (X * w[:, None]))
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        se = np.full(X.shape[1], np.nan)
    return FittedModel(variables, float(beta[0]), beta[1:].copy(), probs, ll,
                       _aic(ll, X.shape[1]), converged, se, it)


def lr_test(nested: FittedModel, full: FittedModel) -> TestResult:
    """Likelihood-ratio test of ``nested`` against the larger ``full`` model.

    The statistic is clipped at zero; the p-value is the chi-square upper tail
    with as many degrees of freedom as extra parameters.
    """
    if not set(nested.variable_names) < set(full.variable_names):
        raise ValueError("lr_test requires strictly nested models")
    if len(nested.fitted_probs) != len(full.fitted_probs):
        raise ValueError("models were fitted on different datasets")
    if not (nested.converged and full.converged):
        raise ValueError("lr_test requires converged fits")
    df = full.n_params - nested.n_params
    stat = max(0.0, 2.0 * (full.log_likelihood - nested.log_likelihood))
    return TestResult(stat, float(chdtrc(df, stat)))


def wald_pvalues(model: FittedModel) -> dict[str, float]:
    """Two-sided normal p-values of ``coefficient / standard error``."""
    out = {}
    for name, b, se in zip(model.variable_names, model.coefficients, model.coef_std_errors[1:]):
        if not np.isfinite(se) or se <= 0:
            raise ValueError(f"invalid standard error for {name!r}: {se}")
        out[name] = float(2.0 * ndtr(-abs(b / se)))
    return out


def vif(data: Dataset, variables: Sequence[str]) -> dict[str, float]:
    """Variance inflation factors from the inverse predictor correlation matrix.

    Linearly dependent variables get ``inf``.  With fewer than two variables
    every VIF is 1.
    """
    variables = list(variables)
    if len(variables) < 2:
        return {v: 1.0 for v in variables}
    X = data.design(variables)
    sd = X.std(axis=0)
    if np.any(sd == 0):
        raise ValueError(f"zero-variance column: {variables[int(np.argmin(sd))]!r}")
    Z = (X - X.mean(axis=0)) / sd
    corr = (Z.T @ Z) / X.shape[0]
    if np.linalg.cond(corr) < 1e10:
        diag = np.diag(np.linalg.inv(corr))
        return {v: max(float(d), 1.0) for v, d in zip(variables, diag)}
    # near-singular: fall back to explicit auxiliary regressions
    out = {}
    for j, v in enumerate(variables):
        others = np.delete(Z, j, axis=1)
        coef, *_ = np.linalg.lstsq(others, Z[:, j], rcond=None)
        resid = Z[:, j] - others @ coef
        unexplained = float(resid @ resid) / X.shape[0]
        out[v] = np.inf if unexplained < 1e-10 else 1.0 / unexplained
    return out
