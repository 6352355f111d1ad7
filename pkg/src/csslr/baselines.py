"""Reference selectors: AIC stepwise and coefficient p-value forward selection."""

from __future__ import annotations

import logging

from .data import PROFILES, Dataset, SelectionConfig
from .glm import FittedModel, SingularMatrixError, fit_logistic, wald_pvalues

log = logging.getLogger(__name__)

# only the fit controls of this config are used
_FIT_CONFIG: SelectionConfig = PROFILES["CSSLR1a"]


def _try_fit(data: Dataset, variables, cache: dict) -> FittedModel | None:
    key = frozenset(variables)
    if key not in cache:
        try:
            m = fit_logistic(data, tuple(variables), _FIT_CONFIG)
        except SingularMatrixError:
            m = None
        if m is not None and not m.converged:
            m = None
        cache[key] = m
    m = cache[key]
    return None if m is None else m.reordered(tuple(variables))


def select_aic(data: Dataset, max_steps: int = 100) -> FittedModel:
    """Bidirectional stepwise search minimising AIC from the constant model.

    Each step applies the single add or drop move with the lowest AIC, as long
    as it beats the current AIC.  Ties go to the alphabetically first variable.
    """
    cache: dict = {}
    current = _try_fit(data, (), cache)
    for _ in range(max_steps):
        moves = []
        for v in data.names:
            if v in current.variable_names:
                m = _try_fit(data, tuple(x for x in current.variable_names if x != v), cache)
            else:
                m = _try_fit(data, current.variable_names + (v,), cache)
            if m is not None:
                moves.append((m.aic, v, m))
        if not moves:
            break
        aic, v, best = min(moves, key=lambda t: (t[0], t[1]))
        if not aic < current.aic:
            break
        log.debug("AIC step: %s -> %.4f", v, aic)
        current = best
    return current


def select_pvalue(data: Dataset, alpha: float = 0.05, max_steps: int = 100) -> FittedModel:
    """Forward selection on Wald p-values with a backward purge after each addition."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    cache: dict = {}
    current = _try_fit(data, (), cache)
    for _ in range(max_steps):
        best = None
        for v in data.names:
            if v in current.variable_names:
                continue
            m = _try_fit(data, current.variable_names + (v,), cache)
            if m is None:
                continue
            try:
                p = wald_pvalues(m)[v]
            except ValueError:
                continue
            if best is None or (p, v) < (best[0], best[1]):
                best = (p, v, m)
        if best is None or not best[0] < alpha:
            break
        current = best[2]
        while current.variable_names:
            pv = wald_pvalues(current)
            worst = max(current.variable_names, key=lambda n: (pv[n], n))
            if pv[worst] < alpha:
                break
            reduced = _try_fit(data, tuple(n for n in current.variable_names if n != worst), cache)
            if reduced is None:
                break
            current = reduced
    return current
