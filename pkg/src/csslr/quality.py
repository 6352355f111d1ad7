"""Discrimination and calibration measures and their paired tests.

Scores are oriented so that a larger score means "more likely bad"
(label 1).  All difference tests are two-sided; the ``direction`` field of the
returned :class:`~csslr.glm.TestResult` tells which input the data favour.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .glm import Direction, TestResult

DELONG_MIN_VARIANCE = 1e-14
CALIBRATION_MIN_DENOMINATOR = 1e-12


def _as_arrays(*arrays):
    out = [np.asarray(a, dtype=float).ravel() for a in arrays]
    n = out[0].shape[0]
    if any(a.shape[0] != n for a in out):
        raise ValueError("length mismatch")
    return out


def _check_labels(labels: np.ndarray) -> np.ndarray:
    bad = labels == 1
    if not np.all(bad | (labels == 0)):
        raise ValueError("labels must be 0/1")
    if bad.all() or not bad.any():
        raise ValueError("single-class labels")
    return bad


def _two_sided(z: float) -> float:
    return float(min(1.0, 2.0 * ndtr(-abs(z))))


def midranks(x: np.ndarray) -> np.ndarray:
    """Ranks 1..n with tied values sharing the average of their positions."""
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.flatnonzero(np.concatenate(([True], xs[1:] != xs[:-1])))
    ends = np.append(starts[1:], n)
    ranks = np.empty(n)
    ranks[order] = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    return ranks


@dataclass(frozen=True)
class Placements:
    """Per-observation structural components of the AUC.

    ``bad`` holds, for each bad observation, the fraction of good scores it
    beats (ties count one half); ``good`` holds, for each good observation, the
    fraction of bad scores that beat it.
    """

    auc: float
    bad: np.ndarray
    good: np.ndarray


def placements(scores, labels) -> Placements:
    s, y = _as_arrays(scores, labels)
    is_bad = _check_labels(y)
    sb, sg = s[is_bad], s[~is_bad]
    n1, n0 = sb.shape[0], sg.shape[0]
    ranks = midranks(s)
    rb, rg = ranks[is_bad], ranks[~is_bad]
    v_bad = (rb - midranks(sb)) / n0
    v_good = 1.0 - (rg - midranks(sg)) / n1
    auc_value = (rb.sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0)
    return Placements(float(auc_value), v_bad, v_good)


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of the area under the ROC curve, ties counted 1/2."""
    s, y = _as_arrays(scores, labels)
    is_bad = _check_labels(y)
    n1 = int(is_bad.sum())
    n0 = y.shape[0] - n1
    rank_sum = midranks(s)[is_bad].sum()
    return float((rank_sum - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def _sample_var(x: np.ndarray) -> float:
    return float(np.var(x, ddof=1)) if x.shape[0] > 1 else 0.0


def delong_from_placements(a: Placements, b: Placements) -> TestResult:
    d_bad = a.bad - b.bad
    d_good = a.good - b.good
    var = _sample_var(d_bad) / d_bad.shape[0] + _sample_var(d_good) / d_good.shape[0]
    if var < DELONG_MIN_VARIANCE:
        return TestResult.degenerate_result()
    diff = a.auc - b.auc
    z = diff / np.sqrt(var)
    if diff > 0:
        direction = Direction.FIRST_BETTER
    elif diff < 0:
        direction = Direction.SECOND_BETTER
    else:
        direction = Direction.NONE
    return TestResult(float(z), _two_sided(z), direction)


def delong_test(probs_a, probs_b, labels) -> TestResult:
    """Paired DeLong test for the difference of two correlated AUCs."""
    a, b, y = _as_arrays(probs_a, probs_b, labels)
    return delong_from_placements(placements(a, y), placements(b, y))


def brier(probs, labels) -> float:
    """Mean squared error between probabilities and 0/1 outcomes."""
    p, y = _as_arrays(probs, labels)
    return float(np.mean((p - y) ** 2))


def spiegelhalter_test(probs, labels) -> TestResult:
    """Spiegelhalter's z-test that a model's Brier score equals its expectation.

    A small p-value signals miscalibration.  When every probability is 0.5 the
    statistic is undefined and the test is reported as degenerate (p = 1).
    """
    p, y = _as_arrays(probs, labels)
    w = 1.0 - 2.0 * p
    denom = np.sqrt(np.sum(w * w * p * (1.0 - p)))
    if denom < CALIBRATION_MIN_DENOMINATOR:
        return TestResult.degenerate_result()
    z = float(np.sum((y - p) * w) / denom)
    return TestResult(z, _two_sided(z))


def redelmeier_test(probs_a, probs_b, labels) -> TestResult:
    """Paired test for the difference of two Brier scores on the same outcomes.

    Under the null both models are equally accurate, which fixes the expected
    outcome at the average of the two predictions.  A negative statistic means
    ``probs_a`` has the smaller Brier score.
    """
    a, b, y = _as_arrays(probs_a, probs_b, labels)
    delta = a - b
    d = delta * (a + b - 2.0 * y)
    pooled = 0.5 * (a + b)
    denom = np.sqrt(np.sum(4.0 * delta * delta * pooled * (1.0 - pooled)))
    if denom < CALIBRATION_MIN_DENOMINATOR:
        return TestResult.degenerate_result()
    total = float(d.sum())
    z = total / denom
    if total < 0:
        direction = Direction.FIRST_BETTER
    elif total > 0:
        direction = Direction.SECOND_BETTER
    else:
        direction = Direction.NONE
    return TestResult(z, _two_sided(z), direction)


@dataclass(frozen=True)
class QualitySummary:
    auc: float
    mse: float
    spiegelhalter_p: float


def summarize(probs, labels) -> QualitySummary:
    return QualitySummary(auc(probs, labels), brier(probs, labels),
                          spiegelhalter_test(probs, labels).p_value)
