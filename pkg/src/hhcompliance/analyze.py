"""Marginal-effect curves and per-facility decile t-tests."""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import InferenceError, InputError, LookupFailure

TTEST_FIELDS = ["facility", "state", "feature", "mean_diff", "p_value", "flagged"]
CURVE_FIELDS = ["value", "predicted_rate", "density"]
TTEST_FEATURES = {"temperature": "air_temp", "humidity": "rel_humidity"}


@dataclass
class MarginalCurve:
    feature_name: str
    values: np.ndarray
    predicted_rate: np.ndarray
    density: np.ndarray | None = None
    bandwidth: float | None = None

    @property
    def is_binary(self):
        return self.density is None

    def slope(self):
        """Least-squares slope of predicted rate against feature value."""
        x = self.values - self.values.mean()
        return float(x @ (self.predicted_rate - self.predicted_rate.mean()) / (x @ x))


def _is_binary(col):
    return bool(np.all((col == 0.0) | (col == 1.0)))


def marginal_effect(hypothesis, X, feature_names, feature):
    """Predicted rate as ``feature`` varies with every other feature at its mean.

    Continuous features are evaluated at each distinct observed value and
    carry a Gaussian kernel density estimate (Silverman bandwidth). Binary
    features give the two-point curve at 0 and 1 without a density.
    """
    if feature not in hypothesis.feature_names:
        raise LookupFailure(f"feature {feature!r} is not retained by the hypothesis")
    try:
        j = list(feature_names).index(feature)
    except ValueError:
        raise LookupFailure(f"feature {feature!r} not in design matrix") from None
    X = np.asarray(X, dtype=float)
    col = X[:, j]
    base = X.mean(axis=0)
    idx = [list(feature_names).index(n) for n in hypothesis.feature_names]
    coef = np.zeros(X.shape[1])
    coef[idx] = hypothesis.coefficients
    h_j = coef[j]
    offset = hypothesis.intercept + base @ coef - h_j * base[j]

    if _is_binary(col):
        grid = np.array([0.0, 1.0])
        return MarginalCurve(feature, grid, offset + h_j * grid)

    grid = np.unique(col)
    kde = stats.gaussian_kde(col, bw_method="silverman")
    bandwidth = float(np.sqrt(kde.covariance[0, 0]))
    return MarginalCurve(feature, grid, offset + h_j * grid, kde(grid), bandwidth)


def write_curve(path, curve):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_FIELDS)
        dens = curve.density if curve.density is not None else [None] * len(curve.values)
        for v, r, d in zip(curve.values, curve.predicted_rate, dens):
            writer.writerow([repr(float(v)), repr(float(r)), "" if d is None else repr(float(d))])


@dataclass
class TTestResult:
    facility_id: str
    feature: str
    mean_diff: float
    t_statistic: float
    p_value: float
    sample_size: int
    degenerate: bool = False

    @property
    def flagged(self):
        """Positive difference in means that is significant at 0.05."""
        return self.mean_diff > 0 and self.p_value <= 0.05


def paired_ttest(diffs):
    """``(mean, t, two-sided p, degenerate)`` of a paired t-test on differences.

    With zero spread the statistic is undefined: p is 1.0 when the mean
    difference is 0 and 0.0 otherwise, and ``degenerate`` is True.
    """
    d = np.asarray(diffs, dtype=float)
    q = len(d)
    if q < 2:
        raise InferenceError(f"paired t-test needs at least 2 pairs, got {q}")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return mean, 0.0, 1.0, True
        return mean, math.copysign(math.inf, mean), 0.0, True
    t = mean / (sd / math.sqrt(q))
    return mean, t, float(2.0 * stats.t.sf(abs(t), q - 1)), False


def decile_ttest(compliance, feature_values, facility_id="", feature="temperature", order_keys=None):
    """Compare a feature between the top and bottom compliance deciles of one facility.

    The feature is min-max scaled to [0, 1] over all of the facility's
    shifts. Shifts are sorted by compliance, the lowest ``q = n // 10`` and
    highest ``q`` are taken, and the i-th lowest of each decile are paired.

    Parameters
    ----------
    compliance, feature_values : array-like of shape (n,)
    order_keys : sequence, optional
        Tie-breakers for equal compliance (e.g. shift keys) so results do
        not depend on input order.
    """
    c = np.asarray(compliance, dtype=float)
    x = np.asarray(feature_values, dtype=float)
    if c.shape != x.shape:
        raise InputError("compliance and feature arrays differ in length")
    n = len(c)
    q = n // 10
    if q < 2:
        raise InferenceError(f"facility {facility_id}: {n} shifts give deciles of {q}; need at least 20 shifts")

    lo, hi = x.min(), x.max()
    scaled = (x - lo) / (hi - lo) if hi > lo else np.zeros_like(x)
    if order_keys is None:
        order = np.lexsort((scaled, c))
    else:
        tie = np.argsort(np.argsort(np.array([str(k) for k in order_keys]), kind="stable"), kind="stable")
        order = np.lexsort((tie, c))
    bottom = scaled[order[:q]]
    top = scaled[order[n - q :]]
    mean, t, p, degenerate = paired_ttest(top - bottom)
    return TTestResult(str(facility_id), feature, mean, t, p, q, degenerate)


def facility_ttests(joined, facilities=None, min_shifts=20):
    """Temperature and humidity decile tests for every facility with enough shifts.

    Returns ``(results, skipped)``; skipped lists facility ids with fewer
    than ``min_shifts`` shifts.
    """
    by_fac = {}
    for j in joined:
        by_fac.setdefault(j.facility_id, []).append(j)
    results, skipped = [], []
    for fid in sorted(by_fac):
        rows = by_fac[fid]
        if len(rows) < min_shifts:
            skipped.append(fid)
            continue
        comp = [r.compliance for r in rows]
        keys = [(r.shift_date.isoformat(), r.night_shift) for r in rows]
        for label, attr in TTEST_FEATURES.items():
            vals = [getattr(r, attr) for r in rows]
            results.append(decile_ttest(comp, vals, fid, label, keys))
    return results, skipped


def write_ttests(path, results, facilities=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TTEST_FIELDS)
        for r in results:
            state = facilities[r.facility_id].state if facilities and r.facility_id in facilities else ""
            writer.writerow([r.facility_id, state, r.feature, repr(r.mean_diff), repr(r.p_value), int(r.flagged)])
