"""Calendar indicators and design-matrix assembly."""

import csv
import datetime as dt
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigError, InputError

HOLIDAYS = (
    "new_years_day",
    "mlk_day",
    "presidents_day",
    "memorial_day",
    "independence_day",
    "labor_day",
    "columbus_day",
    "veterans_day",
    "thanksgiving",
    "christmas",
)
CONTINUOUS = ("air_temp", "rel_humidity", "flu_severity")
BINARY = ("night_shift", "weekday")
TARGET = "compliance"
MODES = ("global", "single_facility")


def _nth_weekday(year, month, weekday, n):
    first = dt.date(year, month, 1)
    offset = (weekday - first.weekday()) % 7
    return first + dt.timedelta(days=offset + 7 * (n - 1))


def _last_weekday(year, month, weekday):
    nxt = dt.date(year + month // 12, month % 12 + 1, 1)
    last = nxt - dt.timedelta(days=1)
    return last - dt.timedelta(days=(last.weekday() - weekday) % 7)


def holiday_dates(year):
    """Dates of the ten federal holidays in ``year`` (no observed-day shifts)."""
    mon, thu = 0, 3
    return {
        dt.date(year, 1, 1): "new_years_day",
        _nth_weekday(year, 1, mon, 3): "mlk_day",
        _nth_weekday(year, 2, mon, 3): "presidents_day",
        _last_weekday(year, 5, mon): "memorial_day",
        dt.date(year, 7, 4): "independence_day",
        _nth_weekday(year, 9, mon, 1): "labor_day",
        _nth_weekday(year, 10, mon, 2): "columbus_day",
        dt.date(year, 11, 11): "veterans_day",
        _nth_weekday(year, 11, thu, 4): "thanksgiving",
        dt.date(year, 12, 25): "christmas",
    }


def holiday_indicator(shift_date):
    """Holiday name for ``shift_date``, or None."""
    return holiday_dates(shift_date.year).get(shift_date)


def weekday_indicator(shift_date):
    return 0 if shift_date.weekday() >= 5 else 1


def july_effect_indicator(shift_date):
    return int(shift_date.month == 7 and shift_date.day <= 7)


def facility_column(facility_id):
    return f"facility_{facility_id}"


def holiday_column(name):
    return f"holiday_{name}"


def feature_names(facility_ids, mode="global"):
    names = []
    if mode == "global":
        names += [facility_column(f) for f in sorted(facility_ids)]
    names += list(CONTINUOUS) + list(BINARY)
    names += [holiday_column(h) for h in HOLIDAYS]
    names.append("july_effect")
    return names


class ContinuousScaler(BaseEstimator, TransformerMixin):
    """Zero-mean, unit-variance scaling of selected columns.

    Other columns pass through untouched. A zero-variance column is kept
    unscaled (mean 0, scale 1) and a warning is issued.

    Parameters
    ----------
    columns : sequence of int
        Column indices to standardize.
    """

    def __init__(self, columns=()):
        self.columns = columns

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        cols = list(self.columns)
        self.mean_ = np.zeros(X.shape[1])
        self.scale_ = np.ones(X.shape[1])
        if cols:
            mean = X[:, cols].mean(axis=0)
            std = X[:, cols].std(axis=0)
            for c, m, s in zip(cols, mean, std):
                if s == 0.0:
                    warnings.warn(f"column {c} has zero variance; left unscaled", RuntimeWarning, stacklevel=2)
                    continue
                self.mean_[c], self.scale_[c] = m, s
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        return X * self.scale_ + self.mean_


@dataclass
class DesignMatrix:
    """Standardized features ``X`` and compliance target ``y``.

    ``column_means``/``column_scales`` undo the standardization
    (identity for binary columns). ``facility_ids`` and ``shift_keys`` keep
    row provenance for downstream per-facility analyses.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: list
    column_means: np.ndarray
    column_scales: np.ndarray
    facility_ids: list = field(default_factory=list)
    shift_keys: list = field(default_factory=list)
    mode: str = "global"

    @property
    def shape(self):
        return self.X.shape

    def column(self, name):
        try:
            return self.X[:, self.feature_names.index(name)]
        except ValueError:
            raise InputError(f"unknown feature {name!r}") from None

    def unstandardize(self):
        return self.X * self.column_scales + self.column_means

    def binary_mask(self):
        return np.array([n not in CONTINUOUS for n in self.feature_names])


def raw_row(joined, facility_ids):
    d = joined.shift_date
    hol = holiday_indicator(d)
    row = [1.0 if joined.facility_id == f else 0.0 for f in facility_ids]
    row += [joined.air_temp, joined.rel_humidity, joined.flu_severity]
    row += [float(joined.night_shift), float(weekday_indicator(d))]
    row += [1.0 if hol == h else 0.0 for h in HOLIDAYS]
    row.append(float(july_effect_indicator(d)))
    return row


def assemble(joined, mode="global", facility_id=None):
    """Build the design matrix from covariate-joined shifts.

    Parameters
    ----------
    joined : sequence of JoinedShift
    mode : {"global", "single_facility"}
        In single-facility mode facility indicator columns are omitted and,
        if ``facility_id`` is given, only that facility's shifts are used.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    rows = sorted(joined, key=lambda j: (j.facility_id, j.shift_date, j.night_shift))
    if mode == "single_facility" and facility_id is not None:
        rows = [j for j in rows if j.facility_id == str(facility_id)]
    if not rows:
        raise InputError("cannot assemble a design matrix from zero shifts")

    facility_ids = sorted({j.facility_id for j in rows}) if mode == "global" else []
    names = feature_names(facility_ids, mode)
    raw = np.array([raw_row(j, facility_ids) for j in rows], dtype=np.float64)
    y = np.array([j.compliance for j in rows], dtype=np.float64)

    cont = [names.index(c) for c in CONTINUOUS]
    scaler = ContinuousScaler(cont).fit(raw)
    return DesignMatrix(
        X=scaler.transform(raw),
        y=y,
        feature_names=names,
        column_means=scaler.mean_,
        column_scales=scaler.scale_,
        facility_ids=[j.facility_id for j in rows],
        shift_keys=[(j.facility_id, j.shift_date, j.night_shift) for j in rows],
        mode=mode,
    )


def relief_encoding(joined):
    """Features for RReliefF with facility and holiday as single discrete columns.

    Returns ``(X, y, names, discrete_mask)``. Facility is coded by its rank
    in sorted facility id order; holiday by 1 + its index in HOLIDAYS (0 for
    none).
    """
    rows = sorted(joined, key=lambda j: (j.facility_id, j.shift_date, j.night_shift))
    if not rows:
        raise InputError("no shifts to encode")
    fac_codes = {f: i for i, f in enumerate(sorted({j.facility_id for j in rows}))}
    names = ["facility", "air_temp", "rel_humidity", "flu_severity", "night_shift", "weekday", "holiday", "july_effect"]
    X = np.empty((len(rows), len(names)))
    for i, j in enumerate(rows):
        hol = holiday_indicator(j.shift_date)
        X[i] = [
            fac_codes[j.facility_id],
            j.air_temp,
            j.rel_humidity,
            j.flu_severity,
            j.night_shift,
            weekday_indicator(j.shift_date),
            0 if hol is None else HOLIDAYS.index(hol) + 1,
            july_effect_indicator(j.shift_date),
        ]
    y = np.array([j.compliance for j in rows])
    discrete = np.array([n not in CONTINUOUS for n in names])
    return X, y, names, discrete


# -- design CSV ---------------------------------------------------------------


def write_design(path, design):
    """Export standardized features plus the target, one row per shift."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(design.feature_names + [TARGET])
        for row, target in zip(design.X, design.y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])


def read_design(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != TARGET:
            raise InputError(f"last column must be {TARGET!r}", path=path, line=1)
        try:
            data = np.array([[float(v) for v in row] for row in reader], dtype=np.float64)
        except ValueError as exc:
            raise InputError(str(exc), path=path) from None
    if data.size == 0:
        raise InputError("design matrix has no rows", path=path)
    names = header[:-1]
    p = len(names)
    mode = "global" if any(n.startswith("facility_") for n in names) else "single_facility"
    return DesignMatrix(
        X=data[:, :p], y=data[:, p], feature_names=names, column_means=np.zeros(p), column_scales=np.ones(p), mode=mode
    )
