"""Deterministic synthetic corpora with planted effects and planted filter violations."""

import csv
import datetime as dt
import json
import math
import os
from dataclasses import dataclass, field
from zoneinfo import ZoneInfo

import numpy as np

from .exceptions import SpecError
from .featurize import CONTINUOUS, HOLIDAYS, holiday_indicator, july_effect_indicator, weekday_indicator
from .geo import latlon_to_grid, mmwr_week, mmwr_week_start
from .ingest import EVENT_FIELDS, FACILITY_FIELDS

VIOLATION_KINDS = ("low_door", "low_dispenser", "over_one")
OBS_HOURS = (0, 6, 12, 18)
Z_BOUND = 3.0

# (state, CDC division, timezone, (lat range), (lon range))
_REGIONS = [
    ("OH", "ENC", "America/New_York", (39.5, 41.5), (-84.0, -81.0)),
    ("TX", "WSC", "America/Chicago", (29.5, 32.5), (-98.0, -95.5)),
    ("MN", "WNC", "America/Chicago", (44.0, 46.0), (-94.5, -92.5)),
    ("NM", "Mnt", "America/Denver", (34.0, 36.0), (-107.5, -105.5)),
    ("CA", "Pac", "America/Los_Angeles", (33.5, 38.5), (-122.5, -117.5)),
    ("CT", "New E", "America/New_York", (41.2, 41.9), (-73.5, -72.0)),
    ("NY", "M-At", "America/New_York", (40.6, 43.0), (-78.0, -73.8)),
    ("NC", "S-At", "America/New_York", (35.0, 36.2), (-81.0, -78.5)),
    ("PA", "M-At", "America/New_York", (40.0, 41.0), (-80.0, -75.5)),
    ("IL", "ENC", "America/Chicago", (40.0, 42.0), (-89.5, -87.8)),
]


def _default_coefficients():
    coefs = {
        "air_temp": 0.02,
        "rel_humidity": 0.008,
        "flu_severity": 0.014,
        "night_shift": -0.02,
        "weekday": 0.007,
        "july_effect": -0.01,
    }
    for h in ("independence_day", "presidents_day", "veterans_day", "new_years_day", "christmas"):
        coefs[f"holiday_{h}"] = -0.01
    return coefs


@dataclass
class SynthSpec:
    """Parameters of a synthetic corpus.

    Continuous covariate coefficients are per standard deviation of the
    covariate over the valid records; binary coefficients are per unit.
    ``violations`` maps a filter reason to the number of records planted
    to trip it.
    """

    facility_count: int = 11
    days: int = 257
    start_date: dt.date = dt.date(2013, 10, 21)
    record_count: int | None = None
    base_compliance: tuple | None = None
    base_range: tuple = (0.35, 0.6)
    coefficients: dict = field(default_factory=_default_coefficients)
    noise_sd: float = 0.05
    door_range: tuple = (500, 3000)
    violations: dict = field(default_factory=dict)
    weather_gaps: int = 0
    city_count: int = 122
    colocated: int = 8
    door_sensors: int = 3
    dispenser_sensors: int = 2
    naive_fraction: float = 0.1
    seed: int = 0

    def validate(self):
        if self.facility_count < 1 or self.days < 1:
            raise SpecError("facility_count and days must be positive")
        slots = 2 * self.facility_count * self.days
        n = self.record_count if self.record_count is not None else slots
        if not 1 <= n <= slots:
            raise SpecError(f"record_count must lie in [1, {slots}], got {n}")
        unknown = set(self.violations) - set(VIOLATION_KINDS)
        if unknown:
            # A zero-compliance record has zero dispenser events, so it always trips low_dispenser first.
            raise SpecError(f"violation kinds must be among {VIOLATION_KINDS}, got {sorted(unknown)}")
        if any(v < 0 for v in self.violations.values()) or sum(self.violations.values()) > n:
            raise SpecError("violation quotas must be non-negative and fit in the record count")
        if self.weather_gaps < 0 or self.weather_gaps > n - sum(self.violations.values()):
            raise SpecError("weather_gaps exceeds the number of valid records")
        if self.base_compliance is not None and len(self.base_compliance) != self.facility_count:
            raise SpecError("base_compliance needs one value per facility")
        lo, hi = self.door_range
        if lo < 20 or hi < lo:
            raise SpecError("door_range must satisfy 20 <= low <= high")
        if self.noise_sd < 0:
            raise SpecError("noise_sd must be non-negative")
        # colocated caps at facility_count: every facility then sits on a reporting city
        if self.city_count < 1 or not 0 <= self.colocated <= self.city_count:
            raise SpecError("colocated must lie in [0, city_count]")
        bad = [k for k in self.coefficients if k not in _coef_names()]
        if bad:
            raise SpecError(f"unknown planted coefficients {bad}")
        return n


def _coef_names():
    return set(CONTINUOUS) | {"night_shift", "weekday", "july_effect"} | {f"holiday_{h}" for h in HOLIDAYS}


def study_scale_spec(seed=0):
    """5647 shift records of which 339 are planted filter violations."""
    return SynthSpec(
        facility_count=11,
        days=257,
        record_count=5647,
        violations={"low_door": 113, "low_dispenser": 146, "over_one": 80},
        seed=seed,
    )


def recovery_spec(seed=0):
    """5000 clean records with noise sd 0.17 for coefficient recovery checks."""
    return SynthSpec(
        facility_count=10,
        days=250,
        start_date=dt.date(2013, 10, 28),
        base_range=(0.4, 0.6),
        coefficients={
            "air_temp": 0.03,
            "rel_humidity": 0.015,
            "flu_severity": 0.02,
            "night_shift": -0.03,
            "weekday": 0.02,
        },
        noise_sd=0.17,
        seed=seed,
    )


@dataclass
class Corpus:
    """In-memory tables of a generated corpus; ``write`` puts them on disk."""

    events: list
    facilities: list
    centroids: list
    weather: list
    flu: list
    truth: dict

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "events": os.path.join(out_dir, "events.csv"),
            "facilities": os.path.join(out_dir, "facilities.csv"),
            "centroids": os.path.join(out_dir, "centroids.csv"),
            "weather": os.path.join(out_dir, "weather.csv"),
            "flu": os.path.join(out_dir, "flu.csv"),
            "truth": os.path.join(out_dir, "truth.json"),
        }
        _write_csv(paths["events"], EVENT_FIELDS, self.events)
        _write_csv(paths["facilities"], FACILITY_FIELDS, self.facilities)
        _write_csv(paths["centroids"], ["zipcode", "latitude", "longitude"], self.centroids)
        _write_csv(
            paths["weather"], ["latitude", "longitude", "timestamp_utc", "air_temp_k", "rel_humidity_pct"], self.weather
        )
        _write_csv(
            paths["flu"],
            ["city", "latitude", "longitude", "mmwr_year", "mmwr_week", "flu_deaths", "total_deaths"],
            self.flu,
        )
        with open(paths["truth"], "w", encoding="utf-8") as fh:
            json.dump(self.truth, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return paths


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x, digits=6):
    return f"{x:.{digits}f}"


def _check_feasible(spec, bases):
    cont = sum(abs(spec.coefficients.get(c, 0.0)) for c in CONTINUOUS) * Z_BOUND
    binary = sum(abs(spec.coefficients.get(k, 0.0)) for k in ("night_shift", "weekday", "july_effect"))
    binary += max([abs(spec.coefficients.get(f"holiday_{h}", 0.0)) for h in HOLIDAYS])
    swing = cont + binary
    if min(bases) - swing <= 0.0 or max(bases) + swing > 1.0:
        raise SpecError(
            f"planted effects (worst case +/-{swing:.3f}) push base compliance "
            f"[{min(bases):.3f}, {max(bases):.3f}] outside (0, 1]"
        )


def _nearest(loc, cities):
    best, best_d = None, math.inf
    for name, (lat, lon) in sorted(cities.items()):
        d = math.sqrt((lat - loc[0]) ** 2 + (lon - loc[1]) ** 2)
        if d < best_d:
            best, best_d = name, d
    return best


def _temperature(rng, lat, day, hour):
    season = math.sin(2 * math.pi * (day.timetuple().tm_yday - 105) / 365.25)
    return 284.0 + 12.0 * season - 0.6 * (lat - 38.0) + (3.0 if hour == 18 else -2.0) + rng.normal(0.0, 3.0)


def _split(rng, total, parts):
    if parts == 1 or total == 0:
        return [total] + [0] * (parts - 1)
    return list(rng.multinomial(total, np.full(parts, 1.0 / parts)))


def generate(spec):
    """Build a corpus from ``spec``; identical specs give identical output."""
    n_records = spec.validate()
    rng = np.random.default_rng(spec.seed)

    # cities
    cities = {}
    for i in range(spec.city_count):
        cities[f"City{i:03d}"] = (round(float(rng.uniform(26.0, 48.0)), 4), round(float(rng.uniform(-123.0, -71.0)), 4))

    # facilities
    fac_ids = [str(101 + 2 * i) for i in range(spec.facility_count)]
    bases = (
        list(spec.base_compliance)
        if spec.base_compliance is not None
        else [round(float(b), 4) for b in rng.uniform(*spec.base_range, size=spec.facility_count)]
    )
    _check_feasible(spec, bases)
    city_names = sorted(cities)
    fac_rows, centroid_rows, fac_info = [], [], {}
    for i, fid in enumerate(fac_ids):
        state, div, tz, lat_r, lon_r = _REGIONS[i % len(_REGIONS)]
        if i < spec.colocated:
            # put a reporting city inside the facility's region and collocate them
            name = city_names[i]
            loc = (round(float(rng.uniform(*lat_r)), 4), round(float(rng.uniform(*lon_r)), 4))
            cities[name] = loc
        else:
            loc = (round(float(rng.uniform(*lat_r)), 4), round(float(rng.uniform(*lon_r)), 4))
        zipcode = f"{10001 + 4099 * i:05d}"
        fac_rows.append([fid, state, div, zipcode, tz])
        centroid_rows.append([zipcode, _fmt(loc[0], 4), _fmt(loc[1], 4)])
        fac_info[fid] = {"loc": loc, "tz": ZoneInfo(tz), "grid": latlon_to_grid(*loc), "base": bases[i]}
    for j in range(5):
        centroid_rows.append([f"{99000 + j:05d}", _fmt(float(rng.uniform(26, 48)), 4), _fmt(float(rng.uniform(-123, -71)), 4)])
    centroid_rows.sort()
    for fid in fac_ids:
        fac_info[fid]["city"] = _nearest(fac_info[fid]["loc"], cities)

    # shift slots and planted violations
    dates = [spec.start_date + dt.timedelta(days=d) for d in range(spec.days)]
    slots = [(fid, d, night) for fid in fac_ids for d in dates for night in (0, 1)]
    if n_records < len(slots):
        pick = np.sort(rng.choice(len(slots), size=n_records, replace=False))
        slots = [slots[i] for i in pick]
    labels = [None] * n_records
    quota = [k for k in VIOLATION_KINDS for _ in range(spec.violations.get(k, 0))]
    for pos, kind in zip(rng.choice(n_records, size=len(quota), replace=False), quota):
        labels[pos] = kind
    valid = [i for i in range(n_records) if labels[i] is None]

    # weather at every grid element in use, four times a day
    grids = sorted({info["grid"] for info in fac_info.values()})
    first = dates[0] - dt.timedelta(days=1)
    weather = {}
    for g in grids:
        lat, lon = g.center
        for d in range(spec.days + 2):
            day = first + dt.timedelta(days=d)
            for hour in OBS_HOURS:
                temp = _temperature(rng, lat, day, hour)
                humid = min(100.0, max(5.0, 65.0 + 12.0 * math.cos(2 * math.pi * day.month / 12) + rng.normal(0, 10)))
                weather[(g, dt.datetime(day.year, day.month, day.day, hour))] = (round(temp, 3), round(humid, 3))

    # flu reports for every city and MMWR week covering the dates
    flu = {}
    week = mmwr_week(first)
    last = mmwr_week(dates[-1] + dt.timedelta(days=1))
    while True:
        start = mmwr_week_start(*week)
        peak = (start - dt.date(start.year if start.month < 7 else start.year + 1, 1, 25)).days / 7.0
        for name in sorted(cities):
            total = int(rng.integers(400, 1600))
            frac = 0.015 + 0.06 * math.exp(-((peak / 5.0) ** 2)) + rng.normal(0, 0.008)
            flu[(name, week)] = (min(total, max(0, round(frac * total))), total)
        if week == last:
            break
        week = mmwr_week(start + dt.timedelta(days=7))

    def covariates(fid, day, night):
        info = fac_info[fid]
        temp, humid = weather[(info["grid"], dt.datetime(day.year, day.month, day.day, 18 if night else 6))]
        deaths, total = flu[(info["city"], mmwr_week(day))]
        return temp, humid, deaths / total

    cov = np.array([covariates(*slots[i]) for i in valid]) if valid else np.zeros((0, 3))
    means = cov.mean(axis=0) if len(cov) else np.zeros(3)
    sds = cov.std(axis=0) if len(cov) else np.ones(3)
    sds[sds == 0] = 1.0

    base_mean = float(np.mean(bases))
    truth = {
        "seed": spec.seed,
        "noise_sd": spec.noise_sd,
        "records.total": n_records,
        "records.valid": len(valid),
        "intercept": base_mean,
    }
    for c in sorted(_coef_names()):
        truth[f"coef.{c}"] = float(spec.coefficients.get(c, 0.0))
    for fid in fac_ids:
        truth[f"coef.facility_{fid}"] = fac_info[fid]["base"] - base_mean
        truth[f"base.{fid}"] = fac_info[fid]["base"]
        truth[f"city.{fid}"] = fac_info[fid]["city"]
    for k, name in enumerate(CONTINUOUS):
        truth[f"standardize.{name}.mean"] = float(means[k])
        truth[f"standardize.{name}.sd"] = float(sds[k])
    for kind in VIOLATION_KINDS:
        truth[f"violations.{kind}"] = spec.violations.get(kind, 0)

    # per-record counts
    counts = []
    door_lo, door_hi = spec.door_range
    valid_pos = {i: r for r, i in enumerate(valid)}
    for i, (fid, day, night) in enumerate(slots):
        label = labels[i]
        if label is None:
            z = (cov[valid_pos[i]] - means) / sds
            hol = holiday_indicator(day)
            rate = fac_info[fid]["base"]
            rate += sum(spec.coefficients.get(c, 0.0) * z[k] for k, c in enumerate(CONTINUOUS))
            rate += spec.coefficients.get("night_shift", 0.0) * night
            rate += spec.coefficients.get("weekday", 0.0) * weekday_indicator(day)
            rate += spec.coefficients.get("july_effect", 0.0) * july_effect_indicator(day)
            if hol is not None:
                rate += spec.coefficients.get(f"holiday_{hol}", 0.0)
            if spec.noise_sd > 0:
                rate += rng.normal(0.0, spec.noise_sd)
            door = int(rng.integers(door_lo, door_hi + 1))
            disp = min(door, max(10, int(math.floor(min(rate, 1.0) * door + 0.5))))
        elif label == "low_door":
            door, disp = int(rng.integers(1, 10)), int(rng.integers(0, 31))
        elif label == "low_dispenser":
            door, disp = int(rng.integers(door_lo, door_hi + 1)), int(rng.integers(0, 10))
        else:
            door = int(rng.integers(10, 201))
            disp = door + int(rng.integers(1, 51))
        counts.append((door, disp))
        if label is not None:
            truth[f"label.{fid}.{day.isoformat()}.{night}"] = label

    # planted weather gaps among valid records' observations
    gap_keys = set()
    if spec.weather_gaps:
        for i in rng.choice(valid, size=spec.weather_gaps, replace=False):
            fid, day, night = slots[i]
            gap_keys.add((fac_info[fid]["grid"], dt.datetime(day.year, day.month, day.day, 18 if night else 6)))
    for g, when in sorted(gap_keys):
        truth[f"gap.{g.lat_index}.{g.lon_index}.{when.isoformat()}"] = 1
    truth["weather_gaps"] = len(gap_keys)

    # events
    events = []
    for (fid, day, night), (door, disp) in zip(slots, counts):
        info = fac_info[fid]
        start = dt.datetime(day.year, day.month, day.day, 19 if night else 7)
        for kind, total, n_sensors in (("door", door, spec.door_sensors), ("dispenser", disp, spec.dispenser_sensors)):
            for s, amount in enumerate(_split(rng, total, n_sensors)):
                if amount == 0:
                    continue
                n_ev = 1 + int(rng.integers(0, 2)) if amount > 1 else 1
                for part in _split(rng, amount, n_ev):
                    if part == 0:
                        continue
                    local = start + dt.timedelta(minutes=int(rng.integers(0, 720)))
                    if rng.random() < spec.naive_fraction:
                        stamp = local.isoformat(timespec="seconds")
                    else:
                        stamp = local.replace(tzinfo=info["tz"]).isoformat(timespec="seconds")
                    sensor = f"{fid}-{'D' if kind == 'door' else 'H'}{s + 1}"
                    events.append([fid, sensor, kind, stamp, part])

    weather_rows = []
    for (g, when), (temp, humid) in sorted(weather.items()):
        if (g, when) in gap_keys:
            continue
        lat, lon = g.center
        weather_rows.append([_fmt(lat, 2), _fmt(lon, 2), when.isoformat(timespec="seconds"), _fmt(temp, 3), _fmt(humid, 3)])
    flu_rows = [
        [name, _fmt(cities[name][0], 4), _fmt(cities[name][1], 4), wk[0], wk[1], deaths, total]
        for (name, wk), (deaths, total) in sorted(flu.items())
    ]
    return Corpus(events, fac_rows, centroid_rows, weather_rows, flu_rows, truth)
