"""Facility geolocation and covariate joins (weather grid, flu severity)."""

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, InferenceError, InputError, JoinError, LookupFailure

logger = logging.getLogger(__name__)

GRID_STEP = 2.5
N_LAT = 73
N_LON = 144
DAY_OBS_HOUR = 6
NIGHT_OBS_HOUR = 18

CENTROID_FIELDS = ["zipcode", "latitude", "longitude"]
WEATHER_FIELDS = ["latitude", "longitude", "timestamp_utc", "air_temp_k", "rel_humidity_pct"]
FLU_FIELDS = ["city", "latitude", "longitude", "mmwr_year", "mmwr_week", "flu_deaths", "total_deaths"]


@dataclass(frozen=True, order=True)
class GridElement:
    lat_index: int
    lon_index: int

    def __post_init__(self):
        if not (0 <= self.lat_index < N_LAT and 0 <= self.lon_index < N_LON):
            raise InputError(f"grid index out of range: {self.lat_index}, {self.lon_index}")

    @property
    def center(self):
        """(latitude, longitude) of the cell's reference point."""
        return 90.0 - GRID_STEP * self.lat_index, GRID_STEP * self.lon_index


@dataclass(frozen=True)
class WeatherObservation:
    grid: GridElement
    timestamp: dt.datetime
    air_temp: float
    rel_humidity: float

    def __post_init__(self):
        if not 0.0 <= self.rel_humidity <= 100.0:
            raise InputError(f"relative humidity outside [0, 100]: {self.rel_humidity}")
        if not self.air_temp > 0.0:
            raise InputError(f"air temperature must be positive kelvin: {self.air_temp}")


@dataclass(frozen=True)
class FluReport:
    city_name: str
    city_location: tuple
    mmwr_week: tuple
    flu_deaths: int
    total_deaths: int

    def __post_init__(self):
        year, week = self.mmwr_week
        if not 1 <= week <= mmwr_weeks_in_year(year):
            raise InputError(f"MMWR week {week} invalid for {year}")
        if self.flu_deaths < 0 or self.flu_deaths > self.total_deaths:
            raise InputError(
                f"{self.city_name}: flu_deaths={self.flu_deaths} must lie in [0, total_deaths={self.total_deaths}]"
            )


def zip_to_centroid(zipcode, centroid_table, facility_id=None):
    try:
        return centroid_table[zipcode]
    except KeyError:
        who = f"facility {facility_id}: " if facility_id is not None else ""
        raise LookupFailure(f"{who}unknown zipcode {zipcode!r}") from None


def latlon_to_grid(latitude, longitude):
    """Grid element of a coordinate on the 144 x 73 global 2.5 degree grid.

    Latitude rows are centred on 90, 87.5, ..., -90 (nearest row wins);
    longitude columns span ``[2.5 j, 2.5 (j + 1))`` degrees east.
    """
    if not (-90.0 <= latitude <= 90.0) or not (-180.0 <= longitude < 360.0):
        raise InputError(f"coordinates out of range: ({latitude}, {longitude})")
    lat_index = math.floor((90.0 - latitude) / GRID_STEP + 0.5)
    lat_index = min(max(lat_index, 0), N_LAT - 1)
    lon_index = math.floor((longitude % 360.0) / GRID_STEP) % N_LON
    return GridElement(lat_index, lon_index)


def nearest_reporting_city(facility_loc, cities):
    """Name of the city closest to ``facility_loc`` in raw (lat, lon) space.

    ``cities`` maps city name to (lat, lon). Ties go to the
    lexicographically smallest name.
    """
    if not cities:
        raise ConfigError("no reporting cities available")
    names = sorted(cities)
    coords = np.array([cities[n] for n in names], dtype=float)
    dist = np.hypot(coords[:, 0] - facility_loc[0], coords[:, 1] - facility_loc[1])
    # argmin returns the first minimum, i.e. the smallest name
    return names[int(np.argmin(dist))]


def city_distance(facility_loc, city_loc):
    return math.hypot(facility_loc[0] - city_loc[0], facility_loc[1] - city_loc[1])


def flu_severity(report):
    if report.total_deaths <= 0:
        raise InferenceError(f"{report.city_name}: severity undefined with total_deaths=0")
    return report.flu_deaths / report.total_deaths


# -- MMWR weeks -------------------------------------------------------------


def _mmwr_week1_start(year):
    # Week 1 is the first Sunday-start week with at least four days in the year.
    jan1 = dt.date(year, 1, 1)
    days_since_sunday = (jan1.weekday() + 1) % 7
    start = jan1 - dt.timedelta(days=days_since_sunday)
    if days_since_sunday > 3:
        start += dt.timedelta(days=7)
    return start


def mmwr_week(date):
    """``(mmwr_year, mmwr_week)`` of a calendar date."""
    year = date.year
    start = _mmwr_week1_start(year + 1)
    if date >= start:
        year += 1
    else:
        start = _mmwr_week1_start(year)
        if date < start:
            year -= 1
            start = _mmwr_week1_start(year)
    return year, (date - start).days // 7 + 1


def mmwr_weeks_in_year(year):
    return (_mmwr_week1_start(year + 1) - _mmwr_week1_start(year)).days // 7


def mmwr_week_start(year, week):
    return _mmwr_week1_start(year) + dt.timedelta(weeks=week - 1)


# -- Joins ------------------------------------------------------------------


def observation_time(shift_date, night_shift):
    hour = NIGHT_OBS_HOUR if night_shift else DAY_OBS_HOUR
    return dt.datetime(shift_date.year, shift_date.month, shift_date.day, hour)


def join_weather(shift, grid, observations):
    """``(air_temp, rel_humidity)`` for one shift.

    ``observations`` maps ``(GridElement, naive UTC datetime)`` to a
    WeatherObservation. Day shifts read the 06:00 UTC observation of their
    date and night shifts the 18:00 UTC one.
    """
    when = observation_time(shift.shift_date, shift.night_shift)
    obs = observations.get((grid, when))
    if obs is None:
        raise JoinError(
            f"no weather observation for grid {grid.lat_index},{grid.lon_index} at {when.isoformat()}",
            missing=[(grid, when)],
        )
    return obs.air_temp, obs.rel_humidity


def join_severity(shift, city, reports):
    """Flu severity of ``city`` during the MMWR week containing the shift date."""
    week = mmwr_week(shift.shift_date)
    report = reports.get((city, week))
    if report is None:
        raise JoinError(f"no flu report for {city} in MMWR week {week[0]}-{week[1]:02d}", missing=[(city, week)])
    return flu_severity(report)


@dataclass
class FacilityLocation:
    facility_id: str
    latitude: float
    longitude: float
    grid: GridElement
    city: str
    city_distance: float


def locate_facilities(facilities, centroids, city_locations):
    """Resolve every facility to its grid element and reporting city."""
    out = {}
    for fid in sorted(facilities):
        lat, lon = zip_to_centroid(facilities[fid].zipcode, centroids, facility_id=fid)
        city = nearest_reporting_city((lat, lon), city_locations)
        out[fid] = FacilityLocation(
            fid, lat, lon, latlon_to_grid(lat, lon), city, city_distance((lat, lon), city_locations[city])
        )
    return out


@dataclass
class JoinedShift:
    """A kept shift with its weather and flu covariates attached."""

    shift: object
    air_temp: float
    rel_humidity: float
    flu_severity: float

    @property
    def facility_id(self):
        return self.shift.facility_id

    @property
    def shift_date(self):
        return self.shift.shift_date

    @property
    def night_shift(self):
        return self.shift.night_shift

    @property
    def compliance(self):
        return self.shift.compliance


def join_covariates(shifts, locations, observations, reports):
    """Attach covariates to each shift.

    Shifts with a missing observation are excluded and logged, never imputed.
    Returns ``(joined, excluded)`` where ``excluded`` holds (shift, message).
    """
    joined, excluded = [], []
    for shift in shifts:
        loc = locations[shift.facility_id]
        try:
            temp, humid = join_weather(shift, loc.grid, observations)
            sev = join_severity(shift, loc.city, reports)
        except JoinError as exc:
            logger.warning("excluding %s %s night=%d: %s", shift.facility_id, shift.shift_date, shift.night_shift, exc)
            excluded.append((shift, str(exc)))
            continue
        joined.append(JoinedShift(shift, temp, humid, sev))
    return joined, excluded


# -- CSV readers ------------------------------------------------------------


def _rows(path, expected):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in expected if c not in header]
        if missing:
            raise InputError(f"missing columns {missing}", path=path, line=1)
        yield from enumerate(reader, start=2)


def read_centroids(path):
    table = {}
    for line, row in _rows(path, CENTROID_FIELDS):
        try:
            zipcode = row["zipcode"].strip()
            table[zipcode] = (float(row["latitude"]), float(row["longitude"]))
        except ValueError as exc:
            raise InputError(str(exc), path=path, line=line) from None
    return table


def read_weather(path):
    """Weather observations keyed by ``(GridElement, naive UTC datetime)``."""
    table = {}
    for line, row in _rows(path, WEATHER_FIELDS):
        try:
            grid = latlon_to_grid(float(row["latitude"]), float(row["longitude"]))
            ts = dt.datetime.fromisoformat(row["timestamp_utc"].strip())
            if ts.tzinfo is not None:
                ts = ts.astimezone(dt.timezone.utc).replace(tzinfo=None)
            obs = WeatherObservation(grid, ts, float(row["air_temp_k"]), float(row["rel_humidity_pct"]))
        except (ValueError, InputError) as exc:
            raise InputError(str(exc), path=path, line=line) from None
        table[(grid, ts)] = obs
    return table


def read_flu(path):
    """Return ``(reports keyed by (city, (year, week)), city locations)``."""
    reports, cities = {}, {}
    for line, row in _rows(path, FLU_FIELDS):
        try:
            city = row["city"].strip()
            loc = (float(row["latitude"]), float(row["longitude"]))
            rep = FluReport(
                city,
                loc,
                (int(row["mmwr_year"]), int(row["mmwr_week"])),
                int(row["flu_deaths"]),
                int(row["total_deaths"]),
            )
        except (ValueError, InputError) as exc:
            raise InputError(str(exc), path=path, line=line) from None
        if cities.setdefault(city, loc) != loc:
            raise InputError(f"city {city!r} listed at two locations", path=path, line=line)
        reports[(city, rep.mmwr_week)] = rep
    return reports, cities
