"""Sensor-event ingestion: shift binning, compliance, and record filters."""

import csv
import datetime as dt
import re
from dataclasses import dataclass, field
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from .exceptions import ConfigError, InferenceError, InputError

SENSOR_KINDS = ("door", "dispenser")
DROP_REASONS = ("low_door", "low_dispenser", "zero_compliance", "over_one")
MIN_EVENTS = 10

EVENT_FIELDS = ["facility_id", "sensor_id", "sensor_kind", "timestamp", "count"]
FACILITY_FIELDS = ["facility_id", "state", "cdc_division", "zipcode", "timezone"]
SHIFT_FIELDS = [
    "facility_id",
    "shift_date",
    "night_shift",
    "door_count",
    "dispenser_count",
    "compliance",
]

_ZIP_RE = re.compile(r"^[0-9]{5}$")


@dataclass(frozen=True)
class EventRecord:
    facility_id: str
    sensor_id: str
    sensor_kind: str
    timestamp: dt.datetime
    count: int

    def __post_init__(self):
        if self.sensor_kind not in SENSOR_KINDS:
            raise InputError(f"sensor_kind must be one of {SENSOR_KINDS}, got {self.sensor_kind!r}")
        if self.count < 0:
            raise InputError(f"count must be non-negative, got {self.count}")


@dataclass(frozen=True)
class FacilityMeta:
    facility_id: str
    state: str
    cdc_division: str
    zipcode: str
    timezone: str = "UTC"

    def __post_init__(self):
        if not _ZIP_RE.match(self.zipcode):
            raise InputError(f"zipcode must be 5 digits, got {self.zipcode!r}")

    @property
    def tzinfo(self):
        try:
            return ZoneInfo(self.timezone)
        except (ZoneInfoNotFoundError, ValueError) as exc:
            raise InputError(
                f"facility {self.facility_id}: unknown timezone {self.timezone!r}"
            ) from exc


@dataclass(frozen=True, order=True)
class ShiftRecord:
    facility_id: str
    shift_date: dt.date
    night_shift: int
    door_count: int = field(compare=False)
    dispenser_count: int = field(compare=False)
    compliance: float | None = field(compare=False, default=None)

    @property
    def key(self):
        return (self.facility_id, self.shift_date, self.night_shift)


def classify_shift(timestamp):
    """Map a facility-local timestamp to ``(shift_date, night_shift)``.

    Day shifts run 07:00-18:59 and night shifts 19:00-06:59. A night shift
    is owned by the calendar day on which it starts, so events between
    00:00 and 06:59 belong to the previous date.
    """
    if isinstance(timestamp, str):
        timestamp = parse_timestamp(timestamp)
    hour = timestamp.hour
    if 7 <= hour < 19:
        return timestamp.date(), 0
    if hour < 7:
        return timestamp.date() - dt.timedelta(days=1), 1
    return timestamp.date(), 1


def parse_timestamp(text, line=None, path=None):
    try:
        return dt.datetime.fromisoformat(text.strip())
    except (ValueError, AttributeError) as exc:
        raise InputError(f"unparseable timestamp {text!r}", path=path, line=line) from exc


def to_local(timestamp, tz):
    """Wall-clock time at the facility; naive timestamps are already local."""
    if timestamp.tzinfo is None:
        return timestamp
    return timestamp.astimezone(tz).replace(tzinfo=None)


def compliance_rate(dispenser_count, door_count):
    if door_count <= 0:
        raise InferenceError("compliance rate is undefined when door_count is 0")
    return dispenser_count / door_count


def aggregate_shifts(events, facilities=None):
    """Sum door and dispenser counts per ``(facility, shift_date, night_shift)``.

    Parameters
    ----------
    events : iterable of EventRecord
    facilities : mapping of facility_id to FacilityMeta, optional
        Used to convert offset-aware timestamps to facility-local time.
        Without it, offset-aware timestamps are read at their own offset.

    Returns
    -------
    list of ShiftRecord sorted by key.
    """
    totals = {}
    for ev in events:
        ts = ev.timestamp
        if facilities is not None:
            meta = facilities.get(ev.facility_id)
            if meta is None:
                raise InputError(f"event references unknown facility {ev.facility_id!r}")
            ts = to_local(ts, meta.tzinfo)
        elif ts.tzinfo is not None:
            ts = ts.replace(tzinfo=None)
        shift_date, night = classify_shift(ts)
        key = (ev.facility_id, shift_date, night)
        door, disp = totals.get(key, (0, 0))
        if ev.sensor_kind == "door":
            door += ev.count
        else:
            disp += ev.count
        totals[key] = (door, disp)

    out = []
    for key in sorted(totals):
        door, disp = totals[key]
        rate = compliance_rate(disp, door) if door > 0 else None
        out.append(ShiftRecord(*key, door_count=door, dispenser_count=disp, compliance=rate))
    return out


def drop_reason(record):
    """First failing filter rule in fixed precedence, or None if the record is kept."""
    if record.door_count < MIN_EVENTS:
        return "low_door"
    if record.dispenser_count < MIN_EVENTS:
        return "low_dispenser"
    if not record.compliance:
        return "zero_compliance"
    if record.compliance > 1:
        return "over_one"
    return None


def filter_shifts(records):
    """Split records into ``(kept, dropped)``; dropped is a list of (record, reason)."""
    kept, dropped = [], []
    for rec in records:
        reason = drop_reason(rec)
        if reason is None:
            kept.append(rec)
        else:
            dropped.append((rec, reason))
    return kept, dropped


def drop_histogram(dropped):
    hist = dict.fromkeys(DROP_REASONS, 0)
    for _, reason in dropped:
        hist[reason] += 1
    return hist


# -- CSV I/O ----------------------------------------------------------------


def _check_header(reader, expected, path):
    header = reader.fieldnames or []
    missing = [c for c in expected if c not in header]
    if missing:
        raise InputError(f"missing columns {missing}", path=path, line=1)


def read_facilities(path):
    """Read the facility catalog into a dict keyed by facility_id."""
    catalog = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader, FACILITY_FIELDS[:4], path)
        for line, row in enumerate(reader, start=2):
            fid = row["facility_id"].strip()
            if fid in catalog:
                raise InputError(f"duplicate facility_id {fid!r}", path=path, line=line)
            try:
                meta = FacilityMeta(
                    facility_id=fid,
                    state=row["state"].strip(),
                    cdc_division=row["cdc_division"].strip(),
                    zipcode=row["zipcode"].strip(),
                    timezone=(row.get("timezone") or "UTC").strip(),
                )
                meta.tzinfo
            except InputError as exc:
                raise InputError(str(exc), path=path, line=line) from None
            catalog[fid] = meta
    return catalog


def read_events(path, facilities=None):
    """Parse an events CSV, validating every row.

    Unknown facility ids are rejected when ``facilities`` is given.
    """
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader, EVENT_FIELDS, path)
        for line, row in enumerate(reader, start=2):
            fid = row["facility_id"].strip()
            if facilities is not None and fid not in facilities:
                raise InputError(f"unknown facility {fid!r}", path=path, line=line)
            ts = parse_timestamp(row["timestamp"], line=line, path=path)
            try:
                count = int(row["count"])
                ev = EventRecord(fid, row["sensor_id"].strip(), row["sensor_kind"].strip(), ts, count)
            except (ValueError, TypeError) as exc:
                raise InputError(str(exc), path=path, line=line) from None
            events.append(ev)
    return events


def _format_rate(value):
    return "" if value is None else repr(float(value))


def write_shifts(path, records, reasons=None):
    fields = SHIFT_FIELDS + (["drop_reason"] if reasons is not None else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for i, rec in enumerate(records):
            row = [
                rec.facility_id,
                rec.shift_date.isoformat(),
                rec.night_shift,
                rec.door_count,
                rec.dispenser_count,
                _format_rate(rec.compliance),
            ]
            if reasons is not None:
                row.append(reasons[i])
            writer.writerow(row)


def read_shifts(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader, SHIFT_FIELDS, path)
        for line, row in enumerate(reader, start=2):
            try:
                rate = row["compliance"]
                records.append(
                    ShiftRecord(
                        facility_id=row["facility_id"],
                        shift_date=dt.date.fromisoformat(row["shift_date"]),
                        night_shift=int(row["night_shift"]),
                        door_count=int(row["door_count"]),
                        dispenser_count=int(row["dispenser_count"]),
                        compliance=float(rate) if rate else None,
                    )
                )
            except ValueError as exc:
                raise InputError(str(exc), path=path, line=line) from None
    return records


def ingest(events_path, facilities_path):
    """Read both CSVs and return ``(facilities, kept, dropped)``."""
    facilities = read_facilities(facilities_path)
    if not facilities:
        raise ConfigError(f"{facilities_path}: facility catalog is empty")
    events = read_events(events_path, facilities)
    shifts = aggregate_shifts(events, facilities)
    kept, dropped = filter_shifts(shifts)
    return facilities, kept, dropped
