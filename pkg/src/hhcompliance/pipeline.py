"""Stage runners: each stage reads and writes declared artifacts in the output directory."""

import configparser
import csv
import datetime as dt
import json
import logging
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import analyze, featurize, geo, ingest, model, relieff
from .exceptions import ConfigError, InputError, PipelineError

logger = logging.getLogger(__name__)

INPUT_KEYS = ("events", "facilities", "centroids", "weather", "flu")
JOINED_FIELDS = ingest.SHIFT_FIELDS + ["air_temp", "rel_humidity", "flu_severity"]
SUMMARY_FIELDS = ["facility", "state", "cdc_division", "tot_disp", "tot_door", "days_rep"]

ARTIFACTS = {
    "kept": "shifts_kept.csv",
    "dropped": "shifts_dropped.csv",
    "summary": "facility_summary.csv",
    "ingest": "ingest_summary.json",
    "joined": "joined.csv",
    "design": "design.csv",
    "design_meta": "design_meta.json",
    "fit": "hypothesis.json",
    "ranking": "ranking.csv",
    "margins": "margins",
    "ttest": "ttest.csv",
    "report": "report.json",
}
# artifact -> stage that writes it
PRODUCER = {
    "kept": "ingest",
    "dropped": "ingest",
    "summary": "ingest",
    "ingest": "ingest",
    "joined": "features",
    "design": "features",
    "design_meta": "features",
    "fit": "fit",
    "ranking": "rank",
    "margins": "margins",
    "ttest": "ttest",
    "report": "report",
}


def _missing(cfg, filename):
    """InputError naming the stage that produces ``filename``, if it is an artifact."""
    rel = os.path.relpath(os.path.abspath(filename), os.path.abspath(cfg.out))
    top = rel.split(os.sep)[0]
    for key, name in ARTIFACTS.items():
        if name == top:
            return InputError(f"artifact missing; run the {PRODUCER[key]} stage first", path=filename)
    return None


@dataclass
class RunConfig:
    events: str | None = None
    facilities: str | None = None
    centroids: str | None = None
    weather: str | None = None
    flu: str | None = None
    ridge_lambda: float = model.DEFAULT_LAMBDA
    folds: int = 10
    relief_k: int = 10
    relief_m: int | None = None
    relief_sigma: float = 20.0
    facility: str | None = None
    seed: int = 0
    out: str = "out"
    jobs: int = 1

    # flag / config-file key -> attribute
    ALIASES = {"lambda": "ridge_lambda"}

    @property
    def mode(self):
        return "global" if self.facility is None else "single_facility"

    def validate(self, required=INPUT_KEYS):
        if self.folds < 2:
            raise ConfigError(f"folds must be at least 2, got {self.folds}")
        if self.ridge_lambda < 0:
            raise ConfigError(f"lambda must be non-negative, got {self.ridge_lambda}")
        relieff.ReliefConfig(self.relief_k, self.relief_m, self.relief_sigma, self.seed)
        for key in required:
            path = getattr(self, key)
            if path is None:
                raise ConfigError(f"--{key} is required")
            if not os.path.exists(path):
                raise ConfigError(f"--{key}: no such file {path}")
        return self

    def echo(self):
        """Settings that determine results; parallelism and output location excluded."""
        doc = {("lambda" if k == "ridge_lambda" else k): v for k, v in asdict(self).items() if k not in ("jobs", "out")}
        doc["mode"] = self.mode
        return doc

    def path(self, artifact):
        return os.path.join(self.out, ARTIFACTS[artifact])

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}


def _coerce(name, value):
    kind = RunConfig.field_types()[name]
    if value is None or value == "":
        return None
    try:
        if kind in (int, int | None):
            return int(value)
        if kind is float:
            return float(value)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {value!r}") from None
    return str(value)


def load_config(path=None, overrides=None):
    """Merge a flat ``key = value`` file with command-line overrides."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_string("[run]\n" + fh.read(), source=path)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        values.update(parser["run"])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = RunConfig.field_types()
    kwargs = {}
    for key, value in values.items():
        name = RunConfig.ALIASES.get(key, key).replace("-", "_")
        if name not in known:
            raise ConfigError(f"unknown configuration key {key!r}")
        kwargs[name] = _coerce(name, value)
    return RunConfig(**{k: v for k, v in kwargs.items() if v is not None})


# -- table helpers ------------------------------------------------------------


def summarize_facilities(shifts, facilities=None):
    """Per-facility event totals and reporting days, plus a totals row.

    Reporting days count distinct shift dates with at least one shift.
    The totals row counts distinct states and CDC divisions.
    """
    agg = {}
    for s in shifts:
        row = agg.setdefault(s.facility_id, {"disp": 0, "door": 0, "dates": set()})
        row["disp"] += s.dispenser_count
        row["door"] += s.door_count
        row["dates"].add(s.shift_date)
    rows = []
    for fid in sorted(agg, key=_facility_sort_key):
        meta = facilities.get(fid) if facilities else None
        rows.append(
            {
                "facility": fid,
                "state": meta.state if meta else "",
                "cdc_division": meta.cdc_division if meta else "",
                "tot_disp": agg[fid]["disp"],
                "tot_door": agg[fid]["door"],
                "days_rep": len(agg[fid]["dates"]),
            }
        )
    total = {
        "facility": "Total",
        "state": len({r["state"] for r in rows if r["state"]}),
        "cdc_division": len({r["cdc_division"] for r in rows if r["cdc_division"]}),
        "tot_disp": sum(r["tot_disp"] for r in rows),
        "tot_door": sum(r["tot_door"] for r in rows),
        "days_rep": sum(r["days_rep"] for r in rows),
    }
    return rows, total


def _facility_sort_key(fid):
    return (0, int(fid), fid) if fid.isdigit() else (1, 0, fid)


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_joined(path, joined):
    rows = []
    for j in joined:
        s = j.shift
        rows.append(
            [
                s.facility_id,
                s.shift_date.isoformat(),
                s.night_shift,
                s.door_count,
                s.dispenser_count,
                repr(float(s.compliance)),
                repr(float(j.air_temp)),
                repr(float(j.rel_humidity)),
                repr(float(j.flu_severity)),
            ]
        )
    _write_rows(path, JOINED_FIELDS, rows)


def read_joined(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.DictReader(fh), start=2):
            try:
                shift = ingest.ShiftRecord(
                    row["facility_id"],
                    dt.date.fromisoformat(row["shift_date"]),
                    int(row["night_shift"]),
                    int(row["door_count"]),
                    int(row["dispenser_count"]),
                    float(row["compliance"]),
                )
                out.append(
                    geo.JoinedShift(shift, float(row["air_temp"]), float(row["rel_humidity"]), float(row["flu_severity"]))
                )
            except (KeyError, ValueError) as exc:
                raise InputError(str(exc), path=path, line=line) from None
    return out


# -- stages -----------------------------------------------------------------


def _stage(name):
    def wrap(fn):
        def run(cfg, *args, **kwargs):
            try:
                return fn(cfg, *args, **kwargs)
            except PipelineError as exc:
                if not hasattr(exc, "stage"):
                    exc.stage = name
                raise
            except OSError as exc:
                filename = getattr(exc, "filename", None)
                err = None
                if isinstance(exc, FileNotFoundError) and filename:
                    err = _missing(cfg, filename)
                err = err or InputError(f"{exc.strerror or exc}", path=filename)
                err.stage = name
                raise err from exc

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.stage = name
        return run

    return wrap


@_stage("ingest")
def stage_ingest(cfg):
    facilities, kept, dropped = ingest.ingest(cfg.events, cfg.facilities)
    os.makedirs(cfg.out, exist_ok=True)
    ingest.write_shifts(cfg.path("kept"), kept)
    ingest.write_shifts(cfg.path("dropped"), [r for r, _ in dropped], [why for _, why in dropped])
    rows, total = summarize_facilities(kept, facilities)
    _write_rows(cfg.path("summary"), SUMMARY_FIELDS, [[r[k] for k in SUMMARY_FIELDS] for r in rows + [total]])
    summary = {
        "records": len(kept) + len(dropped),
        "kept": len(kept),
        "dropped": len(dropped),
        "drop_reasons": ingest.drop_histogram(dropped),
        "door_events": sum(r.door_count for r in kept) + sum(r.door_count for r, _ in dropped),
    }
    _write_json(cfg.path("ingest"), summary)
    return summary


@_stage("features")
def stage_features(cfg):
    facilities = ingest.read_facilities(cfg.facilities)
    kept = ingest.read_shifts(cfg.path("kept"))
    centroids = geo.read_centroids(cfg.centroids)
    observations = geo.read_weather(cfg.weather)
    reports, cities = geo.read_flu(cfg.flu)
    locations = geo.locate_facilities(facilities, centroids, cities)
    if cfg.facility is not None:
        if cfg.facility not in facilities:
            raise ConfigError(f"--facility {cfg.facility} is not in the facility catalog")
        kept = [s for s in kept if s.facility_id == cfg.facility]
    joined, excluded = geo.join_covariates(kept, locations, observations, reports)
    if not joined:
        raise InputError("no shifts survived the covariate joins")
    design = featurize.assemble(joined, cfg.mode, cfg.facility)
    write_joined(cfg.path("joined"), joined)
    featurize.write_design(cfg.path("design"), design)
    meta = {
        "mode": design.mode,
        "rows": int(design.X.shape[0]),
        "excluded": [
            {"facility": s.facility_id, "shift_date": s.shift_date.isoformat(), "night_shift": s.night_shift, "reason": why}
            for s, why in excluded
        ],
        "standardization": {
            name: {"mean": float(m), "scale": float(sc)}
            for name, m, sc in zip(design.feature_names, design.column_means, design.column_scales)
            if name in featurize.CONTINUOUS
        },
        "locations": {
            fid: {
                "latitude": loc.latitude,
                "longitude": loc.longitude,
                "grid": [loc.grid.lat_index, loc.grid.lon_index],
                "city": loc.city,
                "city_distance": loc.city_distance,
            }
            for fid, loc in locations.items()
        },
    }
    _write_json(cfg.path("design_meta"), meta)
    return design


@_stage("fit")
def stage_fit(cfg):
    design = featurize.read_design(cfg.path("design"))
    if design.X.shape[0] < cfg.folds:
        raise ConfigError(f"{design.X.shape[0]} rows cannot be split into {cfg.folds} folds")
    report = model.cross_validate(
        design.X, design.y, cfg.ridge_lambda, cfg.folds, cfg.seed, design.feature_names, n_jobs=cfg.jobs
    )
    _write_json(cfg.path("fit"), report.to_dict())
    return report


@_stage("rank")
def stage_rank(cfg):
    joined = read_joined(cfg.path("joined"))
    X, y, names, discrete = featurize.relief_encoding(joined)
    if cfg.facility is not None:
        X, names, discrete = X[:, 1:], names[1:], discrete[1:]
    config = relieff.ReliefConfig(cfg.relief_k, cfg.relief_m, cfg.relief_sigma, cfg.seed)
    weights = relieff.cross_validated_weights(X, y, config, cfg.folds, discrete, n_jobs=cfg.jobs)
    ranking = relieff.rank_features(weights, names)
    relieff.write_ranking(cfg.path("ranking"), ranking)
    return ranking


@_stage("margins")
def stage_margins(cfg):
    design = featurize.read_design(cfg.path("design"))
    hyp = model.Hypothesis.from_dict(_read_json(cfg.path("fit"))["hypothesis"])
    folder = cfg.path("margins")
    os.makedirs(folder, exist_ok=True)
    curves = []
    for name in hyp.feature_names:
        curve = analyze.marginal_effect(hyp, design.X, design.feature_names, name)
        analyze.write_curve(os.path.join(folder, f"{name}.csv"), curve)
        curves.append(curve)
    return curves


@_stage("ttest")
def stage_ttest(cfg):
    joined = read_joined(cfg.path("joined"))
    facilities = ingest.read_facilities(cfg.facilities) if cfg.facilities else None
    results, skipped = analyze.facility_ttests(joined, facilities)
    for fid in skipped:
        logger.warning("facility %s: fewer than 20 shifts, t-test skipped", fid)
    analyze.write_ttests(cfg.path("ttest"), results, facilities)
    return results


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@_stage("report")
def stage_report(cfg):
    """Collect every stage artifact into one JSON document."""
    fit = _read_json(cfg.path("fit"))
    design = featurize.read_design(cfg.path("design"))
    hyp = model.Hypothesis.from_dict(fit["hypothesis"])
    margins = []
    for name in hyp.feature_names:
        rows = _read_csv(os.path.join(cfg.path("margins"), f"{name}.csv"))
        values = np.array([float(r["value"]) for r in rows])
        rates = np.array([float(r["predicted_rate"]) for r in rows])
        curve = analyze.MarginalCurve(name, values, rates)
        margins.append(
            {
                "feature": name,
                "points": len(rows),
                "binary": rows[0]["density"] == "",
                "slope": curve.slope() if len(rows) > 1 else None,
                "coefficient": hyp.coefficient(name),
                "file": os.path.join(ARTIFACTS["margins"], f"{name}.csv"),
            }
        )

    def numeric(row, text=("facility", "feature", "state", "cdc_division")):
        out = {}
        for k, v in row.items():
            if k in text:
                out[k] = v
                continue
            try:
                out[k] = int(v)
            except ValueError:
                try:
                    out[k] = float(v)
                except ValueError:
                    out[k] = v
        return out

    report = {
        "config": cfg.echo(),
        "ingest": _read_json(cfg.path("ingest")),
        "facility_summary": [numeric(r) for r in _read_csv(cfg.path("summary"))],
        "features": {
            "rows": int(design.X.shape[0]),
            "columns": design.feature_names,
            "excluded_shifts": len(_read_json(cfg.path("design_meta"))["excluded"]),
        },
        "fit": fit,
        "ranking": [numeric(r) for r in _read_csv(cfg.path("ranking"))],
        "margins": margins,
        "ttests": [numeric(r) for r in _read_csv(cfg.path("ttest"))],
    }
    _write_json(cfg.path("report"), report)
    return report


STAGES = (stage_ingest, stage_features, stage_fit, stage_rank, stage_margins, stage_ttest, stage_report)


def run_pipeline(cfg):
    """Run every stage in order and return the report document."""
    cfg.validate()
    os.makedirs(cfg.out, exist_ok=True)
    result = None
    for stage in STAGES:
        logger.info("stage %s", stage.stage)
        result = stage(cfg)
    return result
