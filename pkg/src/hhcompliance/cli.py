"""Hand-hygiene compliance analysis from door and dispenser sensor logs.

Each subcommand runs one stage against the artifact directory given by
``--out``; ``run`` executes all of them in order.
"""

import argparse
import logging
import os
import sys

from . import pipeline, synth
from .exceptions import PipelineError

STAGE_COMMANDS = {
    "ingest": (pipeline.stage_ingest, ("events", "facilities")),
    "features": (pipeline.stage_features, ("facilities", "centroids", "weather", "flu")),
    "fit": (pipeline.stage_fit, ()),
    "rank": (pipeline.stage_rank, ()),
    "margins": (pipeline.stage_margins, ()),
    "ttest": (pipeline.stage_ttest, ()),
    "report": (pipeline.stage_report, ()),
}


def _use_color(stream):
    return "NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()


def _say(msg, ok=True, stream=None):
    stream = stream or (sys.stdout if ok else sys.stderr)
    if _use_color(stream):
        code = "32" if ok else "31"
        msg = f"\x1b[{code}m{msg}\x1b[0m"
    print(msg, file=stream)


def _add_run_flags(p):
    p.add_argument("--config", help="flat key = value file; flags override its entries")
    for key in pipeline.INPUT_KEYS:
        p.add_argument(f"--{key}", help=f"{key} CSV")
    p.add_argument("--lambda", dest="lambda", type=float, help="ridge penalty (default 1.0)")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 10)")
    p.add_argument("--seed", type=int, help="seed for fold assignment and sampling (default 0)")
    p.add_argument("--facility", help="fit a single-facility model for this facility id")
    p.add_argument("--relief-k", dest="relief_k", type=int, help="RReliefF neighbours (default 10)")
    p.add_argument("--relief-m", dest="relief_m", type=int, help="RReliefF seed instances (default: all)")
    p.add_argument("--relief-sigma", dest="relief_sigma", type=float, help="RReliefF rank decay (default 20)")
    p.add_argument("--jobs", type=int, help="parallel folds; results do not depend on it")
    p.add_argument("--out", help="artifact directory (default ./out)")


def build_parser():
    parser = argparse.ArgumentParser(prog="hhcompliance", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus with planted effects")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=["study", "recovery", "small"], default="study")

    for name in list(STAGE_COMMANDS) + ["run"]:
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "run" else "run every stage")
        _add_run_flags(p)
    return parser


def _synth(args):
    if args.preset == "study":
        spec = synth.study_scale_spec(args.seed)
    elif args.preset == "recovery":
        spec = synth.recovery_spec(args.seed)
    else:
        spec = synth.SynthSpec(facility_count=4, days=60, violations={"low_door": 5, "over_one": 3}, seed=args.seed)
    paths = synth.generate(spec).write(args.out)
    _say(f"wrote synthetic corpus to {args.out} ({', '.join(sorted(paths))})")
    return 0


def _config(args):
    keys = ["events", "facilities", "centroids", "weather", "flu", "lambda", "folds", "seed", "facility"]
    keys += ["relief_k", "relief_m", "relief_sigma", "jobs", "out"]
    overrides = {k: getattr(args, k) for k in keys}
    return pipeline.load_config(args.config, overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "synth":
            return _synth(args)
        cfg = _config(args)
        if args.command == "run":
            report = pipeline.run_pipeline(cfg)
            fit = report["fit"]
            _say(
                f"report written to {cfg.path('report')}: kept {report['ingest']['kept']} shifts, "
                f"CV correlation {fit['cv_correlation']:.4f}, RMSE {fit['cv_rmse']:.4f}"
            )
            return 0
        stage, required = STAGE_COMMANDS[args.command]
        cfg.validate(required)
        os.makedirs(cfg.out, exist_ok=True)
        stage(cfg)
        _say(f"{args.command}: artifacts in {cfg.out}")
        return 0
    except PipelineError as exc:
        where = getattr(exc, "stage", args.command)
        _say(f"error [{where}]: {exc}", ok=False)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
