"""Command-line entry point.

Data goes only to the declared output paths (or stdout when a subcommand has
no ``--out``); progress and diagnostics go to stderr.

Exit codes: 0 ok, 2 usage or missing input, 3 parse error, 4 configuration
incompatibility.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from trua.anomaly_rrcf import DetectorConfig, bin_failures, detect, filter_dataset
from trua.reliability import build_lifetime_dist
from trua.replay_sim import ConfigError, SimConfig, run_simulation
from trua.trace_model import (
    Expectation,
    SyntheticTraceSpec,
    TraceError,
    classify_expected,
    generate_synthetic,
    parse_trace,
    serialize_trace,
)
from trua.valley_builder import (
    ValleyTableError,
    compute_failure_curves,
    curves_from_csv,
    curves_to_csv,
    determine_valleys,
    parse_table,
    serialize_table,
)

log = logging.getLogger("trua")

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_CONFIG = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"input file not found: {path}", EXIT_USAGE)
    return p


def _load_json(path: str):
    try:
        return json.loads(_existing(path).read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON: {exc}", EXIT_PARSE) from None


def _load_trace(path: str):
    try:
        return parse_trace(_existing(path))
    except TraceError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).write_text(text)
    log.info("wrote %s", path)


def _parse_range(text: str) -> list[int]:
    lo, sep, hi = text.partition("-")
    try:
        if not sep:
            return [int(lo)]
        return list(range(int(lo), int(hi) + 1))
    except ValueError:
        raise CliError(f"bad redundancy range {text!r}; use e.g. 1-12", EXIT_USAGE) from None


def cmd_gen(args) -> None:
    doc = _load_json(args.spec)
    try:
        if args.seed is not None:
            doc["seed"] = args.seed
        spec = SyntheticTraceSpec.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{args.spec}: invalid synthetic spec: {exc}", EXIT_PARSE) from None
    dataset = generate_synthetic(spec)
    log.info("generated %d pilots", len(dataset))
    _write(args.out, serialize_trace(dataset))


def cmd_ingest(args) -> None:
    dataset = _load_trace(args.trace)
    unexpected = sum(
        classify_expected(r, dataset.retire_time) is Expectation.UNEXPECTED for r in dataset.records
    )
    classes: dict[str, int] = {}
    for r in dataset.records:
        classes[r.termination_class.value] = classes.get(r.termination_class.value, 0) + 1
    first, last = dataset.span
    summary = {
        "records": len(dataset),
        "retire_time": dataset.retire_time,
        "kill_time": dataset.kill_time,
        "span": [first, last],
        "expected": len(dataset) - unexpected,
        "unexpected": unexpected,
        "termination_classes": dict(sorted(classes.items())),
    }
    _write(args.out, json.dumps(summary, indent=2) + "\n")
    if args.dist_out:
        if not len(dataset):
            raise CliError("cannot build a lifetime distribution from an empty trace", EXIT_CONFIG)
        _write(args.dist_out, build_lifetime_dist(dataset, args.bin_width).to_json() + "\n")


def cmd_detect(args) -> None:
    dataset = _load_trace(args.trace)
    doc = _load_json(args.detector)
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        config = DetectorConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise CliError(f"{args.detector}: invalid detector config: {exc}", EXIT_PARSE) from None
    stream = bin_failures(dataset, config.classes, config.bin_width_s)
    schedule = detect(stream, config)
    log.info("%d halt window(s) over %d bins", len(schedule), len(stream))
    _write(args.out, schedule.to_json() + "\n")
    if args.filtered_out:
        _write(args.filtered_out, serialize_trace(filter_dataset(dataset, schedule)))


def cmd_curves(args) -> None:
    dataset = _load_trace(args.trace)
    if not len(dataset):
        raise CliError("trace is empty", EXIT_CONFIG)
    curves = compute_failure_curves(
        dataset,
        args.lease,
        _parse_range(args.r),
        interval_width=args.interval_width,
        cadence=args.cadence,
        reps=args.reps,
        seed=args.seed or 0,
    )
    _write(args.out, curves_to_csv(curves.values()))


def cmd_valleys(args) -> None:
    curves = []
    for path in args.curves:
        try:
            curves.extend(curves_from_csv(_existing(path).read_text()))
        except ValueError as exc:
            raise CliError(f"{path}: {exc}", EXIT_PARSE) from None
    leases = {c.lease for c in curves}
    if args.lease is not None:
        curves = [c for c in curves if c.lease == args.lease]
        if not curves:
            raise CliError(f"no curves for lease {args.lease}", EXIT_CONFIG)
    elif len(leases) > 1:
        raise CliError(f"curves mix leases {sorted(leases)}; pick one with --lease", EXIT_CONFIG)
    try:
        table = determine_valleys(curves, args.availability, args.retire_time)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    if not table.valleys:
        log.warning("no redundancy level reaches availability %s", args.availability)
    _write(args.out, serialize_table(table) + "\n")


def cmd_simulate(args) -> None:
    doc = _load_json(args.config)
    try:
        config = SimConfig.from_dict(doc)
    except (ConfigError, TypeError, ValueError) as exc:
        raise CliError(f"{args.config}: {exc}", EXIT_PARSE) from None
    if args.seed is not None:
        config = SimConfig.from_dict({**config.to_dict(), "seed": args.seed})
    base = Path(args.config).parent

    def resolve(p: str) -> str:
        path = Path(p)
        return str(path if path.is_absolute() else base / path)

    kwargs = {}
    if config.trace:
        kwargs["dataset"] = _load_trace(resolve(config.trace))
    elif config.train_trace and config.test_trace:
        kwargs["train"] = _load_trace(resolve(config.train_trace))
        kwargs["test"] = _load_trace(resolve(config.test_trace))
    else:
        raise CliError("config needs 'trace' or both 'train_trace' and 'test_trace'", EXIT_CONFIG)
    if config.valley_tables:
        tables = {}
        for p in config.valley_tables:
            try:
                table = parse_table(_existing(resolve(p)).read_text())
            except ValleyTableError as exc:
                raise CliError(f"{p}: {exc}", EXIT_PARSE) from None
            if table.availability is None or table.lease is None:
                raise CliError(f"{p}: valley table lacks availability/lease", EXIT_CONFIG)
            tables[(table.availability, table.lease)] = table
        kwargs["tables"] = tables
    try:
        report = run_simulation(config, threads=args.threads, **kwargs)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    log.info("replayed %d sample times (%d halted)", report.samples, report.halted_samples)
    _write(args.out, report.to_csv())
    if args.json_out:
        _write(args.json_out, report.to_json() + "\n")


def cmd_report(args) -> None:
    doc = _load_json(args.report)
    try:
        cells = doc["cells"]
        rows = [
            (c["availability"], c["lease_s"], c["algorithm"], c["attempted"], c["held"],
             c["failure_rate"], c["mean_redundancy"], c["utilization"], c["mean_sample_utilization"])
            for c in cells
        ]
    except (KeyError, TypeError) as exc:
        raise CliError(f"{args.report}: not a simulation report: {exc}", EXIT_PARSE) from None
    header = ("availability", "lease_min", "algorithm", "attempted", "held",
              "failure_rate", "target", "mean_redundancy", "utilization", "sample_utilization")
    lines = ["\t".join(header)]
    for a, lease, algo, att, held, fr, red, util, sutil in rows:
        lines.append("\t".join((
            f"{a:.2f}", f"{lease // 60}", algo, str(att), str(held),
            f"{fr:.4f}", "ok" if fr <= 1 - a else "MISS", f"{red:.2f}", f"{util:.3f}", f"{sutil:.3f}",
        )))
    _write(args.out, "\n".join(lines) + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="overrides any seed in the inputs")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=None, help="output path (stdout when omitted)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="trua", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="synthesize a trace from a JSON spec")
    p.add_argument("spec")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("ingest", parents=[common], help="validate a trace and summarize it")
    p.add_argument("trace")
    p.add_argument("--dist-out", default=None, help="also write the lifetime histogram JSON")
    p.add_argument("--bin-width", type=int, default=60)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("detect", parents=[common], help="find anomalous failure bursts")
    p.add_argument("trace")
    p.add_argument("detector", help="detector config JSON")
    p.add_argument("--filtered-out", default=None, help="write the trace without halted pilots")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("curves", parents=[common], help="per-age failure-rate curves")
    p.add_argument("trace")
    p.add_argument("--lease", type=int, required=True, help="lease period in seconds")
    p.add_argument("--r", default="1-12", help="redundancy range, e.g. 1-12")
    p.add_argument("--interval-width", type=int, default=12000)
    p.add_argument("--cadence", type=int, default=6000)
    p.add_argument("--reps", type=int, default=10)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("valleys", parents=[common], help="cut curves into a valley table")
    p.add_argument("curves", nargs="+")
    p.add_argument("--availability", type=float, required=True)
    p.add_argument("--lease", type=int, default=None)
    p.add_argument("--retire-time", type=int, default=None)
    p.set_defaults(func=cmd_valleys)

    p = sub.add_parser("simulate", parents=[common], help="replay a trace through the selectors")
    p.add_argument("config", help="simulation config JSON")
    p.add_argument("--json-out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="tabulate a simulation report JSON")
    p.add_argument("report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="trua: %(message)s",
        stream=sys.stderr,
    )
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except CliError as exc:
        print(f"trua {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"trua {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
