"""Command-line interface: run, report, sweep, validate."""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .harness import (MalformedRowError, export_records, load_records,
                      infer_period, run_scenario, stats_payload)
from .scenario import ConfigError, load_scenario, parse_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def resolve_scenario(name_or_path: str) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    shipped = resources.files("tsnsim") / "scenarios" / f"{name_or_path}.json"
    with resources.as_file(shipped) as sp:
        if sp.exists():
            return sp
    raise FileNotFoundError(f"no such scenario: {name_or_path}")


def _write_outputs(result, out_dir: Path, bin_width: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    export_records(result.records, out_dir / "records.csv")
    payload = stats_payload(result.records, result.metadata["period_ns"],
                            bin_width, drops=result.drops,
                            metadata=result.metadata)
    with open(out_dir / "stats.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for kind, st in payload["kinds"].items():
        with open(out_dir / f"histogram_{kind}.tsv", "w") as fh:
            for bin_start, count in st["histogram"]:
                fh.write(f"{bin_start}\t{count}\n")
    return payload


def cmd_run(args) -> int:
    try:
        cfg = load_scenario(resolve_scenario(args.scenario))
    except (ConfigError, FileNotFoundError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_scenario(cfg, seed=args.seed)
        payload = _write_outputs(result, Path(args.out),
                                 cfg.run.histogram_bin_ns)
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{len(result.records)} records -> {args.out}")
    for kind, st in payload["kinds"].items():
        print(f"  {kind}: mean {st['mean_ns']:.1f} ns, "
              f"p80 radius {st['p80_radius_ns']} ns, max {st['max_ns']} ns")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        records = load_records(args.csv)
        payload = stats_payload(records, infer_period(records), args.bin_width)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except MalformedRowError as exc:
        print(f"malformed CSV: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out_dir = Path(args.out) if args.out else Path(args.csv).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "stats.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for kind, st in payload["kinds"].items():
        with open(out_dir / f"histogram_{kind}.tsv", "w") as fh:
            for bin_start, count in st["histogram"]:
                fh.write(f"{bin_start}\t{count}\n")
    print(json.dumps(payload["kinds"], indent=2, sort_keys=True))
    return EXIT_OK


def _set_dotted(doc: dict, dotted: str, value):
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def cmd_sweep(args) -> int:
    try:
        path = resolve_scenario(args.scenario)
        with open(path) as fh:
            doc = json.load(fh)
        parse_scenario(doc)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    values = []
    for raw in args.values.split(","):
        try:
            values.append(json.loads(raw))
        except json.JSONDecodeError:
            values.append(raw)
    for value in values:
        variant = json.loads(json.dumps(doc))
        _set_dotted(variant, args.param, value)
        try:
            cfg = parse_scenario(variant)
        except ConfigError as exc:
            print(f"{args.param}={value}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            result = run_scenario(cfg, seed=args.seed)
            out_dir = Path(args.out) / f"{args.param}={value}"
            _write_outputs(result, out_dir, cfg.run.histogram_bin_ns)
        except Exception as exc:
            print(f"runtime error at {args.param}={value}: {exc}",
                  file=sys.stderr)
            return EXIT_RUNTIME
        print(f"{args.param}={value}: {len(result.records)} records")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        load_scenario(resolve_scenario(args.scenario))
    except (ConfigError, FileNotFoundError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsnsim",
                                     description="Deterministic TSN data-path simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write records + stats")
    p.add_argument("scenario", help="scenario file or shipped scenario name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="recompute stats from a records CSV")
    p.add_argument("csv")
    p.add_argument("--out", default=None)
    p.add_argument("--bin-width", type=int, default=100)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="run a scenario over several parameter values")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, help="dotted config key, e.g. run.seed")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
