"""Command-line entry point.

Subcommands communicate through the bucket store so that each stage can be
rerun on its own::

    signalstab simulate --spec lights.json --from 2023-09-23T00:00:00Z --hours 168 --out sim.txt.gz
    signalstab analyze --in sim.txt.gz --store store/
    signalstab classify --store store/ --out out/
    signalstab report --store store/ --out out/ --samples 20 --seed 1

Defaults can come from a JSON config file (``--config``), either flat or
keyed by subcommand; ``SIGNALSTAB_STORE`` and ``SIGNALSTAB_JOBS`` override
the config file, explicit flags override both. Every command prints a JSON
summary on stdout. Exit codes: 0 success, 1 I/O or configuration error,
2 invalid arguments.
"""

from __future__ import annotations

import argparse
import contextlib
import gzip
import io
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Optional, Sequence, TextIO

from .classify import DEFAULT_CD_S, DEFAULT_WTD, Thresholds
from .ingest import DEFAULT_REORDER_WINDOW_S, write_records
from .pipeline import AnalyzeConfig, analyze
from .reconstruct import DEFAULT_MAX_CYCLE_S
from .report import classify_store, load_metadata, write_reports
from .simulate import ErrorModel, SpecError, inject_errors, load_spec_file, simulate_fleet
from .store import dumps
from .validate import DEFAULT_MAX_REMOVED, DEFAULT_NEIGHBOR_WINDOW

log = logging.getLogger("signalstab")

ENV_STORE = "SIGNALSTAB_STORE"
ENV_JOBS = "SIGNALSTAB_JOBS"


class ConfigError(Exception):
    pass


def parse_instant(text: str) -> int:
    """Epoch seconds or an ISO 8601 instant (naive values are taken as UTC)."""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an epoch or ISO 8601 instant: {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _fraction(text: str) -> float:
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError("must be within (0, 1]")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signalstab", description="Traffic light cycle predictability analysis.")
    parser.add_argument("--config", help="JSON file with default option values")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate observation records from program specs")
    p.add_argument("--spec", required=True, help="JSON program spec file")
    p.add_argument("--from", dest="start", required=True, type=parse_instant, help="start instant")
    p.add_argument("--hours", required=True, type=float, help="simulated duration in hours")
    p.add_argument("--out", required=True, help="record file to write (.gz compresses)")
    p.add_argument("--inject", help="JSON error model for fault injection")
    p.add_argument("--seed", type=int, help="base seed overriding the spec seeds")

    p = sub.add_parser("analyze", help="reconstruct, validate and bucket records into a store")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, help="record files, processed in order")
    p.add_argument("--store", help=f"bucket store directory (env {ENV_STORE})")
    p.add_argument("--tz", default="UTC", help="bucket timezone, e.g. Europe/Berlin")
    p.add_argument("--max-removed", type=_fraction, default=DEFAULT_MAX_REMOVED)
    p.add_argument("--neighbor-window", type=int, default=DEFAULT_NEIGHBOR_WINDOW)
    p.add_argument("--reorder-window", type=int, default=DEFAULT_REORDER_WINDOW_S)
    p.add_argument("--max-cycle", type=_positive_int, default=DEFAULT_MAX_CYCLE_S)
    p.add_argument("--jobs", type=_positive_int, help=f"worker processes (env {ENV_JOBS}; default: CPU count)")

    for name, helptext in (("classify", "classify every bucket of a store"),
                           ("report", "export plot-ready tables from a store")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--store", help=f"bucket store directory (env {ENV_STORE})")
        p.add_argument("--out", required=True)
        p.add_argument("--cd", type=_positive_int, default=DEFAULT_CD_S, help="cycle discrepancy threshold, seconds")
        p.add_argument("--wtd", type=_fraction, default=DEFAULT_WTD, help="wait time diversity threshold")
        if name == "report":
            p.add_argument("--samples", type=int, default=0)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--meta", help="optional per-light metadata CSV to join")
    return parser


def _load_config(path: Optional[str], command: str) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    flat = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    flat.update(doc.get(command, {}))
    return {k.replace("-", "_"): v for k, v in flat.items()}


def _apply_defaults(args: argparse.Namespace, argv: Sequence[str], config: dict) -> None:
    """Fill options not given on the command line from env, then config."""
    given = {a.split("=", 1)[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in config.items():
        if hasattr(args, key) and key not in given:
            setattr(args, key, value)
    if hasattr(args, "store") and "store" not in given and os.environ.get(ENV_STORE):
        args.store = os.environ[ENV_STORE]
    if hasattr(args, "jobs") and "jobs" not in given and os.environ.get(ENV_JOBS):
        args.jobs = int(os.environ[ENV_JOBS])


@contextlib.contextmanager
def _open_out(path: str) -> Iterator[TextIO]:
    if not path.endswith(".gz"):
        with open(path, "w", encoding="utf-8") as fh:
            yield fh
        return
    # no embedded name or mtime, so compressed output is byte-identical across runs
    with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz, \
            io.TextIOWrapper(gz, encoding="utf-8") as fh:
        yield fh


def cmd_simulate(args: argparse.Namespace) -> dict:
    specs = load_spec_file(args.spec)
    if args.seed is not None:
        from dataclasses import replace
        specs = [replace(s, seed=args.seed * 1_000_003 + i) for i, s in enumerate(specs)]
    duration = int(round(args.hours * 3600))
    stream = simulate_fleet(specs, args.start, duration)
    faults = []
    if args.inject:
        with open(args.inject, encoding="utf-8") as fh:
            model = ErrorModel.from_dict(json.load(fh))
        stream, faults = inject_errors(stream, model)
    with _open_out(args.out) as out:
        n = write_records(stream, out)
    summary = {"lights": len(specs), "observations": n, "out": args.out}
    if args.inject:
        ledger = Path(args.out + ".faults.json")
        ledger.write_text(dumps([f.to_dict() for f in faults]), encoding="utf-8")
        summary["faults"] = len(faults)
        summary["fault_ledger"] = str(ledger)
    return summary


def _require_store(args: argparse.Namespace) -> str:
    if not args.store:
        raise ConfigError(f"no store given (use --store or {ENV_STORE})")
    return args.store


def cmd_analyze(args: argparse.Namespace) -> dict:
    store = _require_store(args)
    for path in args.inputs:
        if not os.path.isfile(path):
            raise OSError(f"input not found: {path}")
    config = AnalyzeConfig(timezone=args.tz, max_removed=args.max_removed, neighbor_window=args.neighbor_window,
                           reorder_window_s=args.reorder_window, max_cycle_s=args.max_cycle)
    try:
        from zoneinfo import ZoneInfo
        if config.timezone.upper() not in ("UTC", "Z", "ETC/UTC"):
            ZoneInfo(config.timezone)
    except Exception as exc:
        raise ConfigError(f"unknown timezone {config.timezone!r}") from exc
    jobs = args.jobs or os.cpu_count() or 1
    return analyze(args.inputs, store, config, jobs=jobs)


def _store_dir(args: argparse.Namespace) -> str:
    store = _require_store(args)
    if not (Path(store) / "lights").is_dir():
        raise OSError(f"not a bucket store: {store}")
    return store


def cmd_classify(args: argparse.Namespace) -> dict:
    return classify_store(_store_dir(args), args.out, Thresholds(args.cd, args.wtd))


def cmd_report(args: argparse.Namespace) -> dict:
    meta = load_metadata(args.meta) if args.meta else None
    return write_reports(_store_dir(args), args.out, Thresholds(args.cd, args.wtd),
                         samples=args.samples, seed=args.seed, metadata=meta)


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "classify": cmd_classify, "report": cmd_report}


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _apply_defaults(args, argv, _load_config(args.config, args.command))
        summary = COMMANDS[args.command](args)
    except (OSError, ConfigError, SpecError, ValueError, json.JSONDecodeError) as exc:
        print(f"signalstab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(dumps(summary))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
