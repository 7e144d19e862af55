"""Command-line scenario runner.

    tcpair run --scenario s.json --out m.json [--format json|csv] [--replicates N] [--seed S] [--trace]
    tcpair validate --scenario s.json
    tcpair floors --config building.json [--out result.json]

Exit codes: 0 success, 1 parse or validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from tcpair.errors import ConfigError
from tcpair.netsim.floors import floor_accuracy, parse_floor_config, run_floor_scenario
from tcpair.netsim.scenario import parse_scenario
from tcpair.netsim.world import simulate

log = logging.getLogger("tcpair")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2

CSV_COLUMNS = (
    "replicate",
    "seed",
    "grants",
    "denials",
    "handoffs_total",
    "handoffs_without_reauth",
    "max_propagation_rounds",
    "rogue_routed_deliveries",
    "localization_rmse_m",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    scenario_path: Path
    output_path: Path
    format: str
    replicates: int = 1
    base_seed: int | None = None
    trace: bool = False


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tcpair", description="TCP-Air ledger/identity/spectrum scenario runner")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a vehicle-network scenario")
    r.add_argument("--scenario", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--format", choices=("json", "csv"))
    r.add_argument("--replicates", type=int, default=1)
    r.add_argument("--seed", type=int, help="base seed (default: the scenario's seed)")
    r.add_argument("--trace", action="store_true", help="write a per-event trace next to the output")

    v = sub.add_parser("validate", help="parse and validate a scenario file")
    v.add_argument("--scenario", required=True, type=Path)

    f = sub.add_parser("floors", help="run the emergency-location floor scenario")
    f.add_argument("--config", required=True, type=Path)
    f.add_argument("--out", type=Path)
    return p


def _infer_format(out: Path, requested: str | None) -> str:
    suffix = out.suffix.lower().lstrip(".")
    if requested is None:
        return "csv" if suffix == "csv" else "json"
    if suffix in ("json", "csv") and suffix != requested:
        raise UsageError(f"--format {requested} does not match output extension .{suffix}")
    return requested


def csv_rows(records: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        m = rec["metrics"]
        w.writerow([rec["replicate"], rec["seed"]] + [m[c] for c in CSV_COLUMNS[2:]])
    return buf.getvalue()


def _trace_path(out: Path, replicate: int, replicates: int) -> Path:
    suffix = ".trace.tsv" if replicates == 1 else f".r{replicate}.trace.tsv"
    return out.with_name(out.name + suffix)


def run_scenarios(cfg: RunConfig) -> list[dict]:
    scenario = parse_scenario(cfg.scenario_path.read_text())
    base = scenario.seed if cfg.base_seed is None else cfg.base_seed
    records = []
    for r in range(cfg.replicates):
        seed = base + r
        world = simulate(scenario.with_seed(seed), trace=cfg.trace)
        log.info("replicate %d seed %d: %d grants, %d denials", r, seed, world.metrics.grants, world.metrics.denials)
        records.append({"replicate": r, "seed": seed, "metrics": world.metrics.to_dict()})
        if cfg.trace:
            lines = "".join(rec.line() + "\n" for rec in world.trace)
            _trace_path(cfg.output_path, r, cfg.replicates).write_text(lines)
    if cfg.format == "csv":
        cfg.output_path.write_text(csv_rows(records))
    else:
        cfg.output_path.write_text(json.dumps(records, indent=2, sort_keys=True) + "\n")
    return records


def _cmd_run(args) -> int:
    if args.replicates < 1:
        raise UsageError("--replicates must be >= 1")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    cfg = RunConfig(args.scenario, args.out, _infer_format(args.out, args.format), args.replicates, args.seed, args.trace)
    run_scenarios(cfg)
    return EXIT_OK


def _cmd_validate(args) -> int:
    s = parse_scenario(args.scenario.read_text())
    n_rsus = sum(len(m.rsus) for m in s.municipalities)
    print(f"ok: {len(s.municipalities)} municipalities, {n_rsus} RSUs, {len(s.vehicles)} vehicles")
    return EXIT_OK


def _cmd_floors(args) -> int:
    cfg = parse_floor_config(args.config.read_text())
    result = {"floor": run_floor_scenario(cfg), "expected_floor": cfg.device_floor}
    if cfg.trials > 1:
        result["trials"] = cfg.trials
        result["accuracy"] = floor_accuracy(cfg)
    text = json.dumps(result, sort_keys=True)
    if args.out is not None:
        args.out.write_text(text + "\n")
    print(text)
    return EXIT_OK


def run_cli(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        handler = {"run": _cmd_run, "validate": _cmd_validate, "floors": _cmd_floors}[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"tcpair: usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"tcpair: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"tcpair: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run_cli())
