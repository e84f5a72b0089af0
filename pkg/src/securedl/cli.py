"""Command-line entry point: ``securedl {run,sweep,bench,audit-transcript}``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import audit
from .aggregation import RULES
from .attacks import ATTACKS
from .errors import ConfigError, IdxFormatError, SecureDLError
from .simulator import BENCH_SIZES, SWEEP_FRACTIONS, SimConfig, bench, run, sweep

EXIT_OK, EXIT_CONFIG, EXIT_PROTOCOL = 0, 2, 3

# CLI flag -> SimConfig field
FLAG_FIELDS = {
    "clients": "n_clients", "byzantine": "n_byzantine", "attack": "attack", "rule": "rule",
    "tau": "tau", "rounds": "rounds", "dataset": "dataset", "seed": "seed", "out": "out",
    "lr": "lr", "data_dir": "data_dir", "workers": "workers", "scale": "attack_scale",
}


def _sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with SimConfig fields; flags override it")
    p.add_argument("--clients", type=int)
    p.add_argument("--byzantine", type=int)
    p.add_argument("--attack", choices=ATTACKS)
    p.add_argument("--rule", choices=RULES)
    p.add_argument("--tau", type=float)
    p.add_argument("--rounds", type=int)
    p.add_argument("--dataset", choices=("mnist", "synth"))
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--scale", type=float, help="scaling-attack factor")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="CSV path; a JSON summary is written next to it")
    p.add_argument("--no-timing", action="store_true", help="write zeros in the timing columns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="securedl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one configuration")
    _sim_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="final accuracy over a Byzantine-fraction grid")
    _sim_flags(p_sweep)
    p_sweep.add_argument("--rules", nargs="+", choices=RULES, default=["mean", "securedl"])
    p_sweep.add_argument("--fractions", nargs="+", type=float, default=list(SWEEP_FRACTIONS))

    p_bench = sub.add_parser("bench", help="per-phase timing of one SecureDL round")
    p_bench.add_argument("--sizes", nargs="+", type=int, default=list(BENCH_SIZES))
    p_bench.add_argument("--dim", type=int, default=1024)
    p_bench.add_argument("--reps", type=int, default=3)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", help="CSV path for the table")

    p_audit = sub.add_parser("audit-transcript", help="chi-square uniformity of opened values")
    p_audit.add_argument("transcript", nargs="?", type=Path,
                         help="transcript .npz from a run; omitted: run a short n=4 simulation")
    p_audit.add_argument("--alpha", type=float, default=audit.ALPHA)
    p_audit.add_argument("--rounds", type=int, default=3)
    p_audit.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args: argparse.Namespace) -> SimConfig:
    data = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for flag, name in FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[name] = value
    if args.no_timing:
        data["timing"] = False
    if "n_byzantine" in data:
        data.setdefault("byzantine_ids", None)
    try:
        config = SimConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    config.validate()
    return config


def _write_rows(rows: list[dict], path) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def cmd_run(args) -> int:
    config = config_from_args(args)

    def report(m):
        print(f"round {m.round:4d}  acc {m.mean_acc:.4f}  loss {m.loss:.4f}  rejected {m.rejected_count}",
              flush=True)

    result = run(config, on_round=report)
    print(json.dumps(result.summary(), indent=2, default=str))
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = config_from_args(args)
    if config.attack == "none":
        config = dataclasses.replace(config, attack="sf")
    out = config.out
    config = dataclasses.replace(config, out=None)

    def report(row):
        print(f"{row['rule']:<9} byzantine {row['byzantine']:2d} ({row['byzantine_fraction']:.0%})"
              f"  acc {row['final_mean_acc']:.4f}", flush=True)

    rows = sweep(config, tuple(args.rules), tuple(args.fractions), on_result=report)
    if out:
        _write_rows(rows, out)
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = bench(tuple(args.sizes), args.dim, args.reps, args.seed)
    print(f"{'n':>4}{'cosine ms':>12}{'compare ms':>12}{'norm ms':>12}{'average ms':>12}")
    for r in rows:
        print(f"{r['n']:>4}{r['t_cosine_ms']:>12.1f}{r['t_compare_ms']:>12.1f}"
              f"{r['t_normalize_ms']:>12.1f}{r['t_average_ms']:>12.1f}")
    if args.out:
        _write_rows(rows, args.out)
    return EXIT_OK


def cmd_audit(args) -> int:
    if args.transcript is not None:
        try:
            hists = audit.load_transcript(args.transcript)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read transcript {args.transcript}: {exc}") from exc
    else:
        result = run(SimConfig(n_clients=4, rule="securedl", rounds=args.rounds, seed=args.seed,
                               lr=0.1, timing=False))
        hists = result.transport.low_byte_hist
    lines = audit.audit_histograms(hists)
    print(audit.format_report(lines, args.alpha))
    return EXIT_OK if audit.verdict(lines, args.alpha) else 1


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "bench": cmd_bench, "audit-transcript": cmd_audit}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, IdxFormatError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SecureDLError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
