"""Command-line front end.

Subcommands: ``ber`` (Eb/N0 sweep), ``exit`` (transfer curves),
``threshold`` (convergence-threshold search) and ``cluster-dump``
(centroid inspection).  Results are CSV with an explicit header plus a
JSON sidecar holding the resolved configuration; identical (config,
seed) pairs produce byte-identical output.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

from .config import ConfigError, load_config
from .harness import cluster_dump, find_snr_threshold, run_ber_sweep, run_exit_chart

ENV_SEED = "CLUSTEQ_SEED"
ENV_WORKERS = "CLUSTEQ_WORKERS"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clusteq",
        description="Turbo-equalization experiments with clustered adaptive filter banks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ber", "BER sweep over the configured Eb/N0 grid"),
        ("exit", "equalizer/decoder information-transfer curves"),
        ("threshold", "bisection search for the convergence threshold"),
        ("cluster-dump", "write fitted centroids and association mass"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to key = value config file")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="output CSV path")
    return parser


def _resolve_config(args):
    cfg = load_config(args.config)
    overrides = {}
    if os.environ.get(ENV_SEED):
        try:
            overrides["seed"] = int(os.environ[ENV_SEED])
        except ValueError as exc:
            raise ConfigError(f"bad {ENV_SEED}: {os.environ[ENV_SEED]!r}") from exc
    if os.environ.get(ENV_WORKERS):
        try:
            overrides["workers"] = int(os.environ[ENV_WORKERS])
        except ValueError as exc:
            raise ConfigError(f"bad {ENV_WORKERS}: {os.environ[ENV_WORKERS]!r}") from exc
    if args.seed is not None:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides) if overrides else cfg


def _write_csv(path: str, rows: list[dict], fieldnames: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in fieldnames})


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _write_sidecar(out_path: str, cfg) -> None:
    with open(out_path + ".config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1

    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    out = args.out or f"{args.command.replace('-', '_')}.csv"
    try:
        if args.command == "ber":
            rows = run_ber_sweep(cfg)
            fields = [
                "ebn0_db", "iteration", "trials", "bits", "errors", "ber",
                "ci_lo", "ci_hi", "mean_mse", "mean_i_a", "mean_i_e", "mean_clusters",
            ]
        elif args.command == "exit":
            rows = run_exit_chart(cfg)
            fields = ["ia", "ie_equalizer", "ie_decoder"]
        elif args.command == "threshold":
            threshold = find_snr_threshold(cfg)
            rows = [
                {
                    "equalizer": cfg.equalizer,
                    "tilde_x_mode": cfg.tilde_x_mode,
                    "ber_target": cfg.ber_target,
                    "tol_db": cfg.tol_db,
                    "bracket_lo_db": cfg.bracket_db[0],
                    "bracket_hi_db": cfg.bracket_db[1],
                    "threshold_db": threshold,
                }
            ]
            fields = list(rows[0].keys())
        else:  # cluster-dump
            rows = cluster_dump(cfg)
            fields = list(rows[0].keys())
    except (ValueError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2

    _write_csv(out, rows, fields)
    _write_sidecar(out, cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
