"""Experiment runner: `run` for a single config, `sweep` for one-axis studies.

Outputs per run: <out>/rounds.csv (one line per round, fixed column order) and
<out>/summary.json (final metrics, bound breakdown, config echo). Exit codes:
0 success, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, from_dict, load_config
from .simulate import CSV_COLUMNS, RunResult, run

SWEEPABLE = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"workers"}


def write_outputs(result: RunResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "rounds.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in result.records:
            writer.writerow([getattr(rec, col) for col in CSV_COLUMNS])
    summary = dict(result.summary)
    if result.error is not None:
        summary["error"] = result.error
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_one(cfg: ExperimentConfig, out_dir: Path) -> int:
    result = run(cfg)
    write_outputs(result, out_dir)
    if result.error is not None:
        print(f"run failed after {len(result.records)} rounds: {result.error}",
              file=sys.stderr)
        return 3
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = from_dict({**cfg.to_dict(), "seed": args.seed})
    return _run_one(cfg, Path(args.out))


def _parse_value(field_name: str, raw: str):
    field = {f.name: f for f in dataclasses.fields(ExperimentConfig)}[field_name]
    if field.type in ("int",):
        return int(raw)
    if field.type in ("float",):
        return float(raw)
    if field.type in ("bool",):
        return raw.lower() in ("1", "true", "yes")
    if field.type in ("float | None", "int | None"):
        return None if raw.lower() == "none" else float(raw)
    return raw


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.axis not in SWEEPABLE:
        raise ConfigError(f"axis {args.axis!r} is not sweepable; choose from "
                          f"{sorted(SWEEPABLE)}")
    values = [v for v in args.values.split(",") if v]
    if not values:
        raise ConfigError("values: empty list")
    out_root = Path(args.out)
    rows = []
    status = 0
    for raw in values:
        value = _parse_value(args.axis, raw)
        sub = from_dict({**cfg.to_dict(), args.axis: value})
        out_dir = out_root / f"{args.axis}={raw}"
        rc = _run_one(sub, out_dir)
        status = max(status, rc)
        result_summary = json.loads((out_dir / "summary.json").read_text())
        rows.append({
            "value": raw,
            "final_loss": result_summary.get("final_loss"),
            "mean_cov_norm": result_summary.get("mean_cov_norm"),
            "mean_delay": result_summary.get("mean_delay"),
            "chosen_rank": result_summary.get("chosen_rank"),
        })
    out_root.mkdir(parents=True, exist_ok=True)
    with open(out_root / "sweep_summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["value", "final_loss",
                                                "mean_cov_norm", "mean_delay",
                                                "chosen_rank"])
        writer.writeheader()
        writer.writerows(rows)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedlora",
        description="Wireless federated low-rank fine-tuning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True, help="TOML or JSON config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run one experiment per axis value")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True, help="config field to vary")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--out", required=True, help="output root directory")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
