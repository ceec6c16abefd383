"""Command-line entry point: run a protocol, write JSON results and CSV tables.

Exit codes: 0 success, 2 configuration error, 3 runtime or post-selection
starvation error.  Failures emit a machine-readable error JSON on stderr.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import PROFILES, ConfigError, RunConfig, load_config
from .protocols import (ProtocolResult, StarvationError, loss_budget, run_bell,
                        run_eraser, run_ghz, run_ramsey, run_state_detection,
                        run_truth_table, tomo_roundtrip)
from .qlin import PostSelectionError

SUBCOMMANDS = ("truth-table", "bell", "ghz", "eraser", "ramsey",
               "state-detection", "tomo-roundtrip", "loss-budget")

ENV_OUTPUT_DIR = "APGATE_OUT"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apgate",
        description="Simulate the cavity-mediated atom-photon gate protocols.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--profile", choices=sorted(PROFILES),
                       help="bundled parameter profile (default: paper)")
        p.add_argument("--seed", type=int, help="override the RNG seed")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--mode", choices=("analytic", "monte-carlo"),
                       help="override the run mode")
        p.add_argument("--out", help="output directory")
        if name == "ramsey":
            p.add_argument("--phase2", type=float, default=0.0,
                           help="phase of the second pulse (radians)")
            p.add_argument("--grid-khz", type=float, nargs=3,
                           metavar=("START", "STOP", "POINTS"),
                           help="detuning grid: start stop points")
        if name == "tomo-roundtrip":
            p.add_argument("--states", type=int, default=50)
            p.add_argument("--shots", type=int, default=10_000)
    return parser


def _resolve_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = PROFILES[args.profile or "paper"]()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.mode is not None:
        overrides["mode"] = args.mode
    if overrides:
        try:
            cfg = dataclasses.replace(cfg, **overrides)
        except ValueError as exc:
            raise ConfigError("overrides", str(exc)) from exc
    return cfg


def _resolve_out_dir(args, cfg: RunConfig) -> Path:
    out = args.out or os.environ.get(ENV_OUTPUT_DIR) or cfg.output_dir
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _matrix_abs_csv(path: Path, dm_dict: dict):
    dim = dm_dict["dim"]
    mat = np.abs(np.asarray(dm_dict["re"]) + 1j * np.asarray(dm_dict["im"]))
    header = ["row"] + [str(j) for j in range(dim)]
    rows = [[i] + [f"{mat[i, j]:.6f}" for j in range(dim)] for i in range(dim)]
    _write_csv(path, header, rows)


def _emit(result: ProtocolResult, out_dir: Path):
    name = result.label
    (out_dir / f"{name}.json").write_text(result.to_json())
    derived = result.derived
    if name == "truth-table":
        matrix = np.asarray(derived["matrix"])
        header = ["input"] + list(derived["output_labels"])
        rows = [[label] + [f"{matrix[i, j]:.6f}" for j in range(4)]
                for i, label in enumerate(derived["input_labels"])]
        _write_csv(out_dir / "truth_table.csv", header, rows)
    elif name in ("bell", "ghz"):
        _matrix_abs_csv(out_dir / f"{name}_density_abs.csv", derived["density_matrix"])
    elif name == "eraser":
        _matrix_abs_csv(out_dir / "eraser_phi_plus_abs.csv",
                        derived["density_matrix_phi_plus"])
        _matrix_abs_csv(out_dir / "eraser_phi_minus_abs.csv",
                        derived["density_matrix_phi_minus"])
    elif name == "ramsey":
        grid = np.asarray(result.raw_counts["detuning_khz"])
        transfer = np.asarray(result.raw_counts["transfer"])
        rows = [[f"{g:.6f}", f"{t:.8f}"] for g, t in zip(grid, transfer)]
        _write_csv(out_dir / "ramsey_curve.csv", ["detuning_khz", "transfer"], rows)
    elif name == "state-detection":
        h2 = np.asarray(result.raw_counts["histogram_f2"])
        h1 = np.asarray(result.raw_counts["histogram_f1"])
        rows = [[k, f"{h1[k]:.8f}", f"{h2[k]:.8f}"] for k in range(len(h2))]
        _write_csv(out_dir / "state_detection_hist.csv",
                   ["count", "p_f1", "p_f2"], rows)
    if "settings" in result.raw_counts:
        key = "counts" if "counts" in result.raw_counts else "probabilities"
        rows = [[s] + [repr(float(x)) for x in np.asarray(row).ravel()]
                for s, row in zip(result.raw_counts["settings"], result.raw_counts[key])]
        n_outcomes = len(rows[0]) - 1
        header = ["setting"] + [f"{key}_{i}" for i in range(n_outcomes)]
        _write_csv(out_dir / f"{name}_settings.csv", header, rows)


def _dispatch(args, cfg: RunConfig) -> ProtocolResult:
    name = args.subcommand
    if name == "truth-table":
        return run_truth_table(cfg)
    if name == "bell":
        return run_bell(cfg)
    if name == "ghz":
        return run_ghz(cfg)
    if name == "eraser":
        return run_eraser(cfg)
    if name == "ramsey":
        grid = None
        if args.grid_khz:
            start, stop, points = args.grid_khz
            grid = np.linspace(start, stop, int(points))
        return run_ramsey(cfg, detuning_grid_khz=grid, phase2=args.phase2)
    if name == "state-detection":
        return run_state_detection(cfg)
    if name == "tomo-roundtrip":
        return tomo_roundtrip(cfg, n_states=args.states, shots=args.shots)
    if name == "loss-budget":
        return loss_budget(cfg)
    raise ConfigError("subcommand", f"unknown subcommand {name}")


def _error_json(kind: str, message: str) -> str:
    return json.dumps({"error": kind, "message": message}, sort_keys=True)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        out_dir = _resolve_out_dir(args, cfg)
        result = _dispatch(args, cfg)
    except ConfigError as exc:
        print(_error_json("config", str(exc)), file=sys.stderr)
        return 2
    except (StarvationError, PostSelectionError) as exc:
        print(_error_json("starvation", str(exc)), file=sys.stderr)
        return 3
    except OSError as exc:
        print(_error_json("io", str(exc)), file=sys.stderr)
        return 3
    _emit(result, out_dir)
    summary = {k: v for k, v in result.derived.items()
               if isinstance(v, (int, float, bool))}
    print(json.dumps({"protocol": result.label, "out": str(out_dir),
                      **summary}, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
