"""Command-line entry point.

Exit codes: 0 on success, 1 for configuration errors, 2 for numerical
failures during a run (the failing trial seed is logged for replay).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, channel, detectors, modem
from .complexity import measure, predict_gs, predict_gs_breakdown
from .errors import InvalidInputError
from .presets import FIGURES, SCALES, figure_preset
from .sim import SimConfig, diag_dominance_stats, sweep, write_results

log = logging.getLogger("gsmimo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _load_config(path: str) -> SimConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InvalidInputError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidInputError(f"config file {path} must hold a JSON object")
    try:
        return SimConfig.from_dict(data)
    except TypeError as exc:
        raise InvalidInputError(f"bad config in {path}: {exc}") from exc


def _print_records(records) -> None:
    for r in records:
        print(f"{r.detector:34s} N={r.N:<4d} xi={r.xi:<4g} snr={r.snr_db:6.2f} dB  ber={r.ber:.3e}  ({r.errors}/{r.bits})")


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    records = sweep(config, args.out, args.workers)
    _print_records(records)
    if args.out:
        print(f"results written to {args.out}")
    return EXIT_OK


def _run_tag(config: SimConfig) -> str:
    return f"N{config.N}_K{config.K}_xi{config.xi:g}"


def cmd_preset(args) -> int:
    preset = figure_preset(args.figure, args.scale, args.seed)
    out = Path(args.out)
    if preset.diagdom:
        stats = [dataclasses.asdict(diag_dominance_stats(**kw)) for kw in preset.diagdom]
        out.mkdir(parents=True, exist_ok=True)
        (out / "diagdom.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
        for s in stats:
            print(f"N={s['N']:<4d} xi={s['xi']:<4g} diag={s['diag_mean']:.4f} offdiag={s['offdiag_mean']:.4f}")
    for config in preset.configs:
        extra = {"figure": preset.figure, "scale": preset.scale, "notes": preset.notes}
        records = sweep(config, None, args.workers)
        write_results(config, records, out / _run_tag(config), extra)
        _print_records(records)
    print(f"results written to {out}")
    return EXIT_OK


def cmd_diagdom(args) -> int:
    stats = diag_dominance_stats(args.n, args.k, args.trials, args.seed, args.snr, args.xi)
    print(json.dumps(dataclasses.asdict(stats), indent=2))
    return EXIT_OK


def cmd_count(args) -> int:
    rng = np.random.default_rng(0)
    N = max(2 * args.k, 8)
    H = channel.complex_normal(rng, (N, args.k))
    y = channel.complex_normal(rng, N)
    real = channel.ChannelRealization(H, 1.0)
    c = modem.qam(64)
    rows = {}
    for name, cfg in (
        ("gauss_seidel", detectors.DetectorConfig("gauss_seidel", args.iters)),
        ("neumann", detectors.DetectorConfig("neumann", args.iters)),
        ("mmse_cholesky", detectors.DetectorConfig("mmse_cholesky")),
    ):
        ops = measure(lambda ops: detectors.detect(cfg, real, y, c, ops=ops))
        rows[name] = ops.as_dict()
    result = {
        "K": args.k,
        "iterations": args.iters,
        "predicted_gs": predict_gs(args.k, args.iters),
        "predicted_gs_breakdown": predict_gs_breakdown(args.k, args.iters),
        "measured": rows,
    }
    print(json.dumps(result, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsmimo", description="Gauss-Seidel soft-output MMSE detection experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a BER sweep from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="directory for results.csv and manifest.json")
    s.add_argument("--workers", type=int, help="worker processes (default: env or CPU count)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("preset", help="run a figure preset")
    s.add_argument("--figure", required=True, choices=FIGURES)
    s.add_argument("--scale", default="desk", choices=SCALES)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=2014)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_preset)

    s = sub.add_parser("diagdom", help="diagonal dominance of W^-1")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--trials", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--snr", type=float, default=12.0)
    s.add_argument("--xi", type=float, default=0.0)
    s.set_defaults(func=cmd_diagdom)

    s = sub.add_parser("count", help="complex-multiplication counts per pipeline")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--iters", type=int, required=True)
    s.set_defaults(func=cmd_count)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidInputError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
