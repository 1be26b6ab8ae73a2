"""Command-line entry point: ``dslpid run|sweep|summarize|presets|simulate``.

Exit codes: 0 success, 2 config error, 3 unstable loop, 4 partial failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import PRESETS, ExperimentConfig, load_config, preset, preset_toml
from .errors import ConfigError, DslpError, IllPosedLoop, LengthTooShort, MalformedResults, UnstableLoop
from .harness import (
    convergence_sweep,
    failures,
    run_monte_carlo,
    summarize,
    trial_seed,
    write_results,
    write_summary,
    write_sweep,
)
from .loop import simulate_loop

EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_PARTIAL = 0, 2, 3, 4

log = logging.getLogger("dslpid")


def _config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset")
    cfg = load_config(args.config) if args.config else preset(args.preset or "benchmark")
    changes = {}
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return cfg.replace(**changes) if changes else cfg


def _lengths(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --lengths {text!r}") from exc


def cmd_run(args) -> int:
    cfg = _config(args)
    out = args.out or cfg.output.get("results", "results.csv")
    rows = run_monte_carlo(cfg)
    write_results(rows, out)
    bad = failures(rows)
    print(f"{len(rows)} rows from {cfg.trials} trials -> {out}")
    if args.summary:
        write_summary(summarize(out), args.summary)
        print(f"summary -> {args.summary}")
    if bad:
        kinds = sorted({f"{r.method}/{r.nominal}: {r.status}" for r in bad})
        print(f"{len(bad)} failed rows:", *kinds, sep="\n  ", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    points = convergence_sweep(cfg, _lengths(args.lengths))
    write_sweep(points, args.out)
    for p in points:
        print(f"{p.length:>7d} {p.method:<11s} {p.nominal:<20s} {p.median_err1:.6g}")
    return EXIT_PARTIAL if any(p.n_ok < cfg.trials for p in points) else EXIT_OK


def cmd_summarize(args) -> int:
    stats = summarize(args.input)
    paths = write_summary(stats, args.out, args.dat)
    for s in stats:
        print(f"{s.method:<11s} {s.nominal:<20s} n={s.n:<4d} failed={s.n_failed:<4d} stable={s.stable:<4d} "
              f"median err1={s.err1.median:.6g} err2={s.err2.median:.6g}")
    print(f"-> {paths[0]}, {paths[1]}")
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.show:
        print(preset_toml(args.show), end="")
        return EXIT_OK
    for name, (desc, _) in PRESETS.items():
        print(f"{name:<18s} {desc}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    seed = trial_seed(cfg.seed, args.trial)
    data = simulate_loop(cfg.loop_config(seed, stream=args.stream))
    side = data.to_csv(args.out)
    print(f"{len(data)} samples, hash {data.hash()} -> {args.out} (+ {Path(side).name})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dslpid", description="Closed-loop identification benchmark harness.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def source(sp):
        sp.add_argument("--config", type=Path, help="TOML experiment config")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="built-in config (default: benchmark)")
        sp.add_argument("--seed", type=int)

    run = sub.add_parser("run", help="Monte Carlo run -> results CSV")
    source(run)
    run.add_argument("--trials", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", type=Path)
    run.add_argument("--summary", type=Path, help="also write a summary CSV")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="median err1 versus data length")
    source(sw)
    sw.add_argument("--lengths", required=True, help="comma-separated, ascending")
    sw.add_argument("--trials", type=int)
    sw.add_argument("--workers", type=int)
    sw.add_argument("--out", type=Path, required=True)
    sw.set_defaults(func=cmd_sweep)

    sm = sub.add_parser("summarize", help="five-number summaries of a results CSV")
    sm.add_argument("--in", dest="input", type=Path, required=True)
    sm.add_argument("--out", type=Path, required=True)
    sm.add_argument("--dat", type=Path, help="gnuplot data file (default: <out>.dat)")
    sm.set_defaults(func=cmd_summarize)

    pr = sub.add_parser("presets", help="list built-in configs")
    pr.add_argument("--show", choices=sorted(PRESETS), help="print a preset as TOML")
    pr.set_defaults(func=cmd_presets)

    si = sub.add_parser("simulate", help="write one closed-loop dataset as CSV")
    source(si)
    si.add_argument("--trial", type=int, default=0)
    si.add_argument("--stream", type=int, default=0)
    si.add_argument("--out", type=Path, required=True)
    si.set_defaults(func=cmd_simulate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, LengthTooShort, MalformedResults) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnstableLoop, IllPosedLoop) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except DslpError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
