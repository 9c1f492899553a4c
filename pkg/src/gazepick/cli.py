"""Command line front end.

Subcommands:
  serve      run the session service (TCP line protocol or WebSocket)
  calibrate  fit a gaze model from a samples file, or a workspace
             homography from a pixel/workspace pairs file
  replay     reprocess a recorded trace and write the outbound transcript
  simulate   run the synthetic-agent timing study, write results.csv
  stats      summarize a results.csv: condition stats, ANOVA, box-plot data
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path

from .calibration import (
    CalibrationError,
    CalibrationSample,
    IrisPoint,
    ScreenPoint,
    fit_calibration,
    load_model,
    save_model,
)
from .config import load_config
from .experiment import (
    AgentParams,
    read_results_csv,
    run_experiment,
    summarize_experiment,
    write_boxplot_csv,
    write_results_csv,
)
from .geometry import GeometryError, estimate_homography, parse_pairs_file, save_geometry
from .session import Session, identity_model, replay


def _read_samples(path: str) -> list[CalibrationSample]:
    """Samples file: whitespace-separated `u v x y` per line, # comments."""
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 numbers, got {len(parts)}")
            u, v, x, y = (float(p) for p in parts)
            samples.append(CalibrationSample(IrisPoint(u, v), ScreenPoint(x, y)))
    return samples


def cmd_serve(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    model = "none" if args.uncalibrated else "identity"
    if args.transport == "ws":
        import uvicorn

        from .server import build_app

        app = build_app(
            config=config,
            model=model,
            log_dir=args.log_dir,
            pace_hz=args.hz,
            static_dir=args.static,
        )
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
        return 0
    from .server import run_tcp_server

    try:
        asyncio.run(
            run_tcp_server(
                args.host,
                args.port,
                config=config,
                model=model,
                log_dir=args.log_dir,
                pace_hz=args.hz,
            )
        )
    except KeyboardInterrupt:
        pass
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    if (args.samples is None) == (args.geometry is None):
        print("calibrate: exactly one of --samples or --geometry is required", file=sys.stderr)
        return 2
    if args.samples is not None:
        try:
            samples = _read_samples(args.samples)
            model = fit_calibration(samples, degree=args.degree)
        except (OSError, ValueError, CalibrationError) as exc:
            print(f"calibrate: {exc}", file=sys.stderr)
            return 1
        save_model(model, args.out)
        print(f"fit {len(samples)} samples, degree {model.degree}, residual_rms {model.residual_rms:.6g} px")
        print(f"wrote {args.out}")
        return 0
    try:
        pairs = parse_pairs_file(args.geometry)
        h = estimate_homography(pairs, z_table=args.z_table)
    except (OSError, ValueError, GeometryError) as exc:
        print(f"calibrate: {exc}", file=sys.stderr)
        return 1
    save_geometry(args.out, h)
    print(f"fit {len(pairs)} pairs, reprojection_rms {h.reprojection_rms:.6g} px")
    print(f"wrote {args.out}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.model == "identity":
        model = identity_model(config.screen.w, config.screen.h)
    elif args.model == "none":
        model = None
    else:
        try:
            model = load_model(args.model)
        except (OSError, ValueError) as exc:
            print(f"replay: cannot load model: {exc}", file=sys.stderr)
            return 1
    session = Session(sid=args.sid, config=config, model=model)
    try:
        with open(args.trace, "r", encoding="utf-8") as fh:
            out = replay(fh, session)
    except OSError as exc:
        print(f"replay: {exc}", file=sys.stderr)
        return 1
    with open(args.out, "w", encoding="utf-8") as fh:
        for line in out:
            fh.write(line + "\n")
    print(f"replayed {args.trace}: {len(out)} outbound messages -> {args.out}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    agent = AgentParams(
        saccade_gain=args.gain, jitter_px=args.jitter, undershoot_px=args.undershoot
    )
    results = run_experiment(
        n_participants=args.participants,
        n_trials=args.trials,
        seed=args.seed,
        agent=agent,
        fixed_order=args.fixed_order,
    )
    write_results_csv(results, args.out)
    report = summarize_experiment(results)
    print(report.to_text())
    print(f"wrote {args.out}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    try:
        results = read_results_csv(args.infile)
    except (OSError, ValueError) as exc:
        print(f"stats: {exc}", file=sys.stderr)
        return 1
    try:
        report = summarize_experiment(results)
    except ValueError as exc:
        print(f"stats: {exc}", file=sys.stderr)
        return 1
    print(report.to_text())
    boxplot = args.boxplot or str(Path(args.infile).with_suffix("")) + "_boxplot.csv"
    write_boxplot_csv(results, boxplot)
    print(f"wrote {boxplot}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazepick", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8754)
    p.add_argument("--transport", choices=("tcp", "ws"), default="tcp")
    p.add_argument("--static", default=None, help="console bundle to mount at / (ws only)")
    p.add_argument("--log-dir", default=None, help="directory for per-session trace logs")
    p.add_argument("--config", default=None)
    p.add_argument("--hz", type=float, default=None, help="pacing tick rate; 0 disables")
    p.add_argument(
        "--uncalibrated",
        action="store_true",
        help="start sessions without a gaze model (default: identity mapping)",
    )
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("calibrate", help="fit a gaze model or a workspace homography")
    p.add_argument("--samples", default=None, help="gaze samples file: u v x y per line")
    p.add_argument("--geometry", default=None, help="pixel/workspace pairs file: px py X Y per line")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--z-table", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("replay", help="reprocess a trace file")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default="identity", help="'identity', 'none', or a model file path")
    p.add_argument("--sid", default="replay")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("simulate", help="run the synthetic-agent timing study")
    p.add_argument("--participants", type=int, default=13)
    p.add_argument("--trials", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results.csv")
    p.add_argument("--gain", type=float, default=AgentParams.saccade_gain)
    p.add_argument("--jitter", type=float, default=AgentParams.jitter_px)
    p.add_argument("--undershoot", type=float, default=AgentParams.undershoot_px)
    p.add_argument(
        "--fixed-order",
        action="store_true",
        help="run the OFF block before ON for every participant",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="summarize a results.csv")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--boxplot", default=None, help="box-plot export path")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
