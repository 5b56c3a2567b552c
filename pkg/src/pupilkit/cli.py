"""Command-line front end: detect, eval, synth, and version subcommands.

Exit codes: 0 success, 1 usage error, 2 unreadable or malformed input,
3 anything that went wrong past the input boundary.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .detector import DetectorConfig, TrackerState, detect_frame
from .errors import (
    ConfigError,
    GroundTruthError,
    ImageError,
    ImageIOError,
    PupilkitError,
)
from .harness import (
    EvalReport,
    discover_sequences,
    list_frames,
    pooled_curve,
    run_eval,
    run_eval_multi,
    write_report,
)
from .image import load_image, save_image
from .synth import parse_scene_config, render_sequence


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; we reserve 2 for input
    errors, so usage problems exit with 1 instead."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _load_config(path: Path | None) -> DetectorConfig:
    return DetectorConfig.from_file(path) if path else DetectorConfig()


def _cmd_detect(args: argparse.Namespace) -> int:
    img = load_image(args.image)
    det, _ = detect_frame(img, TrackerState(), _load_config(args.config))
    x = f"{det.center[0]:.6f}" if det.center else ""
    y = f"{det.center[1]:.6f}" if det.center else ""
    print(f"{x},{y},{det.confidence:.6f},{det.stage.value}")
    return 0


def _print_summary(name: str, report: EvalReport, t: int) -> None:
    c = report.stage_counts
    print(
        f"{name}: {len(report.frames)} frames, rate@{t}px {report.rate(t):.4f}, "
        f"mean {report.mean_ms:.2f} ms, median {report.median_ms:.2f} ms, "
        f"stages edge={c['edge']} mser={c['mser']} none={c['none']}"
    )


def _cmd_eval(args: argparse.Namespace) -> int:
    track = not args.no_track
    t = min(5, args.max_threshold)
    if list_frames(args.frames_dir):
        report = run_eval(
            args.frames_dir,
            args.gt,
            _load_config(args.config),
            track=track,
            max_threshold=args.max_threshold,
        )
        _print_summary(args.frames_dir.name or str(args.frames_dir), report, t)
        if args.out_dir:
            write_report(report, args.out_dir)
        return 0

    # No frames at the top level: treat every subdirectory holding frames
    # plus its own copy of the ground-truth file as one sequence.
    sequences = discover_sequences(args.frames_dir, Path(args.gt).name)
    if not sequences:
        raise ImageIOError(
            f"no frame images or sequence subdirectories under {args.frames_dir}"
        )
    reports = run_eval_multi(
        sequences,
        args.config,
        track=track,
        max_threshold=args.max_threshold,
        jobs=args.jobs,
    )
    for name in sorted(reports):
        _print_summary(name, reports[name], t)
    overall = pooled_curve(reports, args.max_threshold)
    rate = dict(overall)[t]
    total = sum(len(r.frames) for r in reports.values())
    print(f"overall: {total} frames, rate@{t}px {rate:.4f}")
    if args.out_dir:
        out = Path(args.out_dir)
        for name, report in reports.items():
            write_report(report, out, prefix=f"{name}_")
        with open(out / "curve.csv", "w", newline="\n") as fh:
            fh.write("threshold,rate\n")
            for threshold, value in overall:
                fh.write(f"{threshold},{value:.6f}\n")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    spec, drift = parse_scene_config(args.scene)
    frames = render_sequence(spec, args.frames, drift)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "truth.csv", "w", newline="\n") as fh:
        fh.write("frame,x,y\n")
        for i, (img, (cx, cy)) in enumerate(frames):
            save_image(img, out / f"frame_{i:05d}.png")
            fh.write(f"{i},{cx:.6f},{cy:.6f}\n")
    print(f"wrote {len(frames)} frames and truth.csv to {out}")
    return 0


def _cmd_version(args: argparse.Namespace) -> int:
    print(f"pupilkit {__version__}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pupilkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="locate the pupil in a single image")
    p.add_argument("image", type=Path, help="PNG or PGM frame")
    p.add_argument("--config", type=Path, help="detector config file")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("frames_dir", type=Path, help="frame directory, or a root of sequence subdirectories")
    p.add_argument("gt", type=Path, help="ground-truth CSV (frame,x,y); in multi-sequence mode its filename is looked up inside each subdirectory")
    p.add_argument("--config", type=Path, help="detector config file")
    p.add_argument("--no-track", action="store_true", help="cold-start the tracker on every frame")
    p.add_argument("--out-dir", type=Path, help="write frames.csv and curve.csv here")
    p.add_argument("--max-threshold", type=_positive_int, default=15, help="largest error threshold in the curve (default 15)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="parallel workers for multi-sequence runs (default 1)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="render a synthetic labelled sequence")
    p.add_argument("scene", type=Path, help="scene config file (key = value)")
    p.add_argument("--out-dir", type=Path, required=True, help="output directory")
    p.add_argument("--frames", type=_positive_int, required=True, help="number of frames")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("version", help="print the package version")
    p.set_defaults(func=_cmd_version)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GroundTruthError, ImageIOError, ImageError, OSError) as exc:
        print(f"pupilkit: error: {exc}", file=sys.stderr)
        return 2
    except PupilkitError as exc:
        print(f"pupilkit: error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # last-resort guard so scripts see a code, not a traceback
        print(f"pupilkit: internal error: {exc!r}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
