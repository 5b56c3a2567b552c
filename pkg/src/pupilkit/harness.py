"""Evaluation harness: ground truth, error curves, directory runs.

A frames directory is evaluated sequentially (one tracker per sequence)
against a `frame,x,y` ground-truth CSV, producing per-frame results and a
detection-rate-vs-threshold curve. A directory of sequence subdirectories
can be evaluated in parallel worker processes, one tracker each.
"""

from __future__ import annotations

import re
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detector import DetectorConfig, Detection, TrackerState, detect_frame
from .errors import GroundTruthError, ImageIOError
from .image import load_image

_TRAILING_DIGITS = re.compile(r"(\d+)$")
_IMAGE_SUFFIXES = {".png", ".pgm"}


@dataclass(frozen=True)
class GroundTruth:
    """Pupil centers in original image coordinates, keyed by frame index."""

    entries: dict[int, tuple[float, float]]

    def __len__(self) -> int:
        return len(self.entries)


def load_ground_truth(path: str | Path) -> GroundTruth:
    """Parse a `frame,x,y` CSV; an optional header and # comments are fine.

    Malformed lines, duplicate indices, and negative indices raise
    GroundTruthError with the offending line number.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise GroundTruthError(f"cannot read {path}: {exc}") from exc

    entries: dict[int, tuple[float, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if lineno == 1 and fields and fields[0].lower() == "frame":
            continue
        if len(fields) != 3:
            raise GroundTruthError(f"{path}: expected `frame,x,y`, got {raw!r}", lineno)
        try:
            idx = int(fields[0])
            x, y = float(fields[1]), float(fields[2])
        except ValueError:
            raise GroundTruthError(
                f"{path}: non-numeric field in {raw!r}", lineno
            ) from None
        if idx < 0:
            raise GroundTruthError(f"{path}: negative frame index {idx}", lineno)
        if idx in entries:
            raise GroundTruthError(f"{path}: duplicate frame index {idx}", lineno)
        entries[idx] = (x, y)
    return GroundTruth(entries)


def pixel_error(d: Detection, gt: tuple[float, float]) -> float | None:
    """Euclidean distance to ground truth; None marks a missed frame."""
    if d.center is None:
        return None
    return float(np.hypot(d.center[0] - gt[0], d.center[1] - gt[1]))


def detection_rate_curve(
    errors: list[float | None], max_t: int
) -> list[tuple[int, float]]:
    """Fraction of frames within t px for t = 1..max_t.

    Missed frames stay in the denominator at every threshold, so the curve
    is monotone non-decreasing but not forced to reach 1.
    """
    if not errors:
        raise ValueError("cannot build a detection-rate curve from zero frames")
    if max_t < 1:
        raise ValueError(f"max_t must be >= 1, got {max_t}")
    total = len(errors)
    return [
        (t, sum(1 for e in errors if e is not None and e <= t) / total)
        for t in range(1, max_t + 1)
    ]


def frame_index(path: Path) -> int | None:
    """Frame number encoded as the trailing digits of the file stem."""
    m = _TRAILING_DIGITS.search(path.stem)
    return int(m.group(1)) if m else None


def list_frames(frames_dir: str | Path) -> list[tuple[int, Path]]:
    """Indexed image files of a sequence directory, sorted by frame number."""
    frames_dir = Path(frames_dir)
    out = []
    for p in frames_dir.iterdir():
        if not p.is_file() or p.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        idx = frame_index(p)
        if idx is None:
            warnings.warn(f"{p.name}: no trailing frame number, skipped")
            continue
        out.append((idx, p))
    out.sort()
    return out


@dataclass(frozen=True)
class FrameResult:
    index: int
    detection: Detection
    error: float | None


@dataclass(frozen=True)
class EvalReport:
    """Everything run_eval measured over one frame sequence."""

    frames: list[FrameResult]
    curve: list[tuple[int, float]]
    mean_ms: float
    median_ms: float
    stage_counts: dict[str, int] = field(default_factory=dict)

    @property
    def errors(self) -> list[float | None]:
        return [f.error for f in self.frames]

    def rate(self, t: int) -> float:
        for threshold, value in self.curve:
            if threshold == t:
                return value
        raise KeyError(f"threshold {t} outside the computed curve")


def run_eval(
    frames_dir: str | Path,
    gt_path: str | Path,
    cfg: DetectorConfig | None = None,
    *,
    track: bool = True,
    max_threshold: int = 15,
) -> EvalReport:
    """Detect every labelled frame in order and score against ground truth.

    Frames without a ground-truth entry are skipped with a warning. The
    tracker carries across frames unless track=False, which re-detects each
    frame from a cold state. Latency covers detect_frame only.
    """
    cfg = cfg or DetectorConfig()
    gt = load_ground_truth(gt_path)
    indexed = list_frames(frames_dir)
    if not indexed:
        raise ImageIOError(f"no frame images found in {frames_dir}")

    results = []
    state = TrackerState()
    for idx, path in indexed:
        if idx not in gt.entries:
            warnings.warn(f"{path.name}: no ground truth for frame {idx}, excluded")
            continue
        img = load_image(path)
        if not track:
            state = TrackerState()
        det, state = detect_frame(img, state, cfg)
        results.append(FrameResult(idx, det, pixel_error(det, gt.entries[idx])))

    if not results:
        raise GroundTruthError(
            f"no frame in {frames_dir} has a ground-truth entry in {gt_path}"
        )
    times = [r.detection.elapsed_ms for r in results]
    counts: dict[str, int] = {"edge": 0, "mser": 0, "none": 0}
    for r in results:
        counts[r.detection.stage.value] += 1
    return EvalReport(
        frames=results,
        curve=detection_rate_curve([r.error for r in results], max_threshold),
        mean_ms=float(np.mean(times)),
        median_ms=float(np.median(times)),
        stage_counts=counts,
    )


def write_report(report: EvalReport, out_dir: str | Path, prefix: str = "") -> None:
    """Write <prefix>frames.csv and <prefix>curve.csv (6-decimal floats)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{prefix}frames.csv", "w", newline="\n") as fh:
        fh.write("frame,x,y,confidence,stage,used_roi,ms\n")
        for r in report.frames:
            d = r.detection
            x = f"{d.center[0]:.6f}" if d.center else ""
            y = f"{d.center[1]:.6f}" if d.center else ""
            fh.write(
                f"{r.index},{x},{y},{d.confidence:.6f},{d.stage.value},"
                f"{'true' if d.used_roi else 'false'},{d.elapsed_ms:.6f}\n"
            )
    with open(out_dir / f"{prefix}curve.csv", "w", newline="\n") as fh:
        fh.write("threshold,rate\n")
        for t, rate in report.curve:
            fh.write(f"{t},{rate:.6f}\n")


def discover_sequences(root: str | Path, gt_name: str) -> list[tuple[str, Path, Path]]:
    """Subdirectories of root that hold frames plus their own gt file."""
    root = Path(root)
    found = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        gt = sub / gt_name
        if gt.is_file() and list_frames(sub):
            found.append((sub.name, sub, gt))
    return found


def _eval_sequence_worker(args) -> tuple[str, EvalReport]:
    name, frames_dir, gt_path, config_path, track, max_threshold = args
    cfg = DetectorConfig.from_file(config_path) if config_path else DetectorConfig()
    report = run_eval(
        frames_dir, gt_path, cfg, track=track, max_threshold=max_threshold
    )
    return name, report


def run_eval_multi(
    sequences: list[tuple[str, Path, Path]],
    config_path: str | Path | None = None,
    *,
    track: bool = True,
    max_threshold: int = 15,
    jobs: int = 1,
) -> dict[str, EvalReport]:
    """Evaluate independent sequences, optionally in parallel processes.

    Each sequence keeps its own tracker; parallelism never crosses one.
    """
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    work = [
        (name, frames_dir, gt_path, config_path, track, max_threshold)
        for name, frames_dir, gt_path in sequences
    ]
    if jobs == 1 or len(work) <= 1:
        return dict(_eval_sequence_worker(w) for w in work)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return dict(pool.map(_eval_sequence_worker, work))


def pooled_curve(reports: dict[str, EvalReport], max_threshold: int = 15):
    """Overall curve across sequences: every frame weighs the same."""
    errors: list[float | None] = []
    for report in reports.values():
        errors.extend(report.errors)
    return detection_rate_curve(errors, max_threshold)
