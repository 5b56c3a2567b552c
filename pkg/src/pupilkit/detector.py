"""Pipeline orchestration: candidate selection, fallback, and tracking.

A frame is downsampled to half resolution, normalized, smoothed, and
searched by the edge stage (Canny chains fitted with ellipses, pruned,
merged). When that fails the dark-region fallback runs over the same
crop. A detection with enough confidence shrinks the next frame's search
to a window around the last center; any failure widens it back out.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .edges import EdgeMap, canny, trace_segments, approx_polyline, split_at_inflections
from .ellipse import Ellipse, Goodness, axis_ratio, ellipse_area, fit_ellipse, goodness, sample_ring_medians
from .errors import ConfigError, FitError, SamplingError
from .image import (
    GrayImage,
    Rect,
    crop,
    downsample_half,
    gaussian_blur_5x5,
    median_filter_3x3,
    normalize_range,
)
from .mser import MserParams, detect_multiscale


class Stage(Enum):
    """Which pipeline stage produced a result."""

    EDGE = "edge"
    MSER = "mser"
    NONE = "none"


@dataclass(frozen=True)
class PupilCandidate:
    """One scored pupil hypothesis at processing scale."""

    ellipse: Ellipse
    goodness: Goodness
    source: Stage
    inner_median: int


@dataclass(frozen=True)
class DetectorConfig:
    """Every tunable threshold of the pipeline.

    Area bounds are fractions of the searched image's area. tau_track
    defaults to tau_good when not given, keeping the acceptance gate and
    the tracking gate aligned unless deliberately split.

    The canny pair is deliberately strict: on a range-normalized image a
    crisp pupil boundary clears 180 easily, while a defocused one drops
    out and routes the frame to the intensity fallback instead of letting
    a skewed arc fit win. Confidence of accepted detections sits around
    0.25 and up, so tau_good = 0.20 rejects those skewed fits without
    touching healthy ones.
    """

    canny_low: float = 90.0
    canny_high: float = 180.0
    min_seg_len: int = 10
    dp_epsilon: float = 1.5
    area_min_frac: float = 0.0005
    area_max_frac: float = 0.10
    max_axis_ratio: float = 3.0
    tau_int: int = 100
    merge_di: float = 10.0
    merge_dist: float = 5.0
    tau_good: float = 0.20
    tau_track: float | None = None
    track_k: float = 3.0
    octaves: int = 2
    mser: MserParams = MserParams(min_area=1.0, max_area=float(2**31), max_level=100)

    def __post_init__(self):
        if self.tau_track is None:
            object.__setattr__(self, "tau_track", self.tau_good)
        if not 0 < self.area_min_frac < self.area_max_frac:
            raise ConfigError(
                f"need 0 < area_min_frac < area_max_frac, got "
                f"{self.area_min_frac}, {self.area_max_frac}"
            )
        if not 0 <= self.tau_good <= 1 or not 0 <= self.tau_track <= 1:
            raise ConfigError("tau_good and tau_track must lie in [0, 1]")
        for name in ("canny_low", "canny_high", "min_seg_len", "dp_epsilon",
                     "max_axis_ratio", "tau_int", "merge_di", "merge_dist",
                     "track_k", "octaves"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @classmethod
    def from_file(cls, path: str | Path) -> "DetectorConfig":
        """Parse a flat `key = value` config file.

        `#` starts a comment; blank lines are skipped. Unknown or repeated
        keys are errors. Tuning knobs of the fallback stage are addressed
        as mser.delta, mser.max_variation, mser.min_diversity (its area
        band and level cap are derived per frame, not configurable here).
        """
        int_keys = {"min_seg_len", "tau_int", "octaves", "mser.delta"}
        float_keys = {
            "canny_low", "canny_high", "dp_epsilon", "area_min_frac",
            "area_max_frac", "max_axis_ratio", "merge_di", "merge_dist",
            "tau_good", "tau_track", "track_k",
            "mser.max_variation", "mser.min_diversity",
        }
        values: dict[str, float] = {}
        text = Path(path).read_text()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
            key, _, val = (part.strip() for part in line.partition("="))
            if key not in int_keys and key not in float_keys:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                values[key] = int(val) if key in int_keys else float(val)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: invalid value {val!r} for {key!r}"
                ) from None

        mser_kwargs = {
            k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("mser.")
        }
        flat = {k: v for k, v in values.items() if not k.startswith("mser.")}
        cfg = cls(**flat)
        if "tau_good" in flat and "tau_track" not in flat:
            cfg = replace(cfg, tau_track=flat["tau_good"])
        if mser_kwargs:
            cfg = replace(cfg, mser=replace(cfg.mser, **mser_kwargs))
        return cfg


@dataclass(frozen=True)
class TrackerState:
    """What detection on the previous frame left behind."""

    last_center: tuple[float, float] | None = None  # processing scale
    last_major: float = 0.0
    last_goodness: float = 0.0


@dataclass(frozen=True)
class Detection:
    """Per-frame result in original image coordinates."""

    center: tuple[float, float] | None
    confidence: float
    stage: Stage
    used_roi: bool
    elapsed_ms: float


def _candidate_sort_key(c: PupilCandidate):
    # max goodness wins; ties fall to the darker, then leftmost, then topmost
    return (-c.goodness.value, c.inner_median, c.ellipse.cx, c.ellipse.cy)


def _gated_ellipse(e: Ellipse, img: GrayImage, cfg: DetectorConfig) -> bool:
    """Area, shape, and in-bounds gates shared by both stages."""
    image_area = img.width * img.height
    area = ellipse_area(e)
    if not cfg.area_min_frac * image_area <= area <= cfg.area_max_frac * image_area:
        return False
    if axis_ratio(e) > cfg.max_axis_ratio:
        return False
    return 0 <= e.cx < img.width and 0 <= e.cy < img.height


def edge_stage(
    img: GrayImage,
    edges: EdgeMap,
    segments: list,
    cfg: DetectorConfig,
) -> PupilCandidate | None:
    """Best edge-based pupil hypothesis, or None if nothing convincing.

    Each (already split) segment is fitted with an ellipse and pruned by
    area, axis ratio, and inner darkness. Survivors are sorted darkest
    first and greedily merged pairwise when their inner medians lie within
    merge_di gray levels and their centers within merge_dist pixels; a
    merged pair is refitted from the union of the point sets.
    """
    fitted = []  # (inner_median, ellipse, points)
    for seg in segments:
        if len(seg.points) < 5:
            continue
        try:
            e = fit_ellipse(seg.points.astype(np.float64))
        except FitError:
            continue
        if not _gated_ellipse(e, img, cfg):
            continue
        try:
            med_inner, _ = sample_ring_medians(img, e, 0.7, 1.3, 64)
        except SamplingError:
            continue
        if med_inner >= cfg.tau_int:
            continue
        fitted.append((med_inner, e, seg.points))

    fitted.sort(key=lambda f: (f[0], f[1].cx, f[1].cy, f[1].a))

    merged: list[tuple[int, Ellipse, np.ndarray]] = []
    consumed = [False] * len(fitted)
    for i in range(len(fitted)):
        if consumed[i]:
            continue
        med_i, e_i, pts_i = fitted[i]
        for j in range(i + 1, len(fitted)):
            if consumed[j]:
                continue
            med_j, e_j, pts_j = fitted[j]
            if abs(med_i - med_j) > cfg.merge_di:
                continue
            if np.hypot(e_i.cx - e_j.cx, e_i.cy - e_j.cy) > cfg.merge_dist:
                continue
            union = np.vstack((pts_i, pts_j))
            try:
                e_new = fit_ellipse(union.astype(np.float64))
            except FitError:
                continue
            if not _gated_ellipse(e_new, img, cfg):
                continue
            med_i, e_i, pts_i = min(med_i, med_j), e_new, union
            consumed[j] = True
        merged.append((med_i, e_i, pts_i))

    candidates = []
    for med, e, _ in merged:
        try:
            g = goodness(img, edges, e)
        except SamplingError:
            continue
        candidates.append(PupilCandidate(e, g, Stage.EDGE, med))

    if not candidates:
        return None
    best = min(candidates, key=_candidate_sort_key)
    return best if best.goodness.value > cfg.tau_good else None


def _mser_params(img: GrayImage, cfg: DetectorConfig) -> MserParams:
    image_area = img.width * img.height
    return replace(
        cfg.mser,
        min_area=cfg.area_min_frac * image_area,
        max_area=cfg.area_max_frac * image_area,
        max_level=cfg.tau_int,
    )


def mser_stage(img: GrayImage, edges: EdgeMap, cfg: DetectorConfig) -> PupilCandidate | None:
    """Fallback: stable dark regions fitted through their contours.

    Fitted ellipses pass the same area/ratio/bounds gates as edge-stage
    candidates, so region speckle whose contour fits a degenerate ellipse
    cannot win on a frame of pure noise.
    """
    regions = detect_multiscale(img, _mser_params(img, cfg), octaves=cfg.octaves)
    candidates = []
    for r in regions:
        if len(r.boundary) < 5:
            continue
        try:
            e = fit_ellipse(r.boundary.astype(np.float64))
        except FitError:
            continue
        if not _gated_ellipse(e, img, cfg):
            continue
        try:
            g = goodness(img, edges, e)
            med_inner, _ = sample_ring_medians(img, e, 0.7, 1.3, 64)
        except SamplingError:
            continue
        candidates.append(PupilCandidate(e, g, Stage.MSER, med_inner))

    if not candidates:
        return None
    best = min(candidates, key=_candidate_sort_key)
    return best if best.goodness.value > cfg.tau_good else None


def _run_stages(img: GrayImage, cfg: DetectorConfig) -> PupilCandidate | None:
    edges = canny(img, cfg.canny_low, cfg.canny_high)
    segments = []
    for seg in trace_segments(edges, cfg.min_seg_len):
        poly = approx_polyline(seg, cfg.dp_epsilon)
        segments.extend(split_at_inflections(seg, poly))
    cand = edge_stage(img, edges, segments, cfg)
    if cand is None:
        # The fallback exists for frames where the strict edge map came up
        # short, so its support is judged against a gentler map; reusing
        # the starved one would veto every fallback candidate outright.
        support = canny(img, cfg.canny_low / 2.0, cfg.canny_high / 2.0)
        cand = mser_stage(img, support, cfg)
    return cand


def preprocess(img: GrayImage) -> GrayImage:
    """Half-resolution, range-normalized, smoothed working image."""
    return median_filter_3x3(gaussian_blur_5x5(normalize_range(downsample_half(img))))


def detect_frame(
    img: GrayImage,
    state: TrackerState = TrackerState(),
    cfg: DetectorConfig = DetectorConfig(),
) -> tuple[Detection, TrackerState]:
    """Locate the pupil center in one original-resolution frame.

    When the previous frame's confidence cleared tau_track, the search is
    restricted to a window around the previous center (falling back to the
    whole frame within the same call if that window comes up empty). The
    returned center is mapped back to original coordinates by doubling.
    """
    t0 = time.perf_counter()
    proc = preprocess(img)

    used_roi = False
    cand = None
    if state.last_center is not None and state.last_goodness > cfg.tau_track:
        half = max(40.0, cfg.track_k * state.last_major)
        cx, cy = state.last_center
        x0 = max(int(np.floor(cx - half + 0.5)), 0)
        y0 = max(int(np.floor(cy - half + 0.5)), 0)
        x1 = min(int(np.floor(cx + half + 0.5)), proc.width - 1)
        y1 = min(int(np.floor(cy + half + 0.5)), proc.height - 1)
        if x1 > x0 and y1 > y0:
            window = crop(proc, Rect(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
            cand = _run_stages(window, cfg)
            if cand is not None:
                used_roi = True
                shifted = Ellipse(
                    cand.ellipse.cx + x0,
                    cand.ellipse.cy + y0,
                    cand.ellipse.a,
                    cand.ellipse.b,
                    cand.ellipse.theta,
                )
                cand = PupilCandidate(shifted, cand.goodness, cand.source, cand.inner_median)

    if cand is None:
        cand = _run_stages(proc, cfg)

    elapsed = (time.perf_counter() - t0) * 1000.0
    if cand is None:
        return (
            Detection(None, 0.0, Stage.NONE, used_roi, elapsed),
            TrackerState(None, 0.0, 0.0),
        )
    e = cand.ellipse
    detection = Detection(
        center=(2.0 * e.cx, 2.0 * e.cy),
        confidence=cand.goodness.value,
        stage=cand.source,
        used_roi=used_roi,
        elapsed_ms=elapsed,
    )
    new_state = TrackerState((e.cx, e.cy), e.a, cand.goodness.value)
    return detection, new_state
