"""Real-time pupil-centre localization for near-eye camera frames.

Two-stage detection: edge-based ellipse fitting first, a dark-region
fallback when edges are unusable, plus ROI tracking across frames. The
harness module scores detections against ground truth and the synth
module renders labelled test frames.
"""

from .detector import (
    Detection,
    DetectorConfig,
    Stage,
    TrackerState,
    detect_frame,
    preprocess,
)
from .ellipse import Ellipse, fit_ellipse
from .errors import (
    ConfigError,
    FitError,
    GroundTruthError,
    ImageError,
    ImageIOError,
    PupilkitError,
    SamplingError,
)
from .harness import (
    EvalReport,
    FrameResult,
    GroundTruth,
    detection_rate_curve,
    load_ground_truth,
    pixel_error,
    run_eval,
)
from .image import GrayImage, Rect, load_image, save_image
from .synth import SceneSpec, parse_scene_config, render, render_sequence

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Detection",
    "DetectorConfig",
    "Ellipse",
    "EvalReport",
    "FitError",
    "FrameResult",
    "GrayImage",
    "GroundTruth",
    "GroundTruthError",
    "ImageError",
    "ImageIOError",
    "PupilkitError",
    "Rect",
    "SamplingError",
    "SceneSpec",
    "Stage",
    "TrackerState",
    "detect_frame",
    "detection_rate_curve",
    "fit_ellipse",
    "load_ground_truth",
    "load_image",
    "parse_scene_config",
    "pixel_error",
    "preprocess",
    "render",
    "render_sequence",
    "run_eval",
    "save_image",
    "__version__",
]
