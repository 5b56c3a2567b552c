"""Pipeline-level behavior: stage gating, merging, tracking, config files."""

import numpy as np
import pytest
from scipy import ndimage

from pupilkit.detector import (
    DetectorConfig,
    Detection,
    Stage,
    TrackerState,
    detect_frame,
    edge_stage,
    mser_stage,
    preprocess,
)
from pupilkit.edges import EdgeMap, EdgeSegment, canny
from pupilkit.ellipse import Ellipse
from pupilkit.errors import ConfigError
from pupilkit.image import GrayImage
from pupilkit.synth import SceneSpec, render, render_sequence


def ellipse_raster(w, h, e, inner=20, outer=120):
    """Filled dark ellipse on a brighter field, plus its boundary mask."""
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ct, st = np.cos(e.theta), np.sin(e.theta)
    u = ((xs - e.cx) * ct + (ys - e.cy) * st) / e.a
    v = (-(xs - e.cx) * st + (ys - e.cy) * ct) / e.b
    inside = u * u + v * v <= 1.0
    img = np.full((h, w), outer, dtype=np.uint8)
    img[inside] = inner
    t = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    bx = np.round(e.cx + e.a * np.cos(t) * ct - e.b * np.sin(t) * st).astype(int)
    by = np.round(e.cy + e.a * np.cos(t) * st + e.b * np.sin(t) * ct).astype(int)
    mask = np.zeros((h, w), dtype=bool)
    mask[by, bx] = True
    return GrayImage(img), EdgeMap(mask)


def arc_segment(e, t0, t1, n=60):
    t = np.linspace(t0, t1, n)
    ct, st = np.cos(e.theta), np.sin(e.theta)
    x = e.cx + e.a * np.cos(t) * ct - e.b * np.sin(t) * st
    y = e.cy + e.a * np.cos(t) * st + e.b * np.sin(t) * ct
    pts = np.unique(np.round(np.column_stack((x, y))).astype(np.int32), axis=0)
    return EdgeSegment(pts)


class TestEdgeStage:
    def test_clean_ring_candidate(self):
        truth = Ellipse(60.0, 45.0, 18.0, 14.0, 0.3)
        img, edges = ellipse_raster(120, 90, truth)
        cfg = DetectorConfig()
        seg = arc_segment(truth, 0.0, 2 * np.pi, 240)
        cand = edge_stage(img, edges, [seg], cfg)
        assert cand is not None
        assert cand.source is Stage.EDGE
        assert np.hypot(cand.ellipse.cx - truth.cx, cand.ellipse.cy - truth.cy) < 1.0
        assert cand.goodness.value > cfg.tau_good

    def test_two_arcs_merge_to_one(self):
        # A glint gap splits the boundary; the two arcs share the inner
        # median and their individual fits agree on the center, so the
        # merge criteria are satisfied and the union is refitted.
        truth = Ellipse(60.0, 45.0, 18.0, 14.0, 0.0)
        img, edges = ellipse_raster(120, 90, truth)
        cfg = DetectorConfig()
        upper = arc_segment(truth, np.radians(15), np.radians(165))
        lower = arc_segment(truth, np.radians(195), np.radians(345))
        cand = edge_stage(img, edges, [upper, lower], cfg)
        assert cand is not None
        assert np.hypot(cand.ellipse.cx - truth.cx, cand.ellipse.cy - truth.cy) < 1.0

    def test_straight_edge_only_gives_none(self):
        img = GrayImage(np.full((90, 120), 120, dtype=np.uint8))
        edges = EdgeMap(np.zeros((90, 120), dtype=bool))
        line = EdgeSegment(np.column_stack(
            (np.arange(10, 80, dtype=np.int32),
             np.full(70, 30, dtype=np.int32))))
        assert edge_stage(img, edges, [line], DetectorConfig()) is None


def blurred_disk(w=160, h=120, cx=80, cy=60, r=20, sigma=3.0):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.where((xs - cx) ** 2 + (ys - cy) ** 2 <= r * r, 30.0, 140.0)
    img = ndimage.gaussian_filter(img, sigma, mode="nearest")
    return GrayImage(np.round(img).astype(np.uint8))


class TestMserStage:
    def test_blurred_pupil_recovered(self):
        img = blurred_disk()
        cfg = DetectorConfig()
        # the strict map is starved by the blur; that is the scenario
        # this stage exists for
        assert not canny(img, cfg.canny_low, cfg.canny_high).mask.any()
        support = canny(img, cfg.canny_low / 2, cfg.canny_high / 2)
        cand = mser_stage(img, support, cfg)
        assert cand is not None
        assert cand.source is Stage.MSER
        assert np.hypot(cand.ellipse.cx - 80, cand.ellipse.cy - 60) <= 2.0

    def test_pure_noise_gives_none(self):
        # the stage sees what detect_frame feeds it: the preprocessed frame
        rng = np.random.default_rng(5)
        raw = GrayImage(rng.integers(0, 256, size=(480, 640), dtype=np.uint8))
        img = preprocess(raw)
        cfg = DetectorConfig()
        support = canny(img, cfg.canny_low / 2, cfg.canny_high / 2)
        assert mser_stage(img, support, cfg) is None

    def test_axis_ratio_gate(self):
        cfg = DetectorConfig()
        ok = Ellipse(80.0, 60.0, 16.0, 8.0, 0.0)
        img, _ = ellipse_raster(160, 120, ok, inner=20, outer=160)
        support = canny(img, cfg.canny_low / 2, cfg.canny_high / 2)
        cand = mser_stage(img, support, cfg)
        assert cand is not None

        thin = Ellipse(80.0, 60.0, 24.0, 6.0, 0.0)
        img2, _ = ellipse_raster(160, 120, thin, inner=20, outer=160)
        support2 = canny(img2, cfg.canny_low / 2, cfg.canny_high / 2)
        assert mser_stage(img2, support2, cfg) is None


class TestDetectFrame:
    def test_first_frame_no_roi(self):
        img, _ = render(SceneSpec(noise_sigma=2.0))
        det, state = detect_frame(img, TrackerState(), DetectorConfig())
        assert not det.used_roi
        assert det.center is not None
        assert state.last_center is not None

    def test_detection_in_original_coordinates(self):
        spec = SceneSpec(pupil=Ellipse(400.0, 300.0, 45.0, 40.0, 0.1))
        img, truth = render(spec)
        det, _ = detect_frame(img, TrackerState(), DetectorConfig())
        assert det.center is not None
        assert np.hypot(det.center[0] - truth[0], det.center[1] - truth[1]) <= 5.0

    def test_drift_sequence_uses_roi_and_matches_full(self):
        base = SceneSpec(pupil=Ellipse(300.0, 240.0, 40.0, 34.0, 0.2),
                         noise_sigma=2.0, seed=11)
        frames = render_sequence(base, 5, drift=(3.0, 0.0))
        cfg = DetectorConfig()
        state = TrackerState()
        for i, (img, truth) in enumerate(frames):
            det, state = detect_frame(img, state, cfg)
            assert det.center is not None
            assert det.used_roi == (i > 0)
            full, _ = detect_frame(img, TrackerState(), cfg)
            dx = det.center[0] - full.center[0]
            dy = det.center[1] - full.center[1]
            assert np.hypot(dx, dy) <= 0.5
            assert np.hypot(det.center[0] - truth[0], det.center[1] - truth[1]) <= 5.0

    def test_full_occlusion_resets_tracker(self):
        # circular pupil filling the whole iris: once the lid reaches its
        # bottom no dark structure remains anywhere in the frame
        covered, _ = render(SceneSpec(pupil=Ellipse(320.0, 240.0, 50.0, 50.0, 0.0),
                                      iris_radius=50.0, occlusion=1.0,
                                      noise_sigma=2.0, seed=3))
        det, state = detect_frame(covered, TrackerState((150.0, 120.0), 20.0, 0.9),
                                  DetectorConfig())
        assert det.center is None
        assert det.stage is Stage.NONE
        assert det.confidence == 0.0
        assert state.last_center is None
        assert state.last_goodness == 0.0

        clear, _ = render(SceneSpec(seed=4))
        det2, _ = detect_frame(clear, state, DetectorConfig())
        assert not det2.used_roi  # the failure above dropped the gate
        assert det2.center is not None

    def test_noise_frame_detects_nothing(self):
        rng = np.random.default_rng(5)
        img = GrayImage(rng.integers(0, 256, size=(480, 640), dtype=np.uint8))
        det, state = detect_frame(img, TrackerState(), DetectorConfig())
        assert det.center is None
        assert state.last_center is None

    def test_deterministic_modulo_timing(self):
        img, _ = render(SceneSpec(noise_sigma=3.0, seed=9))
        outs = []
        for _ in range(2):
            det, _ = detect_frame(img, TrackerState(), DetectorConfig())
            outs.append((det.center, det.confidence, det.stage, det.used_roi))
        assert outs[0] == outs[1]

    def test_confidence_above_threshold(self):
        cfg = DetectorConfig()
        img, _ = render(SceneSpec(noise_sigma=4.0, seed=21))
        det, _ = detect_frame(img, TrackerState(), cfg)
        assert det.center is not None
        assert det.confidence > cfg.tau_good
        assert det.elapsed_ms > 0


class TestDetectorConfig:
    def test_tau_track_follows_tau_good(self):
        assert DetectorConfig().tau_track == DetectorConfig().tau_good
        cfg = DetectorConfig(tau_good=0.4)
        assert cfg.tau_track == 0.4
        split = DetectorConfig(tau_good=0.4, tau_track=0.6)
        assert split.tau_track == 0.6

    def test_validation(self):
        with pytest.raises(ConfigError):
            DetectorConfig(area_min_frac=0.5, area_max_frac=0.1)
        with pytest.raises(ConfigError):
            DetectorConfig(tau_good=1.5)
        with pytest.raises(ConfigError):
            DetectorConfig(dp_epsilon=-1.0)

    def test_from_file(self, tmp_path):
        f = tmp_path / "det.cfg"
        f.write_text(
            "# tuned for the bench rig\n"
            "canny_low = 40\n"
            "canny_high = 95  # strict\n"
            "tau_good = 0.3\n"
            "mser.delta = 3\n"
            "mser.max_variation = 0.5\n"
        )
        cfg = DetectorConfig.from_file(f)
        assert cfg.canny_low == 40.0
        assert cfg.canny_high == 95.0
        assert cfg.tau_good == 0.3
        assert cfg.tau_track == 0.3  # follows tau_good when not given
        assert cfg.mser.delta == 3
        assert cfg.mser.max_variation == 0.5
        assert cfg.min_seg_len == DetectorConfig().min_seg_len

    def test_from_file_unknown_key(self, tmp_path):
        f = tmp_path / "det.cfg"
        f.write_text("canny_low = 40\nspeed = 11\n")
        with pytest.raises(ConfigError, match="2"):
            DetectorConfig.from_file(f)

    def test_from_file_duplicate_key(self, tmp_path):
        f = tmp_path / "det.cfg"
        f.write_text("tau_good = 0.3\ntau_good = 0.4\n")
        with pytest.raises(ConfigError, match="duplicate"):
            DetectorConfig.from_file(f)

    def test_from_file_bad_value(self, tmp_path):
        f = tmp_path / "det.cfg"
        f.write_text("canny_low = fast\n")
        with pytest.raises(ConfigError, match="1"):
            DetectorConfig.from_file(f)

    def test_from_file_missing_equals(self, tmp_path):
        f = tmp_path / "det.cfg"
        f.write_text("canny_low 40\n")
        with pytest.raises(ConfigError):
            DetectorConfig.from_file(f)
