"""Tests for ellipse fitting, geometry, ring sampling, and the fit score."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pupilkit.edges import EdgeMap, canny
from pupilkit.ellipse import (
    Ellipse,
    axis_ratio,
    edge_support,
    ellipse_area,
    fit_ellipse,
    goodness,
    sample_ring_medians,
)
from pupilkit.errors import FitError, SamplingError
from pupilkit.image import GrayImage


def ellipse_points(cx, cy, a, b, theta, n, phase=0.0):
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False) + phase
    ct, st_ = np.cos(theta), np.sin(theta)
    x = cx + a * np.cos(t) * ct - b * np.sin(t) * st_
    y = cy + a * np.cos(t) * st_ + b * np.sin(t) * ct
    return np.column_stack((x, y))


def lower_median_oracle(values):
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def assert_params_close(e, cx, cy, a, b, theta, tol):
    assert abs(e.cx - cx) <= tol
    assert abs(e.cy - cy) <= tol
    assert abs(e.a - a) <= tol
    assert abs(e.b - b) <= tol
    # rotation is only meaningful modulo pi, and only when a != b
    if abs(a - b) > 1e-9:
        d = (e.theta - theta) % np.pi
        assert min(d, np.pi - d) <= tol


class TestEllipseType:
    def test_axes_order_enforced(self):
        with pytest.raises(ValueError):
            Ellipse(0, 0, 2.0, 3.0, 0.0)

    def test_theta_normalized(self):
        e = Ellipse(0, 0, 5.0, 3.0, np.pi + 0.4)
        assert 0 <= e.theta < np.pi
        assert e.theta == pytest.approx(0.4)

    def test_circle_reports_theta_zero(self):
        assert Ellipse(1, 1, 2.0, 2.0, 1.1).theta == 0.0


class TestFitEllipse:
    def test_recovers_known_parameters(self):
        pts = ellipse_points(10, 8, 5, 3, 0.4, 20)
        e = fit_ellipse(pts)
        assert_params_close(e, 10, 8, 5, 3, 0.4, 1e-6)

    def test_circle_at_origin(self):
        pts = ellipse_points(0, 0, 4, 4, 0.0, 8)
        e = fit_ellipse(pts)
        assert e.cx == pytest.approx(0, abs=1e-9)
        assert e.cy == pytest.approx(0, abs=1e-9)
        assert e.a == pytest.approx(4, abs=1e-9)
        assert e.b == pytest.approx(4, abs=1e-9)

    def test_four_points_rejected(self):
        with pytest.raises(FitError):
            fit_ellipse(np.array([(0, 0), (1, 0), (0, 1), (1, 1)], dtype=float))

    def test_collinear_points_rejected(self):
        pts = np.column_stack((np.arange(10, dtype=float), np.zeros(10)))
        with pytest.raises(FitError):
            fit_ellipse(pts)

    def test_translation_equivariance(self):
        pts = ellipse_points(0, 0, 6, 2.5, 1.0, 24)
        e0 = fit_ellipse(pts)
        e1 = fit_ellipse(pts + np.array([13.0, -7.0]))
        assert e1.cx - e0.cx == pytest.approx(13.0, abs=1e-9)
        assert e1.cy - e0.cy == pytest.approx(-7.0, abs=1e-9)
        assert e1.a == pytest.approx(e0.a, abs=1e-9)
        assert e1.b == pytest.approx(e0.b, abs=1e-9)

    @given(
        st.floats(-50, 50),
        st.floats(-50, 50),
        st.floats(2, 40),
        st.floats(0.21, 1.0),
        st.floats(0, np.pi),
        st.integers(0, 2**31),
    )
    @settings(max_examples=80, deadline=None)
    def test_recovery_property(self, cx, cy, a, ratio, theta, seed):
        b = max(a * ratio, a / 5.0)  # keep a/b <= 5
        phase = np.random.default_rng(seed).uniform(0, np.pi)
        pts = ellipse_points(cx, cy, a, b, theta, 16, phase=phase)
        e = fit_ellipse(pts)
        scale = max(1.0, abs(cx), abs(cy), a)
        assert_params_close(e, cx, cy, max(a, b), min(a, b), theta, 1e-6 * scale)

    def test_half_arc_still_recovers(self):
        t = np.linspace(0.3, np.pi, 30)
        x = 15 + 7 * np.cos(t)
        y = 12 + 4 * np.sin(t)
        e = fit_ellipse(np.column_stack((x, y)))
        assert_params_close(e, 15, 12, 7, 4, 0.0, 1e-6)


class TestGeometry:
    def test_unit_circle_area(self):
        assert ellipse_area(Ellipse(0, 0, 1, 1, 0)) == pytest.approx(np.pi)

    def test_area_formula(self):
        assert ellipse_area(Ellipse(0, 0, 5, 3, 0)) == pytest.approx(15 * np.pi)

    def test_area_scaling_law(self):
        small = ellipse_area(Ellipse(0, 0, 2, 2, 0))
        big = ellipse_area(Ellipse(0, 0, 6, 6, 0))
        assert big == pytest.approx(9 * small)

    def test_circle_ratio_is_one(self):
        assert axis_ratio(Ellipse(0, 0, 3, 3, 0)) == pytest.approx(1.0)

    def test_ratio_formula(self):
        assert axis_ratio(Ellipse(0, 0, 6, 2, 0)) == pytest.approx(3.0)

    def test_ratio_and_area_rotation_invariant(self):
        e0 = Ellipse(5, 5, 6, 2, 0.3)
        e1 = Ellipse(5, 5, 6, 2, 0.3 + 0.7)
        assert axis_ratio(e0) == axis_ratio(e1)
        assert ellipse_area(e0) == ellipse_area(e1)


def two_tone_disk(size=40, cx=20.0, cy=20.0, r=10.0, inner=20, outer=200):
    yy, xx = np.mgrid[0:size, 0:size]
    inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    return GrayImage(np.where(inside, inner, outer).astype(np.uint8))


class TestRingMedians:
    def test_two_tone_disk(self):
        img = two_tone_disk()
        e = Ellipse(20, 20, 10, 10, 0)
        med_in, med_out = sample_ring_medians(img, e, 0.7, 1.3, 64)
        assert med_in == 20
        assert med_out == 200

    def test_constant_image(self):
        img = GrayImage(np.full((30, 30), 88, dtype=np.uint8))
        med_in, med_out = sample_ring_medians(img, Ellipse(15, 15, 6, 4, 0.5), 0.7, 1.3, 32)
        assert med_in == med_out == 88

    def test_radial_ramp_matches_pixel_oracle(self):
        yy, xx = np.mgrid[0:50, 0:50]
        ramp = np.clip(np.hypot(xx - 25, yy - 25) * 5, 0, 255).astype(np.uint8)
        img = GrayImage(ramp)
        e = Ellipse(25, 25, 12, 8, 0.9)
        n = 48
        med_in, med_out = sample_ring_medians(img, e, 0.7, 1.3, n)

        for scale, got in ((0.7, med_in), (1.3, med_out)):
            samples = []
            for x, y in ellipse_points(e.cx, e.cy, e.a * scale, e.b * scale, e.theta, n):
                ix = int(np.floor(x + 0.5))
                iy = int(np.floor(y + 0.5))
                if 0 <= ix < 50 and 0 <= iy < 50:
                    samples.append(int(ramp[iy, ix]))
            assert got == lower_median_oracle(samples)

    def test_scale_ordering_enforced(self):
        img = two_tone_disk()
        with pytest.raises(ValueError):
            sample_ring_medians(img, Ellipse(20, 20, 10, 10, 0), 1.3, 0.7, 64)

    def test_all_out_of_bounds_raises(self):
        img = GrayImage(np.zeros((10, 10), dtype=np.uint8))
        with pytest.raises(SamplingError):
            sample_ring_medians(img, Ellipse(500, 500, 5, 5, 0), 0.7, 1.3, 16)


class TestGoodness:
    def test_ideal_pupil(self):
        img = two_tone_disk()
        em = canny(img)
        e = Ellipse(20, 20, 10, 10, 0)
        g = goodness(img, em, e, n=64, support_dist=2.0)
        assert g.edge_support >= 0.95
        assert g.contrast == pytest.approx((200 - 20) / 255, abs=0.02)
        assert g.value >= 0.67
        assert g.value == pytest.approx(g.edge_support * g.contrast)

    def test_featureless_region_scores_zero(self):
        img = GrayImage(np.full((40, 40), 150, dtype=np.uint8))
        em = EdgeMap(np.zeros((40, 40), dtype=bool))
        g = goodness(img, em, Ellipse(20, 20, 8, 6, 0), n=32, support_dist=2.0)
        assert g.contrast == 0.0
        assert g.value == 0.0

    def test_inverted_pupil_clamps_to_zero(self):
        img = two_tone_disk(inner=200, outer=20)  # bright disk on dark field
        em = canny(img)
        g = goodness(img, em, Ellipse(20, 20, 10, 10, 0), n=32, support_dist=2.0)
        assert g.contrast == 0.0
        assert g.value == 0.0

    def test_support_counts_chebyshev_window(self):
        # circle (20,20) r=10 sampled 16 times has exact lattice samples at
        # the four cardinal points; edge pixels exactly 2 px away (Chebyshev)
        # support those four samples and no others
        e = Ellipse(20, 20, 10, 10, 0)
        mask = np.zeros((40, 40), dtype=bool)
        for x, y in ((32, 20), (20, 32), (8, 20), (20, 8)):
            mask[y, x] = True
        assert edge_support(EdgeMap(mask), e, n=16, support_dist=2.0) == 4 / 16
        # one step further out and the window no longer reaches them
        assert edge_support(EdgeMap(mask), e, n=16, support_dist=1.0) == 0.0

    def test_minimum_sample_count_enforced(self):
        img = two_tone_disk()
        em = canny(img)
        with pytest.raises(ValueError):
            goodness(img, em, Ellipse(20, 20, 10, 10, 0), n=8, support_dist=2.0)
