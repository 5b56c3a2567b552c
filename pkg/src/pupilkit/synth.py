"""Synthetic dark-pupil eye frames with exact ground truth.

Scenes are composed per 2x2-supersampled subpixel: sclera, iris disk,
pupil ellipse, glint disks, then an eyelid half-plane, followed by optional
Gaussian blur and seeded Gaussian noise. The pupil center is returned
exactly as specified, so rendered frames double as accuracy oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .ellipse import Ellipse
from .errors import ConfigError, ImageError
from .image import GrayImage, _round_half_up

_SUB_OFFSETS = ((-0.25, -0.25), (-0.25, 0.25), (0.25, -0.25), (0.25, 0.25))


@dataclass(frozen=True)
class SceneSpec:
    """Declarative description of one synthetic eye frame (original scale)."""

    width: int = 640
    height: int = 480
    pupil: Ellipse = Ellipse(320.0, 240.0, 50.0, 42.0, 0.0)
    iris_radius: float = 140.0
    pupil_intensity: float = 25.0
    iris_intensity: float = 90.0
    sclera_intensity: float = 190.0
    illumination: float = 0.0  # added to all three surface intensities
    glints: tuple[tuple[float, float, float], ...] = ()  # (cx, cy, radius)
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    occlusion: float = 0.0  # fraction of the pupil's height hidden by the lid
    seed: int = 0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ImageError(f"image too small: {self.width}x{self.height}")
        if not self.pupil_intensity < self.iris_intensity < self.sclera_intensity:
            raise ImageError("intensities must satisfy pupil < iris < sclera")
        for v in (self.pupil_intensity, self.iris_intensity, self.sclera_intensity):
            if not 0 <= v <= 255:
                raise ImageError(f"surface intensity {v} outside [0, 255]")
        if not 0 <= self.occlusion <= 1:
            raise ImageError(f"occlusion must be in [0, 1], got {self.occlusion}")
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ImageError("blur/noise sigmas must be non-negative")
        p = self.pupil
        if p.a > self.iris_radius:
            raise ImageError("pupil does not fit inside the iris")
        if (
            p.cx - self.iris_radius < 0
            or p.cx + self.iris_radius > self.width - 1
            or p.cy - self.iris_radius < 0
            or p.cy + self.iris_radius > self.height - 1
        ):
            raise ImageError("iris extends outside the image")


def _pupil_vertical_extent(p: Ellipse) -> float:
    return float(np.hypot(p.a * np.sin(p.theta), p.b * np.cos(p.theta)))


def render(spec: SceneSpec) -> tuple[GrayImage, tuple[float, float]]:
    """Rasterise one frame; returns the image and the exact pupil center."""
    p = spec.pupil
    sclera = spec.sclera_intensity + spec.illumination
    iris = spec.iris_intensity + spec.illumination
    pupil = spec.pupil_intensity + spec.illumination

    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    acc = np.zeros((spec.height, spec.width), dtype=np.float64)
    cos_t, sin_t = np.cos(p.theta), np.sin(p.theta)
    ry = _pupil_vertical_extent(p)
    y_lid = (p.cy - ry) + spec.occlusion * 2.0 * ry

    for dx, dy in _SUB_OFFSETS:
        x = xs + dx
        y = ys + dy
        layer = np.full_like(acc, sclera)
        rel_x = x - p.cx
        rel_y = y - p.cy
        layer[rel_x**2 + rel_y**2 <= spec.iris_radius**2] = iris
        u = (rel_x * cos_t + rel_y * sin_t) / p.a
        v = (-rel_x * sin_t + rel_y * cos_t) / p.b
        layer[u * u + v * v <= 1.0] = pupil
        for gx, gy, gr in spec.glints:
            layer[(x - gx) ** 2 + (y - gy) ** 2 <= gr * gr] = 255.0
        if spec.occlusion > 0:
            layer[y < y_lid] = sclera
        acc += layer
    acc *= 0.25

    if spec.blur_sigma > 0:
        acc = ndimage.gaussian_filter(acc, spec.blur_sigma, mode="nearest")
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        acc = acc + rng.normal(0.0, spec.noise_sigma, acc.shape)

    out = _round_half_up(np.clip(acc, 0.0, 255.0)).astype(np.uint8)
    return GrayImage(out), (p.cx, p.cy)


_SCENE_INT_KEYS = {"width", "height", "seed"}
_SCENE_FLOAT_KEYS = {
    "pupil_cx", "pupil_cy", "pupil_a", "pupil_b", "pupil_theta",
    "iris_radius", "pupil_intensity", "iris_intensity", "sclera_intensity",
    "illumination", "blur_sigma", "noise_sigma", "occlusion",
    "drift_x", "drift_y",
}


def parse_scene_config(path: str | Path) -> tuple[SceneSpec, tuple[float, float]]:
    """Read a flat `key = value` scene file; returns the spec and drift.

    Keys mirror SceneSpec fields, with the pupil ellipse spelled out as
    pupil_cx/pupil_cy/pupil_a/pupil_b/pupil_theta and per-frame motion as
    drift_x/drift_y. `glint = cx,cy,r` may repeat, one line per glint.
    Unknown or (otherwise) repeated keys are errors.
    """
    values: dict[str, float] = {}
    glints: list[tuple[float, float, float]] = []
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        if key == "glint":
            parts = [p.strip() for p in val.split(",")]
            try:
                gx, gy, gr = (float(p) for p in parts)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: glint wants `cx,cy,r`, got {val!r}"
                ) from None
            glints.append((gx, gy, gr))
            continue
        if key not in _SCENE_INT_KEYS and key not in _SCENE_FLOAT_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = int(val) if key in _SCENE_INT_KEYS else float(val)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: invalid value {val!r} for {key!r}"
            ) from None

    defaults = SceneSpec()
    pupil = Ellipse(
        values.pop("pupil_cx", defaults.pupil.cx),
        values.pop("pupil_cy", defaults.pupil.cy),
        values.pop("pupil_a", defaults.pupil.a),
        values.pop("pupil_b", defaults.pupil.b),
        values.pop("pupil_theta", defaults.pupil.theta),
    )
    drift = (values.pop("drift_x", 0.0), values.pop("drift_y", 0.0))
    spec = replace(defaults, pupil=pupil, glints=tuple(glints), **values)
    return spec, drift


def render_sequence(
    base: SceneSpec, n: int, drift: tuple[float, float] = (0.0, 0.0)
) -> list[tuple[GrayImage, tuple[float, float]]]:
    """n frames whose pupil center moves by `drift` per frame.

    Frame i renders with seed base.seed + i so noise differs per frame but
    the whole sequence stays reproducible. The drifted scene (pupil and
    iris together) must stay inside the image for every frame.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 frames, got {n}")
    frames = []
    for i in range(n):
        moved = replace(
            base,
            pupil=Ellipse(
                base.pupil.cx + drift[0] * i,
                base.pupil.cy + drift[1] * i,
                base.pupil.a,
                base.pupil.b,
                base.pupil.theta,
            ),
            seed=base.seed + i,
        )  # replace() reruns validation, so an out-of-bounds drift fails here
        frames.append(render(moved))
    return frames
