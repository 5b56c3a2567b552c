"""Ellipse fitting, geometry, and the goodness-of-fit confidence score.

The fit is the direct least-squares conic fit with the ellipse constraint
4AC - B^2 = 1 (Fitzgibbon's method in the numerically stable Halir-Flusser
formulation), so the result is always an ellipse, never a hyperbola or
parabola. Input points are centered on their mean before fitting, which
makes the fit exactly translation-equivariant and keeps the scatter
matrices well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError, SamplingError
from .image import GrayImage

_CIRCLE_EPS = 1e-9


@dataclass(frozen=True)
class Ellipse:
    """Center, semi-axes (major >= minor), rotation of the major axis."""

    cx: float
    cy: float
    a: float
    b: float
    theta: float

    def __post_init__(self):
        if not (self.a >= self.b > 0):
            raise ValueError(f"need a >= b > 0, got a={self.a} b={self.b}")
        th = self.theta % np.pi
        if self.b / self.a > 1.0 - _CIRCLE_EPS:
            th = 0.0  # circle: orientation is arbitrary, report 0
        object.__setattr__(self, "theta", th)

    def boundary_points(self, n: int, scale: float = 1.0) -> np.ndarray:
        """`n` points at uniform parametric angle, optionally scaled."""
        t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        c, s = np.cos(self.theta), np.sin(self.theta)
        ex = scale * self.a * np.cos(t)
        ey = scale * self.b * np.sin(t)
        return np.column_stack((self.cx + c * ex - s * ey, self.cy + s * ex + c * ey))


@dataclass(frozen=True)
class Goodness:
    """Confidence score: boundary edge support times interior contrast."""

    value: float
    edge_support: float
    contrast: float


def fit_ellipse(points) -> Ellipse:
    """Least-squares ellipse through >= 5 points.

    Raises FitError for fewer than five points or a degenerate layout
    (collinear or otherwise rank-deficient input).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 5:
        raise FitError(f"ellipse fit needs >= 5 points, got {len(pts)}")
    mean = pts.mean(axis=0)
    x = pts[:, 0] - mean[0]
    y = pts[:, 1] - mean[1]

    d1 = np.column_stack((x * x, x * y, y * y))
    d2 = np.column_stack((x, y, np.ones_like(x)))
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError as exc:
        raise FitError("degenerate point configuration") from exc
    m = s1 + s2 @ t
    # Left-multiply by inv(C) for constraint matrix C = [[0,0,2],[0,-1,0],[2,0,0]].
    m = np.array([m[2] / 2.0, -m[1], m[0] / 2.0])
    try:
        eigval, eigvec = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise FitError("eigen decomposition failed") from exc

    real = np.abs(np.imag(eigval)) < 1e-9 * (1.0 + np.abs(eigval))
    vec = np.real(eigvec)
    cond = 4.0 * vec[0] * vec[2] - vec[1] ** 2
    ok = np.flatnonzero(real & (cond > 0))
    if len(ok) == 0:
        raise FitError("no ellipse solution (degenerate or collinear points)")
    a1 = vec[:, ok[0]]
    coeffs = np.concatenate((a1, t @ a1))
    return _conic_to_ellipse(coeffs, mean)


def _conic_to_ellipse(coeffs: np.ndarray, offset: np.ndarray) -> Ellipse:
    """Convert conic A x^2 + B xy + C y^2 + D x + E y + F = 0 to geometry."""
    A, B, C, D, E, F = coeffs
    m22 = np.array([[A, B / 2.0], [B / 2.0, C]])
    if A + C < 0:
        m22, D, E, F = -m22, -D, -E, -F
    try:
        center = np.linalg.solve(m22, [-D / 2.0, -E / 2.0])
    except np.linalg.LinAlgError as exc:
        raise FitError("degenerate conic") from exc
    # Constant term after translating to the center.
    fc = F + (D / 2.0) * center[0] + (E / 2.0) * center[1]
    scale = -fc
    eigval, eigvec = np.linalg.eigh(m22)
    if scale <= 0 or eigval[0] <= 0:
        raise FitError("conic is not a real ellipse")
    axes = np.sqrt(scale / eigval)  # eigh sorts ascending: axes[0] is major
    major_dir = eigvec[:, 0]
    theta = float(np.arctan2(major_dir[1], major_dir[0])) % np.pi
    return Ellipse(
        cx=float(center[0] + offset[0]),
        cy=float(center[1] + offset[1]),
        a=float(axes[0]),
        b=float(axes[1]),
        theta=theta,
    )


def ellipse_area(e: Ellipse) -> float:
    return float(np.pi * e.a * e.b)


def axis_ratio(e: Ellipse) -> float:
    return float(e.a / e.b)


def _lower_median(values: np.ndarray) -> int:
    """Median with even counts resolved to the lower middle element."""
    s = np.sort(values)
    return int(s[(len(s) - 1) // 2])


def sample_ring_medians(
    img: GrayImage,
    e: Ellipse,
    inner_scale: float = 0.7,
    outer_scale: float = 1.3,
    n: int = 64,
) -> tuple[int, int]:
    """Median intensity on a shrunken and a grown copy of the ellipse.

    Samples `n` uniform parametric angles per ring; samples falling
    outside the image are discarded. Raises SamplingError when a ring has
    no in-bounds sample.
    """
    if not (0 < inner_scale < 1 < outer_scale):
        raise ValueError(
            f"need 0 < inner_scale < 1 < outer_scale, got {inner_scale}, {outer_scale}"
        )
    if n < 8:
        raise ValueError(f"need n >= 8 samples, got {n}")
    medians = []
    for scale in (inner_scale, outer_scale):
        pts = e.boundary_points(n, scale=scale)
        px = np.floor(pts[:, 0] + 0.5).astype(np.int64)
        py = np.floor(pts[:, 1] + 0.5).astype(np.int64)
        ok = (px >= 0) & (px < img.width) & (py >= 0) & (py < img.height)
        if not ok.any():
            raise SamplingError(f"all ring samples at scale {scale} out of bounds")
        medians.append(_lower_median(img.pixels[py[ok], px[ok]]))
    return medians[0], medians[1]


def edge_support(edges, e: Ellipse, n: int = 64, support_dist: float = 2.0) -> float:
    """Fraction of boundary samples with an edge pixel within Chebyshev
    distance `support_dist`."""
    mask = edges.mask
    h, w = mask.shape
    pts = e.boundary_points(n)
    hits = 0
    d = support_dist
    for sx, sy in pts:
        x0 = max(int(np.ceil(sx - d)), 0)
        x1 = min(int(np.floor(sx + d)), w - 1)
        y0 = max(int(np.ceil(sy - d)), 0)
        y1 = min(int(np.floor(sy + d)), h - 1)
        if x0 <= x1 and y0 <= y1 and mask[y0 : y1 + 1, x0 : x1 + 1].any():
            hits += 1
    return hits / n


def goodness(
    img: GrayImage,
    edges,
    e: Ellipse,
    n: int = 64,
    support_dist: float = 2.0,
    inner_scale: float = 0.7,
    outer_scale: float = 1.3,
) -> Goodness:
    """Confidence gate: edge support on the boundary times the clamped
    inner/outer median contrast.

    Zero when the boundary has no edge evidence or the interior is not
    darker than the surround, so bright blobs and featureless regions
    never pass.
    """
    if n < 16:
        raise ValueError(f"need n >= 16 samples, got {n}")
    support = edge_support(edges, e, n=n, support_dist=support_dist)
    med_inner, med_outer = sample_ring_medians(
        img, e, inner_scale=inner_scale, outer_scale=outer_scale, n=n
    )
    contrast = min(max((med_outer - med_inner) / 255.0, 0.0), 1.0)
    return Goodness(value=support * contrast, edge_support=support, contrast=contrast)
