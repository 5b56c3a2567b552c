"""Edge detection and edge-segment extraction.

Canny runs on the preprocessed image; the resulting mask is partitioned
into simple 8-connected chains by border following, each chain simplified
with Douglas-Peucker and split wherever the polyline's turn direction
flips. The chains are what the ellipse-fitting stage consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .image import GrayImage

_TAN_22_5 = np.tan(np.pi / 8)
_TAN_67_5 = np.tan(3 * np.pi / 8)

# Fixed neighbor scan order for chain walking (E, SE, S, SW, W, NW, N, NE).
_NEIGHBORS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


@dataclass(frozen=True, eq=False)
class EdgeMap:
    """Boolean per-pixel edge mask, same dims as the source image."""

    mask: np.ndarray  # (height, width) bool

    def __post_init__(self):
        if self.mask.ndim != 2 or self.mask.dtype != np.bool_:
            raise ValueError("EdgeMap requires a 2-D bool array")

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]


@dataclass(frozen=True, eq=False)
class EdgeSegment:
    """Ordered chain of 8-connected edge pixels, each visited once."""

    points: np.ndarray  # (n, 2) int32, columns x, y

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class Polyline:
    """Douglas-Peucker vertices of a segment, with their source indices."""

    vertices: np.ndarray  # (m, 2) int32, subset of the segment's points
    indices: np.ndarray  # (m,) int, positions within the source segment


def sobel_gradients(img: GrayImage) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel x/y gradients (float64), clamp-replicated borders."""
    f = img.pixels.astype(np.float64)
    gx = ndimage.correlate1d(f, [-1.0, 0.0, 1.0], axis=1, mode="nearest")
    gx = ndimage.correlate1d(gx, [1.0, 2.0, 1.0], axis=0, mode="nearest")
    gy = ndimage.correlate1d(f, [-1.0, 0.0, 1.0], axis=0, mode="nearest")
    gy = ndimage.correlate1d(gy, [1.0, 2.0, 1.0], axis=1, mode="nearest")
    return gx, gy


def canny(img: GrayImage, low: float = 30.0, high: float = 70.0) -> EdgeMap:
    """Canny edge detection: Sobel, 4-direction NMS, hysteresis linking.

    Thresholds apply to the raw Sobel magnitude (hypot of the 3x3 Sobel
    responses, so an axis-aligned intensity step of s peaks near 4*s).
    Non-maximum suppression compares along the quantized gradient
    direction; ties resolve toward the positive direction so a perfectly
    symmetric step yields a single-pixel edge. Weak pixels (>= low)
    survive only when 8-connected to a strong pixel (>= high).
    """
    if not (0 <= low < high <= 255):
        raise ValueError(f"need 0 <= low < high <= 255, got low={low} high={high}")
    gx, gy = sobel_gradients(img)
    mag = np.hypot(gx, gy)

    h, w = mag.shape
    padded = np.pad(mag, 1, mode="constant")

    def shifted(dx: int, dy: int) -> np.ndarray:
        return padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    ax, ay = np.abs(gx), np.abs(gy)
    horiz = ay <= _TAN_22_5 * ax
    vert = ay >= _TAN_67_5 * ax
    diag_pos = ~horiz & ~vert & (gx * gy > 0)
    diag_neg = ~horiz & ~vert & (gx * gy <= 0)

    keep = np.zeros_like(horiz)
    for sel, (dx, dy) in (
        (horiz, (1, 0)),
        (diag_pos, (1, 1)),
        (vert, (0, 1)),
        (diag_neg, (1, -1)),
    ):
        fwd = shifted(dx, dy)
        back = shifted(-dx, -dy)
        keep |= sel & (mag > back) & (mag >= fwd)

    weak = keep & (mag >= low)
    strong = keep & (mag >= high)
    if not strong.any():
        return EdgeMap(np.zeros_like(weak))
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=np.uint8))
    strong_ids = np.unique(labels[strong])
    mask = weak & np.isin(labels, strong_ids)
    return EdgeMap(mask)


def trace_segments(edges: EdgeMap, min_len: int = 10) -> list[EdgeSegment]:
    """Partition the edge mask into maximal simple 8-connected chains.

    Junction pixels (where three or more distinct curves meet) terminate
    chains and are not emitted, keeping every chain a simple curve. Only
    chains with more than `min_len` points are returned; no pixel appears
    in two chains.
    Results are deterministic: chain starts are scanned in row-major
    order, open chains (from endpoints) before closed loops.
    """
    if min_len < 2:
        raise ValueError(f"min_len must be >= 2, got {min_len}")
    mask = edges.mask
    h, w = mask.shape
    n = h * w

    # A pixel is a junction when its 8-neighborhood ring splits into 3+
    # connected runs of edge pixels (crossing number). Raw neighbor counts
    # would misread ordinary staircase corners as junctions.
    padded = np.pad(mask, 1, mode="constant")
    ring = np.stack(
        [padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w] for dx, dy in _NEIGHBORS]
    )
    arms = (ring & ~np.roll(ring, -1, axis=0)).sum(axis=0)
    junctions = mask & (arms >= 3)
    work_mask = mask & ~junctions

    kernel = np.ones((3, 3), dtype=np.uint8)

    w8 = work_mask.astype(np.uint8)
    work_deg = ndimage.correlate(w8, kernel, mode="constant") - w8
    endpoint_idx = np.flatnonzero(work_mask & (work_deg <= 1))
    all_work_idx = np.flatnonzero(work_mask)

    work = bytearray(w8.reshape(-1).tobytes())
    visited = bytearray(n)
    offsets = [(dy * w + dx, dx) for dx, dy in _NEIGHBORS]

    def walk(start: int) -> list[int]:
        chain = [start]
        visited[start] = 1
        cur = start
        while True:
            x = cur % w
            nxt = -1
            for off, dx in offsets:
                nx = x + dx
                if nx < 0 or nx >= w:
                    continue
                j = cur + off
                if 0 <= j < n and work[j] and not visited[j]:
                    nxt = j
                    break
            if nxt < 0:
                return chain
            visited[nxt] = 1
            chain.append(nxt)
            cur = nxt

    chains: list[list[int]] = []
    for start in endpoint_idx:
        s = int(start)
        if not visited[s]:
            chains.append(walk(s))
    for start in all_work_idx:  # leftovers are closed loops
        s = int(start)
        if not visited[s]:
            chains.append(walk(s))

    out = []
    for chain in chains:
        if len(chain) > min_len:
            arr = np.asarray(chain, dtype=np.int64)
            pts = np.column_stack((arr % w, arr // w)).astype(np.int32)
            out.append(EdgeSegment(pts))
    return out


def approx_polyline(seg: EdgeSegment, epsilon: float = 1.5) -> Polyline:
    """Douglas-Peucker simplification of a chain.

    Every original point ends up within `epsilon` of the returned
    polyline (distance measured to the finite chords). Iterative
    (stack-based), so long chains cannot overflow the recursion limit.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    pts = seg.points.astype(np.float64)
    npts = len(pts)
    if npts <= 2:
        idx = list(range(npts))
        return Polyline(seg.points[idx].copy(), np.asarray(idx, dtype=np.intp))

    keep = np.zeros(npts, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, npts - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        p, q = pts[i], pts[j]
        chord = q - p
        rel = pts[i + 1 : j] - p
        denom = chord @ chord
        if denom == 0.0:
            dist = np.hypot(rel[:, 0], rel[:, 1])
        else:
            # Distance to the finite chord, not the infinite line: chains
            # that double back past an endpoint would otherwise slip
            # through with arbitrarily large true deviation.
            t = np.clip((rel @ chord) / denom, 0.0, 1.0)
            diff = rel - t[:, None] * chord
            dist = np.hypot(diff[:, 0], diff[:, 1])
        k = int(np.argmax(dist))
        if dist[k] > epsilon:
            split = i + 1 + k
            keep[split] = True
            stack.append((i, split))
            stack.append((split, j))

    idx = np.flatnonzero(keep)
    return Polyline(seg.points[idx].copy(), idx.astype(np.intp))


def split_at_inflections(seg: EdgeSegment, poly: Polyline) -> list[EdgeSegment]:
    """Cut the chain wherever its polyline's turn direction flips sign.

    The turn at each interior polyline vertex is the z-component of the
    cross product of the two incident edge vectors. A zero cross product
    (collinear) never counts as a flip. Cuts land immediately before the
    flip vertex, so the concatenated output reproduces the input exactly.
    """
    if len(poly.indices) < 2 or poly.indices[0] != 0 or poly.indices[-1] != len(seg.points) - 1:
        raise ValueError("polyline does not span the segment")
    verts = poly.vertices.astype(np.int64)
    if len(verts) < 3:
        return [seg]

    vecs = np.diff(verts, axis=0)
    cross = vecs[:-1, 0] * vecs[1:, 1] - vecs[:-1, 1] * vecs[1:, 0]

    cuts: list[int] = []
    last_sign = 0
    for k, c in enumerate(cross):
        s = int(np.sign(c))
        if s == 0:
            continue
        if last_sign != 0 and s != last_sign:
            cuts.append(int(poly.indices[k + 1]))
        last_sign = s

    if not cuts:
        return [seg]
    bounds = [0] + cuts + [len(seg.points)]
    return [
        EdgeSegment(seg.points[a:b].copy())
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]


def dump_edge_map(edges: EdgeMap, path: str | Path) -> None:
    """Write the mask as a PGM: edge pixels 255, background 0."""
    from .image import save_image

    save_image(GrayImage(edges.mask.astype(np.uint8) * 255), path)


def dump_segments_csv(segments: list[EdgeSegment], path: str | Path) -> None:
    """Write all segment points as `segment_id,x,y` rows."""
    lines = ["segment_id,x,y"]
    for sid, seg in enumerate(segments):
        for x, y in seg.points:
            lines.append(f"{sid},{x},{y}")
    Path(path).write_text("\n".join(lines) + "\n")
