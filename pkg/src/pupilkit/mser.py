"""Dark extremal region detection over an implicit component tree.

A union-find flood in increasing intensity tracks every branch of the
component tree up to a cutoff level, recording an area history so branch
stability can be evaluated afterwards without ever materialising the tree.
Regions whose area stays nearly constant across a +/-delta window of
thresholds are kept, nested near-duplicates dropped, and the whole search
optionally repeated over a half-resolution pyramid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from .image import GrayImage, downsample_half

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)

# Clockwise Moore neighborhood starting at west, as (dy, dx).
_MOORE = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


@dataclass(frozen=True)
class MserParams:
    """Tuning knobs for the stable-region search.

    Areas are in pixels of the image actually searched; max_level caps the
    threshold sweep (dark regions only, so nothing above it can matter).
    """

    min_area: float
    max_area: float
    max_level: int = 100
    delta: int = 5
    max_variation: float = 0.25
    min_diversity: float = 0.2

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError(f"delta must be >= 1, got {self.delta}")
        if not 0 < self.min_area < self.max_area:
            raise ValueError(
                f"need 0 < min_area < max_area, got {self.min_area}, {self.max_area}"
            )
        if not 0 <= self.max_level <= 255:
            raise ValueError(f"max_level must be in [0, 255], got {self.max_level}")
        if self.max_variation <= 0:
            raise ValueError(f"max_variation must be positive, got {self.max_variation}")
        if not 0 <= self.min_diversity <= 1:
            raise ValueError(f"min_diversity must be in [0, 1], got {self.min_diversity}")


@dataclass(frozen=True, eq=False)
class Region:
    """A stable dark region extracted at one threshold level.

    pixels/boundary are base-image coordinates. For regions found on a
    coarser pyramid octave the coordinates are mapped back by doubling, so
    pixels form a sparse lattice and area = 4**octave per sample.
    """

    pixels: np.ndarray  # (n, 2) int32, columns x, y, sorted row-major
    area: int
    level: int
    boundary: np.ndarray  # (m, 2) int32, ordered outer contour
    stability: float
    seed: tuple[int, int]  # earliest pixel, the region's immutable identity
    octave: int = 0


@njit(cache=True)
def _find(parent, p):
    root = p
    while parent[root] != root:
        root = parent[root]
    while parent[p] != root:
        nxt = parent[p]
        parent[p] = root
        p = nxt
    return root


@njit(cache=True)
def _evolve(flat, h, w, max_level):
    """Flood pixels in increasing intensity, recording branch area history.

    Returns event arrays (branch id, level, area at end of level) plus the
    per-branch seed / birth / death / absorber tables. Death level is the
    level at which a branch lost a merge; max_level + 1 means it survived.
    """
    n = h * w

    counts = np.zeros(258, np.int32)
    for i in range(n):
        v = flat[i]
        if v <= max_level:
            counts[v + 1] += 1
    for t in range(1, 258):
        counts[t] += counts[t - 1]
    order = np.empty(counts[257], np.int32)
    pos = counts[:257].copy()
    for i in range(n):
        v = flat[i]
        if v <= max_level:
            order[pos[v]] = i
            pos[v] += 1

    parent = np.full(n, -1, np.int32)
    size = np.zeros(n, np.int32)
    root_branch = np.full(n, -1, np.int32)  # -1 while the component is unborn
    root_min = np.full(n, -1, np.int32)  # earliest pixel of an unborn component
    seen_level = np.full(n, -1, np.int32)

    br_seed = np.empty(n, np.int32)
    br_birth = np.empty(n, np.int32)
    br_death = np.empty(n, np.int32)
    br_absorber = np.empty(n, np.int32)
    br_prev_area = np.zeros(n, np.int32)  # area at the end of the previous level
    n_br = 0

    cap = 2 * n + 260
    ev_branch = np.empty(cap, np.int32)
    ev_level = np.empty(cap, np.int32)
    ev_area = np.empty(cap, np.int32)
    n_ev = 0

    touched = np.empty(n, np.int32)
    start = 0
    for t in range(max_level + 1):
        end = counts[t + 1]
        nt = 0
        for k in range(start, end):
            p = order[k]
            parent[p] = p
            size[p] = 1
            root_branch[p] = -1
            root_min[p] = p
            touched[nt] = p
            nt += 1
            x = p % w
            for step in range(4):
                if step == 0:
                    ok = x > 0
                    q = p - 1
                elif step == 1:
                    ok = x + 1 < w
                    q = p + 1
                elif step == 2:
                    ok = p - w >= 0
                    q = p - w
                else:
                    ok = p + w < n
                    q = p + w
                if not ok or parent[q] < 0:
                    continue
                ra = _find(parent, p)
                rb = _find(parent, q)
                if ra == rb:
                    continue
                ba = root_branch[ra]
                bb = root_branch[rb]
                if ba < 0 and bb < 0:
                    new_branch = -1
                    new_min = min(root_min[ra], root_min[rb])
                elif ba < 0:
                    new_branch = bb
                    new_min = -1
                elif bb < 0:
                    new_branch = ba
                    new_min = -1
                else:
                    # two live branches meet: larger previous-level area
                    # survives, ties to the smaller seed
                    pa = br_prev_area[ba]
                    pb = br_prev_area[bb]
                    if pa > pb or (pa == pb and br_seed[ba] < br_seed[bb]):
                        surv, dead = ba, bb
                    else:
                        surv, dead = bb, ba
                    br_death[dead] = t
                    br_absorber[dead] = surv
                    new_branch = surv
                    new_min = -1
                if size[ra] < size[rb]:
                    ra, rb = rb, ra
                parent[rb] = ra
                size[ra] += size[rb]
                root_branch[ra] = new_branch
                root_min[ra] = new_min
        # checkpoint every component that changed this level
        for i in range(nt):
            r = _find(parent, touched[i])
            if seen_level[r] == t:
                continue
            seen_level[r] = t
            b = root_branch[r]
            if b < 0:
                b = n_br
                n_br += 1
                br_seed[b] = root_min[r]
                br_birth[b] = t
                br_death[b] = max_level + 1
                br_absorber[b] = -1
                root_branch[r] = b
            ev_branch[n_ev] = b
            ev_level[n_ev] = t
            ev_area[n_ev] = size[r]
            n_ev += 1
            br_prev_area[b] = size[r]
        start = end

    return (
        ev_branch[:n_ev].copy(),
        ev_level[:n_ev].copy(),
        ev_area[:n_ev].copy(),
        br_seed[:n_br].copy(),
        br_birth[:n_br].copy(),
        br_death[:n_br].copy(),
        br_absorber[:n_br].copy(),
    )


@njit(cache=True)
def _area_lookup(levels, areas, s, e, t):
    """Area at level t = value of the last event at level <= t in [s, e)."""
    lo, hi = s, e
    while lo < hi:
        mid = (lo + hi) // 2
        if levels[mid] <= t:
            lo = mid + 1
        else:
            hi = mid
    return areas[lo - 1]


@njit(cache=True)
def _candidates(
    ev_branch,
    ev_level,
    ev_area,
    n_br,
    br_birth,
    br_death,
    br_absorber,
    delta,
    max_level,
    max_variation,
):
    """Stable levels per branch: local minima of q under max_variation.

    Equal-area repeats within a branch are collapsed to the lowest level
    (the pixel set cannot have changed if the area did not).
    """
    n_ev = ev_branch.size
    # bucket events by branch; within a bucket they stay level-ascending
    bucket = np.zeros(n_br + 1, np.int32)
    for i in range(n_ev):
        bucket[ev_branch[i] + 1] += 1
    for b in range(n_br):
        bucket[b + 1] += bucket[b]
    fill = bucket[:n_br].copy()
    lev = np.empty(n_ev, np.int32)
    area = np.empty(n_ev, np.int32)
    for i in range(n_ev):
        j = fill[ev_branch[i]]
        lev[j] = ev_level[i]
        area[j] = ev_area[i]
        fill[ev_branch[i]] += 1

    out_branch = np.empty(n_ev + 1, np.int32)
    out_level = np.empty(n_ev + 1, np.int32)
    out_area = np.empty(n_ev + 1, np.int32)
    out_q = np.empty(n_ev + 1, np.float64)
    n_out = 0

    qs = np.empty(256, np.float64)
    for b in range(n_br):
        lo = br_birth[b] + delta
        hi = min(br_death[b] - 1, max_level - delta)
        if hi < lo:
            continue
        s, e = bucket[b], bucket[b + 1]
        for t in range(lo, hi + 1):
            a_minus = _area_lookup(lev, area, s, e, t - delta)
            a_t = _area_lookup(lev, area, s, e, t)
            # above our own death the region lives on inside its absorber
            cb = b
            tp = t + delta
            while br_death[cb] <= tp:
                cb = br_absorber[cb]
            a_plus = _area_lookup(lev, area, bucket[cb], bucket[cb + 1], tp)
            qs[t - lo] = (a_plus - a_minus) / a_t
        last_area = -1
        for t in range(lo, hi + 1):
            q = qs[t - lo]
            if q > max_variation:
                continue
            if t > lo and qs[t - lo - 1] < q:
                continue
            if t < hi and qs[t - lo + 1] < q:
                continue
            a_t = _area_lookup(lev, area, s, e, t)
            if a_t == last_area:
                continue
            last_area = a_t
            out_branch[n_out] = b
            out_level[n_out] = t
            out_area[n_out] = a_t
            out_q[n_out] = q
            n_out += 1

    return (
        out_branch[:n_out].copy(),
        out_level[:n_out].copy(),
        out_area[:n_out].copy(),
        out_q[:n_out].copy(),
    )


def _trace_boundary(pixel_mask: np.ndarray, x0: int, y0: int) -> np.ndarray:
    """Ordered outer contour of a connected pixel set (Moore tracing).

    `pixel_mask` must carry a one-pixel false border; x0/y0 translate local
    coordinates back to the image frame. Walking stops when the tracer
    revisits a (position, backtrack) state, which closes the loop even on
    one-pixel-wide spurs.
    """
    ys, xs = np.nonzero(pixel_mask)
    start = (int(ys[0]), int(xs[0]))  # uppermost-leftmost: west neighbor is free
    if len(ys) == 1:
        return np.array([[start[1] - 1 + x0, start[0] - 1 + y0]], dtype=np.int32)

    contour = [start]
    cur = start
    back = 0  # index into _MOORE pointing at the last known background cell
    seen = {(cur, back)}
    while True:
        for k in range(1, 9):
            d = (back + k) % 8
            ny, nx = cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1]
            if pixel_mask[ny, nx]:
                prev = (back + k - 1) % 8
                free_y = cur[0] + _MOORE[prev][0]
                free_x = cur[1] + _MOORE[prev][1]
                cur = (ny, nx)
                back = _MOORE_INDEX[(free_y - ny, free_x - nx)]
                break
        else:  # no neighbors: isolated pixel already handled above
            break
        state = (cur, back)
        if state in seen:
            break
        seen.add(state)
        contour.append(cur)

    pts = np.asarray(contour, dtype=np.int32)
    return np.column_stack((pts[:, 1] - 1 + x0, pts[:, 0] - 1 + y0))


@njit(cache=True)
def _dedup_candidates(order, cb, cl, ca, br_death, br_abs, min_diversity):
    """Greedy nested-duplicate suppression, most stable candidate first.

    Two candidates are the same structure when the deeper one's component
    is contained in the shallower one's at the latter's level (checked by
    following absorber chains) and their areas agree within min_diversity.
    Noisy images spawn thousands of candidates, hence the compiled loop.
    """
    kept = np.empty(len(order), dtype=np.int64)
    n_kept = 0
    for oi in range(len(order)):
        i = order[oi]
        dup = False
        for kj in range(n_kept):
            j = kept[kj]
            if cl[i] <= cl[j]:
                sb, bb, level = cb[i], cb[j], cl[j]
                small_area, big_area = ca[i], ca[j]
            else:
                sb, bb, level = cb[j], cb[i], cl[i]
                small_area, big_area = ca[j], ca[i]
            a = sb
            while br_death[a] <= level:
                a = br_abs[a]
            b = bb
            while br_death[b] <= level:
                b = br_abs[b]
            if a != b:
                continue
            if small_area / big_area >= 1.0 - min_diversity:
                dup = True
                break
        if not dup:
            kept[n_kept] = i
            n_kept += 1
    return kept[:n_kept]


def _extract_regions(img: GrayImage, survivors, br_seed, w: int) -> list[Region]:
    """Materialise pixel sets and contours for the surviving candidates."""
    by_level: dict[int, list] = {}
    for cand in survivors:
        by_level.setdefault(cand[1], []).append(cand)

    regions = []
    for level, cands in sorted(by_level.items()):
        labels, _ = ndimage.label(img.pixels <= level, structure=_FOUR_CONN)
        for q, _, area, branch in cands:
            seed = int(br_seed[branch])
            sy, sx = divmod(seed, w)
            comp = labels == labels[sy, sx]
            ys, xs = np.nonzero(comp)
            x_lo, y_lo = int(xs.min()), int(ys.min())
            local = np.zeros((int(ys.max()) - y_lo + 3, int(xs.max()) - x_lo + 3), dtype=bool)
            local[ys - y_lo + 1, xs - x_lo + 1] = True
            boundary = _trace_boundary(local, x_lo, y_lo)
            regions.append(
                Region(
                    pixels=np.column_stack((xs, ys)).astype(np.int32),
                    area=int(area),
                    level=int(level),
                    boundary=boundary,
                    stability=float(q),
                    seed=(sx, sy),
                )
            )
    regions.sort(key=lambda r: (r.level, r.seed[1], r.seed[0]))
    return regions


def component_tree_regions(img: GrayImage, p: MserParams) -> list[Region]:
    """All stable dark regions of `img` within the configured area band.

    Stability is q(t) = (area(t+delta) - area(t-delta)) / area(t) along each
    component-tree branch; levels where q is a local minimum no worse than
    max_variation become candidates. Nested candidates overlapping by at
    least 1 - min_diversity collapse to the most stable one, then the area
    band is applied.
    """
    h, w = img.height, img.width
    flat = img.pixels.reshape(-1).astype(np.int32)
    ev_b, ev_l, ev_a, br_seed, br_birth, br_death, br_abs = _evolve(
        flat, h, w, p.max_level
    )
    if len(br_seed) == 0:
        return []
    cb, cl, ca, cq = _candidates(
        ev_b, ev_l, ev_a, len(br_seed), br_birth, br_death, br_abs,
        p.delta, p.max_level, p.max_variation,
    )
    if len(cb) == 0:
        return []

    # most stable first; ties resolved exactly like the reference sweep
    order = np.asarray(
        sorted(range(len(cb)), key=lambda i: (cq[i], cl[i], ca[i], br_seed[cb[i]])),
        dtype=np.int64,
    )
    kept = _dedup_candidates(order, cb, cl, ca, br_death, br_abs, p.min_diversity)
    survivors = [
        (float(cq[i]), int(cl[i]), int(ca[i]), int(cb[i]))
        for i in kept
        if p.min_area <= ca[i] <= p.max_area
    ]
    return _extract_regions(img, survivors, br_seed, w)


def _region_center(r: Region) -> tuple[float, float]:
    """Ellipse-fit center of the boundary, or pixel centroid as fallback."""
    from .ellipse import fit_ellipse
    from .errors import FitError

    if len(r.boundary) >= 5:
        try:
            e = fit_ellipse(r.boundary.astype(np.float64))
            return e.cx, e.cy
        except FitError:
            pass
    centroid = r.pixels.astype(np.float64).mean(axis=0)
    return float(centroid[0]), float(centroid[1])


def detect_multiscale(img: GrayImage, p: MserParams, octaves: int = 1) -> list[Region]:
    """Stable dark regions searched across a half-resolution pyramid.

    Octave o sees the image downsampled o times with the area band divided
    by 4**o; its regions are mapped back by doubling coordinates (and
    quadrupling areas) per octave. Cross-octave duplicates (centers closer
    than 5 px with area ratio within [0.5, 2]) keep the finest copy.
    """
    if octaves < 1:
        raise ValueError(f"octaves must be >= 1, got {octaves}")

    collected: list[Region] = []
    level_img = img
    for o in range(octaves):
        if o > 0:
            if level_img.width < 4 or level_img.height < 4:
                break
            level_img = downsample_half(level_img)
        scale = 2**o
        bounds = MserParams(
            min_area=p.min_area / (4**o),
            max_area=p.max_area / (4**o),
            max_level=p.max_level,
            delta=p.delta,
            max_variation=p.max_variation,
            min_diversity=p.min_diversity,
        )
        for r in component_tree_regions(level_img, bounds):
            if o == 0:
                collected.append(r)
            else:
                collected.append(
                    Region(
                        pixels=r.pixels * scale,
                        area=r.area * scale * scale,
                        level=r.level,
                        boundary=r.boundary * scale,
                        stability=r.stability,
                        seed=(r.seed[0] * scale, r.seed[1] * scale),
                        octave=o,
                    )
                )

    collected.sort(key=lambda r: (r.octave, r.level, r.seed[1], r.seed[0]))
    kept: list[Region] = []
    centers: list[tuple[float, float]] = []
    for r in collected:
        cx, cy = _region_center(r)
        dup = False
        for other, (ox, oy) in zip(kept, centers):
            if other.octave == r.octave:
                continue
            ratio = r.area / other.area
            if np.hypot(cx - ox, cy - oy) < 5.0 and 0.5 <= ratio <= 2.0:
                dup = True
                break
        if not dup:
            kept.append(r)
            centers.append((cx, cy))
    return kept


def dump_region_labels(img: GrayImage, regions: list[Region], path) -> None:
    """Write a label-map PGM: background 0, region k painted (k+1)-th gray."""
    from .image import save_image

    canvas = np.zeros((img.height, img.width), dtype=np.uint8)
    for k, r in enumerate(regions):
        shade = 255 - (k * 111) % 200
        xs = np.clip(r.pixels[:, 0], 0, img.width - 1)
        ys = np.clip(r.pixels[:, 1], 0, img.height - 1)
        canvas[ys, xs] = shade
    save_image(GrayImage(canvas), path)
