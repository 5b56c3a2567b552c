"""Brute-force reference for the stable dark-region detector.

Everything here trades speed for obviousness: the image is thresholded at
every level, components come from scipy's labeller, and every rule is
applied by direct enumeration over dicts. The production module must match
this output pixel for pixel; the tests import both and compare.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


def oracle_regions(
    pixels,
    *,
    delta,
    min_area,
    max_area,
    max_level,
    max_variation,
    min_diversity,
):
    """All stable dark regions of `pixels`, by exhaustive threshold sweep.

    Returns a list of dicts with keys level, area, stability, seed, pixels
    (frozenset of (x, y)), sorted by (level, seed).
    """
    img = np.asarray(pixels, dtype=np.int64)
    h, w = img.shape

    labels = []  # per level: flat component-label array
    sizes = []  # per level: component sizes indexed by label id
    for t in range(max_level + 1):
        lab, _ = ndimage.label(img <= t, structure=FOUR_CONN)
        flat = lab.reshape(-1)
        labels.append(flat)
        sizes.append(np.bincount(flat))

    def area_at(seed, t):
        return int(sizes[t][labels[t][seed]])

    # Branch discovery. A component containing no previously-alive seed is a
    # fresh branch (seed = its smallest flat index). Where several alive
    # branches meet, the one with the larger area at the previous level
    # survives; ties go to the smaller seed.
    branches = []
    alive = []
    for t in range(max_level + 1):
        lab = labels[t]
        by_component = {}
        for bi in alive:
            by_component.setdefault(int(lab[branches[bi]["seed"]]), []).append(bi)
        for cid in range(1, int(lab.max()) + 1):
            members = by_component.get(cid)
            if members is None:
                seed = int(np.flatnonzero(lab == cid).min())
                branches.append(
                    {"seed": seed, "birth": t, "death": max_level + 1}
                )
                alive.append(len(branches) - 1)
            elif len(members) > 1:
                surv = min(
                    members,
                    key=lambda bi: (
                        -area_at(branches[bi]["seed"], t - 1),
                        branches[bi]["seed"],
                    ),
                )
                for bi in members:
                    if bi != surv:
                        branches[bi]["death"] = t
                        alive.remove(bi)

    # Stability q(t) = (area(t+delta) - area(t-delta)) / area(t). The area
    # above a branch's death follows the absorbing component automatically,
    # because area_at() asks which component contains the seed at that level.
    candidates = []
    for b in branches:
        lo = b["birth"] + delta
        hi = min(b["death"] - 1, max_level - delta)
        qs = {
            t: (area_at(b["seed"], t + delta) - area_at(b["seed"], t - delta))
            / area_at(b["seed"], t)
            for t in range(lo, hi + 1)
        }
        seen_areas = set()
        for t in range(lo, hi + 1):
            q = qs[t]
            if q > max_variation:
                continue
            if t - 1 in qs and qs[t - 1] < q:
                continue
            if t + 1 in qs and qs[t + 1] < q:
                continue
            area = area_at(b["seed"], t)
            if area in seen_areas:  # same area = same pixels; keep lowest level
                continue
            seen_areas.add(area)
            candidates.append(
                {"stability": q, "level": t, "area": area, "seed": b["seed"]}
            )

    # Drop near-identical nested regions, most stable first. A is nested in
    # B when A's seed sits inside B's component and A's level is not above
    # B's; overlap is then area(A)/area(B).
    candidates.sort(key=lambda c: (c["stability"], c["level"], c["area"], c["seed"]))
    kept = []
    for c in candidates:
        dup = False
        for k in kept:
            if (
                c["level"] <= k["level"]
                and labels[k["level"]][c["seed"]] == labels[k["level"]][k["seed"]]
            ):
                small, big = c, k
            elif (
                k["level"] <= c["level"]
                and labels[c["level"]][k["seed"]] == labels[c["level"]][c["seed"]]
            ):
                small, big = k, c
            else:
                continue
            if small["area"] / big["area"] >= 1.0 - min_diversity:
                dup = True
                break
        if not dup:
            kept.append(c)

    out = []
    for c in kept:
        if not (min_area <= c["area"] <= max_area):
            continue
        comp = np.flatnonzero(labels[c["level"]] == labels[c["level"]][c["seed"]])
        c["pixels"] = frozenset((int(i % w), int(i // w)) for i in comp)
        out.append(c)
    out.sort(key=lambda c: (c["level"], c["seed"]))
    return out
