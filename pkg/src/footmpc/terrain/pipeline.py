"""End-to-end heightmap to convex-foothold decomposition."""

from __future__ import annotations

import numpy as np

from .decomp import acd, whittle
from .footholds import Foothold, lift_to_foothold
from .heightmap import HeightMap, SegmentationConfig, classify_steppable, filter_map
from .polygons import extract_polygons, signed_area


def decompose_terrain(hmap: HeightMap, cfg: SegmentationConfig) -> list[Foothold]:
    """Filter, classify, outline, decompose, whittle, and lift a height map.

    Deterministic: the result is sorted by polygon centroid, then area, so
    per-polygon stages may be reordered or parallelized without changing
    the output.  An empty list is a valid result (nothing steppable).
    """
    filtered = filter_map(hmap, cfg)
    steppable = classify_steppable(filtered, cfg)
    footholds: list[Foothold] = []
    for poly, plane in extract_polygons(steppable, filtered, cfg):
        for piece in acd(poly, cfg.acd_tau):
            if piece.area < cfg.min_area:
                continue
            hull = whittle(piece.shell)
            if abs(signed_area(hull)) < cfg.min_area:
                continue
            footholds.append(lift_to_foothold(hull, plane))

    def key(fh: Foothold):
        cx, cy, _ = fh.centroid()
        area = abs(signed_area(fh.vertices_xy))
        return (round(cx, 9), round(cy, 9), round(area, 9))

    footholds.sort(key=key)
    return footholds
