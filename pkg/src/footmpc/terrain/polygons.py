"""Planar polygons on the heightmap grid: contours, insets, plane fits.

Connected steppable regions are traced on cell boundaries into simple
rings (counter-clockwise exteriors, clockwise holes), offset inward by
the safety margin, and paired with the least-squares plane of the
underlying cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from shapely.geometry import JOIN_STYLE, MultiPolygon
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.geometry.polygon import orient as shapely_orient

from .heightmap import HeightMap, SegmentationConfig


@dataclass
class Polygon2D:
    """Simple polygon with optional holes.

    ``shell`` is counter-clockwise, holes are clockwise; rings are stored
    without a repeated closing vertex.
    """

    shell: np.ndarray                     # (n, 2)
    holes: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.shell = np.asarray(self.shell, dtype=float).reshape(-1, 2)
        self.holes = [np.asarray(h, dtype=float).reshape(-1, 2) for h in self.holes]
        if len(self.shell) < 3:
            raise ValueError("polygon shell needs at least 3 vertices")
        if signed_area(self.shell) < 0:
            self.shell = self.shell[::-1].copy()
        self.holes = [h[::-1].copy() if signed_area(h) > 0 else h for h in self.holes]

    @property
    def area(self) -> float:
        a = signed_area(self.shell)
        for h in self.holes:
            a += signed_area(h)  # holes are clockwise, negative area
        return a

    def to_shapely(self) -> ShapelyPolygon:
        return ShapelyPolygon(self.shell, [h for h in self.holes])


def signed_area(ring: np.ndarray) -> float:
    x = ring[:, 0]
    y = ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def from_shapely(geom: ShapelyPolygon) -> Polygon2D:
    geom = shapely_orient(geom, sign=1.0)
    shell = np.array(geom.exterior.coords[:-1])
    holes = [np.array(r.coords[:-1]) for r in geom.interiors]
    return Polygon2D(shell, holes)


_TURN_ORDER = {1: 0, 0: 1, -1: 2}  # prefer left turns, then straight, then right


def trace_cell_rings(mask: np.ndarray) -> list[np.ndarray]:
    """Boundary rings of a cell region, on the cell-corner lattice.

    Edges are oriented with the region on their left, so exterior rings
    come out counter-clockwise and holes clockwise.  At pinch corners
    (diagonally touching cells) the walk takes the leftmost turn, which
    keeps every ring simple.
    """
    rows, cols = mask.shape
    padded = np.zeros((rows + 2, cols + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add_edge(a, b):
        edges.setdefault(a, []).append(b)

    for r, c in zip(*np.nonzero(mask)):
        if not padded[r, c + 1]:      # south neighbor
            add_edge((c, r), (c + 1, r))
        if not padded[r + 1, c + 2]:  # east neighbor
            add_edge((c + 1, r), (c + 1, r + 1))
        if not padded[r + 2, c + 1]:  # north neighbor
            add_edge((c + 1, r + 1), (c, r + 1))
        if not padded[r + 1, c]:      # west neighbor
            add_edge((c, r + 1), (c, r))

    for v in edges:
        edges[v].sort()

    rings = []
    # deterministic start order: lexicographically smallest start vertex first
    for start in sorted(edges):
        while edges.get(start):
            ring = [start]
            prev_dir = None
            cur = start
            while True:
                outs = edges.get(cur)
                if not outs:
                    raise RuntimeError("open boundary chain; mask is inconsistent")
                if prev_dir is None or len(outs) == 1:
                    nxt = outs.pop(0)
                else:
                    # leftmost turn relative to the incoming direction
                    def turn_rank(cand):
                        d = (cand[0] - cur[0], cand[1] - cur[1])
                        cross = prev_dir[0] * d[1] - prev_dir[1] * d[0]
                        return _TURN_ORDER.get(int(np.sign(cross)), 3)

                    nxt = min(outs, key=lambda cand: (turn_rank(cand), cand))
                    outs.remove(nxt)
                prev_dir = (nxt[0] - cur[0], nxt[1] - cur[1])
                cur = nxt
                if cur == start:
                    break
                ring.append(cur)
            rings.append(_collapse_collinear(np.array(ring, dtype=float)))
    return rings


def _collapse_collinear(ring: np.ndarray) -> np.ndarray:
    keep = []
    n = len(ring)
    for i in range(n):
        a = ring[(i - 1) % n]
        b = ring[i]
        c = ring[(i + 1) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if abs(cross) > 1e-12:
            keep.append(i)
    return ring[keep]


def _point_in_ring(point, ring) -> bool:
    x, y = point
    inside = False
    n = len(ring)
    j = n - 1
    for i in range(n):
        xi, yi = ring[i]
        xj, yj = ring[j]
        if (yi > y) != (yj > y) and x < (xj - xi) * (y - yi) / (yj - yi) + xi:
            inside = not inside
        j = i
    return inside


def rings_to_polygons(rings: list[np.ndarray]) -> list[Polygon2D]:
    """Group traced rings into polygons: CCW exteriors own the CW holes inside them."""
    exteriors = [r for r in rings if signed_area(r) > 0]
    holes = [r for r in rings if signed_area(r) < 0]
    out = []
    for ext in exteriors:
        mine = [h for h in holes if _point_in_ring(h.mean(axis=0), ext)]
        out.append(Polygon2D(ext, mine))
    return out


def inset_polygon(poly: Polygon2D, margin: float) -> list[Polygon2D]:
    """Inward offset by ``margin`` with mitred corners; may vanish or split."""
    if margin <= 0:
        return [poly]
    shrunk = poly.to_shapely().buffer(
        -margin, join_style=JOIN_STYLE.mitre, mitre_limit=2.0)
    if shrunk.is_empty:
        return []
    geoms = list(shrunk.geoms) if isinstance(shrunk, MultiPolygon) else [shrunk]
    pieces = [from_shapely(g) for g in geoms if g.area > 1e-12]
    pieces.sort(key=lambda p: (p.shell[:, 0].min(), p.shell[:, 1].min()))
    return pieces


def fit_plane(points_xy: np.ndarray, heights: np.ndarray) -> tuple[float, float, float]:
    """Least-squares plane h = z0 + kx*x + ky*y; returns (kx, ky, z0)."""
    A = np.column_stack([np.ones(len(points_xy)), points_xy])
    coef, *_ = np.linalg.lstsq(A, heights, rcond=None)
    return float(coef[1]), float(coef[2]), float(coef[0])


def extract_polygons(
    steppable: np.ndarray,
    hmap: HeightMap,
    cfg: SegmentationConfig,
) -> list[tuple[Polygon2D, tuple[float, float, float]]]:
    """Margin-inset outline polygons of 4-connected steppable components.

    Returns (polygon, plane) pairs where the plane is fit to the component
    cells of the (filtered) height map.
    """
    if steppable.shape != hmap.shape:
        raise ValueError("steppability grid does not match the height map")
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    labels, count = ndimage.label(steppable, structure=structure)
    out = []
    res = hmap.resolution
    for comp in range(1, count + 1):
        mask = labels == comp
        rr, cc = np.nonzero(mask)
        h = hmap.heights[rr, cc]
        ok = np.isfinite(h)
        if ok.sum() < 3:
            continue
        centers = np.column_stack([cc[ok] + 0.5, rr[ok] + 0.5]) * res + hmap.origin
        plane = fit_plane(centers, h[ok])
        for poly in rings_to_polygons(trace_cell_rings(mask)):
            world = Polygon2D(poly.shell * res + hmap.origin,
                              [hh * res + hmap.origin for hh in poly.holes])
            out.extend((piece, plane) for piece in inset_polygon(world, cfg.margin))
    return out
