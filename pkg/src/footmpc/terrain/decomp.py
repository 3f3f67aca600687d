"""Convex decomposition of steppable outlines.

Two stages: approximate convex decomposition splits a polygon until every
piece's concavity (pocket depth below its convex hull) is at most a
tolerance, then a greedy sequence of hinge-loss cuts shaves each nearly
convex piece down to a convex inner approximation.
"""

from __future__ import annotations

import numpy as np
from shapely.geometry import LineString
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.ops import split as shapely_split

from .polygons import Polygon2D, from_shapely, signed_area


class DegeneratePolygon(ValueError):
    """Zero-area input where a proper polygon is required."""


class EmptyResult(RuntimeError):
    """The convex inner approximation vanished; decompose more aggressively."""


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise convex hull (monotone chain), strict turns only."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def build(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross2(out[-1] - out[-2], p - out[-2]) <= 1e-12:
                out.pop()
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _hull_member_flags(ring: np.ndarray) -> np.ndarray:
    hull = convex_hull(ring)
    flags = np.zeros(len(ring), dtype=bool)
    for i, v in enumerate(ring):
        if np.min(np.linalg.norm(hull - v, axis=1)) <= 1e-9:
            flags[i] = True
    return flags


def concavity(ring: np.ndarray) -> tuple[float, int]:
    """Pocket depth of a simple CCW ring below its convex hull.

    Returns (depth, witness_index); depth 0 and witness -1 for a convex
    ring.  Depth is the largest perpendicular distance from a pocket
    vertex to its hull bridge edge.
    """
    ring = np.asarray(ring, dtype=float)
    n = len(ring)
    on_hull = _hull_member_flags(ring)
    if on_hull.all():
        return 0.0, -1
    hull_idx = np.flatnonzero(on_hull)
    if len(hull_idx) < 2:
        raise DegeneratePolygon("ring has no proper convex hull")
    best = (0.0, -1)
    for a_pos, a in enumerate(hull_idx):
        b = hull_idx[(a_pos + 1) % len(hull_idx)]
        # pocket vertices strictly between consecutive hull members
        i = (a + 1) % n
        pa = ring[a]
        edge = ring[b] - pa
        elen = np.linalg.norm(edge)
        while i != b:
            if elen > 1e-12:
                d = abs(_cross2(edge, ring[i] - pa)) / elen
            else:
                d = np.linalg.norm(ring[i] - pa)
            if d > best[0]:
                best = (float(d), int(i))
            i = (i + 1) % n
    return best


def _diagonal_ok(poly_sh: ShapelyPolygon, a: np.ndarray, b: np.ndarray) -> bool:
    seg = LineString([a, b])
    if not poly_sh.covers(seg):
        return False
    inter = poly_sh.boundary.intersection(seg)
    # the diagonal may touch the boundary only at its two endpoints
    if inter.geom_type != "MultiPoint" or len(inter.geoms) != 2:
        return False
    ends = np.array([[p.x, p.y] for p in inter.geoms])
    da = np.linalg.norm(ends - a, axis=1)
    db = np.linalg.norm(ends - b, axis=1)
    return bool(np.all(np.minimum(da, db) <= 1e-9))


def _split_ring(ring: np.ndarray, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    n = len(ring)
    if i > j:
        i, j = j, i
    first = ring[i:j + 1]
    second = np.vstack([ring[j:], ring[:i + 1]])
    return first, second


def _cut_polygon(ring: np.ndarray, witness: int) -> list[np.ndarray]:
    """Split a simple ring at its deepest pocket vertex via the best diagonal."""
    n = len(ring)
    poly_sh = ShapelyPolygon(ring)
    w = witness
    candidates = []
    for j in range(n):
        if j == w or (j - w) % n == 1 or (w - j) % n == 1:
            continue
        if not _diagonal_ok(poly_sh, ring[w], ring[j]):
            continue
        r1, r2 = _split_ring(ring, w, j)
        if len(r1) < 3 or len(r2) < 3:
            continue
        if abs(signed_area(r1)) < 1e-12 or abs(signed_area(r2)) < 1e-12:
            continue
        score = max(concavity(r1)[0], concavity(r2)[0])
        length = np.linalg.norm(ring[j] - ring[w])
        candidates.append((score, length, j, r1, r2))
    if candidates:
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))
        _, _, _, r1, r2 = candidates[0]
        return [r1, r2]
    # no vertex diagonal is usable: fall back to a straight line cut
    # through the witness, perpendicular to its hull bridge
    hull = convex_hull(ring)
    centroid = hull.mean(axis=0)
    direction = ring[w] - centroid
    nd = np.linalg.norm(direction)
    direction = np.array([1.0, 0.0]) if nd < 1e-12 else direction / nd
    span = 10.0 * (ring.max() - ring.min() + 1.0)
    line = LineString([ring[w] - span * direction, ring[w] + span * direction])
    pieces = shapely_split(poly_sh, line)
    rings = [np.array(g.exterior.coords[:-1]) for g in pieces.geoms
             if g.geom_type == "Polygon" and g.area > 1e-12]
    if len(rings) < 2:
        raise RuntimeError("failed to cut polygon at its deepest pocket")
    return rings


def _split_out_hole(poly: Polygon2D) -> list[Polygon2D]:
    """Open the first hole with a straight cut through its centroid."""
    sh = poly.to_shapely()
    hole = poly.holes[0]
    cx, cy = hole.mean(axis=0)
    minx, miny, maxx, maxy = sh.bounds
    for line in (
        LineString([(minx - 1.0, cy), (maxx + 1.0, cy)]),
        LineString([(cx, miny - 1.0), (cx, maxy + 1.0)]),
    ):
        pieces = shapely_split(sh, line)
        polys = [g for g in pieces.geoms if g.geom_type == "Polygon" and g.area > 1e-12]
        if len(polys) >= 2:
            return [from_shapely(g) for g in polys]
    raise RuntimeError("failed to open polygon hole")


def acd(poly: Polygon2D, tau: float) -> list[Polygon2D]:
    """Partition into pieces of concavity at most ``tau``.

    Pieces tile the input exactly: cuts run vertex-to-vertex where
    possible, so no area is created or lost.  Holes are opened by straight
    cuts before concavity is resolved.
    """
    if abs(poly.area) < 1e-12:
        raise DegeneratePolygon("cannot decompose a zero-area polygon")
    stack = [poly]
    out = []
    guard = 0
    while stack:
        guard += 1
        if guard > 10000:
            raise RuntimeError("convex decomposition did not terminate")
        p = stack.pop()
        if p.holes:
            stack.extend(_split_out_hole(p))
            continue
        depth, witness = concavity(p.shell)
        if depth <= tau:
            out.append(p)
            continue
        stack.extend(Polygon2D(r) for r in _cut_polygon(p.shell, witness))
    return out


def hinge_loss(vertices: np.ndarray, v: np.ndarray, theta: float) -> float:
    a = np.array([np.cos(theta), np.sin(theta)])
    s = (vertices - v) @ a
    return float(np.sum(np.maximum(s, 0.0) ** 2))


def _golden_refine(fun, lo: float, hi: float, iters: int = 60) -> float:
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def make_cut(vertices: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Best halfplane through ``v``: minimizes the squared hinge loss.

    Returns the unit outward normal ``a``; the kept halfplane is
    ``{x : a . (x - v) <= 0}``.  The unit-norm constraint makes this a 1-D
    search over the normal angle: dense sweep plus golden-section
    refinement of each local basin.
    """
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    v = np.asarray(v, dtype=float).reshape(2)
    m = 720
    thetas = np.arange(m) * (2.0 * np.pi / m)
    dirs = np.column_stack([np.cos(thetas), np.sin(thetas)])
    s = (vertices - v) @ dirs.T
    losses = np.sum(np.maximum(s, 0.0) ** 2, axis=0)

    is_min = (losses <= np.roll(losses, 1)) & (losses <= np.roll(losses, -1))
    order = np.argsort(losses[is_min], kind="stable")
    basins = np.flatnonzero(is_min)[order][:5]

    fun = lambda t: hinge_loss(vertices, v, t)
    width = 2.0 * np.pi / m
    best_theta = float(thetas[int(np.argmin(losses))])
    best_loss = float(losses.min())
    for idx in basins:
        t0 = thetas[idx]
        t = _golden_refine(fun, t0 - width, t0 + width)
        lt = fun(t)
        if lt < best_loss - 1e-15:
            best_loss, best_theta = lt, t
    return np.array([np.cos(best_theta), np.sin(best_theta)])


def _strictly_inside_convex(ring: np.ndarray, p: np.ndarray, tol: float = 1e-9) -> bool:
    n = len(ring)
    for i in range(n):
        e = ring[(i + 1) % n] - ring[i]
        elen = np.linalg.norm(e)
        if elen < 1e-15:
            continue
        if _cross2(e, p - ring[i]) / elen <= tol:
            return False
    return True


def clip_convex(ring: np.ndarray, a: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Intersect a convex CCW ring with the halfplane a . (x - v) <= 0."""
    out = []
    n = len(ring)
    d = (ring - v) @ a
    for i in range(n):
        cur, nxt = ring[i], ring[(i + 1) % n]
        dc, dn = d[i], d[(i + 1) % n]
        if dc <= 0:
            out.append(cur)
        if (dc < 0 < dn) or (dn < 0 < dc):
            t = dc / (dc - dn)
            out.append(cur + t * (nxt - cur))
    cleaned = []
    for p in out:
        if not cleaned or np.linalg.norm(p - cleaned[-1]) > 1e-12:
            cleaned.append(p)
    if len(cleaned) > 1 and np.linalg.norm(cleaned[0] - cleaned[-1]) <= 1e-12:
        cleaned.pop()
    return np.array(cleaned)


def whittle(vertices: np.ndarray) -> np.ndarray:
    """Convex inner approximation by greedy halfplane cuts.

    Starts from the convex hull and, for each input vertex found strictly
    inside the running polygon (in input order), intersects with the best
    hinge-loss halfplane through that vertex.  The result is convex and
    leaves no input vertex strictly interior; it is not guaranteed to be
    contained in the input polygon.
    """
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    poly = convex_hull(vertices)
    if len(poly) < 3:
        raise EmptyResult("input degenerates to a segment")
    for v in vertices:
        if _strictly_inside_convex(poly, v):
            a = make_cut(poly, v)
            poly = clip_convex(poly, a, v)
            if len(poly) < 3 or abs(signed_area(poly)) < 1e-12:
                raise EmptyResult("cuts eliminated the polygon")
    return poly
