import numpy as np
import pytest

from footmpc import terrain
from footmpc.terrain.polygons import Polygon2D
from oracles import hinge_cut_loss, point_in_polygon

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_star_polygon(rng, n=None, r_lo=0.35, r_hi=1.0):
    """Simple (star-shaped) polygon around the origin."""
    n = n or int(rng.integers(6, 14))
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=n))
    # keep angles distinct
    while np.min(np.diff(angles, append=angles[0] + 2 * np.pi)) < 1e-3:
        angles = np.sort(rng.uniform(0, 2 * np.pi, size=n))
    radii = rng.uniform(r_lo, r_hi, size=n)
    return np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])


def hull_distance_oracle(ring):
    """Max distance from ring vertices to the convex hull boundary."""
    from shapely.geometry import Point, Polygon as ShapelyPolygon

    hull = ShapelyPolygon(ring).convex_hull
    return max(hull.exterior.distance(Point(p)) for p in ring)


# ---------------------------------------------------------------- concavity


def test_concavity_convex_is_zero():
    depth, witness = terrain.concavity(SQUARE)
    assert depth == 0.0 and witness == -1


def test_concavity_notch_depth():
    notch = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 0.6], [0.98, 1], [0, 1]],
                     dtype=float)
    depth, witness = terrain.concavity(notch)
    assert depth == pytest.approx(0.4, abs=1e-9)
    assert np.allclose(notch[witness], [1, 0.6])


# ----------------------------------------------------------------------- acd


def test_acd_convex_passthrough():
    pieces = terrain.acd(Polygon2D(SQUARE), tau=0.01)
    assert len(pieces) == 1
    assert pieces[0].area == pytest.approx(1.0)


def test_acd_l_shape_splits():
    l_shape = Polygon2D(np.array([
        [0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], dtype=float))
    tau = 0.05
    pieces = terrain.acd(l_shape, tau)
    assert len(pieces) >= 2
    for piece in pieces:
        assert hull_distance_oracle(piece.shell) <= tau + 1e-9
    assert sum(p.area for p in pieces) == pytest.approx(l_shape.area, rel=1e-6)


def test_acd_partition_preserves_area_random():
    rng = np.random.default_rng(2)
    for _ in range(20):
        ring = random_star_polygon(rng)
        poly = Polygon2D(ring)
        pieces = terrain.acd(poly, tau=0.08)
        assert sum(p.area for p in pieces) == pytest.approx(poly.area, rel=1e-6)
        for piece in pieces:
            assert hull_distance_oracle(piece.shell) <= 0.08 + 1e-9


def test_acd_resolves_holes():
    outer = 4 * SQUARE
    hole = (SQUARE * 0.8 + 1.5)[::-1]
    poly = Polygon2D(outer, [hole])
    pieces = terrain.acd(poly, tau=0.05)
    assert all(not p.holes for p in pieces)
    assert sum(p.area for p in pieces) == pytest.approx(poly.area, rel=1e-6)


def test_acd_zero_area_raises():
    flatline = Polygon2D(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
    with pytest.raises(terrain.DegeneratePolygon):
        terrain.acd(flatline, 0.1)


# ------------------------------------------------------------------ make_cut


def test_make_cut_edge_midpoint_normal():
    v = np.array([0.5, 1e-4])  # just inside the bottom edge of the unit square
    a = terrain.make_cut(SQUARE, v)
    assert np.allclose(a, [0.0, -1.0], atol=1e-5) or np.allclose(a, [0.0, 1.0], atol=1e-5)
    # outward means the kept side contains most of the square: loss small
    assert terrain.hinge_loss(SQUARE, v, np.arctan2(a[1], a[0])) <= 1e-6


def test_make_cut_beats_dense_sweep():
    rng = np.random.default_rng(3)
    for _ in range(25):
        ring = terrain.convex_hull(random_star_polygon(rng))
        centroid = ring.mean(axis=0)
        v = centroid + 0.3 * (ring[0] - centroid)
        a = terrain.make_cut(ring, v)
        loss = hinge_cut_loss(ring, v, np.arctan2(a[1], a[0]))
        sweep = min(hinge_cut_loss(ring, v, t)
                    for t in np.linspace(0, 2 * np.pi, 3600, endpoint=False))
        assert loss <= sweep + 1e-6


def test_make_cut_translation_invariant():
    v = np.array([0.4, 0.45])
    a1 = terrain.make_cut(SQUARE, v)
    shift = np.array([5.0, -3.0])
    a2 = terrain.make_cut(SQUARE + shift, v + shift)
    assert np.allclose(a1, a2, atol=1e-9)


# ------------------------------------------------------------------- whittle


def test_whittle_convex_passthrough():
    out = terrain.whittle(SQUARE)
    assert len(out) == 4
    assert terrain.signed_area(out) == pytest.approx(1.0)


def test_whittle_dented_square():
    delta = 0.2
    dented = np.array([
        [0, 0], [1, 0], [1, 1], [0.5, 1 - delta], [0, 1]], dtype=float)
    out = terrain.whittle(dented)
    for v in dented:
        assert not point_in_polygon(v, out, tol=1e-9)
    area_out = terrain.signed_area(out)
    area_in = terrain.signed_area(dented)
    assert area_out >= area_in - delta * 1.0
    # output is inside the convex hull
    hull = terrain.convex_hull(dented)
    for v in out:
        d = [float((hull[(i + 1) % len(hull)] - hull[i])[0] * (v - hull[i])[1]
                   - (hull[(i + 1) % len(hull)] - hull[i])[1] * (v - hull[i])[0])
             for i in range(len(hull))]
        assert min(d) >= -1e-9


def test_whittle_soundness_random():
    rng = np.random.default_rng(4)
    checked = 0
    for _ in range(30):
        ring = random_star_polygon(rng)
        for piece in terrain.acd(Polygon2D(ring), tau=0.08):
            out = terrain.whittle(piece.shell)
            for v in piece.shell:
                assert not point_in_polygon(v, out, tol=1e-9)
            checked += 1
    assert checked >= 30


# ----------------------------------------------------------------- footholds


def test_lift_unit_square():
    fh = terrain.lift_to_foothold(SQUARE, (0.0, 0.0, 0.0))
    assert np.allclose(fh.f, [0, 0, 1])
    assert fh.b == pytest.approx(0.0)
    normals = sorted(map(tuple, fh.F.round(12)))
    assert normals == [(-1, 0, 0), (0, -1, 0), (0, 1, 0), (1, 0, 0)]


def test_lift_vertices_satisfy_constraints():
    fh = terrain.lift_to_foothold(SQUARE * 0.8 + 0.3, (0.05, -0.12, 0.4))
    assert np.max(fh.F @ fh.verts.T - fh.c[:, None]) <= 1e-9
    assert np.max(np.abs(fh.verts @ fh.f - fh.b)) <= 1e-9


def test_lift_inclined_plane_normal():
    fh = terrain.lift_to_foothold(SQUARE, (0.1, 0.0, 0.0))
    expected = np.array([-0.1, 0.0, 1.0])
    expected /= np.linalg.norm(expected)
    assert np.allclose(fh.f, expected, atol=1e-12)


def test_foothold_json_roundtrip(tmp_path):
    fh = terrain.lift_to_foothold(SQUARE, (0.0, 0.1, 0.2))
    path = tmp_path / "fh.json"
    terrain.save_footholds(path, [fh])
    loaded = terrain.load_footholds(path)
    assert len(loaded) == 1
    assert np.allclose(loaded[0].verts, fh.verts)
    assert np.allclose(loaded[0].F, fh.F)


# ------------------------------------------------------------------ pipeline


def make_two_platform_map():
    res = 0.03
    cols, rows = 100, 50  # 3.0 m x 1.5 m
    x = (np.arange(cols) + 0.5) * res
    ramp_start, ramp_len = 1.5, 0.09
    z = np.where(x < ramp_start, 0.0,
                 np.where(x > ramp_start + ramp_len, 0.09,
                          (x - ramp_start)))
    return terrain.HeightMap(np.tile(z, (rows, 1)), res)


def test_pipeline_flat_map_single_inset_rectangle():
    res = 0.1
    hmap = terrain.HeightMap(np.zeros((30, 30)), res)
    cfg = terrain.SegmentationConfig(margin=0.05, min_area=0.1,
                                     inclination_max=np.deg2rad(20))
    fhs = terrain.decompose_terrain(hmap, cfg)
    assert len(fhs) == 1
    xy = fhs[0].vertices_xy
    assert xy[:, 0].min() == pytest.approx(0.05, abs=1e-9)
    assert xy[:, 0].max() == pytest.approx(2.95, abs=1e-9)
    assert fhs[0].height_at([1.5, 1.5]) == pytest.approx(0.0, abs=1e-9)


def test_pipeline_two_platforms():
    hmap = make_two_platform_map()
    cfg = terrain.SegmentationConfig(inclination_max=np.deg2rad(20),
                                     roughness_max=0.02, margin=0.05,
                                     min_area=0.1, acd_tau=0.05)
    fhs = terrain.decompose_terrain(hmap, cfg)
    assert len(fhs) == 2
    z0 = fhs[0].height_at(fhs[0].centroid()[:2])
    z1 = fhs[1].height_at(fhs[1].centroid()[:2])
    assert z0 == pytest.approx(0.0, abs=0.01)
    assert z1 == pytest.approx(0.09, abs=0.01)


def test_pipeline_all_unsteppable_empty():
    hmap = terrain.HeightMap(np.full((10, 10), np.nan), 0.1)
    fhs = terrain.decompose_terrain(hmap, terrain.SegmentationConfig())
    assert fhs == []


def test_pipeline_deterministic():
    hmap = make_two_platform_map()
    cfg = terrain.SegmentationConfig(inclination_max=np.deg2rad(20),
                                     roughness_max=0.02)
    a = terrain.decompose_terrain(hmap, cfg)
    b = terrain.decompose_terrain(hmap, cfg)
    assert len(a) == len(b)
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.verts, fb.verts)
        assert np.array_equal(fa.F, fb.F)
