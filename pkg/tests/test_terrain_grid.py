import numpy as np
import pytest

from footmpc import terrain
from footmpc.terrain.heightmap import _disc_offsets


def flat_map(rows=20, cols=20, value=0.3, res=0.1):
    return terrain.HeightMap(np.full((rows, cols), value), res)


def default_cfg(**kw):
    return terrain.SegmentationConfig(**kw)


def test_config_validation():
    with pytest.raises(ValueError):
        terrain.SegmentationConfig(margin=-0.1)


def test_filters_preserve_constant_map():
    hmap = flat_map(value=0.42)
    out = terrain.filter_map(hmap, default_cfg())
    assert np.allclose(out.heights, 0.42, atol=1e-12)


def test_median_removes_spike():
    hmap = flat_map()
    hmap.heights[10, 10] = 1.3
    out = terrain.median_filter(hmap, 1)
    assert out.heights[10, 10] == pytest.approx(0.3, abs=1e-12)


def test_erosion_is_window_minimum():
    hmap = flat_map()
    hmap.heights[5, 5] = -0.5
    out = terrain.erosion_filter(hmap, 1)
    assert np.all(out.heights[4:7, 4:7] == -0.5)
    assert out.heights[8, 8] == pytest.approx(0.3)


def test_gaussian_blur_matches_direct_convolution_oracle():
    rng = np.random.default_rng(0)
    rows, cols = 16, 24
    heights = np.where(np.arange(cols)[None, :] < 12, 0.0, 0.15) * np.ones((rows, 1))
    heights += 0.01 * rng.normal(size=(rows, cols))
    heights[3, 4] = np.nan
    heights[10, 20] = np.nan
    hmap = terrain.HeightMap(heights, 0.05)
    sigma = 2.0
    out = terrain.gaussian_blur(hmap, sigma)

    k1 = terrain.gaussian_kernel_1d(sigma)
    radius = (len(k1) - 1) // 2
    kernel = np.outer(k1, k1)
    for r in range(rows):
        for c in range(cols):
            if not np.isfinite(heights[r, c]):
                assert not np.isfinite(out.heights[r, c])
                continue
            num = den = 0.0
            for dr in range(-radius, radius + 1):
                for dc in range(-radius, radius + 1):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < rows and 0 <= cc < cols and np.isfinite(heights[rr, cc]):
                        w = kernel[dr + radius, dc + radius]
                        num += w * heights[rr, cc]
                        den += w
            assert out.heights[r, c] == pytest.approx(num / den, abs=1e-9)


def test_invalid_cells_stay_invalid():
    hmap = flat_map()
    hmap.heights[2, 3] = np.nan
    out = terrain.filter_map(hmap, default_cfg())
    assert not np.isfinite(out.heights[2, 3])
    assert np.isfinite(out.heights[2, 4])


def test_flat_map_fully_steppable():
    hmap = flat_map()
    step = terrain.classify_steppable(hmap, default_cfg())
    assert step.all()


def test_steep_ramp_not_steppable():
    res = 0.1
    cols = 30
    x = (np.arange(cols) + 0.5) * res
    heights = np.tile(x, (20, 1))  # 45 degree ramp
    hmap = terrain.HeightMap(heights, res)
    cfg = default_cfg(inclination_max=np.deg2rad(20.0))
    step = terrain.classify_steppable(hmap, cfg)
    assert not step.any()


def test_classification_matches_plane_fit_oracle():
    rng = np.random.default_rng(1)
    rows, cols, res = 14, 17, 0.05
    heights = 0.02 * rng.normal(size=(rows, cols))
    heights[0, 0] = np.nan
    heights[7, 9] = np.nan
    hmap = terrain.HeightMap(heights, res)
    cfg = default_cfg(inclination_max=0.3, roughness_max=0.025,
                      neighborhood_radius=2)
    got = terrain.classify_steppable(hmap, cfg)

    offs = _disc_offsets(cfg.neighborhood_radius)
    for r in range(rows):
        for c in range(cols):
            if not np.isfinite(heights[r, c]):
                assert not got[r, c]
                continue
            rows_ok, A, z = 0, [], []
            for dr, dc in offs:
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols and np.isfinite(heights[rr, cc]):
                    A.append([1.0, dc * res, dr * res])
                    z.append(heights[rr, cc])
            A, z = np.array(A), np.array(z)
            coef, *_ = np.linalg.lstsq(A, z, rcond=None)
            rough = np.abs(z - A @ coef).max()
            incl = np.arctan(np.hypot(coef[1], coef[2]))
            expected = (len(z) >= 3 and incl <= cfg.inclination_max
                        and rough <= cfg.roughness_max)
            assert got[r, c] == expected, (r, c)


def test_extract_single_rectangle_inset():
    rows, cols, res = 12, 18, 0.1
    hmap = flat_map(rows, cols, res=res)
    step = np.zeros((rows, cols), dtype=bool)
    step[2:8, 3:13] = True  # 6 x 10 cells
    cfg = default_cfg(margin=0.05)
    polys = terrain.extract_polygons(step, hmap, cfg)
    assert len(polys) == 1
    poly, plane = polys[0]
    width = poly.shell[:, 0].max() - poly.shell[:, 0].min()
    height = poly.shell[:, 1].max() - poly.shell[:, 1].min()
    assert width == pytest.approx(10 * res - 2 * cfg.margin, abs=1e-9)
    assert height == pytest.approx(6 * res - 2 * cfg.margin, abs=1e-9)
    assert plane[2] == pytest.approx(0.3, abs=1e-9)


def test_extract_two_components():
    rows, cols = 10, 10
    hmap = flat_map(rows, cols)
    step = np.zeros((rows, cols), dtype=bool)
    step[1:4, 1:9] = True
    step[6:9, 1:9] = True
    polys = terrain.extract_polygons(step, hmap, default_cfg(margin=0.02))
    assert len(polys) == 2


def test_extract_component_with_hole():
    rows, cols = 14, 14
    hmap = flat_map(rows, cols)
    step = np.zeros((rows, cols), dtype=bool)
    step[1:13, 1:13] = True
    step[6:8, 6:8] = False
    polys = terrain.extract_polygons(step, hmap, default_cfg(margin=0.0))
    assert len(polys) == 1
    assert len(polys[0][0].holes) == 1


def test_esri_roundtrip(tmp_path):
    heights = np.arange(20, dtype=float).reshape(4, 5)
    heights[1, 1] = np.nan
    hmap = terrain.HeightMap(heights, 0.25, np.array([1.5, -2.0]))
    path = tmp_path / "grid.asc"
    terrain.save_esri_ascii(path, hmap)
    loaded = terrain.load_esri_ascii(path)
    assert loaded.resolution == pytest.approx(0.25)
    assert np.allclose(loaded.origin, [1.5, -2.0])
    mask = np.isfinite(heights)
    assert np.array_equal(np.isfinite(loaded.heights), mask)
    assert np.allclose(loaded.heights[mask], heights[mask])


def test_esri_bad_header(tmp_path):
    path = tmp_path / "bad.asc"
    path.write_text("ncols 3\n1 2 3\n")
    with pytest.raises(ValueError):
        terrain.load_esri_ascii(path)
