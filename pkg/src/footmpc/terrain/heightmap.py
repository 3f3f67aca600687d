"""Gridded terrain heights: storage, file IO, smoothing, and steppability.

A height map is a uniform grid of terrain heights with NaN marking cells
that carry no data.  Row 0 is the southernmost row; ``origin`` is the
lower-left corner of the grid in world coordinates.  The on-disk format is
the plain-text ESRI ASCII grid (header of ncols/nrows/xllcorner/yllcorner/
cellsize/NODATA_value followed by rows north to south).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage


@dataclass
class SegmentationConfig:
    """Tuning knobs of the heightmap-to-foothold pipeline."""

    inclination_max: float = 0.35    # rad, max surface slope angle
    roughness_max: float = 0.03      # m, max residual from the local plane
    neighborhood_radius: int = 2     # cells, plane-fit window
    margin: float = 0.05             # m, inward offset of extracted polygons
    min_area: float = 0.1            # m^2, pieces below this are discarded
    acd_tau: float = 0.05            # m, concavity tolerance of decomposition
    blur_sigma: float = 1.0          # cells, Gaussian smoothing
    erosion_radius: int = 1          # cells, min-filter radius
    median_radius: int = 1           # cells, de-noising median radius

    def __post_init__(self):
        numeric = (self.inclination_max, self.roughness_max, self.margin,
                   self.min_area, self.acd_tau, self.blur_sigma)
        if any(v < 0 for v in numeric):
            raise ValueError("segmentation parameters must be non-negative")
        if min(self.neighborhood_radius, self.erosion_radius, self.median_radius) < 0:
            raise ValueError("filter radii must be non-negative")


@dataclass
class HeightMap:
    """Uniform terrain grid; NaN heights mark invalid cells."""

    heights: np.ndarray          # (rows, cols) float, row 0 = south
    resolution: float            # m per cell
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))  # lower-left corner

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=float)
        self.origin = np.asarray(self.origin, dtype=float).reshape(2)
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.heights.ndim != 2 or min(self.heights.shape) < 2:
            raise ValueError("height grid must be at least 2 x 2")

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.heights)

    @property
    def shape(self) -> tuple[int, int]:
        return self.heights.shape

    def cell_center(self, row: int, col: int) -> np.ndarray:
        return self.origin + (np.array([col, row]) + 0.5) * self.resolution

    def with_heights(self, heights: np.ndarray) -> "HeightMap":
        return replace(self, heights=np.asarray(heights, dtype=float))


def load_esri_ascii(path) -> HeightMap:
    """Read an ESRI ASCII grid file."""
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) == 2 and parts[0].lower() in (
                    "ncols", "nrows", "xllcorner", "yllcorner", "cellsize",
                    "nodata_value"):
                header[parts[0].lower()] = float(parts[1])
            else:
                rows.append([float(v) for v in parts])
    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise ValueError(f"ESRI grid header missing '{key}'")
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    data = np.array(rows, dtype=float)
    if data.shape != (nrows, ncols):
        raise ValueError(
            f"grid body is {data.shape}, header says {(nrows, ncols)}")
    nodata = header.get("nodata_value")
    if nodata is not None:
        data[data == nodata] = np.nan
    origin = np.array([header.get("xllcorner", 0.0), header.get("yllcorner", 0.0)])
    return HeightMap(np.flipud(data), header["cellsize"], origin)


def save_esri_ascii(path, hmap: HeightMap, nodata: float = -9999.0) -> None:
    rows, cols = hmap.shape
    data = np.flipud(hmap.heights).copy()
    data[~np.isfinite(data)] = nodata
    with open(path, "w") as fh:
        fh.write(f"ncols {cols}\n")
        fh.write(f"nrows {rows}\n")
        fh.write(f"xllcorner {hmap.origin[0]:.10g}\n")
        fh.write(f"yllcorner {hmap.origin[1]:.10g}\n")
        fh.write(f"cellsize {hmap.resolution:.10g}\n")
        fh.write(f"NODATA_value {nodata:.10g}\n")
        for row in data:
            fh.write(" ".join(f"{v:.10g}" for v in row) + "\n")


def _window_stack(values: np.ndarray, radius: int) -> np.ndarray:
    """(offsets, rows, cols) stack of square-window shifts, NaN-padded."""
    r = radius
    padded = np.pad(values, r, constant_values=np.nan)
    rows, cols = values.shape
    shifts = []
    for dr in range(-r, r + 1):
        for dc in range(-r, r + 1):
            shifts.append(padded[r + dr:r + dr + rows, r + dc:r + dc + cols])
    return np.stack(shifts)


def median_filter(hmap: HeightMap, radius: int) -> HeightMap:
    """Median over the square window, ignoring invalid cells."""
    if radius <= 0:
        return hmap.with_heights(hmap.heights.copy())
    stack = _window_stack(hmap.heights, radius)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = np.nanmedian(stack, axis=0)
    out[~hmap.valid] = np.nan
    return hmap.with_heights(out)


def erosion_filter(hmap: HeightMap, radius: int) -> HeightMap:
    """Grayscale erosion (window minimum), ignoring invalid cells."""
    if radius <= 0:
        return hmap.with_heights(hmap.heights.copy())
    stack = _window_stack(hmap.heights, radius)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = np.nanmin(stack, axis=0)
    out[~hmap.valid] = np.nan
    return hmap.with_heights(out)


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Truncated discrete Gaussian, radius ceil(3 sigma), unnormalized."""
    radius = max(1, int(np.ceil(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=float)
    return np.exp(-t * t / (2.0 * sigma * sigma))


def gaussian_blur(hmap: HeightMap, sigma: float) -> HeightMap:
    """Normalized separable Gaussian blur; invalid cells excluded and kept."""
    if sigma <= 0:
        return hmap.with_heights(hmap.heights.copy())
    k = gaussian_kernel_1d(sigma)
    valid = hmap.valid
    filled = np.where(valid, hmap.heights, 0.0)
    mask = valid.astype(float)

    def conv2(a):
        a = ndimage.correlate1d(a, k, axis=0, mode="constant", cval=0.0)
        return ndimage.correlate1d(a, k, axis=1, mode="constant", cval=0.0)

    num = conv2(filled)
    den = conv2(mask)
    out = np.full(hmap.shape, np.nan)
    ok = valid & (den > 0)
    out[ok] = num[ok] / den[ok]
    return hmap.with_heights(out)


def filter_map(hmap: HeightMap, cfg: SegmentationConfig) -> HeightMap:
    """De-noise and smooth: median, then erosion, then Gaussian blur."""
    out = median_filter(hmap, cfg.median_radius)
    out = erosion_filter(out, cfg.erosion_radius)
    return gaussian_blur(out, cfg.blur_sigma)


def _disc_offsets(radius: int) -> np.ndarray:
    offs = [(dr, dc)
            for dr in range(-radius, radius + 1)
            for dc in range(-radius, radius + 1)
            if dr * dr + dc * dc <= radius * radius]
    return np.array(offs, dtype=int)


def classify_steppable(hmap: HeightMap, cfg: SegmentationConfig) -> np.ndarray:
    """Boolean steppability grid from local plane inclination and roughness.

    A cell is steppable when the least-squares plane over its disc
    neighborhood is inclined at most ``inclination_max`` and the largest
    absolute residual is at most ``roughness_max``.  Invalid cells and
    cells with fewer than three valid neighbors are unsteppable.
    """
    rows, cols = hmap.shape
    offs = _disc_offsets(max(1, cfg.neighborhood_radius))
    res = hmap.resolution
    h = hmap.heights
    valid = hmap.valid

    n_off = len(offs)
    h_stack = np.full((n_off, rows, cols), np.nan)
    for i, (dr, dc) in enumerate(offs):
        src_r = slice(max(0, dr), min(rows, rows + dr))
        dst_r = slice(max(0, -dr), min(rows, rows - dr))
        src_c = slice(max(0, dc), min(cols, cols + dc))
        dst_c = slice(max(0, -dc), min(cols, cols - dc))
        h_stack[i][dst_r, dst_c] = h[src_r, src_c]
    m_stack = np.isfinite(h_stack)

    dx = (offs[:, 1] * res)[:, None, None]
    dy = (offs[:, 0] * res)[:, None, None]
    w = m_stack.astype(float)
    hz = np.where(m_stack, h_stack, 0.0)

    S1 = w.sum(axis=0)
    Sx = (w * dx).sum(axis=0)
    Sy = (w * dy).sum(axis=0)
    Sxx = (w * dx * dx).sum(axis=0)
    Syy = (w * dy * dy).sum(axis=0)
    Sxy = (w * dx * dy).sum(axis=0)
    Sh = hz.sum(axis=0)
    Shx = (hz * dx).sum(axis=0)
    Shy = (hz * dy).sum(axis=0)

    G = np.stack([
        np.stack([S1, Sx, Sy], axis=-1),
        np.stack([Sx, Sxx, Sxy], axis=-1),
        np.stack([Sy, Sxy, Syy], axis=-1),
    ], axis=-2)
    rhs = np.stack([Sh, Shx, Shy], axis=-1)
    G = G + 1e-12 * np.eye(3)
    coef = np.linalg.solve(G, rhs[..., None])[..., 0]  # (rows, cols, 3)

    plane = coef[..., 0] + coef[..., 1] * dx + coef[..., 2] * dy
    resid = np.where(m_stack, np.abs(h_stack - plane), 0.0)
    roughness = resid.max(axis=0)
    slope = np.hypot(coef[..., 1], coef[..., 2])
    inclination = np.arctan(slope)

    enough = S1 >= 3
    return valid & enough & (inclination <= cfg.inclination_max) & \
        (roughness <= cfg.roughness_max)
