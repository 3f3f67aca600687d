"""Terrain pipeline: height maps to convex polygonal footholds."""

from .decomp import (DegeneratePolygon, EmptyResult, acd, concavity,
                     convex_hull, hinge_loss, make_cut, whittle)
from .footholds import Foothold, lift_to_foothold, load_footholds, save_footholds
from .heightmap import (HeightMap, SegmentationConfig, classify_steppable,
                        erosion_filter, filter_map, gaussian_blur,
                        gaussian_kernel_1d, load_esri_ascii, median_filter,
                        save_esri_ascii)
from .pipeline import decompose_terrain
from .polygons import (Polygon2D, extract_polygons, fit_plane, inset_polygon,
                       signed_area, trace_cell_rings)

__all__ = [
    "DegeneratePolygon", "EmptyResult", "Foothold", "HeightMap", "Polygon2D",
    "SegmentationConfig", "acd", "classify_steppable", "concavity",
    "convex_hull", "decompose_terrain", "erosion_filter", "extract_polygons",
    "filter_map", "fit_plane", "gaussian_blur", "gaussian_kernel_1d",
    "hinge_loss", "inset_polygon", "lift_to_foothold", "load_esri_ascii",
    "load_footholds", "make_cut", "median_filter", "save_esri_ascii",
    "save_footholds", "signed_area", "trace_cell_rings", "whittle",
]
