"""Convex planar footholds in 3D: halfplane rows plus a supporting plane."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Foothold:
    """Convex stepping surface.

    Membership is ``F p <= c`` (vertical halfplanes bounding the polygon
    in x-y) together with the plane equality ``f . p = b``.  Rows of F and
    the plane normal f are unit length, so slacks are metric distances.
    ``verts`` are the polygon corners lifted onto the plane, for rendering
    and serialization.
    """

    F: np.ndarray
    c: np.ndarray
    f: np.ndarray
    b: float
    verts: np.ndarray

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=float).reshape(-1, 3)
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.f = np.asarray(self.f, dtype=float).reshape(3)
        self.b = float(self.b)
        self.verts = np.asarray(self.verts, dtype=float).reshape(-1, 3)
        if self.F.shape[0] != self.c.shape[0]:
            raise ValueError("F and c row counts differ")
        if self.F.shape[0] < 3 or self.verts.shape[0] < 3:
            raise ValueError("foothold must be a bounded polygon")
        norms = np.linalg.norm(self.F, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("rows of F must be unit length")
        if abs(np.linalg.norm(self.f) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        if np.max(self.F @ self.verts.T - self.c[:, None]) > 1e-9:
            raise ValueError("vertices violate the halfplane rows")
        if np.max(np.abs(self.verts @ self.f - self.b)) > 1e-9:
            raise ValueError("vertices are off the supporting plane")

    @property
    def vertices_xy(self) -> np.ndarray:
        return self.verts[:, :2]

    def centroid(self) -> np.ndarray:
        return self.verts.mean(axis=0)

    def height_at(self, xy) -> float:
        """Plane height at a horizontal position."""
        x, y = float(xy[0]), float(xy[1])
        # f0 x + f1 y + f2 z = b
        return (self.b - self.f[0] * x - self.f[1] * y) / self.f[2]

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=float).reshape(3)
        return bool(np.max(self.F @ p - self.c) <= tol
                    and abs(self.f @ p - self.b) <= tol)

    def margin_xy(self, p) -> float:
        """Smallest halfplane slack at p (negative outside)."""
        p = np.asarray(p, dtype=float).reshape(3)
        return float(np.min(self.c - self.F @ p))

    def distance_xy(self, xy) -> float:
        """Horizontal distance from a point to the foothold polygon."""
        pt = np.asarray(xy, dtype=float).reshape(2)
        ring = self.vertices_xy
        p3 = np.array([pt[0], pt[1], self.height_at(pt)])
        if self.margin_xy(p3) >= 0:
            return 0.0
        a = ring
        e = np.roll(ring, -1, axis=0) - ring
        L2 = np.einsum("ij,ij->i", e, e)
        t = np.clip(np.einsum("ij,ij->i", pt - a, e) / np.maximum(L2, 1e-300), 0.0, 1.0)
        proj = a + t[:, None] * e
        return float(np.sqrt(((pt - proj) ** 2).sum(axis=1).min()))

    def to_dict(self) -> dict:
        return {
            "F": self.F.tolist(),
            "c": self.c.tolist(),
            "f": self.f.tolist(),
            "b": self.b,
            "verts": self.verts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Foothold":
        return cls(np.array(d["F"]), np.array(d["c"]), np.array(d["f"]),
                   d["b"], np.array(d["verts"]))


def lift_to_foothold(vertices_xy: np.ndarray,
                     plane: tuple[float, float, float]) -> Foothold:
    """Embed a convex CCW polygon into 3D on the plane z = z0 + kx*x + ky*y."""
    ring = np.asarray(vertices_xy, dtype=float).reshape(-1, 2)
    kx, ky, z0 = plane
    n = len(ring)
    F = np.zeros((n, 3))
    c = np.zeros(n)
    for i in range(n):
        e = ring[(i + 1) % n] - ring[i]
        nv = np.array([e[1], -e[0]])  # outward normal of a CCW edge
        nv = nv / np.linalg.norm(nv)
        F[i, :2] = nv
        c[i] = nv @ ring[i]
    normal = np.array([-kx, -ky, 1.0])
    normal = normal / np.linalg.norm(normal)
    b = z0 * normal[2]
    z = z0 + kx * ring[:, 0] + ky * ring[:, 1]
    verts = np.column_stack([ring, z])
    return Foothold(F, c, normal, b, verts)


def save_footholds(path, footholds: list[Foothold]) -> None:
    with open(path, "w") as fh:
        json.dump([f.to_dict() for f in footholds], fh, indent=1)


def load_footholds(path) -> list[Foothold]:
    with open(path) as fh:
        data = json.load(fh)
    return [Foothold.from_dict(d) for d in data]
