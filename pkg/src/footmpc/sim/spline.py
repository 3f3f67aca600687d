"""Swing-foot trajectories and the CoM support plane.

The swing foot travels along a two-segment minimum-snap polynomial through
a raised midpoint; snap (the fourth position derivative) is minimized
because foot position sits at relative degree four from the actuators once
series compliance is considered.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from ..qp import solve_equality_qp

_ORDER = 8  # coefficients per segment (degree 7)


def com_plane(p_next: np.ndarray) -> tuple[float, float]:
    """Least-inclined plane through the stance foot and the next footstep.

    Solves [[px, py], [-py, px]] [kx, ky]' = [pz, 0]; a degenerate step
    (next foot directly above the stance origin) returns a level plane.
    """
    p = np.asarray(p_next, dtype=float).reshape(3)
    px, py, pz = p
    det = px * px + py * py
    if np.sqrt(det) < 1e-6:
        return 0.0, 0.0
    kx = px * pz / det
    ky = py * pz / det
    return float(kx), float(ky)


def _deriv_row(tau: float, deriv: int) -> np.ndarray:
    row = np.zeros(_ORDER)
    for j in range(deriv, _ORDER):
        row[j] = factorial(j) / factorial(j - deriv) * tau ** (j - deriv)
    return row


def _snap_gram(tau: float) -> np.ndarray:
    H = np.zeros((_ORDER, _ORDER))
    for i in range(4, _ORDER):
        ci = factorial(i) / factorial(i - 4)
        for j in range(4, _ORDER):
            cj = factorial(j) / factorial(j - 4)
            H[i, j] = ci * cj * tau ** (i + j - 7) / (i + j - 7)
    return H


@dataclass
class SwingSpline:
    """Two-segment degree-7 polynomial per axis."""

    coeffs: np.ndarray      # (2, 3, 8)
    durations: np.ndarray   # (2,)
    waypoints: np.ndarray   # (3, 3) start, middle, end

    @property
    def duration(self) -> float:
        return float(self.durations.sum())

    @property
    def end_position(self) -> np.ndarray:
        return self.waypoints[2]

    def _eval(self, t: float, deriv: int) -> np.ndarray:
        t = min(max(t, 0.0), self.duration)
        if t <= self.durations[0]:
            seg, tau = 0, t
        else:
            seg, tau = 1, t - self.durations[0]
        row = _deriv_row(tau, deriv)
        return self.coeffs[seg] @ row

    def position(self, t: float) -> np.ndarray:
        return self._eval(t, 0)

    def velocity(self, t: float) -> np.ndarray:
        return self._eval(t, 1)

    def acceleration(self, t: float) -> np.ndarray:
        return self._eval(t, 2)

    def snap_integral(self) -> float:
        total = 0.0
        for seg in range(2):
            H = _snap_gram(self.durations[seg])
            for axis in range(3):
                c = self.coeffs[seg, axis]
                total += c @ H @ c
        return total


def _solve_spline(rows, rhs_per_axis, durations) -> np.ndarray:
    """Minimum-snap coefficients subject to the given interpolation rows."""
    H = np.zeros((2 * _ORDER, 2 * _ORDER))
    H[:_ORDER, :_ORDER] = _snap_gram(durations[0])
    H[_ORDER:, _ORDER:] = _snap_gram(durations[1])
    H += 1e-9 * np.eye(2 * _ORDER)
    A = np.array(rows)
    coeffs = np.zeros((2, 3, _ORDER))
    for axis in range(3):
        z, _ = solve_equality_qp(2.0 * H, np.zeros(2 * _ORDER), A,
                                 np.array([r[axis] for r in rhs_per_axis]))
        coeffs[0, axis] = z[:_ORDER]
        coeffs[1, axis] = z[_ORDER:]
    return coeffs


def _junction_rows(tau1: float) -> list[np.ndarray]:
    rows = []
    for d in range(1, 5):
        row = np.zeros(2 * _ORDER)
        row[:_ORDER] = _deriv_row(tau1, d)
        row[_ORDER:] = -_deriv_row(0.0, d)
        rows.append(row)
    return rows


def min_snap_spline(w0, w1, w2, duration: float) -> SwingSpline:
    """Minimum-snap spline through three waypoints, at rest at both ends.

    Position, velocity, acceleration, and jerk are fixed at the endpoints
    (zero derivatives), the middle waypoint is hit at half time, and the
    two segments join with four continuous derivatives.
    """
    if duration <= 0:
        raise ValueError("spline duration must be positive")
    w0 = np.asarray(w0, dtype=float).reshape(3)
    w1 = np.asarray(w1, dtype=float).reshape(3)
    w2 = np.asarray(w2, dtype=float).reshape(3)
    tau = duration / 2.0
    rows, rhs = [], []

    def seg_row(seg, t, d):
        row = np.zeros(2 * _ORDER)
        row[seg * _ORDER:(seg + 1) * _ORDER] = _deriv_row(t, d)
        return row

    zero = np.zeros(3)
    for d in range(4):
        rows.append(seg_row(0, 0.0, d))
        rhs.append(w0 if d == 0 else zero)
    rows.append(seg_row(0, tau, 0))
    rhs.append(w1)
    rows.append(seg_row(1, 0.0, 0))
    rhs.append(w1)
    for d in range(4):
        rows.append(seg_row(1, tau, d))
        rhs.append(w2 if d == 0 else zero)
    rows.extend(_junction_rows(tau))
    rhs.extend([zero] * 4)

    coeffs = _solve_spline(rows, rhs, (tau, tau))
    return SwingSpline(coeffs, np.array([tau, tau]), np.stack([w0, w1, w2]))


def retarget_spline(pos, vel, acc, w1, w2, duration: float) -> SwingSpline:
    """Re-aim a swing mid-flight: current motion becomes the start condition."""
    if duration <= 0:
        raise ValueError("spline duration must be positive")
    pos = np.asarray(pos, dtype=float).reshape(3)
    vel = np.asarray(vel, dtype=float).reshape(3)
    acc = np.asarray(acc, dtype=float).reshape(3)
    w1 = np.asarray(w1, dtype=float).reshape(3)
    w2 = np.asarray(w2, dtype=float).reshape(3)
    tau = duration / 2.0
    rows, rhs = [], []

    def seg_row(seg, t, d):
        row = np.zeros(2 * _ORDER)
        row[seg * _ORDER:(seg + 1) * _ORDER] = _deriv_row(t, d)
        return row

    zero = np.zeros(3)
    rows.append(seg_row(0, 0.0, 0))
    rhs.append(pos)
    rows.append(seg_row(0, 0.0, 1))
    rhs.append(vel)
    rows.append(seg_row(0, 0.0, 2))
    rhs.append(acc)
    rows.append(seg_row(0, tau, 0))
    rhs.append(w1)
    rows.append(seg_row(1, 0.0, 0))
    rhs.append(w1)
    for d in range(4):
        rows.append(seg_row(1, tau, d))
        rhs.append(w2 if d == 0 else zero)
    rows.extend(_junction_rows(tau))
    rhs.extend([zero] * 4)

    coeffs = _solve_spline(rows, rhs, (tau, tau))
    return SwingSpline(coeffs, np.array([tau, tau]), np.stack([pos, w1, w2]))


def swing_midpoint(w0, w2, apex: float) -> np.ndarray:
    """Raised waypoint above the chord between liftoff and touchdown."""
    w0 = np.asarray(w0, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    mid = 0.5 * (w0 + w2)
    mid[2] = max(w0[2], w2[2]) + apex
    return mid
