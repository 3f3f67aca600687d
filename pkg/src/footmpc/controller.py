"""Footstep MPC: one mixed-integer QP per control tick.

The planner jointly chooses, over a horizon of N stance periods, the CoM
trajectory (K knots per period), sagittal ankle torque at each knot, the
next N-1 footstep positions, and for every planned footstep a binary
choice of foothold polygon.  Binaries enter through big-M rows, so every
branch-and-bound node is the same QP with different bounds; one matrix
factorization serves the whole tree, and each node warm-starts from its
parent.

Per-period state knots live in that period's stance frame; footsteps and
footholds live in the yaw frame.  The first footstep is the current
stance foot: it is fixed and exempt from foothold assignment.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from . import alip
from .qp import INFEASIBLE, MAX_ITER, OPTIMAL, BoxQp, QpInstance
from .terrain.footholds import Foothold


class AllNodesInfeasible(RuntimeError):
    """No foothold sequence admits a feasible plan."""


def _default_q() -> np.ndarray:
    return np.diag([1.0, 1.0, 0.1, 0.1])


@dataclass
class MpcConfig:
    """Weights, limits, and model data of the footstep planner."""

    params: alip.AlipParams = field(default_factory=alip.AlipParams)
    timing: alip.GaitTiming = field(default_factory=alip.GaitTiming)
    Q: np.ndarray = field(default_factory=_default_q)
    R: float = 0.1
    Qf: np.ndarray | None = None          # defaults to 10 * Q
    u_max: float = 5.0                    # N m, sagittal ankle torque limit
    com_box: tuple[float, float] = (0.5, 0.5)   # |x_com|, |y_com| bounds (m)
    crossover_margin: float = 0.0         # m, min signed lateral footstep offset
    big_m: float = 10.0                   # m, foothold relaxation slack
    rate_limit_halfwidth: float = 0.10    # m, next-footstep box halfwidth
    rate_limit_window: float = 0.25       # s, window before touchdown
    max_candidates: int = 9               # foothold pruning cap
    reach_radius: float = 0.75            # m, per-step pruning radius

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float).reshape(4, 4)
        if self.Qf is None:
            self.Qf = 10.0 * self.Q
        self.Qf = np.asarray(self.Qf, dtype=float).reshape(4, 4)
        if self.u_max <= 0 or self.big_m <= 0:
            raise ValueError("u_max and big_m must be positive")


@dataclass
class SolveStats:
    nodes_explored: int = 0
    qp_solves: int = 0
    wall_time: float = 0.0
    relaxation_was_integral: bool = False
    iterations: int = 0


@dataclass
class MpcSolution:
    """Planned trajectories, footsteps, and foothold assignment."""

    x_traj: np.ndarray        # (N, K, 4) states, per-period stance frames
    u_traj: np.ndarray        # (N, K-1) ankle torques
    footsteps: np.ndarray     # (N, 3) yaw frame; row 0 is the current stance foot
    assignment: np.ndarray    # (N, I) one-hot foothold choice per step
    objective: float
    stats: SolveStats
    warm_start: tuple | None = None   # engine iterates, not serialized

    def to_dict(self) -> dict:
        return {
            "x_traj": self.x_traj.tolist(),
            "u_traj": self.u_traj.tolist(),
            "footsteps": self.footsteps.tolist(),
            "assignment": self.assignment.tolist(),
            "objective": self.objective,
            "stats": {
                "nodes_explored": self.stats.nodes_explored,
                "qp_solves": self.stats.qp_solves,
                "wall_time": self.stats.wall_time,
                "relaxation_was_integral": self.stats.relaxation_was_integral,
                "iterations": self.stats.iterations,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MpcSolution":
        s = d.get("stats", {})
        return cls(
            np.array(d["x_traj"]), np.array(d["u_traj"]),
            np.array(d["footsteps"]), np.array(d["assignment"]),
            float(d["objective"]),
            SolveStats(s.get("nodes_explored", 0), s.get("qp_solves", 0),
                       s.get("wall_time", 0.0),
                       s.get("relaxation_was_integral", False),
                       s.get("iterations", 0)),
        )


@dataclass
class MpcProblem:
    """One planning instance: current state, terrain, and reference."""

    x0: np.ndarray                    # (4,) current ALIP state, stance frame
    p0: np.ndarray                    # (3,) current stance foot, yaw frame
    stance_sign: int                  # -1 left stance, +1 right stance
    footholds: list[Foothold]
    x_ref: np.ndarray                 # (N, K, 4) reference states
    footstep_ref: np.ndarray          # (N, 3) reference footsteps, yaw frame
    time_remaining: float             # s left in the current single stance
    previous_solution: MpcSolution | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(4)
        self.p0 = np.asarray(self.p0, dtype=float).reshape(3)
        if not self.footholds:
            raise ValueError("problem needs at least one foothold")
        if not np.isfinite(self.x0).all():
            raise ValueError("x0 must be finite")

    @property
    def rate_limit_anchor(self) -> np.ndarray | None:
        if self.previous_solution is None:
            return None
        return self.previous_solution.footsteps[1]

    def to_dict(self) -> dict:
        return {
            "x0": self.x0.tolist(),
            "p0": self.p0.tolist(),
            "stance_sign": self.stance_sign,
            "footholds": [f.to_dict() for f in self.footholds],
            "x_ref": self.x_ref.tolist(),
            "footstep_ref": self.footstep_ref.tolist(),
            "time_remaining": self.time_remaining,
            "previous_solution": (None if self.previous_solution is None
                                  else self.previous_solution.to_dict()),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MpcProblem":
        prev = d.get("previous_solution")
        return cls(
            np.array(d["x0"]), np.array(d["p0"]), int(d["stance_sign"]),
            [Foothold.from_dict(f) for f in d["footholds"]],
            np.array(d["x_ref"]), np.array(d["footstep_ref"]),
            float(d["time_remaining"]),
            None if prev is None else MpcSolution.from_dict(prev),
        )


def build_reference(
    command: alip.GaitCommand,
    cfg: MpcConfig,
    stance_sign: int,
    time_remaining: float,
    p0: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-knot reference states and footsteps from the periodic gait.

    The orbit is re-anchored to the current stance: the first period's
    knots are phased by the time already spent in stance.
    """
    timing = cfg.timing
    N, K = timing.horizon, timing.knots
    cmd = alip.GaitCommand(command.velocity, command.stance_width, stance_sign)
    states = alip.orbit_stance_states(cmd, cfg.params, timing)
    deltas = alip.reference_footstep_deltas(cmd, timing)
    A, _ = alip.dynamics_matrices(cfg.params)

    t_rem = min(max(time_remaining, 1e-4), timing.single_stance)
    x_ref = np.zeros((N, K, 4))
    for n in range(N):
        start = states[n % 2]
        if n == 0:
            t0 = timing.single_stance - t_rem
            dt = t_rem / (K - 1)
        else:
            t0 = 0.0
            dt = timing.knot_dt
        for k in range(K):
            x_ref[n, k] = expm(A * (t0 + k * dt)) @ start

    p_ref = np.zeros((N, 3))
    p_ref[0] = p0
    for n in range(1, N):
        p_ref[n] = p_ref[n - 1] + deltas[(n - 1) % 2]
    return x_ref, p_ref


def make_problem(
    x0,
    p0,
    stance_sign: int,
    footholds: list[Foothold],
    command: alip.GaitCommand,
    cfg: MpcConfig,
    time_remaining: float,
    previous_solution: MpcSolution | None = None,
) -> MpcProblem:
    x_ref, p_ref = build_reference(command, cfg, stance_sign, time_remaining, p0)
    return MpcProblem(x0, p0, stance_sign, footholds, x_ref, p_ref,
                      time_remaining, previous_solution)


def current_foothold_index(prob: MpcProblem) -> int:
    """Foothold under the stance foot: deepest horizontal containment."""
    margins = [fh.margin_xy(prob.p0) for fh in prob.footholds]
    return int(np.argmax(margins))


class _Layout:
    def __init__(self, N: int, K: int, I: int, with_mu: bool):
        self.N, self.K, self.I = N, K, I
        self.nx = 4 * N * K
        self.nu = N * (K - 1)
        self.np = 3 * (N - 1)
        self.nmu = (N - 1) * I if with_mu else 0
        self.nv = self.nx + self.nu + self.np + self.nmu

    def ix(self, n, k):
        return 4 * (n * self.K + k)

    def iu(self, n, k):
        return self.nx + n * (self.K - 1) + k

    def ip(self, j):
        return self.nx + self.nu + 3 * j

    def imu(self, j, i):
        return self.nx + self.nu + self.np + self.I * j + i


def _stance_dynamics(prob: MpcProblem, cfg: MpcConfig):
    """(Ad, Bd) per period; the current period uses the remaining time."""
    timing = cfg.timing
    K = timing.knots
    t_rem = min(max(prob.time_remaining, 1e-4), timing.single_stance)
    first = alip.discretize(cfg.params, t_rem / (K - 1))
    rest = alip.discretize(cfg.params, timing.knot_dt)
    return [first] + [rest] * (timing.horizon - 1)


def _cost_terms(prob: MpcProblem, cfg: MpcConfig, lay: _Layout):
    """(P, q, constant) of the tracking cost in the given layout."""
    P = np.zeros((lay.nv, lay.nv))
    q = np.zeros(lay.nv)
    c0 = 0.0
    N, K = lay.N, lay.K
    for n in range(N):
        for k in range(K - 1):
            i = lay.ix(n, k)
            xd = prob.x_ref[n, k]
            P[i:i + 4, i:i + 4] += 2.0 * cfg.Q
            q[i:i + 4] += -2.0 * cfg.Q @ xd
            c0 += xd @ cfg.Q @ xd
        for k in range(K - 1):
            iu = lay.iu(n, k)
            P[iu, iu] += 2.0 * cfg.R
    i = lay.ix(N - 1, K - 1)
    xd = prob.x_ref[N - 1, K - 1]
    P[i:i + 4, i:i + 4] += 2.0 * cfg.Qf
    q[i:i + 4] += -2.0 * cfg.Qf @ xd
    c0 += xd @ cfg.Qf @ xd
    return P, q, c0


def _stance_signs(prob: MpcProblem, N: int) -> list[int]:
    return [prob.stance_sign * (-1) ** n for n in range(N)]


class _Transcription:
    """Two-sided-row form of one problem; nodes differ only in bounds."""

    def __init__(self, prob: MpcProblem, cfg: MpcConfig):
        timing = cfg.timing
        N, K = timing.horizon, timing.knots
        I = len(prob.footholds)
        lay = _Layout(N, K, I, with_mu=True)
        self.prob, self.cfg, self.lay = prob, cfg, lay

        self.P, self.q, self.c0 = _cost_terms(prob, cfg, lay)
        Ar, Br = alip.reset_map_matrices(cfg.params, timing.double_stance)
        dyn = _stance_dynamics(prob, cfg)

        rows: list[np.ndarray] = []
        lo: list[float] = []
        hi: list[float] = []
        eq: list[bool] = []

        def add(row, l, h, is_eq=False):
            rows.append(row)
            lo.append(l)
            hi.append(h)
            eq.append(is_eq)

        nv = lay.nv
        # initial state
        for i in range(4):
            r = np.zeros(nv)
            r[lay.ix(0, 0) + i] = 1.0
            add(r, prob.x0[i], prob.x0[i], True)
        # knot dynamics
        for n in range(N):
            Ad, Bd = dyn[n]
            for k in range(K - 1):
                for i in range(4):
                    r = np.zeros(nv)
                    r[lay.ix(n, k + 1) + i] = 1.0
                    r[lay.ix(n, k):lay.ix(n, k) + 4] -= Ad[i]
                    r[lay.iu(n, k)] = -Bd[i]
                    add(r, 0.0, 0.0, True)
        # reset map between periods
        for n in range(N - 1):
            for i in range(4):
                r = np.zeros(nv)
                r[lay.ix(n + 1, 0) + i] = 1.0
                r[lay.ix(n, K - 1):lay.ix(n, K - 1) + 4] -= Ar[i]
                r[lay.ip(n):lay.ip(n) + 3] -= Br[i]
                rhs = 0.0
                if n == 0:
                    rhs = -float(Br[i] @ prob.p0)
                else:
                    r[lay.ip(n - 1):lay.ip(n - 1) + 3] += Br[i]
                add(r, rhs, rhs, True)
        # one foothold per planned step
        for j in range(N - 1):
            r = np.zeros(nv)
            for i in range(I):
                r[lay.imu(j, i)] = 1.0
            add(r, 1.0, 1.0, True)

        # CoM workspace box (skip the pinned initial knot)
        bx, by = cfg.com_box
        for n in range(N):
            for k in range(K):
                if n == 0 and k == 0:
                    continue
                r = np.zeros(nv)
                r[lay.ix(n, k)] = 1.0
                add(r, -bx, bx)
                r = np.zeros(nv)
                r[lay.ix(n, k) + 1] = 1.0
                add(r, -by, by)
        # torque limits
        for n in range(N):
            for k in range(K - 1):
                r = np.zeros(nv)
                r[lay.iu(n, k)] = 1.0
                add(r, -cfg.u_max, cfg.u_max)
        # big-M foothold rows: mu = 1 tightens, mu = 0 relaxes by M
        M = cfg.big_m
        for j in range(N - 1):
            for i, fh in enumerate(prob.footholds):
                for row_idx in range(fh.F.shape[0]):
                    r = np.zeros(nv)
                    r[lay.ip(j):lay.ip(j) + 3] = fh.F[row_idx]
                    r[lay.imu(j, i)] = M
                    add(r, -np.inf, fh.c[row_idx] + M)
                r = np.zeros(nv)
                r[lay.ip(j):lay.ip(j) + 3] = fh.f
                r[lay.imu(j, i)] = M
                add(r, -np.inf, fh.b + M)
                r = np.zeros(nv)
                r[lay.ip(j):lay.ip(j) + 3] = -fh.f
                r[lay.imu(j, i)] = M
                add(r, -np.inf, -fh.b + M)
        # mu boxes; branching pins these bounds
        self.mu_box_start = len(rows)
        for j in range(N - 1):
            for i in range(I):
                r = np.zeros(nv)
                r[lay.imu(j, i)] = 1.0
                add(r, 0.0, 1.0)
        # swing foot must not cross the body's sagittal plane
        signs = _stance_signs(prob, N)
        for j in range(N - 1):
            s = float(signs[j])
            r = np.zeros(nv)
            r[lay.ip(j) + 1] = s
            if j == 0:
                add(r, cfg.crossover_margin + s * prob.p0[1], np.inf)
            else:
                r[lay.ip(j - 1) + 1] = -s
                add(r, cfg.crossover_margin, np.inf)
        # rate limit on the imminent footstep (bounds set per problem)
        self.rate_rows = (len(rows), len(rows) + 2)
        anchor = prob.rate_limit_anchor
        active = (anchor is not None
                  and prob.time_remaining <= cfg.rate_limit_window)
        for axis in range(2):
            r = np.zeros(nv)
            r[lay.ip(0) + axis] = 1.0
            if active:
                w = cfg.rate_limit_halfwidth
                add(r, float(anchor[axis]) - w, float(anchor[axis]) + w)
            else:
                add(r, -np.inf, np.inf)

        self.A = np.array(rows)
        self.lo0 = np.array(lo)
        self.hi0 = np.array(hi)
        self.eq_mask = np.array(eq, dtype=bool)

        self._signs = signs
        self._xy_ranges = [(fh.vertices_xy.min(axis=0), fh.vertices_xy.max(axis=0))
                           for fh in prob.footholds]
        self._rate_box = None
        if active:
            w = cfg.rate_limit_halfwidth
            self._rate_box = (np.asarray(anchor[:2]) - w, np.asarray(anchor[:2]) + w)

    def quick_infeasible(self, fixed: dict[int, int]) -> bool:
        """Cheap certain-infeasibility test for a partial assignment.

        The imminent footstep's region (foothold clipped by the rate box
        and the crossover halfplane) is checked exactly; later steps use
        axis-aligned bounds.  Conservative: a False never lies.
        """
        from .terrain.decomp import clip_convex

        prob, cfg = self.prob, self.cfg
        y_ranges: dict[int, tuple[float, float]] = {}
        for j, i in fixed.items():
            if j == 0:
                ring = prob.footholds[i].vertices_xy
                s0 = float(self._signs[0])
                anchor_v = np.array([0.0, prob.p0[1] + s0 * cfg.crossover_margin])
                ring = clip_convex(ring, np.array([0.0, -s0]), anchor_v)
                if self._rate_box is not None and len(ring) >= 3:
                    box_lo, box_hi = self._rate_box
                    for a, v in (
                        (np.array([1.0, 0.0]), np.array([box_hi[0], 0.0])),
                        (np.array([-1.0, 0.0]), np.array([box_lo[0], 0.0])),
                        (np.array([0.0, 1.0]), np.array([0.0, box_hi[1]])),
                        (np.array([0.0, -1.0]), np.array([0.0, box_lo[1]])),
                    ):
                        ring = clip_convex(ring, a, v)
                        if len(ring) < 3:
                            break
                if len(ring) < 3:
                    return True
                y_ranges[j] = (float(ring[:, 1].min()), float(ring[:, 1].max()))
                continue
            lo_xy, hi_xy = self._xy_ranges[i]
            y_ranges[j] = (lo_xy[1], hi_xy[1])
        for t in range(self.lay.N - 1):
            s = self._signs[t]
            if t == 0:
                prev = (prob.p0[1], prob.p0[1])
            else:
                prev = y_ranges.get(t - 1)
            cur = y_ranges.get(t)
            if prev is None or cur is None:
                continue
            best = cur[1] - prev[0] if s > 0 else prev[1] - cur[0]
            if best < cfg.crossover_margin - 1e-12:
                return True
        return False

    def bounds(self, fixed: dict[int, int]) -> tuple[np.ndarray, np.ndarray]:
        """Bounds with the given steps pinned to their footholds."""
        lo = self.lo0.copy()
        hi = self.hi0.copy()
        lay = self.lay
        for j, i_star in fixed.items():
            base = self.mu_box_start + j * lay.I
            for i in range(lay.I):
                v = 1.0 if i == i_star else 0.0
                lo[base + i] = v
                hi[base + i] = v
        return lo, hi

    def mu_values(self, z: np.ndarray) -> np.ndarray:
        lay = self.lay
        out = np.zeros((lay.N - 1, lay.I))
        for j in range(lay.N - 1):
            for i in range(lay.I):
                out[j, i] = z[lay.imu(j, i)]
        return out

    def extract(self, z: np.ndarray, assignment: tuple[int, ...],
                objective: float, stats: SolveStats) -> MpcSolution:
        lay = self.lay
        prob = self.prob
        N, K, I = lay.N, lay.K, lay.I
        x = np.zeros((N, K, 4))
        u = np.zeros((N, K - 1))
        for n in range(N):
            for k in range(K):
                x[n, k] = z[lay.ix(n, k):lay.ix(n, k) + 4]
            for k in range(K - 1):
                u[n, k] = z[lay.iu(n, k)]
        p = np.zeros((N, 3))
        p[0] = prob.p0
        for j in range(N - 1):
            p[j + 1] = z[lay.ip(j):lay.ip(j) + 3]
        mu = np.zeros((N, I))
        mu[0, current_foothold_index(prob)] = 1.0
        for j, i in enumerate(assignment):
            mu[j + 1, i] = 1.0
        return MpcSolution(x, u, p, mu, objective, stats)


def build_qp(prob: MpcProblem, cfg: MpcConfig,
             assignment: tuple[int, ...] | None = None) -> QpInstance:
    """Standard-form QP for one node.

    With ``assignment = None`` the binaries become continuous [0, 1]
    variables coupled through big-M rows.  With a fixed assignment the
    binaries are substituted out: the chosen foothold's rows hold exactly
    (plane as an equality) and the others are dropped.
    """
    timing = cfg.timing
    N, K = timing.horizon, timing.knots
    I = len(prob.footholds)
    relaxed = assignment is None
    if not relaxed and len(assignment) != N - 1:
        raise ValueError("assignment must fix every planned step")
    lay = _Layout(N, K, I, with_mu=relaxed)
    P, q, _ = _cost_terms(prob, cfg, lay)
    Ar, Br = alip.reset_map_matrices(cfg.params, timing.double_stance)
    dyn = _stance_dynamics(prob, cfg)
    nv = lay.nv

    A_eq, b_eq, A_in, b_in = [], [], [], []

    def eq(row, b):
        A_eq.append(row)
        b_eq.append(b)

    def le(row, b):
        A_in.append(row)
        b_in.append(b)

    for i in range(4):
        r = np.zeros(nv)
        r[lay.ix(0, 0) + i] = 1.0
        eq(r, prob.x0[i])
    for n in range(N):
        Ad, Bd = dyn[n]
        for k in range(K - 1):
            for i in range(4):
                r = np.zeros(nv)
                r[lay.ix(n, k + 1) + i] = 1.0
                r[lay.ix(n, k):lay.ix(n, k) + 4] -= Ad[i]
                r[lay.iu(n, k)] = -Bd[i]
                eq(r, 0.0)
    for n in range(N - 1):
        for i in range(4):
            r = np.zeros(nv)
            r[lay.ix(n + 1, 0) + i] = 1.0
            r[lay.ix(n, K - 1):lay.ix(n, K - 1) + 4] -= Ar[i]
            r[lay.ip(n):lay.ip(n) + 3] -= Br[i]
            rhs = 0.0
            if n == 0:
                rhs = -float(Br[i] @ prob.p0)
            else:
                r[lay.ip(n - 1):lay.ip(n - 1) + 3] += Br[i]
            eq(r, rhs)

    bx, by = cfg.com_box
    for n in range(N):
        for k in range(K):
            if n == 0 and k == 0:
                continue
            for axis, bound in ((0, bx), (1, by)):
                r = np.zeros(nv)
                r[lay.ix(n, k) + axis] = 1.0
                le(r.copy(), bound)
                le(-r, bound)
    for n in range(N):
        for k in range(K - 1):
            r = np.zeros(nv)
            r[lay.iu(n, k)] = 1.0
            le(r.copy(), cfg.u_max)
            le(-r, cfg.u_max)

    M = cfg.big_m
    for j in range(N - 1):
        if relaxed:
            r = np.zeros(nv)
            for i in range(I):
                r[lay.imu(j, i)] = 1.0
            eq(r, 1.0)
            for i, fh in enumerate(prob.footholds):
                for row_idx in range(fh.F.shape[0]):
                    r = np.zeros(nv)
                    r[lay.ip(j):lay.ip(j) + 3] = fh.F[row_idx]
                    r[lay.imu(j, i)] = M
                    le(r, fh.c[row_idx] + M)
                for sign in (1.0, -1.0):
                    r = np.zeros(nv)
                    r[lay.ip(j):lay.ip(j) + 3] = sign * fh.f
                    r[lay.imu(j, i)] = M
                    le(r, sign * fh.b + M)
                r = np.zeros(nv)
                r[lay.imu(j, i)] = 1.0
                le(r.copy(), 1.0)
                le(-r, 0.0)
        else:
            fh = prob.footholds[assignment[j]]
            for row_idx in range(fh.F.shape[0]):
                r = np.zeros(nv)
                r[lay.ip(j):lay.ip(j) + 3] = fh.F[row_idx]
                le(r, fh.c[row_idx])
            r = np.zeros(nv)
            r[lay.ip(j):lay.ip(j) + 3] = fh.f
            eq(r, fh.b)

    signs = _stance_signs(prob, N)
    for j in range(N - 1):
        s = float(signs[j])
        r = np.zeros(nv)
        r[lay.ip(j) + 1] = -s
        if j == 0:
            le(r, -(cfg.crossover_margin + s * prob.p0[1]))
        else:
            r[lay.ip(j - 1) + 1] = s
            le(r, -cfg.crossover_margin)

    anchor = prob.rate_limit_anchor
    if anchor is not None and prob.time_remaining <= cfg.rate_limit_window:
        w = cfg.rate_limit_halfwidth
        for axis in range(2):
            r = np.zeros(nv)
            r[lay.ip(0) + axis] = 1.0
            le(r.copy(), float(anchor[axis]) + w)
            le(-r, -(float(anchor[axis]) - w))

    return QpInstance(P, q, np.array(A_eq), np.array(b_eq),
                      np.array(A_in), np.array(b_in))


def objective_constant(prob: MpcProblem, cfg: MpcConfig) -> float:
    """Constant completing 0.5 z'Pz + q'z to the true tracking cost."""
    lay = _Layout(cfg.timing.horizon, cfg.timing.knots, len(prob.footholds), False)
    return _cost_terms(prob, cfg, lay)[2]


def solve_mpfc(prob: MpcProblem, cfg: MpcConfig, *,
               integral_tol: float = 1e-6, prune_tol: float = 1e-7,
               qp_max_iter: int = 20000) -> MpcSolution:
    """Globally solve the footstep MIQP by best-first branch and bound.

    The root node is the full continuous relaxation; children pin one
    planned step to one foothold.  Nodes are explored in order of their
    relaxation bound (ties: insertion order, children in foothold-index
    order), so equal-cost assignments resolve to the lowest indices.
    Raises :class:`AllNodesInfeasible` when no assignment is feasible.
    """
    t_start = time.perf_counter()
    tr = _Transcription(prob, cfg)
    lay = tr.lay
    n_steps = lay.N - 1
    engine = BoxQp(tr.P, tr.A, eq_rows=tr.eq_mask)
    stats = SolveStats()

    warm0 = None
    if prob.previous_solution is not None:
        ws = prob.previous_solution.warm_start
        if ws is not None and ws[0].shape[0] == lay.nv and ws[1].shape[0] == tr.A.shape[0]:
            warm0 = ws

    def node_solve(fixed: dict[int, int], warm, direct_after=350):
        lo, hi = tr.bounds(fixed)
        res = engine.solve(tr.q, lo, hi, warm=warm, max_iter=qp_max_iter,
                           direct_after=direct_after)
        stats.qp_solves += 1
        stats.iterations += res.iterations
        return res

    def finish(res, assignment: tuple[int, ...]) -> MpcSolution:
        stats.wall_time = time.perf_counter() - t_start
        sol = tr.extract(res.z, assignment, res.objective + tr.c0, stats)
        sol.warm_start = res.warm
        return sol

    root = node_solve({}, warm0)
    stats.nodes_explored += 1
    if root.status == INFEASIBLE:
        raise AllNodesInfeasible("root relaxation is infeasible")
    if root.status == MAX_ITER:
        raise AllNodesInfeasible("root relaxation did not converge")

    def integral_assignment(res) -> tuple[int, ...] | None:
        if n_steps == 0:
            return ()
        mu = tr.mu_values(res.z)
        choice = []
        for j in range(n_steps):
            i = int(np.argmax(mu[j]))
            if mu[j, i] < 1.0 - integral_tol:
                return None
            if np.any(np.delete(mu[j], i) > integral_tol):
                return None
            choice.append(i)
        return tuple(choice)

    def rounded_candidate(res, fixed: dict[int, int]):
        """Integral solution matching this node's bound, if one is free.

        When every unpinned footstep lies strictly inside some foothold,
        assigning it that polygon and dropping the footstep onto its plane
        changes nothing the cost or dynamics see, so the node's relaxation
        bound is attained exactly: a certified optimum for this subtree.
        """
        z = res.z
        assign: list[int] = []
        zr = None
        for j in range(n_steps):
            if j in fixed:
                assign.append(fixed[j])
                continue
            pj = z[lay.ip(j):lay.ip(j) + 3]
            inside = None
            for i, fh in enumerate(prob.footholds):
                if fh.margin_xy(pj) > 1e-6:
                    inside = i
                    break
            if inside is None:
                return None
            if zr is None:
                zr = z.copy()
            zr[lay.ip(j) + 2] = prob.footholds[inside].height_at(pj[:2])
            for ii in range(lay.I):
                zr[lay.imu(j, ii)] = 1.0 if ii == inside else 0.0
            assign.append(inside)
        zr = z if zr is None else zr
        lo, hi = tr.bounds(dict(enumerate(assign)))
        Az = tr.A @ zr
        if float(np.maximum(lo - Az, Az - hi).max(initial=0.0)) > 1e-6:
            return None
        return tuple(assign), zr

    root_assign = integral_assignment(root)
    if root_assign is not None:
        stats.relaxation_was_integral = True
        return finish(root, root_assign)
    rounded = rounded_candidate(root, {})
    if rounded is not None:
        assign, zr = rounded
        stats.wall_time = time.perf_counter() - t_start
        sol = tr.extract(zr, assign, root.objective + tr.c0, stats)
        sol.warm_start = root.warm
        return sol

    # Best-first search with lazy node evaluation: children enter the queue
    # carrying their parent's objective as an inherited lower bound and are
    # solved only when popped.  Ties in the bound pop deepest-first, so the
    # search dives straight to an incumbent; once an incumbent matches the
    # root bound the remaining queue prunes without any further QP solves.
    import heapq

    best_obj = np.inf
    best: tuple[tuple[int, ...], object] | None = None
    seq = 0
    heap: list = []

    def push_children(fixed: dict[int, int], res):
        nonlocal seq
        mu = tr.mu_values(res.z)
        unfixed = [j for j in range(n_steps) if j not in fixed]
        branch_j = min(unfixed, key=lambda j: (-(1.0 - mu[j].max()), j))
        # children of hard parents go to the direct solve sooner
        direct_after = 50 if res.iterations >= 300 else 350
        # most promising foothold first; index order breaks exact ties
        order = sorted(range(lay.I), key=lambda i: (-mu[branch_j, i], i))
        for i in order:
            child = dict(fixed)
            child[branch_j] = i
            seq += 1
            heapq.heappush(heap, (res.objective, -len(child), seq, child,
                                  res.warm, direct_after))

    def offer_incumbent(assign: tuple[int, ...], z: np.ndarray, obj: float, warm):
        nonlocal best, best_obj
        if (best is None or obj < best_obj - 1e-9
                or (abs(obj - best_obj) <= 1e-9 and assign < best[0])):
            best_obj = obj
            best = (assign, z, obj, warm)

    push_children({}, root)
    while heap:
        lb, _, _, fixed, warm, direct_after = heapq.heappop(heap)
        if lb >= best_obj - prune_tol:
            continue
        if tr.quick_infeasible(fixed):
            continue
        res = node_solve(fixed, warm, direct_after)
        stats.nodes_explored += 1
        if res.status != OPTIMAL:
            continue
        if res.objective >= best_obj - prune_tol and best is not None:
            continue
        assign = integral_assignment(res)
        if assign is not None:
            full = tuple(fixed.get(j, assign[j]) for j in range(n_steps))
            offer_incumbent(full, res.z, res.objective, res.warm)
            continue
        rounded = rounded_candidate(res, fixed)
        if rounded is not None:
            # attains this node's bound, so the subtree is settled
            offer_incumbent(rounded[0], rounded[1], res.objective, res.warm)
            continue
        if len(fixed) == n_steps:
            continue
        push_children(fixed, res)

    if best is None:
        raise AllNodesInfeasible("every foothold assignment is infeasible")
    assignment, z_best, obj_best, warm_best = best
    stats.wall_time = time.perf_counter() - t_start
    sol = tr.extract(z_best, assignment, obj_best + tr.c0, stats)
    sol.warm_start = warm_best
    return sol


def prune_footholds(prob: MpcProblem, cfg: MpcConfig,
                    max_candidates: int | None = None,
                    reach_radius: float | None = None) -> MpcProblem:
    """Drop footholds no planned step can plausibly reach.

    Keeps footholds whose polygon comes within ``reach_radius * n`` of the
    n-th nominal footstep, capped at ``max_candidates`` by centroid
    distance; the foothold under the stance foot is always kept.
    """
    max_candidates = max_candidates or cfg.max_candidates
    reach_radius = reach_radius or cfg.reach_radius
    current = current_foothold_index(prob)
    keep = []
    dists = []
    for idx, fh in enumerate(prob.footholds):
        d_min = np.inf
        reachable = idx == current
        for n in range(1, prob.footstep_ref.shape[0]):
            d = fh.distance_xy(prob.footstep_ref[n, :2])
            d_min = min(d_min, d)
            if d <= reach_radius * n:
                reachable = True
        if reachable:
            keep.append(idx)
            dists.append(d_min)
    order = sorted(range(len(keep)), key=lambda t: (dists[t], keep[t]))
    chosen = {keep[t] for t in order[:max_candidates]}
    chosen.add(current)
    indices = sorted(chosen)
    if len(indices) == len(prob.footholds):
        return prob
    return replace(prob, footholds=[prob.footholds[i] for i in indices])


def extract_next_footstep(sol: MpcSolution) -> tuple[np.ndarray, int]:
    """The imminent footstep target and its assigned foothold index."""
    if sol.footsteps.shape[0] < 2:
        raise ValueError("solution has no planned footstep beyond the stance foot")
    return sol.footsteps[1].copy(), int(np.argmax(sol.assignment[1]))


def save_replay(path, cfg: MpcConfig, problems: list[MpcProblem]) -> None:
    """Write a replay file: one JSON problem record per line after a header."""
    header = {
        "params": {"mass": cfg.params.mass, "com_height": cfg.params.com_height,
                   "gravity": cfg.params.gravity},
        "timing": {"single_stance": cfg.timing.single_stance,
                   "double_stance": cfg.timing.double_stance,
                   "knots": cfg.timing.knots, "horizon": cfg.timing.horizon},
        "Q": cfg.Q.tolist(), "R": cfg.R, "Qf": cfg.Qf.tolist(),
        "u_max": cfg.u_max, "com_box": list(cfg.com_box),
        "crossover_margin": cfg.crossover_margin, "big_m": cfg.big_m,
        "rate_limit_halfwidth": cfg.rate_limit_halfwidth,
        "rate_limit_window": cfg.rate_limit_window,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps({"config": header}) + "\n")
        for prob in problems:
            fh.write(json.dumps({"problem": prob.to_dict()}) + "\n")


def load_replay(path) -> tuple[MpcConfig, list[MpcProblem]]:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    head = lines[0]["config"]
    cfg = MpcConfig(
        params=alip.AlipParams(**head["params"]),
        timing=alip.GaitTiming(**head["timing"]),
        Q=np.array(head["Q"]), R=head["R"], Qf=np.array(head["Qf"]),
        u_max=head["u_max"], com_box=tuple(head["com_box"]),
        crossover_margin=head["crossover_margin"], big_m=head["big_m"],
        rate_limit_halfwidth=head["rate_limit_halfwidth"],
        rate_limit_window=head["rate_limit_window"],
    )
    problems = [MpcProblem.from_dict(rec["problem"]) for rec in lines[1:]]
    return cfg, problems
