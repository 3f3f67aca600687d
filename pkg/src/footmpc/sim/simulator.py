"""Deterministic closed-loop walking simulation.

The plant is the pendulum model itself: single stance integrates the
torque-driven dynamics, double stance integrates the CoP-sweep dynamics,
and liftoff applies the frame change onto the new foot — so the plant
realizes exactly the hybrid model the planner predicts with, optionally
with perturbed physical parameters.  Everything is fixed-step and seeded;
two runs of the same scenario produce identical logs.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .. import alip, controller
from ..terrain.footholds import Foothold
from .spline import SwingSpline, com_plane, min_snap_spline, retarget_spline, swing_midpoint


class ControllerFailure(RuntimeError):
    """The planner and its fallback both failed."""


@dataclass
class SimConfig:
    mpc: controller.MpcConfig
    footholds: list[Foothold]
    plant_params: alip.AlipParams | None = None   # model error when different
    controller_period: float = 0.01
    disturbances: list[tuple[float, float, float]] = field(default_factory=list)
    seed: int = 0
    swing_apex: float = 0.07
    foothold_jitter_std: float = 0.0   # perception-noise stress on polygons
    integration_substep: float = 1e-3
    prune: bool = True

    def __post_init__(self):
        if self.plant_params is None:
            self.plant_params = self.mpc.params
        if self.controller_period > self.mpc.timing.single_stance / 2:
            raise ValueError("controller period must be at most half a stance")
        if not self.footholds:
            raise ValueError("simulation needs terrain footholds")


@dataclass
class SimState:
    alip: np.ndarray            # (4,) stance-frame pendulum state
    stance_pos: np.ndarray      # (3,) world
    stance_sign: int
    phase: str                  # "single" | "double"
    phase_time: float
    clock: float
    swing: SwingSpline | None
    swing_origin: np.ndarray    # where the swing foot lifted off
    pending_step: np.ndarray | None = None  # landing position during double stance

    def com_world(self) -> np.ndarray:
        return self.stance_pos[:2] + self.alip[:2]


def _rk4_step_matrix(M: np.ndarray, h: float) -> np.ndarray:
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 5):
        term = term @ (M * h) / k
        out = out + term
    return out


class Simulator:
    """Fixed-timestep walking loop around the footstep planner."""

    def __init__(self, cfg: SimConfig, command: alip.GaitCommand | None = None):
        self.cfg = cfg
        self.command = command or alip.GaitCommand()
        self.rng = np.random.default_rng(cfg.seed)
        self.A_plant, self.B_plant = alip.dynamics_matrices(cfg.plant_params)
        self.Bcop = alip.cop_offset_matrix(cfg.plant_params)
        # single-stance flow: augmented [x; u] with constant torque
        aug = np.zeros((5, 5))
        aug[:4, :4] = self.A_plant
        aug[:4, 4] = self.B_plant
        self._ss_aug = aug
        self._ss_cache: dict[float, np.ndarray] = {}
        self.state = self.initial_state_on_reference()
        self.last_solution: controller.MpcSolution | None = None
        self._same_stance_solution: controller.MpcSolution | None = None
        self._pending_disturbances = sorted(cfg.disturbances)
        self._disturbance_idx = 0
        self.records: list[dict] = []
        self.events: list[dict] = []
        self.failure: str | None = None

    # ------------------------------------------------------------- set-up

    def initial_state_on_reference(self) -> SimState:
        cmd = self.command
        x0 = alip.orbit_stance_states(cmd, self.cfg.mpc.params,
                                      self.cfg.mpc.timing)[0]
        deltas = alip.reference_footstep_deltas(cmd, self.cfg.mpc.timing)
        stance = self._drop_to_terrain(np.zeros(3))
        swing_origin = stance - deltas[1]
        swing_origin = self._drop_to_terrain(swing_origin)
        return SimState(alip=x0.copy(), stance_pos=stance, stance_sign=cmd.first_stance,
                        phase="single", phase_time=0.0, clock=0.0,
                        swing=None, swing_origin=swing_origin)

    def _drop_to_terrain(self, p: np.ndarray) -> np.ndarray:
        p = np.array(p, dtype=float)
        best = None
        for fh in self.cfg.footholds:
            probe = np.array([p[0], p[1], fh.height_at(p[:2])])
            margin = fh.margin_xy(probe)
            if best is None or margin > best[0]:
                best = (margin, probe[2])
        if best is not None:
            p[2] = best[1]
        return p

    # ------------------------------------------------------------ control

    def _solve_footholds(self) -> list[Foothold]:
        if self.cfg.foothold_jitter_std <= 0:
            return self.cfg.footholds
        out = []
        for fh in self.cfg.footholds:
            shift = self.rng.normal(scale=self.cfg.foothold_jitter_std, size=2)
            out.append(_translate_foothold(fh, shift))
        return out

    def _control(self) -> dict:
        cfg = self.cfg
        st = self.state
        t_rem = cfg.mpc.timing.single_stance - st.phase_time
        prob = controller.make_problem(
            st.alip, st.stance_pos, st.stance_sign, self._solve_footholds(),
            self.command, cfg.mpc, t_rem, self._same_stance_solution)
        if cfg.prune:
            prob = controller.prune_footholds(prob, cfg.mpc)
        info = {"solve_ms": np.nan, "nodes": 0, "qp_solves": 0,
                "status": "skipped", "foothold_count": len(prob.footholds),
                "boundary_active": False}
        t0 = time.perf_counter()
        try:
            sol = controller.solve_mpfc(prob, cfg.mpc)
            info["solve_ms"] = 1e3 * (time.perf_counter() - t0)
            info["nodes"] = sol.stats.nodes_explored
            info["qp_solves"] = sol.stats.qp_solves
            info["status"] = "optimal"
            self._same_stance_solution = sol
            self.last_solution = sol
            p2, idx = controller.extract_next_footstep(sol)
            slack = prob.footholds[idx].margin_xy(p2)
            info["boundary_active"] = bool(slack <= 1e-6)
            self._u = float(sol.u_traj[0, 0])
            self._target = p2
            self._target_foothold = idx
        except controller.AllNodesInfeasible:
            info["solve_ms"] = 1e3 * (time.perf_counter() - t0)
            if self.last_solution is None:
                raise ControllerFailure(
                    f"planner infeasible at t={st.clock:.3f} with no fallback")
            # reuse the previous plan: keep the old target, no torque
            info["status"] = "fallback"
            self._u = 0.0
        return info

    def _update_swing(self) -> None:
        st = self.state
        T = self.cfg.mpc.timing.single_stance
        if st.swing is None:
            w0 = st.swing_origin
            w1 = swing_midpoint(w0, self._target, self.cfg.swing_apex)
            st.swing = min_snap_spline(w0, w1, self._target, T)
        elif np.linalg.norm(self._target - st.swing.end_position) > 1e-9:
            t = st.phase_time
            remaining = max(T - t, 1e-3)
            pos = st.swing.position(t)
            vel = st.swing.velocity(t)
            acc = st.swing.acceleration(t)
            w1 = swing_midpoint(pos, self._target, self.cfg.swing_apex)
            st.swing = _ShiftedSpline(
                retarget_spline(pos, vel, acc, w1, self._target, remaining), t)

    # ---------------------------------------------------------- integration

    def _ss_flow(self, h: float) -> np.ndarray:
        M = self._ss_cache.get(h)
        if M is None:
            sub = self.cfg.integration_substep
            n_full, rem = divmod(h, sub)
            M = np.linalg.matrix_power(_rk4_step_matrix(self._ss_aug, sub),
                                       int(round(n_full)))
            if rem > 1e-12:
                M = _rk4_step_matrix(self._ss_aug, rem) @ M
            self._ss_cache[h] = M
        return M

    def _integrate_single(self, h: float) -> None:
        st = self.state
        aug = np.concatenate([st.alip, [self._u]])
        st.alip = (self._ss_flow(h) @ aug)[:4]

    def _integrate_double(self, h: float) -> None:
        # CoP sweeps linearly from the old to the new foot: augment the
        # state with the sweep fraction s and a constant to stay linear
        st = self.state
        dp = st.pending_step - st.stance_pos
        T_ds = self.cfg.mpc.timing.double_stance
        M = np.zeros((6, 6))
        M[:4, :4] = self.A_plant
        M[:4, 4] = self.Bcop @ dp
        M[4, 5] = 1.0 / T_ds
        sub = self.cfg.integration_substep
        aug = np.concatenate([st.alip, [st.phase_time / T_ds, 1.0]])
        n_full, rem = divmod(h, sub)
        step = _rk4_step_matrix(M, sub)
        for _ in range(int(round(n_full))):
            aug = step @ aug
        if rem > 1e-12:
            aug = _rk4_step_matrix(M, rem) @ aug
        st.alip = aug[:4]

    # --------------------------------------------------------------- tick

    def tick(self) -> dict:
        if self.failure:
            raise ControllerFailure(self.failure)
        cfg = self.cfg
        timing = cfg.mpc.timing
        st = self.state
        dt = cfg.controller_period

        while (self._disturbance_idx < len(self._pending_disturbances)
               and self._pending_disturbances[self._disturbance_idx][0] <= st.clock):
            _, d_lx, d_ly = self._pending_disturbances[self._disturbance_idx]
            st.alip[2] += d_lx
            st.alip[3] += d_ly
            self.events.append({"t": st.clock, "event": "disturbance",
                                "dLx": d_lx, "dLy": d_ly})
            self._disturbance_idx += 1

        info = {"solve_ms": np.nan, "nodes": 0, "qp_solves": 0,
                "status": "coasting", "foothold_count": len(cfg.footholds),
                "boundary_active": False}
        if st.phase == "single":
            info = self._control()
            self._update_swing()

        touchdown = False
        reset_residual = np.nan
        remaining = dt
        while remaining > 1e-12:
            if st.phase == "single":
                h = min(remaining, timing.single_stance - st.phase_time)
                self._integrate_single(h)
                st.phase_time += h
                st.clock += h
                remaining -= h
                if st.phase_time >= timing.single_stance - 1e-12:
                    target = (st.swing.end_position if st.swing is not None
                              else self._target)
                    self._pre_touchdown = st.alip.copy()
                    st.pending_step = np.array(target, dtype=float)
                    st.phase = "double"
                    st.phase_time = 0.0
                    self._u = 0.0  # no ankle torque during double stance
                    touchdown = True
                    self.events.append({
                        "t": st.clock, "event": "touchdown",
                        "position": st.pending_step.tolist(),
                        "foothold": int(getattr(self, "_target_foothold", -1)),
                    })
            else:
                h = min(remaining, timing.double_stance - st.phase_time)
                self._integrate_double(h)
                st.phase_time += h
                st.clock += h
                remaining -= h
                if st.phase_time >= timing.double_stance - 1e-12:
                    dp = st.pending_step - st.stance_pos
                    st.alip = st.alip + alip.FOOT_FRAME_SHIFT @ dp
                    expected = alip.double_stance_reset(
                        self._pre_touchdown, st.stance_pos, st.pending_step,
                        self.cfg.plant_params, timing)
                    reset_residual = float(np.abs(st.alip - expected).max())
                    st.swing_origin = st.stance_pos.copy()
                    st.stance_pos = st.pending_step
                    st.pending_step = None
                    st.stance_sign = -st.stance_sign
                    st.swing = None
                    st.phase = "single"
                    st.phase_time = 0.0
                    self._same_stance_solution = None
                    self.events.append({"t": st.clock, "event": "liftoff",
                                        "reset_residual": reset_residual})

        com = st.com_world()
        if not np.isfinite(st.alip).all() or np.abs(st.alip[:2]).max() > 1.5:
            self.failure = f"state diverged at t={st.clock:.3f}"
        swing_pos = (st.swing.position(st.phase_time).tolist()
                     if st.swing is not None and st.phase == "single" else None)
        record = {
            "t": st.clock,
            "phase": st.phase,
            "x": st.alip.tolist(),
            "com_world": [float(com[0]), float(com[1])],
            "stance": st.stance_pos.tolist(),
            "stance_sign": st.stance_sign,
            "u": float(getattr(self, "_u", 0.0)),
            "target": getattr(self, "_target", st.stance_pos).tolist(),
            "target_foothold": int(getattr(self, "_target_foothold", -1)),
            "swing": swing_pos,
            "touchdown": touchdown,
            "reset_residual": reset_residual,
            "command": list(self.command.velocity),
            **info,
        }
        self.records.append(record)
        return record


class _ShiftedSpline(SwingSpline):
    """A retargeted spline re-based so queries use stance-phase time."""

    def __init__(self, inner: SwingSpline, offset: float):
        super().__init__(inner.coeffs, inner.durations, inner.waypoints)
        self._offset = offset

    def _eval(self, t, deriv):
        return super()._eval(t - self._offset, deriv)


def _translate_foothold(fh: Foothold, dxy: np.ndarray) -> Foothold:
    verts = fh.verts.copy()
    verts[:, 0] += dxy[0]
    verts[:, 1] += dxy[1]
    c = fh.c + fh.F[:, :2] @ dxy
    b = fh.b + fh.f[:2] @ dxy
    return Foothold(fh.F, c, fh.f, b, verts)


@dataclass
class ScenarioResult:
    records: list[dict]
    events: list[dict]
    success: bool
    failure: str | None
    mean_velocity: tuple[float, float]
    commanded_velocity: tuple[float, float]
    duration: float

    def summary(self) -> dict:
        solve_ms = [r["solve_ms"] for r in self.records
                    if np.isfinite(r["solve_ms"])]
        touchdowns = [e for e in self.events if e["event"] == "touchdown"]
        return {
            "success": self.success,
            "failure": self.failure,
            "duration": self.duration,
            "ticks": len(self.records),
            "steps": len(touchdowns),
            "mean_velocity_x": self.mean_velocity[0],
            "mean_velocity_y": self.mean_velocity[1],
            "commanded_velocity_x": self.commanded_velocity[0],
            "commanded_velocity_y": self.commanded_velocity[1],
            "mean_solve_ms": float(np.mean(solve_ms)) if solve_ms else None,
            "max_solve_ms": float(np.max(solve_ms)) if solve_ms else None,
        }


def run_scenario(cfg: SimConfig, script: list[dict], duration: float,
                 settle_time: float = 1.0) -> ScenarioResult:
    """Run a command script to completion or failure.

    ``script`` entries are dicts with ``t`` plus any of ``vx``, ``vy``,
    ``stance_width``; each is applied at the first tick at or after its
    time.  Deterministic for a fixed config and script.
    """
    script = sorted(script, key=lambda s: s["t"])
    first = alip.GaitCommand(
        velocity=(script[0].get("vx", 0.0), script[0].get("vy", 0.0)) if script else (0.0, 0.0),
        stance_width=(script[0].get("stance_width", 0.25) if script else 0.25),
        first_stance=1,
    )
    sim = Simulator(cfg, first)
    n_ticks = int(round(duration / cfg.controller_period))
    idx = 0
    failure = None
    for k in range(n_ticks):
        t = k * cfg.controller_period
        while idx < len(script) and script[idx]["t"] <= t + 1e-12:
            entry = script[idx]
            sim.command = alip.GaitCommand(
                velocity=(entry.get("vx", sim.command.velocity[0]),
                          entry.get("vy", sim.command.velocity[1])),
                stance_width=entry.get("stance_width", sim.command.stance_width),
                first_stance=sim.command.first_stance,
            )
            idx += 1
        try:
            sim.tick()
        except ControllerFailure as exc:
            failure = str(exc)
            break

    records = sim.records
    settle_idx = min(len(records) - 1, int(settle_time / cfg.controller_period)) if records else 0
    if records and len(records) - settle_idx > 1:
        a = np.array(records[settle_idx]["com_world"])
        b = np.array(records[-1]["com_world"])
        span = records[-1]["t"] - records[settle_idx]["t"]
        mean_v = tuple(((b - a) / span).tolist())
    else:
        mean_v = (0.0, 0.0)
    return ScenarioResult(
        records=records, events=sim.events, success=failure is None,
        failure=failure, mean_velocity=mean_v,
        commanded_velocity=tuple(sim.command.velocity),
        duration=records[-1]["t"] if records else 0.0,
    )


def write_jsonl(path, result: ScenarioResult) -> None:
    with open(path, "w") as fh:
        for rec in result.records:
            fh.write(json.dumps(rec) + "\n")


def write_summary_csv(path, result: ScenarioResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "com_x", "com_y", "L_x", "L_y", "stance_x", "stance_y",
                    "stance_z", "foothold_index", "solve_ms", "nodes"])
        for r in result.records:
            w.writerow([
                f"{r['t']:.4f}", f"{r['com_world'][0]:.6f}", f"{r['com_world'][1]:.6f}",
                f"{r['x'][2]:.6f}", f"{r['x'][3]:.6f}",
                f"{r['stance'][0]:.6f}", f"{r['stance'][1]:.6f}", f"{r['stance'][2]:.6f}",
                r["target_foothold"],
                "" if not np.isfinite(r["solve_ms"]) else f"{r['solve_ms']:.3f}",
                r["nodes"],
            ])
