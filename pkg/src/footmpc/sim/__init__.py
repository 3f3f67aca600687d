"""Closed-loop walking simulation around the footstep planner."""

from .scenario import (ScenarioError, build_terrain, flat_terrain, load_scenario,
                       rectangle_foothold, stairs_terrain, stepping_stones_terrain)
from .simulator import (ControllerFailure, ScenarioResult, SimConfig, Simulator,
                        SimState, run_scenario, write_jsonl, write_summary_csv)
from .spline import (SwingSpline, com_plane, min_snap_spline, retarget_spline,
                     swing_midpoint)

__all__ = [
    "ControllerFailure", "ScenarioError", "ScenarioResult", "SimConfig",
    "SimState", "Simulator", "SwingSpline", "build_terrain", "com_plane",
    "flat_terrain", "load_scenario", "min_snap_spline", "rectangle_foothold",
    "retarget_spline", "run_scenario", "stairs_terrain",
    "stepping_stones_terrain", "swing_midpoint", "write_jsonl",
    "write_summary_csv",
]
