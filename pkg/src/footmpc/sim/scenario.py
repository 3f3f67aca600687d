"""Scenario files: JSON documents describing terrain, gait, and commands."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import alip, controller, terrain
from .simulator import SimConfig


class ScenarioError(ValueError):
    """Malformed scenario document."""


def rectangle_foothold(cx: float, cy: float, half_x: float, half_y: float,
                       z: float = 0.0) -> terrain.Foothold:
    ring = np.array([
        [cx - half_x, cy - half_y],
        [cx + half_x, cy - half_y],
        [cx + half_x, cy + half_y],
        [cx - half_x, cy + half_y],
    ])
    return terrain.lift_to_foothold(ring, (0.0, 0.0, z))


def flat_terrain(length: float = 20.0, width: float = 6.0) -> list[terrain.Foothold]:
    return [rectangle_foothold(length / 2 - 2.0, 0.0, length / 2, width / 2)]


def stairs_terrain(step_length: float = 1.0, step_height: float = 0.15,
                   num_down: int = 3, num_up: int = 3, start_x: float = 2.0,
                   width: float = 3.0, platform: float = 1.5,
                   lead_in: float = 3.0, lead_out: float = 4.0) -> list[terrain.Foothold]:
    """Descending then ascending stairs, rectangle footholds per tread."""
    hw = width / 2
    # lead-in slab spans [-lead_in, start_x]
    out = [rectangle_foothold((start_x - lead_in) / 2, 0.0,
                              (start_x + lead_in) / 2, hw, 0.0)]
    x = start_x
    z = 0.0
    for _ in range(num_down):
        z -= step_height
        out.append(rectangle_foothold(x + step_length / 2, 0.0,
                                      step_length / 2, hw, z))
        x += step_length
    out.append(rectangle_foothold(x + platform / 2, 0.0, platform / 2, hw, z))
    x += platform
    for _ in range(num_up):
        z += step_height
        out.append(rectangle_foothold(x + step_length / 2, 0.0,
                                      step_length / 2, hw, z))
        x += step_length
    out.append(rectangle_foothold(x + lead_out / 2, 0.0, lead_out / 2, hw, z))
    return out


def stepping_stones_terrain(count: int = 12, pitch: float = 0.30,
                            half: float = 0.14, lateral: float = 0.16,
                            jitter: float = 0.02, seed: int = 0,
                            start_half: float = 0.5) -> list[terrain.Foothold]:
    rng = np.random.default_rng(seed)
    out = [rectangle_foothold(0.0, 0.0, start_half, start_half)]
    for k in range(1, count + 1):
        side = 1 if k % 2 == 0 else -1
        out.append(rectangle_foothold(
            pitch * k + rng.uniform(-jitter, jitter),
            side * lateral + rng.uniform(-jitter, jitter), half, half))
    return out


_BUILTIN_TERRAINS = {
    "flat": flat_terrain,
    "stairs": stairs_terrain,
    "stepping_stones": stepping_stones_terrain,
}


def build_terrain(spec: dict, base_dir: Path | None = None) -> list[terrain.Foothold]:
    if "builtin" in spec:
        kind = spec["builtin"]
        if kind not in _BUILTIN_TERRAINS:
            raise ScenarioError(f"unknown builtin terrain '{kind}'")
        kwargs = {k: v for k, v in spec.items() if k != "builtin"}
        return _BUILTIN_TERRAINS[kind](**kwargs)
    if "footholds" in spec:
        return [terrain.Foothold.from_dict(d) for d in spec["footholds"]]
    if "footholds_file" in spec:
        path = _resolve(spec["footholds_file"], base_dir)
        return terrain.load_footholds(path)
    if "heightmap" in spec:
        path = _resolve(spec["heightmap"], base_dir)
        hmap = terrain.load_esri_ascii(path)
        seg = terrain.SegmentationConfig(**spec.get("segmentation", {}))
        return terrain.decompose_terrain(hmap, seg)
    raise ScenarioError("terrain spec needs one of: builtin, footholds, "
                        "footholds_file, heightmap")


def _resolve(path: str, base_dir: Path | None) -> Path:
    p = Path(path)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return p


def _mpc_config(doc: dict) -> controller.MpcConfig:
    params = alip.AlipParams(**doc.get("params", {}))
    timing = alip.GaitTiming(**doc.get("timing", {}))
    weights = doc.get("weights", {})
    kw = {}
    if "Q" in weights:
        Q = np.array(weights["Q"], dtype=float)
        kw["Q"] = np.diag(Q) if Q.ndim == 1 else Q
    if "R" in weights:
        kw["R"] = float(weights["R"])
    if "Qf" in weights:
        Qf = np.array(weights["Qf"], dtype=float)
        kw["Qf"] = np.diag(Qf) if Qf.ndim == 1 else Qf
    elif "Qf_scale" in weights and "Q" in weights:
        kw["Qf"] = float(weights["Qf_scale"]) * kw["Q"]
    limits = doc.get("limits", {})
    for key in ("u_max", "crossover_margin", "big_m",
                "rate_limit_halfwidth", "rate_limit_window"):
        if key in limits:
            kw[key] = float(limits[key])
    if "com_box" in limits:
        kw["com_box"] = tuple(limits["com_box"])
    pruning = doc.get("pruning", {})
    if "max_candidates" in pruning:
        kw["max_candidates"] = int(pruning["max_candidates"])
    if "reach_radius" in pruning:
        kw["reach_radius"] = float(pruning["reach_radius"])
    return controller.MpcConfig(params=params, timing=timing, **kw)


def load_scenario(source) -> tuple[SimConfig, list[dict], float]:
    """Parse a scenario document (path or dict) into simulation inputs."""
    base_dir = None
    if isinstance(source, (str, Path)):
        base_dir = Path(source).parent
        try:
            with open(source) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid scenario JSON: {exc}") from exc
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario: {exc}") from exc
    else:
        doc = source
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    try:
        mpc = _mpc_config(doc)
        footholds = build_terrain(doc.get("terrain", {"builtin": "flat"}), base_dir)
        plant = doc.get("plant_params")
        cfg = SimConfig(
            mpc=mpc,
            footholds=footholds,
            plant_params=alip.AlipParams(**plant) if plant else None,
            controller_period=float(doc.get("controller_period", 0.01)),
            disturbances=[(d["t"], d.get("dLx", 0.0), d.get("dLy", 0.0))
                          for d in doc.get("disturbances", [])],
            seed=int(doc.get("seed", 0)),
            swing_apex=float(doc.get("swing_apex", 0.07)),
            foothold_jitter_std=float(doc.get("foothold_jitter_std", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad scenario field: {exc}") from exc
    script = doc.get("command_script", [{"t": 0.0, "vx": 0.0, "vy": 0.0}])
    duration = float(doc.get("duration", 10.0))
    return cfg, script, duration
