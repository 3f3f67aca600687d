import itertools

import numpy as np
import pytest

from footmpc import alip, controller, qp, terrain

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def flat_foothold(cx=0.0, cy=0.0, half=2.0, z=0.0):
    ring = np.array([[cx - half, cy - half], [cx + half, cy - half],
                     [cx + half, cy + half], [cx - half, cy + half]])
    return terrain.lift_to_foothold(ring, (0.0, 0.0, z))


def fresh_problem(cfg, command, footholds=None, x0=None, t_rem=None, sign=1,
                  previous=None):
    if footholds is None:
        footholds = [flat_foothold()]
    states = alip.orbit_stance_states(
        alip.GaitCommand(command.velocity, command.stance_width, sign),
        cfg.params, cfg.timing)
    if x0 is None:
        x0 = states[0]
    t_rem = cfg.timing.single_stance if t_rem is None else t_rem
    return controller.make_problem(x0, np.zeros(3), sign, footholds, command,
                                   cfg, t_rem, previous)


def enumeration_optimum(prob, cfg):
    """Brute-force optimum over all foothold assignments via standard QPs."""
    n_steps = cfg.timing.horizon - 1
    c0 = controller.objective_constant(prob, cfg)
    best = (np.inf, None)
    for assign in itertools.product(range(len(prob.footholds)), repeat=n_steps):
        inst = controller.build_qp(prob, cfg, assign)
        res = qp.solve_qp(inst)
        if res.status != qp.OPTIMAL:
            continue
        obj = res.objective + c0
        if obj < best[0] - 1e-12:
            best = (obj, assign)
    return best


CFG = controller.MpcConfig()
CMD = alip.GaitCommand(velocity=(0.3, 0.0), stance_width=0.25)


def test_zero_error_tracking_on_reference():
    prob = fresh_problem(CFG, CMD)
    sol = controller.solve_mpfc(prob, CFG)
    assert sol.objective <= 1e-8
    assert np.max(np.abs(sol.u_traj)) <= 1e-4
    assert np.max(np.abs(sol.footsteps - prob.footstep_ref)) <= 1e-6
    assert sol.stats.relaxation_was_integral
    assert sol.stats.nodes_explored == 1


def test_single_foothold_equals_fixed_qp():
    prob = fresh_problem(CFG, CMD)
    sol = controller.solve_mpfc(prob, CFG)
    obj, assign = enumeration_optimum(prob, CFG)
    assert assign == (0, 0)
    assert sol.objective == pytest.approx(obj, abs=1e-6)


def test_integrality_of_assignment():
    fhs = [flat_foothold(0.0, 0.0, 1.2), flat_foothold(1.2, 0.0, 1.2)]
    prob = fresh_problem(CFG, CMD, footholds=fhs)
    sol = controller.solve_mpfc(prob, CFG)
    assert sol.assignment.shape == (3, 2)
    for row in sol.assignment:
        assert sorted(row.tolist()) == [0.0, 1.0] or row.sum() == 1.0
        assert np.all((row == 0.0) | (row == 1.0))


def test_matches_enumeration_on_split_terrain():
    rng = np.random.default_rng(0)
    mismatches = 0
    for trial in range(8):
        # small stepping stones ahead with a gap, forcing real choices
        stones = []
        for gx in range(3):
            for gy in range(2):
                cx = 0.25 + 0.38 * gx + rng.uniform(-0.04, 0.04)
                cy = (-0.3 + 0.55 * gy) + rng.uniform(-0.04, 0.04)
                stones.append(flat_foothold(cx, cy, 0.26))
        stones.insert(0, flat_foothold(0.0, 0.0, 0.35))
        stones = stones[:int(rng.integers(3, 6))]
        x0 = alip.orbit_stance_states(
            alip.GaitCommand(CMD.velocity, CMD.stance_width, 1),
            CFG.params, CFG.timing)[0] + rng.normal(size=4) * [0.02, 0.02, 0.3, 0.3]
        prob = fresh_problem(CFG, CMD, footholds=stones, x0=x0,
                             t_rem=float(rng.uniform(0.1, 0.3)))
        obj_ref, assign_ref = enumeration_optimum(prob, CFG)
        try:
            sol = controller.solve_mpfc(prob, CFG)
        except controller.AllNodesInfeasible:
            assert assign_ref is None
            continue
        assert assign_ref is not None
        assert sol.objective == pytest.approx(obj_ref, abs=1e-6 * max(1, abs(obj_ref)))
    assert mismatches == 0


def test_identical_footholds_tie_break():
    one = fresh_problem(CFG, CMD, footholds=[flat_foothold()])
    two = fresh_problem(CFG, CMD, footholds=[flat_foothold(), flat_foothold()])
    sol_one = controller.solve_mpfc(one, CFG)
    sol_two = controller.solve_mpfc(two, CFG)
    assert sol_two.objective == pytest.approx(sol_one.objective, abs=1e-6)
    # lowest foothold index wins the tie
    assert np.argmax(sol_two.assignment[1]) == 0
    assert np.argmax(sol_two.assignment[2]) == 0


def test_adding_foothold_never_hurts():
    base = [flat_foothold(0.0, 0.0, 0.8)]
    extra = base + [flat_foothold(0.6, 0.0, 0.8)]
    p1 = fresh_problem(CFG, CMD, footholds=base)
    p2 = fresh_problem(CFG, CMD, footholds=extra)
    o1 = controller.solve_mpfc(p1, CFG).objective
    o2 = controller.solve_mpfc(p2, CFG).objective
    assert o2 <= o1 + 1e-7


def test_root_bound_below_optimum():
    fhs = [flat_foothold(0.3, 0.0, 0.25), flat_foothold(0.8, 0.3, 0.25),
           flat_foothold(0.0, 0.0, 0.3)]
    prob = fresh_problem(CFG, CMD, footholds=fhs)
    inst = controller.build_qp(prob, CFG, None)
    root = qp.solve_qp(inst)
    sol = controller.solve_mpfc(prob, CFG)
    c0 = controller.objective_constant(prob, CFG)
    assert root.objective + c0 <= sol.objective + 1e-7


def test_fixed_assignment_rows_are_exact():
    fhs = [flat_foothold(0.0, 0.0, 0.5, z=0.1)]
    prob = fresh_problem(CFG, CMD, footholds=fhs)
    inst = controller.build_qp(prob, CFG, (0, 0))
    res = qp.solve_qp(inst)
    assert res.status == qp.OPTIMAL
    # plane equality must pin footstep heights to the foothold plane
    sol = controller.solve_mpfc(prob, CFG)
    for p in sol.footsteps[1:]:
        assert p[2] == pytest.approx(0.1, abs=1e-6)
        assert fhs[0].contains(p, tol=1e-6)


def test_infeasible_when_rate_limit_conflicts():
    prob = fresh_problem(CFG, CMD)
    prev = controller.solve_mpfc(prob, CFG)
    prev.footsteps[1] = np.array([10.0, 10.0, 0.0])  # absurd anchor
    conflicted = fresh_problem(CFG, CMD, t_rem=0.1, previous=prev)
    with pytest.raises(controller.AllNodesInfeasible):
        controller.solve_mpfc(conflicted, CFG)


def test_rate_limit_boxes_next_footstep():
    prob = fresh_problem(CFG, CMD)
    first = controller.solve_mpfc(prob, CFG)
    anchor = first.footsteps[1]
    # shift the state to pull the optimum away from the anchor
    x0 = prob.x0 + np.array([0.06, 0.03, 4.0, 5.0])
    nudged = fresh_problem(CFG, CMD, x0=x0, t_rem=0.1, previous=first)
    sol = controller.solve_mpfc(nudged, CFG)
    p2 = controller.extract_next_footstep(sol)[0]
    assert np.all(np.abs(p2[:2] - anchor[:2]) <= CFG.rate_limit_halfwidth + 1e-7)
    free = fresh_problem(CFG, CMD, x0=x0, t_rem=0.1)
    p2_free = controller.extract_next_footstep(controller.solve_mpfc(free, CFG))[0]
    assert not np.all(np.abs(p2_free[:2] - anchor[:2]) <= CFG.rate_limit_halfwidth)


def test_extract_next_footstep():
    prob = fresh_problem(CFG, CMD)
    sol = controller.solve_mpfc(prob, CFG)
    p2, idx = controller.extract_next_footstep(sol)
    assert np.allclose(p2, sol.footsteps[1])
    assert idx == 0


def test_prune_keeps_reachable_set():
    fhs = [flat_foothold(0.0, 0.0, 0.5), flat_foothold(0.4, 0.0, 0.5)]
    prob = fresh_problem(CFG, CMD, footholds=fhs)
    pruned = controller.prune_footholds(prob, CFG)
    assert len(pruned.footholds) == 2


def test_prune_removes_far_foothold():
    fhs = [flat_foothold(0.0, 0.0, 0.5), flat_foothold(10.0, 0.0, 0.5)]
    prob = fresh_problem(CFG, CMD, footholds=fhs)
    pruned = controller.prune_footholds(prob, CFG, reach_radius=1.0)
    assert len(pruned.footholds) == 1


def test_prune_preserves_optimum():
    rng = np.random.default_rng(1)
    for _ in range(4):
        fhs = [flat_foothold(0.0, 0.0, 0.5),
               flat_foothold(0.45 + rng.uniform(0, 0.05), 0.0, 0.4),
               flat_foothold(6.0 + rng.uniform(0, 0.5), 2.0, 0.5)]
        prob = fresh_problem(CFG, CMD, footholds=fhs)
        full = controller.solve_mpfc(prob, CFG)
        pruned_prob = controller.prune_footholds(prob, CFG, reach_radius=1.0)
        assert len(pruned_prob.footholds) == 2
        pruned = controller.solve_mpfc(pruned_prob, CFG)
        assert pruned.objective == pytest.approx(full.objective, abs=1e-6)


def test_problem_serialization_roundtrip():
    prob = fresh_problem(CFG, CMD)
    sol = controller.solve_mpfc(prob, CFG)
    prob2 = fresh_problem(CFG, CMD, t_rem=0.2, previous=sol)
    d = prob2.to_dict()
    back = controller.MpcProblem.from_dict(d)
    assert np.allclose(back.x0, prob2.x0)
    assert np.allclose(back.x_ref, prob2.x_ref)
    assert np.allclose(back.previous_solution.footsteps, sol.footsteps)
    assert back.rate_limit_anchor is not None


def test_replay_roundtrip(tmp_path):
    probs = [fresh_problem(CFG, CMD, t_rem=t) for t in (0.3, 0.25, 0.2)]
    path = tmp_path / "replay.jsonl"
    controller.save_replay(path, CFG, probs)
    cfg2, probs2 = controller.load_replay(path)
    assert cfg2.timing.horizon == CFG.timing.horizon
    assert len(probs2) == 3
    sol_a = controller.solve_mpfc(probs[1], CFG)
    sol_b = controller.solve_mpfc(probs2[1], cfg2)
    assert sol_a.objective == pytest.approx(sol_b.objective, abs=1e-9)


def test_warm_start_across_ticks_consistent():
    prob = fresh_problem(CFG, CMD)
    sol1 = controller.solve_mpfc(prob, CFG)
    prob2 = fresh_problem(CFG, CMD, t_rem=0.25, previous=sol1)
    warm = controller.solve_mpfc(prob2, CFG)
    cold = controller.solve_mpfc(fresh_problem(CFG, CMD, t_rem=0.25), CFG)
    assert warm.objective == pytest.approx(cold.objective, abs=1e-6)
