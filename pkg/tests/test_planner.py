import numpy as np
import pytest

from assembly_forge import demo
from assembly_forge.geom import BoxCompound, Transform, collide
from assembly_forge.grasp import FingerModel, GraspDefinition, expand_grasp_set
from assembly_forge.planner import (
    AssemblyDesign,
    Blocked,
    DesignPart,
    LatticeConfig,
    NoValidGrasp,
    PlanningError,
    insertion_waypoints,
    lattice_problem,
    verify_extraction,
    verify_sequence,
)
from oracles import lattice_min_direction_changes


# a tiny far-away finger: its jaws never reach any test geometry, which makes
# the searches depend on the part alone
GHOST_FINGER = FingerModel(
    jaw=BoxCompound.single([5e-4, 5e-4, 5e-4], Transform.from_translation([0, 0, 0.8])),
    finger_width=0.001, max_opening=0.05)


def ghost_grasp(cls=0):
    return {cls: [GraspDefinition(cls, opening=0.02, pose=Transform.from_translation([0, 0, 0.01]))]}


def lone_cube_design():
    cube = BoxCompound.single([0.02, 0.02, 0.02])
    base = BoxCompound.single([0.08, 0.08, 0.01], Transform.from_translation([0, 0, -0.01]))
    part = DesignPart(0, cube, Transform.from_translation([0, 0, 0.02]))
    return AssemblyDesign((part,), base, Transform(), Transform())


def test_lone_cube_extracts_straight_up():
    design = lone_cube_design()
    lattice = LatticeConfig(step=0.005, lo=[-0.08, -0.08, -0.02], hi=[0.08, 0.08, 0.04],
                            margin=0.01)
    path = verify_extraction(design, 0, ghost_grasp(), GHOST_FINGER, lattice)
    assert path.direction_changes == 0
    assert len(path.waypoints) == 2
    # straight +z: every waypoint displacement is vertical
    d = path.waypoints[-1].translation - path.waypoints[0].translation
    assert d[0] == pytest.approx(0.0, abs=1e-12)
    assert d[1] == pytest.approx(0.0, abs=1e-12)
    assert d[2] > 0.05


def test_fully_enclosed_part_blocked():
    cube = BoxCompound.single([0.02, 0.02, 0.02])
    shell_boxes = []
    from assembly_forge.geom import Box
    for axis in range(3):
        for sign in (-1, 1):
            t = np.zeros(3)
            t[axis] = sign * 0.025
            t[2] += 0.03
            shell_boxes.append(Box([0.02 if a != axis else 0.004 for a in range(3)],
                                   Transform.from_translation(t)))
    shell = BoxCompound(tuple(shell_boxes))
    part = DesignPart(0, cube, Transform.from_translation([0, 0, 0.03]))
    design = AssemblyDesign((part,), shell, Transform(), Transform())
    lattice = LatticeConfig(step=0.005, lo=[-0.05, -0.05, 0], hi=[0.05, 0.05, 0.06])
    with pytest.raises(Blocked):
        verify_extraction(design, 0, ghost_grasp(), GHOST_FINGER, lattice)


def test_no_valid_grasp():
    # a plate right above the cube: the part could slide out sideways, but the
    # only grasp descends through the plate
    cube = BoxCompound.single([0.02, 0.02, 0.02])
    lid = BoxCompound.single([0.08, 0.08, 0.004], Transform.from_translation([0, 0, 0.046]))
    part = DesignPart(0, cube, Transform.from_translation([0, 0, 0.02]))
    design = AssemblyDesign((part,), lid, Transform(), Transform())
    finger = demo.insertion_finger()
    grasp = {0: [GraspDefinition(0, opening=0.044, pose=Transform.from_translation([0, 0, 0.01]))]}
    lattice = LatticeConfig(step=0.005, lo=[-0.08, -0.08, 0], hi=[0.08, 0.08, 0.05])
    with pytest.raises(NoValidGrasp):
        verify_extraction(design, 0, grasp, finger, lattice)


def demo_lattice(design):
    return LatticeConfig.from_design(design, margin=0.01)


def expanded_demo_sets():
    return {cls: expand_grasp_set(defs) for cls, defs in demo.grasp_sets().items()}


def test_demo_lattice_step_from_clearance():
    lattice = demo_lattice(demo.design())
    assert lattice.step == pytest.approx(0.001)


def test_nub_block_two_segment_extraction():
    design = demo.design()
    lattice = demo_lattice(design)
    sets = expanded_demo_sets()
    path = verify_extraction(design, 3, sets, demo.insertion_finger(), lattice,
                             removed={4}, environment=[demo.table()])
    assert path.direction_changes == 1
    assert len(path.waypoints) == 3
    # horizontal slide (+y in the part frame) then vertical rise
    d1 = path.waypoints[1].translation - path.waypoints[0].translation
    d2 = path.waypoints[2].translation - path.waypoints[1].translation
    assert abs(d1[1]) > 0.01 and abs(d1[0]) < 1e-9 and abs(d1[2]) < 1e-9
    assert d2[2] > 0.02 and abs(d2[0]) < 1e-9 and abs(d2[1]) < 1e-9
    # the chosen goal grasp closes along the slide direction
    x_axis = path.grasp_pose.matrix[:, 0]
    assert abs(x_axis[1]) == pytest.approx(1.0, abs=1e-9)


def test_nub_block_blocked_while_plug_present():
    design = demo.design()
    lattice = demo_lattice(design)
    with pytest.raises(Blocked):
        verify_extraction(design, 3, expanded_demo_sets(), demo.insertion_finger(),
                          lattice, removed=set(), environment=[demo.table()])


def test_extraction_path_recheck_collision_free():
    design = demo.design()
    lattice = demo_lattice(design)
    sets = expanded_demo_sets()
    finger = demo.insertion_finger()
    removed = {4}
    path = verify_extraction(design, 3, sets, finger, lattice, removed=removed,
                             environment=[demo.table()])
    part = design.parts[3]
    body = finger.body_at(path.grasp.opening)
    obstacles = [(design.base_body, design.frame @ design.base_pose)]
    obstacles += [(p.body, design.frame @ p.goal_pose) for j, p in enumerate(design.parts)
                  if j != 3 and j not in removed]
    obstacles.append(demo.table())
    rot = part.goal_pose.matrix
    # walk the full lattice path cell by cell (not only the waypoints)
    cells = path.part_cells
    for a, b in zip(cells, cells[1:]):
        d = np.subtract(b, a)
        n = int(np.abs(d).sum())
        step = d // max(n, 1)
        for k in range(n + 1):
            cell = np.asarray(a) + step * k
            offset = cell @ (lattice.step * rot.T)
            pose = design.frame @ Transform(part.goal_pose.rotation,
                                            part.goal_pose.translation + offset)
            tip = pose @ path.grasp_pose
            for ob, ob_pose in obstacles:
                assert not collide(part.body, pose, ob, ob_pose, margin=-1e-4)
                assert not collide(body, tip, ob, ob_pose, margin=-1e-4)


def test_verify_sequence_demo_design_passes():
    design = demo.design()
    report = verify_sequence(design, demo.disassembly_sequence(), expanded_demo_sets(),
                             demo.insertion_finger(), demo_lattice(design),
                             trials=2, seed=5, area=([0.2, -0.05], [0.36, 0.05]),
                             environment=[demo.table()])
    assert report.ok, [r.failures for r in report.results]
    assert set(report.canonical_paths) == {0, 1, 2, 3, 4}
    assert report.canonical_paths[3].direction_changes == 1
    assert report.canonical_paths[4].direction_changes == 0


def test_verify_sequence_wrong_order_blocked_at_first_part():
    design = demo.design()
    report = verify_sequence(design, [3, 4, 2, 1, 0], expanded_demo_sets(),
                             demo.insertion_finger(), demo_lattice(design),
                             trials=0, environment=[demo.table()])
    assert not report.ok
    assert not report.results[0].ok
    assert report.results[0].part_index == 3
    assert "Blocked" in report.results[0].failures[0][1]


def test_verify_sequence_single_part_any_seed():
    design = lone_cube_design()
    lattice = LatticeConfig(step=0.005, lo=[-0.08, -0.08, -0.02], hi=[0.08, 0.08, 0.04])
    for seed in (0, 1, 99):
        report = verify_sequence(design, [0], ghost_grasp(), GHOST_FINGER, lattice,
                                 trials=2, seed=seed, area=([-0.02, -0.02], [0.02, 0.02]))
        assert report.ok


def test_verify_sequence_rejects_non_permutation():
    design = demo.design()
    with pytest.raises(PlanningError):
        verify_sequence(design, [0, 0, 1, 2, 3], expanded_demo_sets(),
                        demo.insertion_finger(), demo_lattice(design), trials=0)


def test_insertion_waypoints_reverse_identity():
    w = [Transform.from_translation([0, 0, z]) for z in (0.0, 0.05, 0.10)]
    from assembly_forge.planner import WaypointPath
    path = WaypointPath(w, GraspDefinition(0, 0.02, pose=Transform()), Transform(),
                        Transform(), 0, 2, [])
    out = insertion_waypoints(path, Transform(), Transform())
    assert [tuple(t.translation) for t in out] == [(0, 0, 0.10), (0, 0, 0.05), (0, 0, 0.0)]


def test_insertion_waypoints_base_shift():
    w = [Transform.from_translation([0, 0, z]) for z in (0.0, 0.05)]
    from assembly_forge.planner import WaypointPath
    path = WaypointPath(w, GraspDefinition(0, 0.02, pose=Transform()), Transform(),
                        Transform(), 0, 1, [])
    out = insertion_waypoints(path, Transform.from_translation([0.1, 0, 0]), Transform())
    assert np.allclose(out[0].translation, [0.1, 0, 0.05])
    assert np.allclose(out[1].translation, [0.1, 0, 0.0])


def test_insertion_waypoints_regrip_composition():
    # flipping the in-hand grasp 180 degrees about the finger z axis composes
    # into every waypoint; verified against direct frame algebra
    rng = np.random.default_rng(4)
    from oracles import random_transform
    from assembly_forge.planner import WaypointPath
    waypoints = [random_transform(rng) for _ in range(3)]
    grasp_pose = random_transform(rng)
    base0 = random_transform(rng)
    path = WaypointPath(waypoints, GraspDefinition(0, 0.02, pose=Transform()),
                        grasp_pose, base0, 1, 4, [])
    base_obs = random_transform(rng)
    in_hand = grasp_pose @ Transform.from_axis_angle([0, 0, 1], np.pi)
    out = insertion_waypoints(path, base_obs, in_hand)
    for got, w in zip(out, reversed(waypoints)):
        part_in_base = base0.invert() @ w @ grasp_pose.invert()
        expect = base_obs @ part_in_base @ in_hand
        assert got.almost_equal(expect, 1e-9, 1e-9)


def test_direction_changes_match_exhaustive_oracle_small_designs():
    rng = np.random.default_rng(31)
    matched = 0
    for trial in range(20):
        part = BoxCompound.single(rng.uniform(0.008, 0.02, 3))
        goal = Transform.from_translation([0, 0, rng.uniform(0.01, 0.03)])
        boxes = []
        from assembly_forge.geom import Box
        for _ in range(rng.integers(2, 5)):
            half = rng.uniform(0.005, 0.03, 3)
            pos = rng.uniform([-0.06, -0.06, 0.0], [0.06, 0.06, 0.06])
            boxes.append(Box(half, Transform.from_translation(pos)))
        base = BoxCompound(tuple(boxes))
        design = AssemblyDesign((DesignPart(0, part, goal),), base, Transform(), Transform())
        lattice = LatticeConfig(step=0.008, lo=[-0.07, -0.07, -0.01], hi=[0.07, 0.07, 0.07],
                                margin=0.005)
        problem = lattice_problem(design, 0, set(), None, None, None, lattice)
        if not problem.valid((0, 0, 0)):
            continue
        oracle = lattice_min_direction_changes(problem.valid, (0, 0, 0), problem.is_goal)
        try:
            path = verify_extraction(design, 0, ghost_grasp(), GHOST_FINGER, lattice)
            assert oracle == path.direction_changes, f"trial {trial}"
            matched += 1
        except Blocked:
            assert oracle is None
    assert matched >= 6
