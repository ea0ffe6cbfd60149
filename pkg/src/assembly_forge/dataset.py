"""Synthetic dataset emission: (input heightmap, label raster, metadata) triples.

Grasp samples scatter the project's parts in the pickup area, render the
scene through the pickup camera with sensor-style degradation, and pair the
result with the geometric grasp label. Pose samples show one part to the
pose camera at the configured fill distance and pair it with the pose label.
Everything is deterministic in (bundle, count, seed).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bundle import ProjectBundle
from .executor import scatter_pile
from .geom import Transform
from .grasp import PlacedPart, label_scene
from .images import grid_to_json, write_heightmap_png, write_label_png
from .planner import AssemblyDesign
from .pose import label_pose, view_of_pose
from .recipe import fill_view_camera
from .render import GridSpec, camera_facing_grid, degrade, render_depth, to_heightmap


def _pickup_grid(bundle: ProjectBundle) -> GridSpec:
    area = bundle.workcell.pickup_area
    cell = bundle.config.heightmap_cell
    return GridSpec(Transform.from_translation([area.lo[0], area.lo[1], 0.0]), cell,
                    int(round((area.hi[0] - area.lo[0]) / cell)),
                    int(round((area.hi[1] - area.lo[1]) / cell)))


def generate_grasp_dataset(bundle: ProjectBundle, out: Path, count: int,
                           seed: int) -> int:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    workcell = bundle.workcell
    cam = workcell.grippers[workcell.pickup_camera].camera.looking_down(
        workcell.pickup_area.center[:2], bundle.config.pickup_camera_height)
    grid = _pickup_grid(bundle)
    finger = workcell.grippers[workcell.pickup_gripper].finger
    noise = bundle.config.noise
    for i in range(count):
        sample_seed = seed * 100_003 + i
        pile = scatter_pile(bundle.design, workcell, sample_seed,
                            bundle.config.pile_spacing)
        scene = [PlacedPart(p.part_class, p.body, pose)
                 for p, pose in zip(bundle.design.parts, pile)]
        depth = render_depth([(s.body, s.pose) for s in scene], cam)
        depth = degrade(depth, noise.downsample, noise.amplitude, noise.scale,
                        sample_seed)
        heightmap = to_heightmap(depth, cam.downsampled(noise.downsample), grid)
        label = label_scene(scene, bundle.library.expanded_grasp_sets, finger,
                            list(workcell.environment), cam, grid,
                            bundle.config.range_steps)
        write_heightmap_png(heightmap, out / f"grasp_{i:05d}_scene.png")
        write_label_png(label, out / f"grasp_{i:05d}_label.png")
        meta = {
            "kind": "grasp", "index": i, "seed": sample_seed,
            "grid": grid_to_json(grid),
            "parts": [{"part_class": s.part_class,
                       "pose": {"rotation": [float(v) for v in s.pose.rotation],
                                "translation": [float(v) for v in s.pose.translation]}}
                      for s in scene],
        }
        (out / f"grasp_{i:05d}_meta.json").write_text(
            json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return count


def generate_pose_dataset(bundle: ProjectBundle, out: Path, count: int,
                          seed: int) -> int:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    workcell = bundle.workcell
    library = bundle.library
    intr = workcell.grippers[workcell.pose_camera].camera
    center = workcell.regrasp_area.center
    classes = sorted(library.specs)
    rng = np.random.default_rng(seed)
    noise = bundle.config.noise
    for i in range(count):
        cls = classes[i % len(classes)]
        body = library.specs[cls].body
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        pose = Transform.from_axis_angle(axis, rng.uniform(0, np.pi),
                                         center + rng.uniform(-0.01, 0.01, 3))
        cam = fill_view_camera(intr, body, pose, [0, 0, 1],
                               bundle.config.pose_fill_target)
        d = float(np.linalg.norm(cam.pose.translation - pose.translation))
        lo, hi = body.aabb(pose)
        grid = camera_facing_grid(cam, d + float(hi[2] - lo[2]) + 0.02,
                                  2.5 * float(np.max(hi - lo)),
                                  bundle.config.pose_cell)
        depth = render_depth([(body, pose)], cam)
        depth = degrade(depth, noise.downsample, noise.amplitude, noise.scale,
                        seed * 100_003 + i)
        heightmap = to_heightmap(depth, cam.downsampled(noise.downsample), grid)
        label = label_pose(cls, body, pose, cam, library.pose_tables[cls], grid,
                           bundle.config.pose_fill)
        write_heightmap_png(heightmap, out / f"pose_{i:05d}_scene.png")
        write_label_png(label, out / f"pose_{i:05d}_label.png")
        meta = {
            "kind": "pose", "index": i, "seed": seed * 100_003 + i,
            "part_class": cls,
            "view": view_of_pose(pose, cam).name.lower(),
            "grid": grid_to_json(grid),
            "pose": {"rotation": [float(v) for v in pose.rotation],
                     "translation": [float(v) for v in pose.translation]},
        }
        (out / f"pose_{i:05d}_meta.json").write_text(
            json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return count
