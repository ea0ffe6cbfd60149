"""Workcell and part-library models shared by validation, planning, and the
simulator."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geom import BoxCompound, GeometryError, Transform
from .grasp import FingerModel, GraspDefinition, expand_grasp_set
from .pose import PoseProposal, ViewDirection, build_pose_proposals
from .regrasp import GripperContext
from .render import CameraModel, look_at_pose


@dataclass(frozen=True)
class CameraIntrinsics:
    focal: float = 300.0
    width: int = 320
    height: int = 240
    near: float = 0.05
    far: float = 3.0

    def at(self, pose: Transform) -> CameraModel:
        return CameraModel(pose=pose, focal=self.focal, width=self.width,
                           height=self.height, near=self.near, far=self.far)

    def looking_down(self, center_xy, height: float) -> CameraModel:
        eye = [center_xy[0], center_xy[1], height]
        return self.at(look_at_pose(eye, [center_xy[0], center_xy[1], 0.0]))


@dataclass(frozen=True)
class Area:
    name: str
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if np.any(self.hi <= self.lo):
            raise GeometryError(f"area {self.name} has empty extent")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains_box(self, lo, hi) -> bool:
        return bool(np.all(np.asarray(lo) >= self.lo) and np.all(np.asarray(hi) <= self.hi))

    def overlaps(self, other: "Area") -> bool:
        return bool(np.all(self.lo <= other.hi) and np.all(self.hi >= other.lo))

    def corners(self) -> np.ndarray:
        return np.array([[x, y, z] for x in (self.lo[0], self.hi[0])
                         for y in (self.lo[1], self.hi[1])
                         for z in (self.lo[2], self.hi[2])])


@dataclass(frozen=True)
class Gripper:
    name: str
    finger: FingerModel
    reach_lo: np.ndarray
    reach_hi: np.ndarray
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)

    def __post_init__(self):
        object.__setattr__(self, "reach_lo", np.asarray(self.reach_lo, dtype=float))
        object.__setattr__(self, "reach_hi", np.asarray(self.reach_hi, dtype=float))

    def context(self) -> GripperContext:
        return GripperContext(self.finger, self.reach_lo, self.reach_hi)

    def reaches_box(self, lo, hi) -> bool:
        return bool(np.all(np.asarray(lo) >= self.reach_lo)
                    and np.all(np.asarray(hi) <= self.reach_hi))


@dataclass(frozen=True)
class WorkcellModel:
    grippers: tuple
    pickup_area: Area
    regrasp_area: Area
    assembly_area: Area
    environment: tuple  # of (BoxCompound, Transform)
    pickup_gripper: int = 0
    insertion_gripper: int = 1
    pickup_camera: int = 0
    pose_camera: int = 1
    assembly_camera: int = 1

    def __post_init__(self):
        object.__setattr__(self, "grippers", tuple(self.grippers))
        object.__setattr__(self, "environment", tuple(self.environment))
        if len(self.grippers) != 2:
            raise GeometryError("workcell assumes exactly two grippers")

    def check_invariants(self) -> list[str]:
        """Structural problems, empty when sound."""
        problems = []
        for g in self.grippers:
            if not g.reaches_box(self.regrasp_area.lo, self.regrasp_area.hi):
                problems.append(f"regrasp area outside reach of {g.name}")
        areas = [self.pickup_area, self.regrasp_area, self.assembly_area]
        for i, a in enumerate(areas):
            for b in areas[i + 1:]:
                if a.overlaps(b):
                    problems.append(f"areas {a.name} and {b.name} overlap")
        return problems

    def gripper_contexts(self) -> list[GripperContext]:
        return [g.context() for g in self.grippers]


@dataclass(frozen=True)
class PartSpec:
    part_class: int
    name: str
    body: BoxCompound
    grasps: tuple  # authored GraspDefinition list
    symmetry: dict = field(default_factory=dict)  # ViewDirection -> order

    def __post_init__(self):
        object.__setattr__(self, "grasps", tuple(self.grasps))


class PartsLibrary:
    """All part classes plus the fixed base, with derived tables cached."""

    def __init__(self, specs: dict[int, PartSpec], base_body: BoxCompound,
                 base_name: str = "base"):
        self.specs = dict(sorted(specs.items()))
        self.base_body = base_body
        self.base_name = base_name
        self.base_id = (max(self.specs) + 1) if self.specs else 0

    @cached_property
    def expanded_grasp_sets(self) -> dict[int, list[GraspDefinition]]:
        return {cls: expand_grasp_set(list(spec.grasps))
                for cls, spec in self.specs.items()}

    @cached_property
    def pose_tables(self) -> dict[int, dict[ViewDirection, PoseProposal]]:
        tables = {cls: build_pose_proposals(spec.body, spec.symmetry)
                  for cls, spec in self.specs.items()}
        tables[self.base_id] = build_pose_proposals(self.base_body)
        return tables

    def body_of(self, part_id: int) -> BoxCompound:
        if part_id == self.base_id:
            return self.base_body
        return self.specs[part_id].body

    def symmetry_rotations(self, part_class: int) -> list[Transform]:
        """All annotated in-plane symmetry rotations of a part, identity included.

        These are the frame ambiguities a view-based pose estimate can leak.
        """
        out = [Transform.identity()]
        spec = self.specs.get(part_class)
        if spec is None:
            return out
        table = self.pose_tables[part_class]
        seen = {tuple(np.round(Transform.identity().rotation, 9))}
        for view, order in spec.symmetry.items():
            axis = table[ViewDirection(view) if not isinstance(view, ViewDirection) else view].frame.z_axis
            for k in range(1, order):
                t = Transform.from_axis_angle(axis, 2 * np.pi * k / order)
                key = tuple(np.round(t.rotation, 9))
                if key not in seen:
                    seen.add(key)
                    out.append(t)
        return out
