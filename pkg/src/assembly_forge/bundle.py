"""Versioned JSON serialization for project bundles, recipes, and reports.

A project bundle is a directory of five files: workcell.json, parts.json,
design.json, sequence.json, config.json. All lengths are meters, all angles
radians, and quaternions are stored (w, x, y, z). Schema violations raise
BundleError with a JSON-pointer path to the offending element.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .config import PipelineConfig
from .geom import Box, BoxCompound, Transform
from .grasp import FingerModel, GraspDefinition
from .images import transform_from_json, transform_to_json
from .planner import AssemblyDesign, DesignPart, WaypointPath
from .pose import ViewDirection
from .recipe import Recipe, RecipeStep
from .workcell import Area, CameraIntrinsics, Gripper, PartsLibrary, PartSpec, WorkcellModel

SCHEMA_VERSION = 1

BUNDLE_FILES = ("workcell.json", "parts.json", "design.json", "sequence.json", "config.json")


class BundleError(ValueError):
    pass


# --- schemas ---------------------------------------------------------------

_TRANSFORM = {
    "type": "object",
    "required": ["rotation", "translation"],
    "properties": {
        "rotation": {"type": "array", "items": {"type": "number"},
                     "minItems": 4, "maxItems": 4},
        "translation": {"type": "array", "items": {"type": "number"},
                        "minItems": 3, "maxItems": 3},
    },
}

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

_BOXES = {
    "type": "array", "minItems": 1,
    "items": {
        "type": "object",
        "required": ["half_extents", "pose"],
        "properties": {"half_extents": _VEC3, "pose": _TRANSFORM},
    },
}

_GRASP = {
    "type": "object",
    "required": ["part_class", "opening"],
    "properties": {
        "part_class": {"type": "integer", "minimum": 0},
        "opening": {"type": "number", "exclusiveMinimum": 0},
        "pose": _TRANSFORM,
        "pose_a": _TRANSFORM,
        "pose_b": _TRANSFORM,
    },
}

WORKCELL_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "grippers", "areas", "assignments", "environment"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "grippers": {
            "type": "array", "minItems": 2, "maxItems": 2,
            "items": {
                "type": "object",
                "required": ["name", "finger", "reach_lo", "reach_hi", "camera"],
                "properties": {
                    "name": {"type": "string"},
                    "finger": {
                        "type": "object",
                        "required": ["jaw_boxes", "finger_width", "max_opening"],
                        "properties": {
                            "jaw_boxes": _BOXES,
                            "finger_width": {"type": "number", "exclusiveMinimum": 0},
                            "max_opening": {"type": "number", "exclusiveMinimum": 0},
                            "name": {"type": "string"},
                        },
                    },
                    "reach_lo": _VEC3,
                    "reach_hi": _VEC3,
                    "camera": {
                        "type": "object",
                        "required": ["focal", "width", "height"],
                        "properties": {
                            "focal": {"type": "number", "exclusiveMinimum": 0},
                            "width": {"type": "integer", "exclusiveMinimum": 0},
                            "height": {"type": "integer", "exclusiveMinimum": 0},
                            "near": {"type": "number"},
                            "far": {"type": "number"},
                        },
                    },
                },
            },
        },
        "areas": {
            "type": "object",
            "required": ["pickup", "regrasp", "assembly"],
            "additionalProperties": {
                "type": "object",
                "required": ["lo", "hi"],
                "properties": {"lo": _VEC3, "hi": _VEC3},
            },
        },
        "assignments": {
            "type": "object",
            "required": ["pickup_gripper", "insertion_gripper", "pickup_camera",
                         "pose_camera", "assembly_camera"],
            "additionalProperties": {"type": "integer", "minimum": 0, "maximum": 1},
        },
        "environment": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["boxes", "pose"],
                "properties": {"boxes": _BOXES, "pose": _TRANSFORM},
            },
        },
    },
}

PARTS_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "classes", "base"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "classes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["part_class", "name", "boxes", "grasps"],
                "properties": {
                    "part_class": {"type": "integer", "minimum": 0},
                    "name": {"type": "string"},
                    "boxes": _BOXES,
                    "grasps": {"type": "array", "items": _GRASP},
                    "symmetry": {
                        "type": "object",
                        "additionalProperties": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "base": {
            "type": "object",
            "required": ["name", "boxes"],
            "properties": {"name": {"type": "string"}, "boxes": _BOXES},
        },
    },
}

DESIGN_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "frame", "base_pose", "parts"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "frame": _TRANSFORM,
        "base_pose": _TRANSFORM,
        "parts": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["part_class", "goal_pose"],
                "properties": {"part_class": {"type": "integer", "minimum": 0},
                               "goal_pose": _TRANSFORM},
            },
        },
    },
}

SEQUENCE_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "sequence"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "sequence": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version"],
    "properties": {"schema_version": {"const": SCHEMA_VERSION}},
}

_SCHEMAS = {
    "workcell.json": WORKCELL_SCHEMA,
    "parts.json": PARTS_SCHEMA,
    "design.json": DESIGN_SCHEMA,
    "sequence.json": SEQUENCE_SCHEMA,
    "config.json": CONFIG_SCHEMA,
}


def validate_document(name: str, doc: dict) -> None:
    validator = Draft202012Validator(_SCHEMAS[name])
    errors = sorted(validator.iter_errors(doc), key=lambda e: e.json_path)
    if errors:
        err = errors[0]
        raise BundleError(f"{name}: {err.message} at {err.json_path}")


# --- converters --------------------------------------------------------------

def boxes_to_json(comp: BoxCompound) -> list:
    return [{"half_extents": [float(v) for v in b.half_extents],
             "pose": transform_to_json(b.pose)} for b in comp.boxes]


def boxes_from_json(items: list) -> BoxCompound:
    return BoxCompound(tuple(Box(np.array(b["half_extents"], dtype=float),
                                 transform_from_json(b["pose"])) for b in items))


def grasp_to_json(g: GraspDefinition) -> dict:
    out = {"part_class": g.part_class, "opening": g.opening}
    if g.is_range:
        out["pose_a"] = transform_to_json(g.pose_a)
        out["pose_b"] = transform_to_json(g.pose_b)
    else:
        out["pose"] = transform_to_json(g.pose)
    return out


def grasp_from_json(d: dict) -> GraspDefinition:
    if "pose" in d:
        return GraspDefinition(int(d["part_class"]), float(d["opening"]),
                               pose=transform_from_json(d["pose"]))
    return GraspDefinition(int(d["part_class"]), float(d["opening"]),
                           pose_a=transform_from_json(d["pose_a"]),
                           pose_b=transform_from_json(d["pose_b"]))


def finger_to_json(f: FingerModel) -> dict:
    return {"jaw_boxes": boxes_to_json(f.jaw), "finger_width": f.finger_width,
            "max_opening": f.max_opening, "name": f.name}


def finger_from_json(d: dict) -> FingerModel:
    return FingerModel(boxes_from_json(d["jaw_boxes"]), float(d["finger_width"]),
                       float(d["max_opening"]), d.get("name", "fingers"))


def workcell_to_json(w: WorkcellModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "grippers": [{
            "name": g.name,
            "finger": finger_to_json(g.finger),
            "reach_lo": [float(v) for v in g.reach_lo],
            "reach_hi": [float(v) for v in g.reach_hi],
            "camera": {"focal": g.camera.focal, "width": g.camera.width,
                       "height": g.camera.height, "near": g.camera.near,
                       "far": g.camera.far},
        } for g in w.grippers],
        "areas": {a.name: {"lo": [float(v) for v in a.lo],
                           "hi": [float(v) for v in a.hi]}
                  for a in (w.pickup_area, w.regrasp_area, w.assembly_area)},
        "assignments": {
            "pickup_gripper": w.pickup_gripper,
            "insertion_gripper": w.insertion_gripper,
            "pickup_camera": w.pickup_camera,
            "pose_camera": w.pose_camera,
            "assembly_camera": w.assembly_camera,
        },
        "environment": [{"boxes": boxes_to_json(body), "pose": transform_to_json(pose)}
                        for body, pose in w.environment],
    }


def workcell_from_json(d: dict) -> WorkcellModel:
    grippers = tuple(
        Gripper(g["name"], finger_from_json(g["finger"]),
                np.array(g["reach_lo"], dtype=float), np.array(g["reach_hi"], dtype=float),
                CameraIntrinsics(float(g["camera"]["focal"]), int(g["camera"]["width"]),
                                 int(g["camera"]["height"]),
                                 float(g["camera"].get("near", 0.05)),
                                 float(g["camera"].get("far", 3.0))))
        for g in d["grippers"])
    areas = {name: Area(name, spec["lo"], spec["hi"]) for name, spec in d["areas"].items()}
    a = d["assignments"]
    return WorkcellModel(
        grippers=grippers,
        pickup_area=areas["pickup"], regrasp_area=areas["regrasp"],
        assembly_area=areas["assembly"],
        environment=tuple((boxes_from_json(e["boxes"]), transform_from_json(e["pose"]))
                          for e in d["environment"]),
        pickup_gripper=int(a["pickup_gripper"]),
        insertion_gripper=int(a["insertion_gripper"]),
        pickup_camera=int(a["pickup_camera"]),
        pose_camera=int(a["pose_camera"]),
        assembly_camera=int(a["assembly_camera"]),
    )


def library_to_json(lib: PartsLibrary) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "classes": [{
            "part_class": spec.part_class,
            "name": spec.name,
            "boxes": boxes_to_json(spec.body),
            "grasps": [grasp_to_json(g) for g in spec.grasps],
            "symmetry": {ViewDirection(v).name.lower(): int(order)
                         for v, order in sorted(spec.symmetry.items())},
        } for spec in lib.specs.values()],
        "base": {"name": lib.base_name, "boxes": boxes_to_json(lib.base_body)},
    }


def library_from_json(d: dict) -> PartsLibrary:
    specs = {}
    for c in d["classes"]:
        sym = {ViewDirection[k.upper()]: int(v) for k, v in c.get("symmetry", {}).items()}
        specs[int(c["part_class"])] = PartSpec(
            int(c["part_class"]), c["name"], boxes_from_json(c["boxes"]),
            tuple(grasp_from_json(g) for g in c["grasps"]), sym)
    return PartsLibrary(specs, boxes_from_json(d["base"]["boxes"]),
                        d["base"].get("name", "base"))


def design_to_json(design: AssemblyDesign) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "frame": transform_to_json(design.frame),
        "base_pose": transform_to_json(design.base_pose),
        "parts": [{"part_class": p.part_class, "goal_pose": transform_to_json(p.goal_pose)}
                  for p in design.parts],
    }


def design_from_json(d: dict, library: PartsLibrary) -> AssemblyDesign:
    parts = tuple(DesignPart(int(p["part_class"]),
                             library.specs[int(p["part_class"])].body,
                             transform_from_json(p["goal_pose"]))
                  for p in d["parts"])
    return AssemblyDesign(parts, library.base_body,
                          transform_from_json(d["base_pose"]),
                          transform_from_json(d["frame"]))


def waypoint_path_to_json(p: WaypointPath) -> dict:
    return {
        "waypoints": [transform_to_json(w) for w in p.waypoints],
        "grasp": grasp_to_json(p.grasp),
        "grasp_pose": transform_to_json(p.grasp_pose),
        "base_pose": transform_to_json(p.base_pose),
        "direction_changes": p.direction_changes,
        "steps": p.steps,
        "part_cells": [[int(v) for v in c] for c in p.part_cells],
    }


def waypoint_path_from_json(d: dict) -> WaypointPath:
    return WaypointPath(
        [transform_from_json(w) for w in d["waypoints"]],
        grasp_from_json(d["grasp"]),
        transform_from_json(d["grasp_pose"]),
        transform_from_json(d["base_pose"]),
        int(d["direction_changes"]), int(d["steps"]),
        [tuple(c) for c in d["part_cells"]],
    )


def recipe_to_json(r: Recipe) -> dict:
    return {
        "schema_version": r.schema_version,
        "assembly_camera": r.assembly_camera,
        "assembly_area": r.assembly_area,
        "base_part_id": r.base_part_id,
        "steps": [{
            "part_index": s.part_index,
            "part_class": s.part_class,
            "pickup_area": s.pickup_area,
            "pickup_camera": s.pickup_camera,
            "pickup_gripper": s.pickup_gripper,
            "pose_camera": s.pose_camera,
            "insertion_gripper": s.insertion_gripper,
            "goal_grasp": grasp_to_json(s.goal_grasp),
            "goal_grasp_def_index": s.goal_grasp_def_index,
            "goal_grasp_sample_index": s.goal_grasp_sample_index,
            "goal_tip_pose": transform_to_json(s.goal_tip_pose),
            "extraction": waypoint_path_to_json(s.extraction),
        } for s in r.steps],
    }


def recipe_from_json(d: dict) -> Recipe:
    steps = [RecipeStep(
        part_index=int(s["part_index"]),
        part_class=int(s["part_class"]),
        pickup_area=s["pickup_area"],
        pickup_camera=int(s["pickup_camera"]),
        pickup_gripper=int(s["pickup_gripper"]),
        pose_camera=int(s["pose_camera"]),
        insertion_gripper=int(s["insertion_gripper"]),
        goal_grasp=grasp_from_json(s["goal_grasp"]),
        goal_grasp_def_index=int(s["goal_grasp_def_index"]),
        goal_grasp_sample_index=int(s["goal_grasp_sample_index"]),
        goal_tip_pose=transform_from_json(s["goal_tip_pose"]),
        extraction=waypoint_path_from_json(s["extraction"]),
    ) for s in d["steps"]]
    return Recipe(int(d["assembly_camera"]), d["assembly_area"],
                  int(d["base_part_id"]), steps, int(d["schema_version"]))


# --- bundle ---------------------------------------------------------------------

@dataclass
class ProjectBundle:
    workcell: WorkcellModel
    library: PartsLibrary
    design: AssemblyDesign
    sequence: list
    config: PipelineConfig

    def check_cross_references(self) -> None:
        known = set(self.library.specs)
        for i, part in enumerate(self.design.parts):
            if part.part_class not in known:
                raise BundleError(f"design.json: parts[{i}] references unknown class "
                                  f"{part.part_class}")
        n = len(self.design.parts)
        if sorted(self.sequence) != list(range(n)):
            raise BundleError("sequence.json: sequence is not a permutation of "
                              f"0..{n - 1}")


def dump_json(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise BundleError(f"{path.name}: invalid JSON: {err}") from err


def save_bundle(bundle: ProjectBundle, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg = bundle.config.to_json()
    cfg["schema_version"] = SCHEMA_VERSION
    dump_json(workcell_to_json(bundle.workcell), directory / "workcell.json")
    dump_json(library_to_json(bundle.library), directory / "parts.json")
    dump_json(design_to_json(bundle.design), directory / "design.json")
    dump_json({"schema_version": SCHEMA_VERSION,
               "sequence": [int(v) for v in bundle.sequence]},
              directory / "sequence.json")
    dump_json(cfg, directory / "config.json")


def load_bundle(directory: str | Path) -> ProjectBundle:
    directory = Path(directory)
    docs = {}
    for name in BUNDLE_FILES:
        path = directory / name
        if not path.exists():
            raise BundleError(f"missing bundle file: {name}")
        docs[name] = load_json(path)
        validate_document(name, docs[name])
    library = library_from_json(docs["parts.json"])
    bundle = ProjectBundle(
        workcell=workcell_from_json(docs["workcell.json"]),
        library=library,
        design=design_from_json(docs["design.json"], library),
        sequence=[int(v) for v in docs["sequence.json"]["sequence"]],
        config=PipelineConfig.from_json(docs["config.json"]),
    )
    bundle.check_cross_references()
    return bundle


def example_bundle() -> ProjectBundle:
    from . import demo

    return ProjectBundle(demo.workcell(), demo.library(), demo.design(),
                         demo.disassembly_sequence(), PipelineConfig())


def example_bundle_dir() -> Path:
    from importlib import resources

    return Path(resources.files("assembly_forge")) / "data" / "example_bundle"
