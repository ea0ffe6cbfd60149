"""HTTP service exposing the pipeline to scripts and the authoring frontend.

Projects live in an in-memory store keyed by id; mutation replaces the
project snapshot atomically under a lock. Planning requires a prior passing
validation of the current sequence (409 otherwise). Raster endpoints serve
label PNGs produced by the most recent simulation of that project.
"""

from __future__ import annotations

import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response

from .bundle import (
    BundleError,
    ProjectBundle,
    design_to_json,
    library_to_json,
    recipe_to_json,
    workcell_to_json,
)
from .config import PipelineConfig
from .executor import FaultModel, StepFailed, execute, placement_errors, scatter_pile
from .images import write_label_png
from .recipe import build_regrasp_graphs, generate_recipe, validate_authoring


@dataclass
class ProjectState:
    bundle: ProjectBundle
    validated_sequence: list | None = None
    report_json: dict | None = None
    report: object | None = None
    recipe: object | None = None
    graphs: dict = field(default_factory=dict)
    rasters: dict = field(default_factory=dict)


class ProjectStore:
    def __init__(self):
        self._lock = threading.Lock()
        self._projects: dict[str, ProjectState] = {}

    def put(self, project_id: str, bundle: ProjectBundle) -> None:
        with self._lock:
            self._projects[project_id] = ProjectState(bundle)

    def get(self, project_id: str) -> ProjectState:
        with self._lock:
            state = self._projects.get(project_id)
        if state is None:
            raise HTTPException(status_code=404, detail=f"unknown project {project_id}")
        return state

    def replace_sequence(self, project_id: str, sequence: list) -> ProjectState:
        with self._lock:
            state = self._projects.get(project_id)
            if state is None:
                raise HTTPException(status_code=404, detail=f"unknown project {project_id}")
            bundle = ProjectBundle(state.bundle.workcell, state.bundle.library,
                                   state.bundle.design, list(sequence),
                                   state.bundle.config)
            fresh = ProjectState(bundle, graphs=state.graphs)
            self._projects[project_id] = fresh
        return fresh


def create_app(bundle: ProjectBundle, project_id: str = "default") -> FastAPI:
    app = FastAPI(title="assembly-forge", version="1")
    store = ProjectStore()
    store.put(project_id, bundle)
    app.state.store = store

    @app.get("/projects/{pid}")
    def get_project(pid: str):
        state = store.get(pid)
        b = state.bundle
        return {
            "id": pid,
            "workcell": workcell_to_json(b.workcell),
            "parts": library_to_json(b.library),
            "design": design_to_json(b.design),
            "sequence": list(b.sequence),
            "config": b.config.to_json(),
            "validated": state.report_json is not None
                         and state.report_json.get("passed", False),
        }

    @app.put("/projects/{pid}/sequence")
    def put_sequence(pid: str, body: dict):
        seq = body.get("sequence")
        state = store.get(pid)
        n = len(state.bundle.design.parts)
        if (not isinstance(seq, list) or sorted(seq) != list(range(n))):
            raise HTTPException(status_code=400,
                                detail=f"sequence must be a permutation of 0..{n - 1}")
        store.replace_sequence(pid, seq)
        return {"sequence": seq}

    @app.post("/projects/{pid}/validate")
    def post_validate(pid: str):
        state = store.get(pid)
        b = state.bundle
        report = validate_authoring(b.workcell, b.library, b.design, b.sequence,
                                    b.config)
        state.report = report
        state.report_json = report.to_json()
        state.validated_sequence = list(b.sequence)
        state.recipe = None
        return state.report_json

    @app.post("/projects/{pid}/plan")
    def post_plan(pid: str):
        state = store.get(pid)
        b = state.bundle
        if (state.report is None or not state.report_json.get("passed")
                or state.validated_sequence != list(b.sequence)):
            raise HTTPException(status_code=409,
                                detail="validate the current sequence before planning")
        state.recipe = generate_recipe(b.workcell, b.library, b.design, b.sequence,
                                       state.report)
        return recipe_to_json(state.recipe)

    @app.post("/projects/{pid}/simulate")
    def post_simulate(pid: str, body: dict | None = None):
        body = body or {}
        state = store.get(pid)
        b = state.bundle
        if state.recipe is None:
            raise HTTPException(status_code=409, detail="plan before simulating")
        seed = int(body.get("seed", 0))
        faults = int(body.get("faults", 0))
        classes = {s.part_class for s in state.recipe.steps}
        missing = classes - set(state.graphs)
        if missing:
            state.graphs.update(build_regrasp_graphs(b.workcell, b.library,
                                                     b.config, missing))
        pile = scatter_pile(b.design, b.workcell, seed, b.config.pile_spacing)
        fault_model = FaultModel({i: faults for i in range(len(state.recipe.steps))}) \
            if faults else None
        try:
            log, final = execute(state.recipe, b.workcell, b.library, b.design,
                                 pile, seed, fault_model, b.config, state.graphs)
        except StepFailed as err:
            raise HTTPException(status_code=422, detail=str(err)) from err
        state.rasters = dict(log.rasters)
        errors = placement_errors(b.design, b.library, final)
        return {
            "log": log.to_json(),
            "final_state": {
                "part_poses": [{"rotation": [float(v) for v in p.rotation],
                                "translation": [float(v) for v in p.translation]}
                               for p in final.part_poses],
                "placed": sorted(final.placed),
            },
            "placement_errors": [{"translation_m": e[0], "rotation_deg": e[1]}
                                 for e in errors],
        }

    @app.get("/projects/{pid}/regrasp-graph")
    def get_regrasp_graph(pid: str, part_class: int):
        state = store.get(pid)
        b = state.bundle
        if part_class not in b.library.specs:
            raise HTTPException(status_code=404, detail=f"unknown class {part_class}")
        if part_class not in state.graphs:
            state.graphs.update(build_regrasp_graphs(b.workcell, b.library, b.config,
                                                     {part_class}))
        return state.graphs[part_class].to_json()

    @app.get("/projects/{pid}/heightmaps/{raster_id}")
    def get_heightmap(pid: str, raster_id: str):
        state = store.get(pid)
        hm = state.rasters.get(raster_id)
        if hm is None:
            raise HTTPException(status_code=404, detail=f"unknown raster {raster_id}")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "raster.png"
            write_label_png(hm, path)
            data = path.read_bytes()
        return Response(content=data, media_type="image/png")

    return app
