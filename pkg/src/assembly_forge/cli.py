"""Command line entry points.

    assembly-forge validate --bundle DIR
    assembly-forge plan     --bundle DIR --out recipe.json
    assembly-forge labelgen --bundle DIR --kind grasp|pose --count N --seed S --out DIR
    assembly-forge simulate --bundle DIR --seed S [--faults N] --out DIR
    assembly-forge serve    --bundle DIR --port P

Exit codes: 0 success, 2 validation failure, 1 error. The log level comes
from the ASSEMBLY_FORGE_LOG environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

LOG = logging.getLogger("assembly-forge")


def _setup_logging():
    level = os.environ.get("ASSEMBLY_FORGE_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="[%(levelname)s] %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assembly-forge",
        description="Validate, plan, label, and simulate box-compound assemblies.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_bundle(p):
        p.add_argument("--bundle", required=True, help="project bundle directory")

    p = sub.add_parser("validate", help="run the authoring validation checks")
    add_bundle(p)
    p.add_argument("--out", help="write the report JSON here")

    p = sub.add_parser("plan", help="validate and generate the assembly recipe")
    add_bundle(p)
    p.add_argument("--out", help="write the recipe JSON here")

    p = sub.add_parser("labelgen", help="emit a synthetic labeled dataset")
    add_bundle(p)
    p.add_argument("--kind", choices=("grasp", "pose"), required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="plan and execute the recipe in simulation")
    add_bundle(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--faults", type=int, default=0,
                   help="inject this many pick failures per step")
    p.add_argument("--out", help="write log and final state here")

    p = sub.add_parser("serve", help="serve the HTTP API")
    add_bundle(p)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")

    p = sub.add_parser("example-bundle", help="write the bundled demo project")
    p.add_argument("--out", required=True)
    return parser


def cmd_validate(args) -> int:
    from .bundle import load_bundle
    from .recipe import validate_authoring

    bundle = load_bundle(args.bundle)
    report = validate_authoring(bundle.workcell, bundle.library, bundle.design,
                                bundle.sequence, bundle.config)
    doc = report.to_json()
    text = json.dumps(doc, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0 if report.passed else 2


def _plan(bundle):
    from .recipe import generate_recipe, validate_authoring

    report = validate_authoring(bundle.workcell, bundle.library, bundle.design,
                                bundle.sequence, bundle.config)
    if not report.passed:
        return report, None
    recipe = generate_recipe(bundle.workcell, bundle.library, bundle.design,
                             bundle.sequence, report)
    return report, recipe


def cmd_plan(args) -> int:
    from .bundle import load_bundle, recipe_to_json

    bundle = load_bundle(args.bundle)
    report, recipe = _plan(bundle)
    if recipe is None:
        print(json.dumps(report.to_json(), indent=1, sort_keys=True))
        LOG.error("validation failed; no recipe generated")
        return 2
    text = json.dumps(recipe_to_json(recipe), indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    LOG.info("recipe with %d steps", len(recipe.steps))
    return 0


def cmd_labelgen(args) -> int:
    from .bundle import load_bundle
    from .dataset import generate_grasp_dataset, generate_pose_dataset

    bundle = load_bundle(args.bundle)
    out = Path(args.out)
    if args.kind == "grasp":
        n = generate_grasp_dataset(bundle, out, args.count, args.seed)
    else:
        n = generate_pose_dataset(bundle, out, args.count, args.seed)
    LOG.info("wrote %d samples to %s", n, out)
    return 0


def cmd_simulate(args) -> int:
    from .bundle import load_bundle
    from .executor import FaultModel, execute, placement_errors, scatter_pile
    from .images import write_label_png
    from .recipe import build_regrasp_graphs

    bundle = load_bundle(args.bundle)
    report, recipe = _plan(bundle)
    if recipe is None:
        print(json.dumps(report.to_json(), indent=1, sort_keys=True))
        return 2
    graphs = build_regrasp_graphs(bundle.workcell, bundle.library, bundle.config,
                                  {s.part_class for s in recipe.steps})
    pile = scatter_pile(bundle.design, bundle.workcell, args.seed,
                        bundle.config.pile_spacing)
    faults = FaultModel({i: args.faults for i in range(len(recipe.steps))}) \
        if args.faults else None
    log, state = execute(recipe, bundle.workcell, bundle.library, bundle.design,
                         pile, args.seed, faults, bundle.config, graphs)
    errors = placement_errors(bundle.design, bundle.library, state)
    result = {
        "log": log.to_json(),
        "final_state": {
            "part_poses": [{"rotation": [float(v) for v in p.rotation],
                            "translation": [float(v) for v in p.translation]}
                           for p in state.part_poses],
            "placed": sorted(state.placed),
        },
        "placement_errors": [{"translation_m": e[0], "rotation_deg": e[1]}
                             for e in errors],
    }
    text = json.dumps(result, indent=1, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "simulation.json").write_text(text + "\n")
        for raster_id in sorted(log.rasters):
            write_label_png(log.rasters[raster_id], out / f"{raster_id}.png")
    else:
        print(text)
    worst = max(e[0] for e in errors)
    LOG.info("simulation done; worst placement error %.3f mm", worst * 1000)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .bundle import load_bundle
    from .service import create_app

    bundle = load_bundle(args.bundle)
    app = create_app(bundle)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_example_bundle(args) -> int:
    from .bundle import example_bundle, save_bundle

    save_bundle(example_bundle(), args.out)
    LOG.info("example bundle written to %s", args.out)
    return 0


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handlers = {
        "validate": cmd_validate,
        "plan": cmd_plan,
        "labelgen": cmd_labelgen,
        "simulate": cmd_simulate,
        "serve": cmd_serve,
        "example-bundle": cmd_example_bundle,
    }
    try:
        return handlers[args.command](args)
    except Exception as err:  # noqa: BLE001 - the CLI boundary reports and exits
        LOG.error("%s", err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
