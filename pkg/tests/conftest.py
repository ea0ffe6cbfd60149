import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture(scope="session")
def demo_bundle():
    from assembly_forge.bundle import example_bundle

    return example_bundle()


@pytest.fixture(scope="session")
def demo_validation(demo_bundle):
    from assembly_forge.recipe import validate_authoring

    b = demo_bundle
    return validate_authoring(b.workcell, b.library, b.design, b.sequence, b.config)


@pytest.fixture(scope="session")
def demo_recipe(demo_bundle, demo_validation):
    from assembly_forge.recipe import generate_recipe

    b = demo_bundle
    return generate_recipe(b.workcell, b.library, b.design, b.sequence, demo_validation)


@pytest.fixture(scope="session")
def demo_graphs(demo_bundle, demo_recipe):
    from assembly_forge.recipe import build_regrasp_graphs

    b = demo_bundle
    return build_regrasp_graphs(b.workcell, b.library, b.config,
                                {s.part_class for s in demo_recipe.steps})
