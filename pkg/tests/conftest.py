"""Shared scenario fixtures (session-scoped: building trees is cheap, reuse anyway)."""

import pytest

from nebsde import TimeGrid, build_scenarios


@pytest.fixture(scope="session")
def tree8():
    return build_scenarios(TimeGrid(1.0, 8), "tree")


@pytest.fixture(scope="session")
def tree50():
    return build_scenarios(TimeGrid(1.0, 50), "tree")


@pytest.fixture(scope="session")
def tree100():
    return build_scenarios(TimeGrid(1.0, 100), "tree")


@pytest.fixture(scope="session")
def tree200():
    return build_scenarios(TimeGrid(1.0, 200), "tree")


@pytest.fixture(scope="session")
def mc50():
    return build_scenarios(
        TimeGrid(1.0, 50), "montecarlo", n_paths=4000, seed=7, basis_degree=3
    )
