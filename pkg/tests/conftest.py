import pytest

from costplan.core import (
    ConfigOption,
    DeviceCatalogEntry,
    DurationTable,
    Problem,
    WorkflowSpec,
    validate_problem,
)


def make_problem(
    workflows,
    devices,
    configs,
    durations,
    precedence=None,
):
    return Problem.build(
        workflows, devices, configs, DurationTable(durations), precedence=precedence
    )


@pytest.fixture
def single_choice_problem():
    """One workflow, one device, one config; always feasible."""
    return make_problem(
        [WorkflowSpec("w1", 0.0, 10.0)],
        [DeviceCatalogEntry("d1", 1.0, 2.0, 5.0)],
        [ConfigOption("d1", "k1", 2)],
        {("w1", "d1", "k1"): 3.0},
    )


@pytest.fixture
def two_config_problem():
    """One workflow, two configs on one device with usage costs 10 and 8."""
    return make_problem(
        [WorkflowSpec("w1", 0.0, 10.0)],
        [DeviceCatalogEntry("d1", 1.0, 2.0, 0.0)],
        [ConfigOption("d1", "k1", 5), ConfigOption("d1", "k2", 4)],
        {("w1", "d1", "k1"): 2.0, ("w1", "d1", "k2"): 2.0},
    )


@pytest.fixture
def chain_problem():
    """Two workflows i -> j, one config each."""
    return make_problem(
        [
            WorkflowSpec("wi", 0.0, 10.0),
            WorkflowSpec("wj", 1.0, 10.0, predecessors=frozenset({"wi"})),
        ],
        [DeviceCatalogEntry("d1", 1.0, 1.0, 0.0)],
        [ConfigOption("d1", "k1", 1)],
        {("wi", "d1", "k1"): 2.0, ("wj", "d1", "k1"): 1.0},
    )


@pytest.fixture
def validated(single_choice_problem):
    return validate_problem(single_choice_problem)
