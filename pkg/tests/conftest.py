import numpy as np
import pytest

from pabc_lab import LayeredMdp, build_counterexample, build_table1_example


def chain_mdp(reward=0.5, p=0.3):
    """Two steps: x0 with actions a/b into {y0, y1}, each with one action into end."""
    return LayeredMdp.from_dicts(
        [["x0"], ["y0", "y1"], ["end"]],
        {"x0": ["a", "b"], "y0": ["go"], "y1": ["go"]},
        {"x0": {"a": {"y0": 1.0}, "b": {"y0": p, "y1": 1 - p}}},
        {"x0": {"a": 0.0, "b": reward}, "y0": {"go": 1.0}, "y1": {"go": 0.0}},
        "x0",
    )


def zero_mdp():
    return LayeredMdp.from_dicts(
        [["x0"], ["y0", "y1"], ["end"]],
        {"x0": ["a", "b"], "y0": ["u", "v"], "y1": ["u"]},
        {"x0": {"a": {"y0": 0.5, "y1": 0.5}, "b": {"y1": 1.0}}},
        {},
        "x0",
    )


@pytest.fixture
def counterexample():
    return build_counterexample()


@pytest.fixture
def table1():
    return build_table1_example()


@pytest.fixture
def chain():
    return chain_mdp()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
