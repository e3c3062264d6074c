from __future__ import annotations

import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from exactber.channel import bsc  # noqa: E402
from exactber.encoder import parse_generator, realize  # noqa: E402

R23 = "[[1,0,1+D],[0,1,1+D]]"
M1, M2, M3, M4 = "1,3", "5,7", "13,17", "27,31"
G2 = "[[1,(1+D^2)/(1+D+D^2)]]"
G3 = "[[1,(1+D+D^2)/(1+D^2)]]"
RATE23_CODES = {
    4: "[[D,1+D,1+D],[1,D,1+D]]",
    8: "[[1+D,D,1],[D^2,1,1+D+D^2]]",
    16: "[[D+D^2,1,1+D^2],[1,D+D^2,1+D+D^2]]",
}


def pytest_collection_modifyitems(config, items):
    if os.environ.get("EXACTBER_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="long-running; set EXACTBER_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def fsm_of(gen: str, form: str = "controller"):
    return realize(parse_generator(gen), form)


@pytest.fixture(scope="session")
def bsc_sym():
    return bsc()


REPORT: list[str] = []


@pytest.fixture
def report():
    """Collect a line for the end-of-run summary (criteria results, informational checks)."""
    return REPORT.append


def pytest_terminal_summary(terminalreporter):
    if REPORT:
        terminalreporter.section("exactber report")
        for line in REPORT:
            terminalreporter.write_line(line)
