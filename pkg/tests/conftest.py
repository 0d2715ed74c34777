import os

import pytest

from cloudrt import acceptance

ACCEPT_LINES = []


@pytest.fixture(scope="session")
def suite(tmp_path_factory):
    """One acceptance Suite per session so trained models are shared between criteria.

    Set CLOUDRT_ACCEPT_WORK to reuse datasets and checkpoints across runs.
    """
    work = os.environ.get("CLOUDRT_ACCEPT_WORK") or tmp_path_factory.mktemp("accept")
    return acceptance.Suite(work, log=lambda m: None)


def pytest_terminal_summary(terminalreporter):
    if ACCEPT_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPT_LINES):
            terminalreporter.write_line(line)
