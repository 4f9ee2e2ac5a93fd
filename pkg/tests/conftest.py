import numpy as np
import pytest

from kclattice import build_kernel


@pytest.fixture(scope="session")
def ker2():
    return build_kernel(2.0, 16)


@pytest.fixture(scope="session")
def ker1():
    return build_kernel(1.0, 16)


@pytest.fixture(scope="session")
def ker2_small():
    return build_kernel(2.0, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("KC_CACHE_DIR", str(tmp_path / "cache"))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
