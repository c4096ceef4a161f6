import numpy as np
import pytest

from heartnoise.dataset import build_dataset
from heartnoise.recipe import load_recipe


@pytest.fixture(scope="session")
def reference_dataset(tmp_path_factory):
    """The bundled reference recipe built once per test session (about 7 s)."""
    out = tmp_path_factory.mktemp("reference_ds")
    manifest = build_dataset(load_recipe("reference"), out, jobs=2)
    return out, manifest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(number, ok, detail):
        line = f"AC{number:>2} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[2:4])):
            terminalreporter.write_line(line)
