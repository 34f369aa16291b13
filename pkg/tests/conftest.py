from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def five_tasks_dir():
    return FIXTURES / "five_tasks"


@pytest.fixture
def models(tmp_path):
    """Write model files into a fresh directory: ``models(Coin=text, ...)``.

    Keys ending in ``_mm`` are written as meta models.
    """

    def write(**files):
        for name, text in files.items():
            if name.endswith("_mm"):
                (tmp_path / f"{name[:-3]}.mm").write_text(text)
            else:
                (tmp_path / f"{name}.sm").write_text(text)
        return tmp_path

    return write


COIN = "kind dtmc\ninit s0\nlabel g heads\ntrans s0 heads 1\ntrans s0 tails 1\n"


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in mod.REPORT:
            terminalreporter.write_line(line)
