from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"
MINICITY = DATA / "minicity"


@pytest.fixture
def minicity():
    return MINICITY


@pytest.fixture
def minicity_config(tmp_path):
    from mdhg.config import RunConfig

    cfg = RunConfig.from_file(MINICITY / "run.yaml")
    cfg.output_dir = tmp_path / "out"
    return cfg


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
    skipped = [r for r in terminalreporter.stats.get("skipped", []) if "test_acceptance" in r.nodeid]
    for r in skipped:
        terminalreporter.write_line(f"[SKIP] full-dataset reproduction (optional): {r.longrepr[2]}")
