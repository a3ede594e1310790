import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from altsddip.instances import example_two_stage, generate_smkp  # noqa: E402

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def example():
    return example_two_stage()


@pytest.fixture
def tiny_smkp():
    return generate_smkp(3, 2, 4, 2, seed=7)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
