import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

from pcnode.data import rk4_generate
from pcnode.gas_piston import INPUT_LABELS, STATE_LABELS, GasPistonTruth


@pytest.fixture(scope="session")
def gas_free_response():
    """10'000 clean samples of the unforced gas piston at h = 0.01 s."""
    truth = GasPistonTruth()
    return rk4_generate(truth, truth.x0, None, 0.01, 9_999, substeps=10,
                        state_labels=STATE_LABELS, input_labels=INPUT_LABELS)


ACCEPTANCE: dict[int, tuple[str, str]] = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str = "") -> str:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE[number] = ("PASS" if passed else "FAIL", line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number][1])
