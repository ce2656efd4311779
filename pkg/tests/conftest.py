import numpy as np
import pytest

from nsf.synthgen import SyntheticConfig, generate

_CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Store one acceptance line: ``record_criterion(name, passed, detail)``; ``passed=None`` means skipped."""

    def record(name, passed, detail=""):
        _CRITERIA[name] = (None if passed is None else bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda s: (len(s.split()[0]), s)):
        passed, detail = _CRITERIA[name]
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"{status}  {name}  {detail}")


@pytest.fixture(scope="session")
def small_synth():
    return generate(SyntheticConfig(n=2000, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
