import numpy as np
import pytest

from ccwsurv import dgp, toy


@pytest.fixture(scope="session")
def toy_cohort():
    return toy.cohort()


@pytest.fixture(scope="session")
def small_baseline():
    return dgp.simulate(dgp.preset("baseline-s1"), 600, 11)


@pytest.fixture(scope="session")
def small_timedep():
    return dgp.simulate(dgp.preset("timedep-s1"), 600, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one summary line per acceptance criterion (shown after the run)."""

    def record(number: int, title: str, checks: list[tuple[str, bool]]):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{name} [{'ok' if passed else 'FAIL'}]" for name, passed in checks)
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} :: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
