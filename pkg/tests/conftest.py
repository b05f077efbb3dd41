import numpy as np
import pytest

from symctl.config import config_hash
from symctl.sim import simulate


class SimCache:
    """Memoizes full simulations by config hash so modules can share them."""

    def __init__(self):
        self._runs = {}

    def __call__(self, cfg):
        key = config_hash(cfg)
        if key not in self._runs:
            self._runs[key] = simulate(cfg)
        return self._runs[key]


class AcceptanceLog:
    """Collects per-criterion checks; a criterion passes when all its checks do."""

    def __init__(self):
        self.checks = {}

    def record(self, criterion, title, ok, detail):
        self.checks.setdefault(criterion, (title, []))[1].append((bool(ok), detail))
        return bool(ok)

    def lines(self):
        out = []
        for criterion in sorted(self.checks, key=lambda c: int(c)):
            title, parts = self.checks[criterion]
            status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
            detail = "; ".join(d for _, d in parts)
            out.append(f"{status} criterion {criterion} ({title}): {detail}")
        return out


_ACCEPTANCE = AcceptanceLog()


@pytest.fixture(scope="session")
def sim():
    return SimCache()


@pytest.fixture(scope="session")
def acceptance():
    return _ACCEPTANCE


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    lines = _ACCEPTANCE.lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
