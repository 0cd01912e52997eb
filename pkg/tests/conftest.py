import numpy as np
import pytest

from rumatch import DiscreteMarket, LogitModel, MultiSegmentModel
from rumatch.bench import TABLE3_PRICES, TABLE3_SHARES


@pytest.fixture(scope="session")
def two_segment_model():
    return MultiSegmentModel(TABLE3_PRICES)


@pytest.fixture(scope="session")
def two_segment_market(two_segment_model):
    """Three goods, two price segments, N = 1000: delta_2 = 2, delta_3 in [1, 3]."""
    return DiscreteMarket.from_shares(two_segment_model, TABLE3_SHARES, 1000, 0)


@pytest.fixture(scope="session")
def two_segment_shocks(two_segment_model, two_segment_market):
    return two_segment_model.price_shocks(two_segment_market.draws)


@pytest.fixture(scope="session")
def logit_market():
    return DiscreteMarket.from_shares(LogitModel(3), [0.5, 0.25, 0.25], 10_000, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, part, passed, detail)`` for the end-of-run summary."""
    def record(criterion, part, passed, detail):
        line = (criterion, part, bool(passed), detail)
        request.config.acceptance_lines.append(line)
        print(f"{'PASS' if passed else 'FAIL'} criterion {criterion}{part}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted({c for c, _, _, _ in lines}):
        parts = [line for line in lines if line[0] == criterion]
        ok = all(p for _, _, p, _ in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {criterion}")
        for _, part, passed, detail in parts:
            terminalreporter.write_line(f"    {'pass' if passed else 'FAIL'} {criterion}{part}: {detail}")
