import numpy as np
import pytest

from fps_hybrid.sysmodel import SystemConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20170605)


@pytest.fixture
def small_cfg():
    return SystemConfig(n_tx_antennas=16, n_rx_antennas=4, n_streams=2, n_rf_tx=2,
                        n_rf_rx=2, n_shifters=8, n_clusters=3, n_rays=4)


@pytest.fixture
def mu_cfg():
    return SystemConfig(n_tx_antennas=16, n_rx_antennas=4, n_users=2, n_subcarriers=4,
                        n_streams=1, n_rf_tx=2, n_rf_rx=1, n_shifters=8,
                        n_clusters=3, n_rays=4)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one ``[PASS]/[FAIL]/[FLAG]`` line for the acceptance summary."""
    def emit(tag, number, text):
        line = f"[{tag}] criterion {number}: {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return tag != "FAIL"
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
