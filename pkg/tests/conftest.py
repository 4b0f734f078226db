import pytest

from flsim.config import SimConfig, resolve_data


@pytest.fixture(scope="session")
def small_cfg() -> SimConfig:
    return SimConfig(synth_samples_per_class=40, synth_feature_dim=20, rounds=3)


@pytest.fixture(scope="session")
def small_data(small_cfg):
    return resolve_data(small_cfg)


@pytest.fixture(scope="session")
def default_cfg() -> SimConfig:
    return SimConfig()


@pytest.fixture(scope="session")
def default_data(default_cfg):
    return resolve_data(default_cfg)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
