import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from metaseq.generators import default_bandit, default_coin, default_coin_set  # noqa: E402
from metaseq.metatrain import RunConfig, train  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def coin():
    return default_coin()


@pytest.fixture(scope="session")
def coin_set():
    return default_coin_set()


@pytest.fixture(scope="session")
def bandit():
    return default_bandit()


@pytest.fixture(scope="session")
def predictor_run():
    """The standard coin predictor: H=20, N=100, 1000 batches, T=10."""
    config = RunConfig(algorithm="predict", task="dirichlet", hidden=20, batch_size=100,
                       batches=1000, horizon=10, early_stop_patience=0, seed=0)
    return config, train(config)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
