import numpy as np
import pytest

import twogridmfe as tg


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run benchmark table reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def cache_dir(monkeypatch, tmp_path):
    """Keep reference solutions of every test in its own temporary cache."""
    path = tmp_path / "cache"
    monkeypatch.setenv("TWOGRIDMFE_CACHE_DIR", str(path))
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def interval():
    return tg.Domain.interval(-1.0, 1.0)


@pytest.fixture
def square():
    return tg.Domain.rectangle((-1.0, 1.0), (-1.0, 1.0))


@pytest.fixture
def unit_square():
    return tg.Domain.rectangle((0.0, 1.0), (0.0, 1.0))


@pytest.fixture
def square_space(square):
    return tg.FeSpace(tg.make_uniform_mesh(square, 4))
