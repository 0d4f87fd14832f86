import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from feedincap.fixtures import synth_grid


@pytest.fixture(scope="session")
def rural():
    return synth_grid("rural_mv", seed=1, hours=1)


@pytest.fixture(scope="session")
def urban():
    return synth_grid("urban_mv", seed=1, hours=1)


@pytest.fixture(scope="session")
def hybrid():
    return synth_grid("hybrid_mv", seed=1, hours=1)


@pytest.fixture(scope="session")
def lv():
    return synth_grid("lv", seed=1, hours=1)


@pytest.fixture(scope="session")
def lv_year():
    return synth_grid("lv", seed=1, hours=8760)
