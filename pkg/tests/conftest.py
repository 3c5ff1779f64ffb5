import numpy as np
import pytest

from dtgnss.correction import build_database
from dtgnss.scene import GridCell, scene_from_dict
from dtgnss.geo import EnuPoint, GeodeticPoint
from dtgnss.synthetic import gen_constellation, gen_scene

ORIGIN = GeodeticPoint(22.3, 114.18, 10.0)


@pytest.fixture(scope="session")
def small_canyon_dict():
    return gen_scene("canyon", length=30.0, margin=6.0)


@pytest.fixture(scope="session")
def small_canyon(small_canyon_dict):
    return scene_from_dict(small_canyon_dict)


@pytest.fixture(scope="session")
def open_sky():
    return scene_from_dict(gen_scene("open_sky", length=12.0, margin=0.0, street_width=6.0, depth=1.5))


@pytest.fixture(scope="session")
def table20():
    # 20 epochs at 30 s: slots 0 and 1 fully covered
    return gen_constellation(count=8, epochs=20, step=30.0)


@pytest.fixture(scope="session")
def canyon_build(small_canyon, table20):
    return build_database(small_canyon, small_canyon.grid, table20, return_fixes=True)


def cell_at(e, n, u=1.0, index=(0, 0)):
    return GridCell(index, EnuPoint(e, n, u))


def rng(seed=0):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
