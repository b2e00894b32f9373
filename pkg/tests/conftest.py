import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from topocal.data import Dataset, StationMeta  # noqa: E402

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {name}: {detail}")


def make_station(sid, dem31=500.0, dem15=None, lat=46.5, lon=8.0, height=None):
    return StationMeta(sid, lat, lon, height if height is not None else dem31, dem31,
                       dem15 if dem15 is not None else dem31)


def make_dataset(rows, stations=None, scale="original"):
    """rows: (station_id, 'YYYY-MM-DD', obs, members) tuples, lead time 1."""
    stations = stations or {r[0]: make_station(r[0]) for r in rows}
    return Dataset(
        station_id=[r[0] for r in rows],
        date=np.array([r[1] for r in rows], dtype="datetime64[D]"),
        lead_time=np.ones(len(rows)),
        obs=[r[2] for r in rows],
        members=[r[3] for r in rows],
        stations=stations,
        scale=scale,
    )


@pytest.fixture
def tiny_dataset():
    return make_dataset([
        ("A", "2017-12-03", 4.0, [0.0, 9.0]),
        ("A", "2018-01-05", 0.0, [1.0, 4.0]),
        ("B", "2017-01-10", 1.0, [0.0, 0.0]),
    ])
