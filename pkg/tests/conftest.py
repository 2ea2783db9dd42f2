import numpy as np
import pytest

from birdnovelty.features import MODE_ONLY, Standardizer
from birdnovelty.gmm import GmmModel
from birdnovelty.trainer import SpeciesModel


@pytest.fixture
def mode_model():
    """Mode-only model: a unit Gaussian on (mode - 3 kHz) / 500 Hz."""
    return SpeciesModel(
        species_id="toy",
        feature_set=MODE_ONLY,
        standardizer=Standardizer(np.array([3000.0]), np.array([500.0])),
        gmm=GmmModel([1.0], [[0.0]], [[[1.0]]]),
        mdl_by_k={1: 0.0},
    )


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record, print and assert one acceptance criterion."""

    def record(pid: str, ok: bool, detail: str):
        line = f"{pid} {'PASS' if ok else 'FAIL'}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
