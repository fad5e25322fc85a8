"""
Shared fixtures and the ``slow`` marker.

Slow tests (S_run = 500 experiment directions, CV convergence, throughput)
only run with ``pytest --runslow``.
"""

import sys
import json
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from src.config import SimulationConfig, load_config  # noqa: E402

EXPERIMENTS_DIR = ROOT / "data" / "experiments"
FIXTURES_DIR = ROOT / "fixtures"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow statistical tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long statistical acceptance checks (need --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# ----------------------------------------------------------------------
# Config builders
# ----------------------------------------------------------------------

def office_document(n_people: int = 6, n_infected: int = 1, **options) -> dict:
    """A small two-department office with a collective lunch and a meeting room."""
    document = {
        "departments": ["A", "B"],
        "events": [
            {"name": "work", "activity": "work", "schedule": [["08:00", "12:00"]],
             "duration_min": 20, "duration_max": 40},
            {"name": "meeting", "activity": "meeting", "schedule": [["09:00", "11:30"]],
             "duration_min": 15, "duration_max": 30, "repetitions_max": 2, "collective": True},
            {"name": "coffee", "activity": "coffee", "schedule": [["10:00", "10:30"]],
             "duration_min": 5, "duration_max": 10, "repetitions_max": 1, "mask_efficiency": 0.3},
            {"name": "lunch", "activity": "lunch", "schedule": [["11:00", "12:00"]],
             "duration_min": 15, "duration_max": 25, "repetitions_min": 1, "repetitions_max": 1,
             "collective": True},
        ],
        "places": [
            {"name": "Office A", "activity": "work", "building": "b", "departments_allowed": ["A"],
             "area": 40, "height": 2.7, "capacity": 8, "ventilation_natural": 1.5},
            {"name": "Office B", "activity": "work", "building": "b", "departments_allowed": ["B"],
             "area": 40, "height": 2.7, "capacity": 8, "ventilation_natural": 1.5},
            {"name": "Meeting", "activity": "meeting", "building": "b",
             "area": 16, "height": 2.7, "capacity": 4, "ventilation_natural": 0.5},
            {"name": "Coffee", "activity": "coffee", "building": "b",
             "area": 20, "height": 2.7, "capacity": 4, "ventilation_natural": 1.5},
            {"name": "Canteen", "activity": "lunch", "building": "b",
             "area": 60, "height": 2.7, "capacity": 12, "ventilation_natural": 1.5},
        ],
        "people": [
            {"name": "a", "building": "b", "department": "A", "count": (n_people + 1) // 2},
            {"name": "b", "building": "b", "department": "B", "count": n_people // 2},
        ],
        "options": {"day_start": "08:00", "day_end": "12:00", "n_infected": n_infected, **options},
    }
    document["people"] = [p for p in document["people"] if p["count"] > 0]
    return document


def make_config(document: dict) -> SimulationConfig:
    return SimulationConfig.model_validate(document)


@pytest.fixture
def office_config() -> SimulationConfig:
    return make_config(office_document())


@pytest.fixture(scope="session")
def baseline_config() -> SimulationConfig:
    return load_config(EXPERIMENTS_DIR / "baseline.json")


@pytest.fixture(scope="session")
def experiment_configs():
    return {path.stem: load_config(path) for path in sorted(EXPERIMENTS_DIR.glob("*.json"))}


@pytest.fixture(scope="session")
def reference_vectors():
    return json.loads((FIXTURES_DIR / "stats" / "reference_vectors.json").read_text(encoding="utf-8"))
