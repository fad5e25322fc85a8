"""
Outcome metrics at place, person, department and building level.

Implements:
- place_metrics / person_metrics / department_metrics / building_metrics
- OutcomeMetrics container with JSON and DataFrame views
- apply_quanta_exclusion: drop zero-quanta samples per (run, place) or per run
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, asdict, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from src.history import RunHistory

logger = logging.getLogger(__name__)

QUANTA_COLUMNS = ("max_quanta", "final_quanta")


@dataclass
class PlaceMetrics:
    place: str
    volume: float
    max_co2: float
    max_quanta: float
    final_quanta: float


@dataclass
class PersonMetrics:
    person: str
    department: str
    infected: bool
    mean_co2: float
    final_quanta: float


@dataclass
class DepartmentMetrics:
    department: str
    n_people: int
    mean_co2: float
    mean_quanta: float


@dataclass
class BuildingMetrics:
    max_co2: float  # volume-weighted mean of per-place maxima
    mean_quanta: float  # population mean of final inhaled quanta


@dataclass
class OutcomeMetrics:
    places: List[PlaceMetrics] = field(default_factory=list)
    persons: List[PersonMetrics] = field(default_factory=list)
    departments: List[DepartmentMetrics] = field(default_factory=list)
    building: Optional[BuildingMetrics] = None

    def to_dict(self) -> dict:
        return {
            "places": [asdict(m) for m in self.places],
            "persons": [asdict(m) for m in self.persons],
            "departments": [asdict(m) for m in self.departments],
            "building": asdict(self.building),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OutcomeMetrics":
        return cls(
            places=[PlaceMetrics(**m) for m in data["places"]],
            persons=[PersonMetrics(**m) for m in data["persons"]],
            departments=[DepartmentMetrics(**m) for m in data["departments"]],
            building=BuildingMetrics(**data["building"]),
        )


def place_metrics(history: RunHistory) -> List[PlaceMetrics]:
    """
    Per-place maxima and end-of-day quanta.

    Trajectories are monotone between occupancy changes, so the maxima over
    snapshots are the maxima of the whole day.
    """
    background = history.aerosol["co2_background"]
    stats: Dict[str, List[float]] = OrderedDict(
        (p.name, [background, 0.0, 0.0]) for p in history.places
    )
    for snapshot in history.place_snapshots:
        entry = stats[snapshot.place]
        entry[0] = max(entry[0], snapshot.co2)
        entry[1] = max(entry[1], snapshot.quanta)
        entry[2] = snapshot.quanta
    volumes = {p.name: p.volume for p in history.places}
    return [
        PlaceMetrics(name, volumes[name], max_co2, max_quanta, final_quanta)
        for name, (max_co2, max_quanta, final_quanta) in stats.items()
    ]


def person_metrics(history: RunHistory) -> List[PersonMetrics]:
    ledger = {entry.person: entry for entry in history.ledger}
    result = []
    for person in history.persons:
        entry = ledger[person.name]
        mean_co2 = entry.co2_minutes / entry.minutes if entry.minutes else float("nan")
        result.append(PersonMetrics(
            person.name, person.department, person.infected, mean_co2, entry.quanta
        ))
    return result


def department_metrics(persons: List[PersonMetrics]) -> List[DepartmentMetrics]:
    groups: Dict[str, List[PersonMetrics]] = OrderedDict()
    for metric in persons:
        groups.setdefault(metric.department, []).append(metric)
    return [
        DepartmentMetrics(
            department=name,
            n_people=len(members),
            mean_co2=float(np.mean([m.mean_co2 for m in members])),
            mean_quanta=float(np.mean([m.final_quanta for m in members])),
        )
        for name, members in sorted(groups.items())
    ]


def building_metrics(places: List[PlaceMetrics], persons: List[PersonMetrics]) -> BuildingMetrics:
    if places:
        volumes = np.array([p.volume for p in places])
        maxima = np.array([p.max_co2 for p in places])
        max_co2 = float(np.sum(volumes * maxima) / np.sum(volumes))
    else:
        max_co2 = float("nan")
    mean_quanta = float(np.mean([p.final_quanta for p in persons])) if persons else float("nan")
    return BuildingMetrics(max_co2=max_co2, mean_quanta=mean_quanta)


def compute_metrics(history: RunHistory) -> OutcomeMetrics:
    places = place_metrics(history)
    persons = person_metrics(history)
    return OutcomeMetrics(
        places=places,
        persons=persons,
        departments=department_metrics(persons),
        building=building_metrics(places, persons),
    )


# ----------------------------------------------------------------------
# Frames and exclusion
# ----------------------------------------------------------------------

def metrics_frames(metrics: OutcomeMetrics) -> Dict[str, pd.DataFrame]:
    return {
        "places": pd.DataFrame([asdict(m) for m in metrics.places]),
        "persons": pd.DataFrame([asdict(m) for m in metrics.persons]),
        "departments": pd.DataFrame([asdict(m) for m in metrics.departments]),
        "building": pd.DataFrame([asdict(metrics.building)]),
    }


def apply_quanta_exclusion(samples: pd.DataFrame, mode: str = "place") -> pd.DataFrame:
    """
    Blank out quanta samples of runs where no quanta reached the place.

    ``samples`` holds one row per (run, place) with ``max_quanta`` and
    ``final_quanta``. In "place" mode a row's quanta values become NaN when
    its final quanta is zero. In "run" mode every row of a run is blanked
    when the run's total final quanta over all places is zero. CO2 columns
    are never touched.
    """
    if mode not in ("place", "run"):
        raise ValueError(f"unknown exclusion mode {mode!r}")
    result = samples.copy()
    if result.empty:
        return result
    if mode == "place":
        mask = result["final_quanta"] == 0.0
    else:
        totals = result.groupby("run")["final_quanta"].transform("sum")
        mask = totals == 0.0
    for column in QUANTA_COLUMNS:
        result[column] = result[column].astype(float)
        result.loc[mask, column] = np.nan
    empty = [
        place for place, values in result.groupby("place", sort=False)["final_quanta"]
        if values.isna().all()
    ]
    for place in empty:
        logger.warning(f"No quanta samples left for place {place} after exclusion")
    return result
