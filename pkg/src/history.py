"""
Run history: event-granular snapshots of places and people, plus export.

Implements:
- PlaceSnapshot / PersonSnapshot / RunHistory records
- HistoryRecorder with ordering checks (time regression is an engine bug)
- JSON export/import (byte-identical round trip) and CSV export via pandas
- Densified place trajectories on a fixed minute grid
- Activity density over the day recomputed from person rows
"""

import json
import hashlib
import logging
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.aerosol import AerosolState, advance_co2, advance_quanta, minutes_to_hours
from src.config import AerosolConstants
from src.entities import SimulationError

logger = logging.getLogger(__name__)

PLACE_COLUMNS = ["place", "time", "n_people", "n_infected", "co2", "quanta", "mask_efficiency"]
PERSON_COLUMNS = ["person", "time", "end_time", "place", "event", "co2", "quanta"]
DENSE_COLUMNS = ["place", "time", "n_people", "n_infected", "co2", "quanta"]


@dataclass
class PlaceSnapshot:
    """Place state right after all changes at ``time``."""
    place: str
    time: int
    n_people: int
    n_infected: int
    co2: float
    quanta: float
    mask_efficiency: float


@dataclass
class PersonSnapshot:
    """One activity segment. ``co2`` is its time-weighted mean, ``quanta`` the dose inhaled in it."""
    person: str
    time: int
    end_time: int
    place: str
    event: str
    co2: float
    quanta: float


@dataclass
class PlaceInfo:
    name: str
    activity: str
    building: str
    volume: float
    ventilation_natural: float
    mechanical_rate: float


@dataclass
class PersonInfo:
    name: str
    department: str
    infected: bool
    home: str


@dataclass
class LedgerEntry:
    person: str
    quanta: float
    co2_minutes: float
    minutes: int


@dataclass
class RunHistory:
    config_digest: str
    seed: int
    day_start: int
    day_end: int
    aerosol: Dict[str, float]
    places: List[PlaceInfo]
    persons: List[PersonInfo]
    place_snapshots: List[PlaceSnapshot] = field(default_factory=list)
    person_snapshots: List[PersonSnapshot] = field(default_factory=list)
    ledger: List[LedgerEntry] = field(default_factory=list)

    @property
    def infected(self) -> List[str]:
        return [p.name for p in self.persons if p.infected]

    @property
    def run_digest(self) -> str:
        """Provenance digest of (config, seed)."""
        return hashlib.sha256(f"{self.config_digest}:{self.seed}".encode("utf-8")).hexdigest()

    @property
    def constants(self) -> AerosolConstants:
        return AerosolConstants(**self.aerosol)

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "seed": self.seed,
            "run_digest": self.run_digest,
            "day_start": self.day_start,
            "day_end": self.day_end,
            "aerosol": dict(self.aerosol),
            "infected": self.infected,
            "places": [asdict(p) for p in self.places],
            "persons": [asdict(p) for p in self.persons],
            "place_snapshots": [asdict(s) for s in self.place_snapshots],
            "person_snapshots": [asdict(s) for s in self.person_snapshots],
            "ledger": [asdict(e) for e in self.ledger],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunHistory":
        history = cls(
            config_digest=data["config_digest"],
            seed=data["seed"],
            day_start=data["day_start"],
            day_end=data["day_end"],
            aerosol=dict(data["aerosol"]),
            places=[PlaceInfo(**p) for p in data["places"]],
            persons=[PersonInfo(**p) for p in data["persons"]],
            place_snapshots=[PlaceSnapshot(**s) for s in data["place_snapshots"]],
            person_snapshots=[PersonSnapshot(**s) for s in data["person_snapshots"]],
            ledger=[LedgerEntry(**e) for e in data["ledger"]],
        )
        if data.get("run_digest") not in (None, history.run_digest):
            raise ValueError("history run_digest does not match its config digest and seed")
        return history

    def digest(self) -> str:
        """Digest of the full exported content."""
        return hashlib.sha256(history_to_json(self).encode("utf-8")).hexdigest()


class HistoryRecorder:
    """Collects snapshots during a run and enforces per-entity time order."""

    def __init__(self, history: RunHistory):
        self.history = history
        self._last_place: Dict[str, int] = {}
        self._last_person_end: Dict[str, int] = {}

    def record(self, snapshot: Union[PlaceSnapshot, PersonSnapshot]) -> None:
        if isinstance(snapshot, PlaceSnapshot):
            self._record_place(snapshot)
        else:
            self._record_person(snapshot)

    def _record_place(self, snapshot: PlaceSnapshot) -> None:
        last = self._last_place.get(snapshot.place)
        if last is not None and snapshot.time < last:
            raise SimulationError(
                f"place snapshot time regression for {snapshot.place}: {last} -> {snapshot.time}"
            )
        snapshots = self.history.place_snapshots
        if last == snapshot.time:
            # one snapshot per place and instant: keep the state after the last change
            for i in range(len(snapshots) - 1, -1, -1):
                if snapshots[i].place == snapshot.place:
                    snapshots[i] = snapshot
                    return
        snapshots.append(snapshot)
        self._last_place[snapshot.place] = snapshot.time

    def _record_person(self, snapshot: PersonSnapshot) -> None:
        last_end = self._last_person_end.get(snapshot.person)
        if last_end is not None and snapshot.time != last_end:
            raise SimulationError(
                f"person trace for {snapshot.person} not contiguous: {last_end} -> {snapshot.time}"
            )
        if snapshot.end_time <= snapshot.time:
            raise SimulationError(f"empty or reversed segment for {snapshot.person} at {snapshot.time}")
        self.history.person_snapshots.append(snapshot)
        self._last_person_end[snapshot.person] = snapshot.end_time

    def finish(self, ledger: List[LedgerEntry]) -> RunHistory:
        self.history.ledger = ledger
        return self.history


# ----------------------------------------------------------------------
# Export
# ----------------------------------------------------------------------

def history_to_json(history: RunHistory) -> str:
    return json.dumps(history.to_dict(), sort_keys=True, indent=1)


def history_from_json(text: str) -> RunHistory:
    return RunHistory.from_dict(json.loads(text))


def export_json(history: RunHistory, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(history_to_json(history), encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot write history to {path}: {e}") from e
    logger.info(f"History written to {path}")
    return path


def load_json(path: Union[str, Path]) -> RunHistory:
    path = Path(path)
    return history_from_json(path.read_text(encoding="utf-8"))


def place_frame(history: RunHistory) -> pd.DataFrame:
    return pd.DataFrame([asdict(s) for s in history.place_snapshots], columns=PLACE_COLUMNS)


def person_frame(history: RunHistory) -> pd.DataFrame:
    return pd.DataFrame([asdict(s) for s in history.person_snapshots], columns=PERSON_COLUMNS)


def export_csv(history: RunHistory, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    """Write ``places.csv`` and ``persons.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    places_path = out_dir / "places.csv"
    persons_path = out_dir / "persons.csv"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        place_frame(history).to_csv(places_path, index=False)
        person_frame(history).to_csv(persons_path, index=False)
    except OSError as e:
        raise OSError(f"cannot write CSV history to {out_dir}: {e}") from e
    logger.info(f"CSV history written to {out_dir}")
    return places_path, persons_path


# ----------------------------------------------------------------------
# Derived views
# ----------------------------------------------------------------------

def densify(history: RunHistory, step_minutes: int) -> pd.DataFrame:
    """
    Resample every place trajectory on a ``step_minutes`` grid.

    Grid values are one interval step from the preceding snapshot with
    that snapshot's occupancy; snapshot rows are kept as is, so values at
    event boundaries match the history exactly.
    """
    if step_minutes < 1:
        raise ValueError("step_minutes must be >= 1")
    constants = history.constants
    info = {p.name: p for p in history.places}
    grid = np.arange(history.day_start, history.day_end + 1, step_minutes)
    rows = []
    by_place: Dict[str, List[PlaceSnapshot]] = {}
    for snapshot in history.place_snapshots:
        by_place.setdefault(snapshot.place, []).append(snapshot)
    for place in history.places:
        snapshots = by_place.get(place.name, [])
        if not snapshots:
            continue
        times = [s.time for s in snapshots]
        for s in snapshots:
            rows.append((place.name, s.time, s.n_people, s.n_infected, s.co2, s.quanta))
        for t in grid:
            t = int(t)
            k = int(np.searchsorted(times, t, side="right")) - 1
            if k < 0 or times[k] == t:
                continue
            base = snapshots[k]
            state = AerosolState(
                co2=base.co2, quanta=base.quanta, last_update=base.time,
                occupants=base.n_people, infected=base.n_infected,
                mask_efficiency=base.mask_efficiency,
            )
            tau = minutes_to_hours(t - base.time)
            rows.append((
                place.name, t, base.n_people, base.n_infected,
                advance_co2(state, tau, info[place.name], constants),
                advance_quanta(state, tau, info[place.name], constants),
            ))
    frame = pd.DataFrame(rows, columns=DENSE_COLUMNS)
    order = {p.name: i for i, p in enumerate(history.places)}
    frame["_order"] = frame["place"].map(order)
    frame = frame.sort_values(["_order", "time"], kind="mergesort").drop(columns="_order")
    return frame.reset_index(drop=True)


def activity_density(
    persons: Union[RunHistory, pd.DataFrame],
    bin_minutes: int,
    day_start: Optional[int] = None,
    day_end: Optional[int] = None,
) -> pd.DataFrame:
    """
    Mean number of people in each event over ``bin_minutes`` bins.

    Accepts a history or an exported person table; the day bounds default
    to the extent of the rows.
    """
    if isinstance(persons, RunHistory):
        day_start = persons.day_start if day_start is None else day_start
        day_end = persons.day_end if day_end is None else day_end
        persons = person_frame(persons)
    if persons.empty:
        return pd.DataFrame()
    start = int(persons["time"].min()) if day_start is None else day_start
    end = int(persons["end_time"].max()) if day_end is None else day_end
    edges = np.arange(start, end, bin_minutes)
    seg_start = persons["time"].to_numpy()[:, None]
    seg_end = persons["end_time"].to_numpy()[:, None]
    bin_end = np.minimum(edges + bin_minutes, end)[None, :]
    overlap = np.clip(np.minimum(seg_end, bin_end) - np.maximum(seg_start, edges[None, :]), 0, None)
    widths = (bin_end - edges[None, :])[0]
    result = {}
    events = persons["event"].to_numpy()
    for event in pd.unique(events):
        result[event] = overlap[events == event].sum(axis=0) / widths
    frame = pd.DataFrame(result, index=pd.Index(edges, name="time"))
    return frame
