"""
Simulation configuration: schema, validation and normalization.

A configuration is one JSON document with the top-level keys
``events``, ``places``, ``people``, ``aerosol`` and ``options`` (plus an
optional ``departments`` registry). Clock values are "HH:MM" strings or
integer minutes since midnight; internally everything is integer minutes.

Implements:
- Pydantic models for event models, places, people, aerosol constants, options
- Cross-reference checks (departments, activities, initial occupancy, homes)
- parse / load / serialize helpers and the (config) digest
- Mechanical ventilation rate from an AC description
"""

import json
import re
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_serializer,
    field_validator,
    model_validator,
)

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 24 * 60
_CLOCK_PATTERN = re.compile(r"^(\d{1,2}):(\d{2})$")


class ConfigError(ValueError):
    """Raised for any configuration that cannot be turned into a simulation."""


# ----------------------------------------------------------------------
# Clock helpers
# ----------------------------------------------------------------------

def parse_clock(value: Union[str, int]) -> int:
    """Convert "HH:MM" (or integer minutes) to minutes since midnight."""
    if isinstance(value, bool):
        raise ValueError(f"invalid clock value {value!r}")
    if isinstance(value, int):
        minutes = value
    elif isinstance(value, str):
        match = _CLOCK_PATTERN.match(value.strip())
        if not match:
            raise ValueError(f"invalid clock string {value!r}, expected HH:MM")
        hours, mins = int(match.group(1)), int(match.group(2))
        if mins >= 60:
            raise ValueError(f"invalid clock string {value!r}, minutes must be < 60")
        minutes = hours * 60 + mins
    else:
        raise ValueError(f"invalid clock value {value!r}")
    if not 0 <= minutes <= MINUTES_PER_DAY:
        raise ValueError(f"clock value {value!r} outside 00:00-24:00")
    return minutes


def format_clock(minutes: int) -> str:
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


# ----------------------------------------------------------------------
# Schema
# ----------------------------------------------------------------------

class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EventModelSpec(_Spec):
    """An activity template: schedule windows, duration and repetition bounds."""

    name: str = Field(min_length=1)
    activity: str = Field(min_length=1)
    schedule: Tuple[Tuple[int, int], ...] = Field(min_length=1)
    duration_min: int = Field(ge=1)
    duration_max: int = Field(ge=1)
    repetitions_min: int = Field(0, ge=0)
    repetitions_max: Optional[int] = Field(None, ge=0)  # None = unbounded
    mask_efficiency: float = Field(0.0, ge=0.0, le=1.0)
    collective: bool = False

    @field_validator("schedule", mode="before")
    @classmethod
    def _parse_schedule(cls, value):
        if not isinstance(value, (list, tuple)):
            raise ValueError("schedule must be a list of [start, end] windows")
        windows = []
        for window in value:
            if not isinstance(window, (list, tuple)) or len(window) != 2:
                raise ValueError(f"schedule window {window!r} must be [start, end]")
            start, end = parse_clock(window[0]), parse_clock(window[1])
            if start >= end:
                raise ValueError(
                    f"schedule window {format_clock(start)}-{format_clock(end)} must have start < end"
                )
            windows.append((start, end))
        windows.sort()
        for (_, prev_end), (start, _) in zip(windows, windows[1:]):
            if start < prev_end:
                raise ValueError("schedule windows must not overlap")
        return tuple(windows)

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.duration_min > self.duration_max:
            raise ValueError(
                f"duration_min ({self.duration_min}) must be <= duration_max ({self.duration_max})"
            )
        longest = max(end - start for start, end in self.schedule)
        if self.duration_max > longest:
            raise ValueError(
                f"duration_max ({self.duration_max}) exceeds the longest schedule window ({longest})"
            )
        if self.repetitions_max is not None and self.repetitions_min > self.repetitions_max:
            raise ValueError(
                f"repetitions_min ({self.repetitions_min}) must be <= repetitions_max ({self.repetitions_max})"
            )
        return self

    @field_serializer("schedule")
    def _dump_schedule(self, schedule):
        return [[format_clock(start), format_clock(end)] for start, end in schedule]

    def window_at(self, minute: int) -> Optional[Tuple[int, int]]:
        """Return the schedule window open at ``minute`` (start inclusive, end exclusive)."""
        for start, end in self.schedule:
            if start <= minute < end:
                return start, end
        return None


class VentilationSpec(_Spec):
    """AC recirculation description used to derive the mechanical rate."""

    flow_rate: float = Field(ge=0.0)  # m3/h
    filter_efficiency: float = Field(0.0, ge=0.0, le=1.0)
    duct_removal: float = Field(0.0, ge=0.0, le=1.0)
    extra_removal: float = Field(0.0, ge=0.0, le=1.0)


class PlaceSpec(_Spec):
    name: str = Field(min_length=1)
    activity: str = Field(min_length=1)
    building: str = Field(min_length=1)
    departments_allowed: Tuple[str, ...] = ()  # empty = all departments
    area: float = Field(gt=0.0)
    height: float = Field(gt=0.0)
    capacity: int = Field(ge=1)
    ventilation_natural: float = Field(ge=0.0)
    ventilation_mechanical: Union[VentilationSpec, float] = 0.0

    @field_validator("ventilation_mechanical")
    @classmethod
    def _non_negative_rate(cls, value):
        if isinstance(value, VentilationSpec):
            return value
        if value < 0:
            raise ValueError("ventilation_mechanical must be >= 0")
        return float(value)

    @property
    def volume(self) -> float:
        return self.area * self.height

    @property
    def mechanical_rate(self) -> float:
        """Recirculating air cleaning rate lambda_r in 1/h."""
        if isinstance(self.ventilation_mechanical, VentilationSpec):
            return derive_mechanical_rate(self.ventilation_mechanical, self.volume)
        return float(self.ventilation_mechanical)

    def allows(self, department: str) -> bool:
        return not self.departments_allowed or department in self.departments_allowed


class PersonSpec(_Spec):
    name: str = Field(min_length=1)
    building: str = Field(min_length=1)
    department: str = Field(min_length=1)
    count: int = Field(1, ge=1)  # group entries expand to `count` persons


class AerosolConstants(_Spec):
    """Building-wide physical constants. Defaults are the published values."""

    co2_background: float = Field(415.0, gt=0.0)  # ppm
    pressure: float = Field(0.95, gt=0.0)  # atm
    temperature: float = Field(20.0, gt=0.0)  # degC
    breathing_rate: float = Field(0.52, gt=0.0)  # m3/h
    co2_rate_per_person: float = Field(0.005, gt=0.0)  # L/s at 273.15 K, 1 atm
    quanta_exhalation: float = Field(25.0, gt=0.0)  # quanta/h
    virus_decay: float = Field(0.62, gt=0.0)  # 1/h
    deposition: float = Field(0.3, gt=0.0)  # 1/h
    quanta_enhancement: float = Field(1.0, gt=0.0)
    mask_fraction: float = Field(1.0, ge=0.0, le=1.0)


class SimulationOptions(_Spec):
    day_start: int = 8 * 60
    day_end: int = 17 * 60
    n_infected: int = Field(0, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)
    priority_alpha: float = Field(0.5, gt=0.0, lt=1.0)
    fallback_event: str = "work"
    initial_occupancy: Dict[str, Tuple[str, ...]] = Field(default_factory=dict)

    @field_validator("day_start", "day_end", mode="before")
    @classmethod
    def _parse_day_bound(cls, value):
        return parse_clock(value)

    @model_validator(mode="after")
    def _check_day(self):
        if self.day_start >= self.day_end:
            raise ValueError("day_start must be before day_end")
        return self

    @field_serializer("day_start", "day_end")
    def _dump_day_bound(self, minutes):
        return format_clock(minutes)


@dataclass(frozen=True)
class ResolvedPerson:
    """One simulated person after group expansion."""
    index: int
    name: str
    group: str
    building: str
    department: str


class SimulationConfig(_Spec):
    events: Tuple[EventModelSpec, ...] = ()
    places: Tuple[PlaceSpec, ...] = ()
    people: Tuple[PersonSpec, ...] = ()
    aerosol: AerosolConstants = Field(default_factory=AerosolConstants)
    options: SimulationOptions = Field(default_factory=SimulationOptions)
    departments: Optional[Tuple[str, ...]] = None

    @model_validator(mode="after")
    def _check_references(self):
        _check_unique("events", [e.name for e in self.events])
        _check_unique("places", [p.name for p in self.places])
        persons = self.persons
        _check_unique("people", [p.name for p in persons])

        registry = self.department_registry
        if self.departments is not None:
            for person in self.people:
                if person.department not in registry:
                    raise ValueError(
                        f"person {person.name!r} references undefined department {person.department!r}"
                    )
        activities = {e.activity for e in self.events}
        for place in self.places:
            if place.activity not in activities:
                raise ValueError(
                    f"place {place.name!r} references undefined activity {place.activity!r}"
                )
            for dept in place.departments_allowed:
                if dept not in registry:
                    raise ValueError(
                        f"place {place.name!r} references undefined department {dept!r}"
                    )
        place_activities = {p.activity for p in self.places}
        for event in self.events:
            if event.activity not in place_activities:
                logger.warning(f"Event model {event.name!r} has no place for activity {event.activity!r}")

        if self.options.n_infected > len(persons):
            raise ValueError(
                f"n_infected ({self.options.n_infected}) exceeds the number of people ({len(persons)})"
            )
        if persons and self.options.fallback_event not in {e.name for e in self.events}:
            raise ValueError(
                f"fallback_event {self.options.fallback_event!r} is not a defined event model"
            )
        resolve_home_places(self)
        return self

    # ------------------------------------------------------------------
    # Derived views
    # ------------------------------------------------------------------

    @property
    def persons(self) -> List[ResolvedPerson]:
        """People after expanding group entries, in config order."""
        resolved = []
        for spec in self.people:
            for i in range(spec.count):
                name = spec.name if spec.count == 1 else f"{spec.name}_{i + 1:02d}"
                resolved.append(ResolvedPerson(
                    index=len(resolved),
                    name=name,
                    group=spec.name,
                    building=spec.building,
                    department=spec.department,
                ))
        return resolved

    @property
    def department_registry(self) -> Tuple[str, ...]:
        """Explicit registry, else the departments of the people, else those named by places."""
        if self.departments is not None:
            return self.departments
        if self.people:
            return tuple(sorted({p.department for p in self.people}))
        return tuple(sorted({d for place in self.places for d in place.departments_allowed}))

    @property
    def fallback_model(self) -> Optional[EventModelSpec]:
        for event in self.events:
            if event.name == self.options.fallback_event:
                return event
        return None

    def event(self, name: str) -> EventModelSpec:
        for event in self.events:
            if event.name == name:
                return event
        raise KeyError(name)


def _check_unique(section: str, names: List[str]) -> None:
    seen = set()
    for name in names:
        if name in seen:
            raise ValueError(f"duplicate name {name!r} in {section}")
        seen.add(name)


# ----------------------------------------------------------------------
# Home places
# ----------------------------------------------------------------------

def resolve_home_places(config: SimulationConfig) -> List[int]:
    """
    Return the home place index of every resolved person.

    Persons listed in ``options.initial_occupancy`` (directly or through
    their group) are homed there. Everybody else goes to the fallback
    activity place allowing their department with the fewest allowed
    departments (empty list = all), ties broken by config order, skipping
    places whose homed persons already fill the capacity.
    """
    persons = config.persons
    if not persons:
        return []
    place_index = {p.name: i for i, p in enumerate(config.places)}
    by_name = {p.name: p for p in persons}
    by_group: Dict[str, List[ResolvedPerson]] = {}
    for person in persons:
        by_group.setdefault(person.group, []).append(person)

    homes: List[Optional[int]] = [None] * len(persons)
    homed = [0] * len(config.places)

    for place_name, members in config.options.initial_occupancy.items():
        if place_name not in place_index:
            raise ValueError(f"initial_occupancy references undefined place {place_name!r}")
        idx = place_index[place_name]
        place = config.places[idx]
        for member in members:
            if member in by_name:
                targets = [by_name[member]]
            elif member in by_group:
                targets = by_group[member]
            else:
                raise ValueError(
                    f"initial_occupancy[{place_name!r}] references undefined person {member!r}"
                )
            for person in targets:
                if homes[person.index] is not None:
                    raise ValueError(f"person {person.name!r} listed twice in initial_occupancy")
                if not place.allows(person.department):
                    raise ValueError(
                        f"person {person.name!r} (department {person.department!r}) "
                        f"is not allowed in {place_name!r}"
                    )
                homes[person.index] = idx
                homed[idx] += 1
        if homed[idx] > place.capacity:
            raise ValueError(
                f"initial_occupancy of {place_name!r} ({homed[idx]}) exceeds capacity ({place.capacity})"
            )

    fallback = config.fallback_model
    candidates = [
        i for i, p in enumerate(config.places)
        if fallback is not None and p.activity == fallback.activity
    ]
    n_departments = max(len(config.department_registry), 1)

    def specificity(i: int) -> Tuple[int, int]:
        allowed = config.places[i].departments_allowed
        return (len(allowed) if allowed else n_departments + 1, i)

    candidates.sort(key=specificity)
    for person in persons:
        if homes[person.index] is not None:
            continue
        for idx in candidates:
            place = config.places[idx]
            if place.allows(person.department) and homed[idx] < place.capacity:
                homes[person.index] = idx
                homed[idx] += 1
                break
        else:
            raise ValueError(
                f"no home place with free capacity for person {person.name!r} "
                f"(department {person.department!r})"
            )
    return [h for h in homes]


# ----------------------------------------------------------------------
# Ventilation
# ----------------------------------------------------------------------

def derive_mechanical_rate(spec: VentilationSpec, volume: float) -> float:
    """lambda_r = Q_AC / V * min(eps_filter + eps_ducts + eps_extra, 1)."""
    removal = min(spec.filter_efficiency + spec.duct_removal + spec.extra_removal, 1.0)
    return spec.flow_rate / volume * removal


# ----------------------------------------------------------------------
# Parsing / serialization
# ----------------------------------------------------------------------

def _format_location(loc: Tuple) -> str:
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path or "<root>"


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for err in error.errors():
        message = err["msg"]
        if message.startswith("Value error, "):
            message = message[len("Value error, "):]
        lines.append(f"{_format_location(err['loc'])}: {message}")
    return "invalid configuration:\n  " + "\n  ".join(lines)


def parse_config(text: str) -> SimulationConfig:
    """Parse and validate a configuration document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"syntax error at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e
    if not isinstance(data, dict):
        raise ConfigError("configuration document must be a JSON object")
    try:
        return SimulationConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from e


def load_config(path: Union[str, Path]) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    except OSError as e:
        raise OSError(f"cannot read config {path}: {e}") from e
    try:
        return parse_config(text)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from e


def config_to_dict(config: SimulationConfig) -> dict:
    return config.model_dump(mode="json", exclude_none=True)


def serialize_config(config: SimulationConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2)


def config_digest(config: SimulationConfig) -> str:
    """SHA-256 of the canonical JSON form of the config."""
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
