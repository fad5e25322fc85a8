"""
Scripted two-person office used to check the CO2 model against a measured day.

The occupancy timetable bypasses the behavior module entirely; only the
aerosol recurrences run. Room geometry, ventilation and the timetable
live in an editable JSON scenario (``data/validation_office.json``).
"""

import json
import hashlib
import logging
from pathlib import Path
from typing import List, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.aerosol import PlaceAirModel
from src.config import AerosolConstants, ConfigError, PlaceSpec, format_clock, parse_clock
from src.history import PlaceInfo, PlaceSnapshot, RunHistory, densify

logger = logging.getLogger(__name__)

DEFAULT_SCENARIO = Path(__file__).resolve().parent.parent / "data" / "validation_office.json"


class ValidationScenario(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "validation-office"
    area: float = Field(gt=0.0)
    height: float = Field(gt=0.0)
    ventilation_natural: float = Field(ge=0.0)
    day_start: int
    day_end: int
    occupancy: Tuple[Tuple[int, int], ...] = Field(min_length=1)  # (minute, occupants from then on)
    step_minutes: int = Field(1, ge=1)
    aerosol: AerosolConstants = Field(default_factory=AerosolConstants)

    @field_validator("day_start", "day_end", mode="before")
    @classmethod
    def _clock(cls, value):
        return parse_clock(value)

    @field_validator("occupancy", mode="before")
    @classmethod
    def _steps(cls, value):
        steps = []
        for step in value:
            if not isinstance(step, (list, tuple)) or len(step) != 2:
                raise ValueError(f"occupancy step {step!r} must be [time, occupants]")
            steps.append((parse_clock(step[0]), int(step[1])))
        return tuple(steps)

    @model_validator(mode="after")
    def _check(self):
        if self.day_start >= self.day_end:
            raise ValueError("day_start must be before day_end")
        times = [t for t, _ in self.occupancy]
        if times != sorted(set(times)):
            raise ValueError("occupancy times must be strictly increasing")
        if times[0] != self.day_start or times[-1] >= self.day_end:
            raise ValueError("occupancy must start at day_start and change before day_end")
        if any(n < 0 for _, n in self.occupancy):
            raise ValueError("occupants must be >= 0")
        return self

    @property
    def place(self) -> PlaceSpec:
        return PlaceSpec(
            name="office",
            activity="office",
            building="validation",
            area=self.area,
            height=self.height,
            capacity=max(1, max(n for _, n in self.occupancy)),
            ventilation_natural=self.ventilation_natural,
        )


def load_scenario(path: Union[str, Path, None] = None) -> ValidationScenario:
    path = Path(path) if path else DEFAULT_SCENARIO
    text = path.read_text(encoding="utf-8")
    try:
        return ValidationScenario.model_validate(json.loads(text))
    except (json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"{path}: invalid validation scenario: {e}") from e


def run_validation(scenario: ValidationScenario) -> pd.DataFrame:
    """CO2 of the scripted office on the scenario's minute grid plus every occupancy change."""
    place = scenario.place
    air = PlaceAirModel(place, scenario.aerosol, scenario.day_start)
    snapshots: List[PlaceSnapshot] = []
    occupants = 0
    for time, target in list(scenario.occupancy) + [(scenario.day_end, 0)]:
        air.advance(time)
        while occupants < target:
            air.add_occupant(False, 0.0)
            occupants += 1
        while occupants > target:
            air.remove_occupant(False, 0.0)
            occupants -= 1
        state = air.state
        snapshots.append(PlaceSnapshot(place.name, time, state.occupants, 0, state.co2, state.quanta, 0.0))

    history = RunHistory(
        config_digest=hashlib.sha256(scenario.model_dump_json().encode("utf-8")).hexdigest(),
        seed=0,
        day_start=scenario.day_start,
        day_end=scenario.day_end,
        aerosol=scenario.aerosol.model_dump(),
        places=[PlaceInfo(place.name, place.activity, place.building, place.volume,
                          place.ventilation_natural, place.mechanical_rate)],
        persons=[],
        place_snapshots=snapshots,
    )
    dense = densify(history, scenario.step_minutes)
    frame = pd.DataFrame({
        "time": dense["time"],
        "clock": dense["time"].map(format_clock),
        "occupants": dense["n_people"],
        "co2": dense["co2"],
    })
    logger.info(f"Validation scenario {scenario.name}: {len(frame)} points, max CO2 {frame['co2'].max():.1f} ppm")
    return frame


def export_validation(frame: pd.DataFrame, out_dir: Union[str, Path]) -> Path:
    out_dir = Path(out_dir)
    path = out_dir / "validation.csv"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
    except OSError as e:
        raise OSError(f"cannot write validation series to {path}: {e}") from e
    return path
