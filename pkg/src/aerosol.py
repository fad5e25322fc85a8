"""
Well-mixed box model for CO2 and airborne virus quanta.

Each place is one well-mixed volume. Between two occupancy changes the
number of occupants, infected occupants and the mask efficiency are
constant, and the recurrences below advance the place state over that
interval. The carried state is the interval-averaged concentration, so
splitting an interval in two gives a slightly different result than
advancing it in one step.

Carrying the average also moves the fixed point. With constant occupancy
and a constant step of x = loss * tau, repeated steps converge to

    steady * (1 - (1 - e^-x)/x) / (1 - e^-x)

where steady is E/(loss*V) for quanta and the CO2 excess
emit*3.6e6/(natural*V). The factor is 1/2 for very short steps and tends
to 1 as steps get long. See ``carried_fixed_point``.

Implements:
- Emission and loss-rate helpers
- Quanta and CO2 recurrences over one constant-occupancy interval
- Inhaled dose and the exponential dose-response helper
- PlaceAirModel: per-place state with cumulative exposure accumulators
- ExposureLedger: per-person inhaled quanta and CO2 time integral
"""

import math
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import List

from src.config import AerosolConstants, PlaceSpec
from src.entities import SimulationError

logger = logging.getLogger(__name__)

ZERO_CELSIUS = 273.15
LITRES_PER_SECOND_TO_PPM_M3_PER_HOUR = 3.6e6
MINUTES_PER_HOUR = 60.0
_SERIES_THRESHOLD = 1e-3


def _averaging_factor(x: float) -> float:
    """1 - (1 - e^-x)/x, the fraction of the steady state reached on average over x."""
    if x < _SERIES_THRESHOLD:
        return x / 2.0 - x * x / 6.0 + x ** 3 / 24.0 - x ** 4 / 120.0
    return 1.0 + math.expm1(-x) / x


def minutes_to_hours(minutes: int) -> float:
    return minutes / MINUTES_PER_HOUR


def carried_fixed_point(x: float) -> float:
    """Ratio of the carried-average fixed point to the true steady state for a step of x."""
    if x <= 0.0:
        raise ValueError(f"step must be positive, got {x}")
    return _averaging_factor(x) / -math.expm1(-x)


# ----------------------------------------------------------------------
# Source and sink terms
# ----------------------------------------------------------------------

def co2_emission(n_people: int, constants: AerosolConstants) -> float:
    """CO2 emitted by ``n_people`` in L/s at room conditions."""
    return (
        constants.co2_rate_per_person
        * n_people / constants.pressure
        * (ZERO_CELSIUS + constants.temperature) / ZERO_CELSIUS
    )


def quanta_emission(n_infected: int, mask_efficiency: float, constants: AerosolConstants) -> float:
    """Quanta emission rate E in quanta/h."""
    return (
        constants.quanta_exhalation
        * (1.0 - mask_efficiency * constants.mask_fraction)
        * n_infected
        * constants.quanta_enhancement
    )


def total_loss_rate(natural: float, mechanical: float, constants: AerosolConstants) -> float:
    """First-order quanta loss rate in 1/h."""
    return natural + mechanical + constants.deposition + constants.virus_decay


# ----------------------------------------------------------------------
# Interval recurrences
# ----------------------------------------------------------------------

@dataclass
class AerosolState:
    co2: float
    quanta: float
    last_update: int
    occupants: int = 0
    infected: int = 0
    mask_efficiency: float = 0.0


def advance_quanta(state: AerosolState, tau: float, place: PlaceSpec, constants: AerosolConstants) -> float:
    """
    Return the quanta concentration averaged over the next ``tau`` hours.

    Uses the state's occupants, infected occupants and mask efficiency as
    constant over the interval. With no infected present this is pure
    exponential decay of the carried value.
    """
    loss = total_loss_rate(place.ventilation_natural, place.mechanical_rate, constants)
    x = loss * tau
    decayed = state.quanta * math.exp(-x)
    if state.infected == 0:
        return decayed
    emission = quanta_emission(state.infected, state.mask_efficiency, constants)
    return emission / (loss * place.volume) * _averaging_factor(x) + decayed


def advance_co2(state: AerosolState, tau: float, place: PlaceSpec, constants: AerosolConstants) -> float:
    """
    Return the CO2 mixing ratio (ppm) averaged over the next ``tau`` hours.

    Only outdoor air exchange removes CO2. Without it the excess grows
    linearly and the interval average picks up half of the added amount:
    ``generation * tau / (2 V)``, the limit of the ventilated form as the
    air change rate goes to zero (not ``tau / V``, the end-of-interval value).
    """
    natural = place.ventilation_natural
    background = constants.co2_background
    generation = co2_emission(state.occupants, constants) * LITRES_PER_SECOND_TO_PPM_M3_PER_HOUR
    if natural == 0.0:
        return state.co2 + generation * tau / (2.0 * place.volume)
    x = natural * tau
    return (
        generation / (natural * place.volume) * _averaging_factor(x)
        + background
        + (state.co2 - background) * math.exp(-x)
    )


def inhaled_quanta(c_avg: float, tau: float, mask_efficiency: float, constants: AerosolConstants) -> float:
    """Quanta inhaled by one person breathing ``c_avg`` for ``tau`` hours."""
    return c_avg * constants.breathing_rate * tau * (1.0 - mask_efficiency * constants.mask_fraction)


def infection_probability(n: float) -> float:
    """Exponential dose-response. Interpretive only, not part of any outcome metric."""
    return -math.expm1(-n)


# ----------------------------------------------------------------------
# Per-place model
# ----------------------------------------------------------------------

class PlaceAirModel:
    """
    Live air state of one place plus cumulative per-occupant exposure.

    ``cum_quanta`` is the dose a person present since the start of the day
    would have inhaled; ``cum_co2_minutes`` the matching CO2 time integral.
    A person's exposure over a stay is the difference of these counters
    between leaving and entering.
    """

    def __init__(self, spec: PlaceSpec, constants: AerosolConstants, start: int):
        self.spec = spec
        self.constants = constants
        self.state = AerosolState(
            co2=constants.co2_background, quanta=0.0, last_update=start
        )
        self.cum_quanta = 0.0
        self.cum_co2_minutes = 0.0
        self._masks: Counter = Counter()

    def advance(self, now: int) -> None:
        """Advance the state to ``now`` with the occupancy of the elapsed interval."""
        minutes = now - self.state.last_update
        if minutes < 0:
            raise SimulationError(
                f"negative aerosol interval in {self.spec.name}: "
                f"{self.state.last_update} -> {now}"
            )
        if minutes == 0:
            return
        tau = minutes_to_hours(minutes)
        quanta = advance_quanta(self.state, tau, self.spec, self.constants)
        co2 = advance_co2(self.state, tau, self.spec, self.constants)
        self.cum_quanta += inhaled_quanta(quanta, tau, self.state.mask_efficiency, self.constants)
        self.cum_co2_minutes += co2 * minutes
        self.state.quanta = quanta
        self.state.co2 = co2
        self.state.last_update = now

    def add_occupant(self, infected: bool, mask_efficiency: float) -> None:
        self.state.occupants += 1
        self.state.infected += int(infected)
        self._masks[mask_efficiency] += 1
        self._refresh_mask()

    def remove_occupant(self, infected: bool, mask_efficiency: float) -> None:
        self.state.occupants -= 1
        self.state.infected -= int(infected)
        self._masks[mask_efficiency] -= 1
        if self._masks[mask_efficiency] == 0:
            del self._masks[mask_efficiency]
        if self.state.occupants < 0 or self.state.infected < 0:
            raise SimulationError(f"negative occupancy in {self.spec.name}")
        self._refresh_mask()

    def _refresh_mask(self) -> None:
        self.state.mask_efficiency = max(self._masks) if self._masks else 0.0

    def on_occupancy_change(self, now: int, entering: List[tuple] = (), leaving: List[tuple] = ()) -> None:
        """
        Advance to ``now`` with the previous occupancy, then apply the change.

        ``entering``/``leaving`` hold ``(infected, mask_efficiency)`` pairs.
        """
        self.advance(now)
        for infected, mask in leaving:
            self.remove_occupant(infected, mask)
        for infected, mask in entering:
            self.add_occupant(infected, mask)


# ----------------------------------------------------------------------
# Per-person exposure
# ----------------------------------------------------------------------

@dataclass
class ExposureLedger:
    """Cumulative exposure per person index."""

    quanta: List[float] = field(default_factory=list)
    co2_minutes: List[float] = field(default_factory=list)
    minutes: List[int] = field(default_factory=list)

    @classmethod
    def for_people(cls, n_people: int) -> "ExposureLedger":
        return cls([0.0] * n_people, [0.0] * n_people, [0] * n_people)

    def credit(self, person: int, quanta: float, co2_minutes: float, minutes: int) -> None:
        # Counter differences may round a hair below zero.
        quanta = max(quanta, 0.0)
        if co2_minutes < 0 or minutes < 0:
            raise SimulationError(f"negative exposure credit for person {person}")
        self.quanta[person] += quanta
        self.co2_minutes[person] += co2_minutes
        self.minutes[person] += minutes

    def mean_co2(self, person: int) -> float:
        if self.minutes[person] == 0:
            return float("nan")
        return self.co2_minutes[person] / self.minutes[person]
