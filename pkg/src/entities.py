"""
Run-time people and places shared by the engine, behavior and aerosol modules.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Set, TYPE_CHECKING

from src.config import PlaceSpec

if TYPE_CHECKING:
    from src.aerosol import PlaceAirModel


class SimulationError(RuntimeError):
    """An engine invariant was breached. Always a bug, never a user error."""


@dataclass
class Person:
    index: int
    name: str
    department: str
    home: int
    counts: List[int]  # completed repetitions per event model
    infected: bool = False
    place: Optional[int] = None
    model: Optional[int] = None
    segment_start: int = 0
    segment_end: int = 0
    token: int = 0  # bumped whenever a pending wakeup must be ignored
    quanta_mark: float = 0.0
    co2_mark: float = 0.0


@dataclass
class Place:
    index: int
    spec: PlaceSpec
    air: "PlaceAirModel"
    occupants: Set[int] = field(default_factory=set)
    owners: int = 0
    owners_present: int = 0

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def absent_owners(self) -> int:
        return self.owners - self.owners_present

    def free_seats(self, person: Person) -> int:
        """
        Seats ``person`` may take here right now.

        Homed persons keep a seat while away; others only get what is left
        after those reserved seats.
        """
        present = 1 if person.place == self.index else 0
        free = self.spec.capacity - len(self.occupants) + present
        if person.home != self.index:
            free -= self.absent_owners
        return free

    def admits(self, person: Person) -> bool:
        return self.spec.allows(person.department) and self.free_seats(person) > 0
