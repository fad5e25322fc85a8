"""
Agent decision making.

Implements:
- Priority weight over the repetition count of an event model
- Next-activity selection (eligibility, deadline urgency, weighted draw)
- Duration sampling and place assignment under department/capacity rules
- Collective gathering assembly (drafting people out of the fallback activity)
- Infected selection at run start

Every random draw goes through the run's numpy Generator in this order:
infected selection once per run, then per decision activity choice,
place choice, duration, gathering size and invitees. A draw is skipped
when its outcome is forced (single candidate set empty, solo gathering).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.config import EventModelSpec, SimulationConfig
from src.entities import Person, Place

logger = logging.getLogger(__name__)


def priority(e: int, r: int, R: Optional[int], alpha: float) -> float:
    """
    Piecewise-linear weight of an event model after ``e`` repetitions.

    1 at e=0 falling to ``alpha`` at the minimum ``r``, then to 0 at the
    maximum ``R``. ``R=None`` means unbounded: the weight stays at
    ``alpha`` once the minimum is met.
    """
    if R is not None and e >= R:
        return 0.0
    if e < r:
        return 1.0 - (1.0 - alpha) * e / r
    if R is None:
        return alpha
    return alpha * (R - e) / (R - r)


@dataclass
class Candidate:
    model: int
    weight: float
    urgent: bool
    places: List[int]


@dataclass
class Gathering:
    model: int
    place: int
    start: int
    duration: int
    participants: List[int] = field(default_factory=list)

    @property
    def end(self) -> int:
        return self.start + self.duration


class BehaviorModel:
    """Decision rules of one run. Owns no state besides the shared rng."""

    def __init__(self, config: SimulationConfig, places: List[Place], rng: np.random.Generator):
        self.models: List[EventModelSpec] = list(config.events)
        self.places = places
        self.rng = rng
        self.alpha = config.options.priority_alpha
        self.day_end = config.options.day_end
        self.fallback = next(
            (i for i, m in enumerate(self.models) if m.name == config.options.fallback_event), None
        )
        self.max_duration = max((m.duration_max for m in self.models), default=0)
        self.places_by_activity: Dict[str, List[int]] = {}
        for place in places:
            self.places_by_activity.setdefault(place.spec.activity, []).append(place.index)
        self._last_end = [
            min(max(end for _, end in m.schedule), self.day_end) for m in self.models
        ]
        self._mandatory = [i for i, m in enumerate(self.models) if m.repetitions_min > 0]

    # ------------------------------------------------------------------
    # Eligibility
    # ------------------------------------------------------------------

    def window_remaining(self, model: EventModelSpec, now: int) -> int:
        window = model.window_at(now)
        if window is None:
            return 0
        return min(window[1], self.day_end) - now

    def feasible_places(self, person: Person, model: EventModelSpec) -> List[int]:
        return [
            i for i in self.places_by_activity.get(model.activity, ())
            if self.places[i].admits(person)
        ]

    def latest_start(self, person: Person, model_index: int) -> Optional[int]:
        """Last minute the unmet minimum repetitions can still start, None when met."""
        model = self.models[model_index]
        missing = model.repetitions_min - person.counts[model_index]
        if missing <= 0:
            return None
        return self._last_end[model_index] - model.duration_min * missing

    def is_urgent(self, person: Person, model_index: int, now: int) -> bool:
        latest = self.latest_start(person, model_index)
        return latest is not None and now + self.max_duration > latest

    def candidates(self, person: Person, now: int) -> List[Candidate]:
        """Eligible event models with a positive weight, in config order."""
        result = []
        for i, model in enumerate(self.models):
            e = person.counts[i]
            if model.repetitions_max is not None and e >= model.repetitions_max:
                continue
            if self.window_remaining(model, now) < model.duration_min:
                continue
            weight = priority(e, model.repetitions_min, model.repetitions_max, self.alpha)
            if weight <= 0.0:
                continue
            places = self.feasible_places(person, model)
            if not places:
                continue
            result.append(Candidate(i, weight, self.is_urgent(person, i, now), places))
        return result

    # ------------------------------------------------------------------
    # Draws
    # ------------------------------------------------------------------

    def _weighted_pick(self, candidates: Sequence[Candidate]) -> Candidate:
        if len(candidates) == 1:
            return candidates[0]
        weights = np.array([c.weight for c in candidates])
        cumulative = np.cumsum(weights)
        u = self.rng.random() * cumulative[-1]
        index = int(np.searchsorted(cumulative, u, side="right"))
        return candidates[min(index, len(candidates) - 1)]

    def select_next_activity(self, person: Person, now: int) -> Optional[Candidate]:
        """
        Pick the next event model, or None when the fallback applies.

        Models whose unmet minimum would become impossible if postponed by
        the longest activity are urgent and chosen before all others.
        """
        candidates = self.candidates(person, now)
        if not candidates:
            return None
        urgent = [c for c in candidates if c.urgent]
        return self._weighted_pick(urgent or candidates)

    def select_place(self, candidate: Candidate) -> int:
        places = candidate.places
        if len(places) == 1:
            return places[0]
        return places[int(self.rng.integers(len(places)))]

    def sample_duration(self, model: EventModelSpec, now: int) -> int:
        """Uniform integer duration, cut to the open window and the day end."""
        duration = int(self.rng.integers(model.duration_min, model.duration_max + 1))
        return min(duration, self.window_remaining(model, now))

    def fallback_duration(self, now: int) -> int:
        model = self.models[self.fallback]
        duration = int(self.rng.integers(model.duration_min, model.duration_max + 1))
        return max(1, min(duration, self.day_end - now))

    def pick_infected(self, n_people: int, n_infected: int) -> List[int]:
        if n_infected == 0:
            return []
        chosen = self.rng.choice(n_people, size=n_infected, replace=False)
        return sorted(int(i) for i in chosen)

    # ------------------------------------------------------------------
    # Collective events
    # ------------------------------------------------------------------

    def can_be_drafted(self, person: Person, model_index: int, place: Place, end: int) -> bool:
        """Invitee rule: busy with the fallback activity, allowed in, under the cap, no deadline missed."""
        if self.fallback is None or person.model != self.fallback:
            return False
        if not place.spec.allows(person.department):
            return False
        cap = self.models[model_index].repetitions_max
        if cap is not None and person.counts[model_index] >= cap:
            return False
        for k in self._mandatory:
            if k == model_index:
                continue
            latest = self.latest_start(person, k)
            if latest is not None and end > latest:
                return False
        return True

    def assemble_collective(
        self,
        initiator: Person,
        model_index: int,
        place_index: int,
        people: Sequence[Person],
        now: int,
        duration: int,
    ) -> Gathering:
        """
        Draft invitees for a collective event started by ``initiator``.

        Group size is uniform in [2, min(free seats, 1 + available)]; with
        nobody available, or no room for a second person, the initiator
        goes alone.
        """
        place = self.places[place_index]
        gathering = Gathering(model_index, place_index, now, duration, [initiator.index])
        available = [
            p.index for p in people
            if p.model == self.fallback
            and p.index != initiator.index
            and p.place != place_index
            and self.can_be_drafted(p, model_index, place, now + duration)
        ]
        inside = 1 if initiator.place == place_index else 0
        reserved = place.absent_owners - (1 if initiator.home == place_index and not inside else 0)
        seats = place.spec.capacity - len(place.occupants) + inside - reserved
        upper = min(seats, 1 + len(available))
        if upper < 2:
            logger.debug(
                f"{initiator.name}: solo {self.models[model_index].name} in {place.name} "
                f"({len(available)} available, {seats} seats)"
            )
            return gathering
        size = int(self.rng.integers(2, upper + 1))
        drafted = self.rng.choice(len(available), size=size - 1, replace=False)
        gathering.participants.extend(available[int(i)] for i in sorted(drafted))
        logger.debug(
            f"{initiator.name}: {self.models[model_index].name} in {place.name} "
            f"with {size} participants at {now}"
        )
        return gathering
