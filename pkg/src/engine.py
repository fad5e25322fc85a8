"""
Discrete-event core: event queue, clock and the run loop of one day.

Implements:
- SimEvent / EventQueue: heap ordered by (fire_time, sequence)
- Clock: monotone simulation time in integer minutes
- Simulation: agent life cycle from day start to day end
- run_day(): pure function of (config, seed) returning a RunHistory

A run is single-threaded. The only way to get the same history twice is
to pass the same config and seed.
"""

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from src.aerosol import ExposureLedger, PlaceAirModel
from src.behavior import BehaviorModel, Gathering
from src.config import SimulationConfig, config_digest, resolve_home_places
from src.entities import Person, Place, SimulationError
from src.history import (
    HistoryRecorder,
    LedgerEntry,
    PersonInfo,
    PersonSnapshot,
    PlaceInfo,
    PlaceSnapshot,
    RunHistory,
)

logger = logging.getLogger(__name__)

__all__ = ["EventKind", "SimEvent", "EventQueue", "Clock", "Simulation", "SimulationError", "run_day"]


class EventKind(Enum):
    # A gathering starts inside its initiator's wakeup, so it has no kind of its own.
    AGENT_WAKEUP = "agent-wakeup"
    DAY_END = "day-end"


@dataclass(order=True)
class SimEvent:
    fire_time: int
    sequence: int
    kind: EventKind = field(compare=False)
    subject: Optional[int] = field(default=None, compare=False)  # person index
    token: int = field(default=0, compare=False)


class Clock:
    def __init__(self, start: int):
        self._now = start

    @property
    def now(self) -> int:
        return self._now

    def advance_to(self, time: int) -> None:
        if time < self._now:
            raise SimulationError(f"clock moved backwards: {self._now} -> {time}")
        self._now = time


class EventQueue:
    """Pending events; equal fire times pop in insertion order."""

    def __init__(self, clock: Clock):
        self.clock = clock
        self._heap: List[SimEvent] = []
        self._sequence = itertools.count()

    def schedule(self, fire_time: int, kind: EventKind, subject: Optional[int] = None, token: int = 0) -> SimEvent:
        if fire_time < self.clock.now:
            raise SimulationError(f"event scheduled in the past: {fire_time} < {self.clock.now}")
        event = SimEvent(fire_time, next(self._sequence), kind, subject, token)
        heapq.heappush(self._heap, event)
        return event

    def pop(self) -> SimEvent:
        return heapq.heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)


class Simulation:
    """One simulated day of one config under one seed."""

    def __init__(self, config: SimulationConfig, seed: int):
        self.config = config
        self.seed = seed
        self.options = config.options
        self.rng = np.random.default_rng(seed)
        self.clock = Clock(self.options.day_start)
        self.queue = EventQueue(self.clock)
        self.models = list(config.events)

        start = self.options.day_start
        self.places = [
            Place(index=i, spec=spec, air=PlaceAirModel(spec, config.aerosol, start))
            for i, spec in enumerate(config.places)
        ]
        homes = resolve_home_places(config)
        self.people = [
            Person(
                index=p.index,
                name=p.name,
                department=p.department,
                home=homes[p.index],
                counts=[0] * len(self.models),
            )
            for p in config.persons
        ]
        for person in self.people:
            self.places[person.home].owners += 1

        self.behavior = BehaviorModel(config, self.places, self.rng)
        self.ledger = ExposureLedger.for_people(len(self.people))
        self.recorder = HistoryRecorder(RunHistory(
            config_digest=config_digest(config),
            seed=seed,
            day_start=start,
            day_end=self.options.day_end,
            aerosol=config.aerosol.model_dump(),
            places=[
                PlaceInfo(
                    name=p.spec.name,
                    activity=p.spec.activity,
                    building=p.spec.building,
                    volume=p.spec.volume,
                    ventilation_natural=p.spec.ventilation_natural,
                    mechanical_rate=p.spec.mechanical_rate,
                )
                for p in self.places
            ],
            persons=[],
        ))
        self.events_processed = 0

    # ------------------------------------------------------------------
    # Run loop
    # ------------------------------------------------------------------

    def run(self) -> RunHistory:
        start, end = self.options.day_start, self.options.day_end
        infected = self.behavior.pick_infected(len(self.people), self.options.n_infected)
        for i in infected:
            self.people[i].infected = True
        self.recorder.history.persons = [
            PersonInfo(p.name, p.department, p.infected, self.places[p.home].name)
            for p in self.people
        ]
        logger.info(
            f"Run start: seed={self.seed} people={len(self.people)} "
            f"places={len(self.places)} infected={len(infected)}"
        )

        self.queue.schedule(end, EventKind.DAY_END)
        fallback = self.behavior.fallback
        for person in self.people:
            self._move(person, person.home, fallback, start, start)
        for place in self.places:
            self._snapshot(place)
        for person in self.people:
            self.queue.schedule(start, EventKind.AGENT_WAKEUP, person.index, person.token)

        while self.queue:
            event = self.queue.pop()
            self.clock.advance_to(event.fire_time)
            if event.kind is EventKind.DAY_END:
                self._end_day()
                break
            person = self.people[event.subject]
            if event.token != person.token:
                continue
            self.events_processed += 1
            self._decide(person)

        history = self.recorder.finish([
            LedgerEntry(p.name, self.ledger.quanta[i], self.ledger.co2_minutes[i], self.ledger.minutes[i])
            for i, p in enumerate(self.people)
        ])
        logger.info(f"Run end: seed={self.seed} events={self.events_processed}")
        return history

    def _decide(self, person: Person) -> None:
        now = self.clock.now
        candidate = self.behavior.select_next_activity(person, now)
        if candidate is None:
            duration = self.behavior.fallback_duration(now)
            logger.debug(f"{person.name}: fallback at home for {duration} min at {now}")
            self._start(person, person.home, self.behavior.fallback, now, duration)
            return
        model = self.models[candidate.model]
        place = self.behavior.select_place(candidate)
        duration = self.behavior.sample_duration(model, now)
        if model.collective:
            gathering = self.behavior.assemble_collective(
                person, candidate.model, place, self.people, now, duration
            )
            self._start_gathering(gathering)
        else:
            self._start(person, place, candidate.model, now, duration)

    def _start(self, person: Person, place: int, model: int, now: int, duration: int) -> None:
        end = now + duration
        self._move(person, place, model, now, end)
        self._snapshot(self.places[place])
        if end < self.options.day_end:
            self.queue.schedule(end, EventKind.AGENT_WAKEUP, person.index, person.token)

    def _start_gathering(self, gathering: Gathering) -> None:
        for index in gathering.participants:
            person = self.people[index]
            person.token += 1  # drop the wakeup of the interrupted activity
            self._start(person, gathering.place, gathering.model, gathering.start, gathering.duration)

    def _end_day(self) -> None:
        end = self.options.day_end
        for person in self.people:
            self._close_segment(person, end)
            place = self.places[person.place]
            place.air.remove_occupant(person.infected, self.models[person.model].mask_efficiency)
            place.occupants.discard(person.index)
        for place in self.places:
            place.air.advance(end)
            self._snapshot(place)

    # ------------------------------------------------------------------
    # Transitions
    # ------------------------------------------------------------------

    def _close_segment(self, person: Person, now: int) -> None:
        """Advance the current place, credit the stay and record the segment."""
        place = self.places[person.place]
        place.air.advance(now)
        elapsed = now - person.segment_start
        if elapsed <= 0:
            return
        quanta = place.air.cum_quanta - person.quanta_mark
        co2_minutes = place.air.cum_co2_minutes - person.co2_mark
        self.ledger.credit(person.index, quanta, co2_minutes, elapsed)
        person.counts[person.model] += 1
        self.recorder.record(PersonSnapshot(
            person=person.name,
            time=person.segment_start,
            end_time=now,
            place=place.name,
            event=self.models[person.model].name,
            co2=co2_minutes / elapsed,
            quanta=max(quanta, 0.0),
        ))

    def _move(self, person: Person, target: int, model: int, now: int, end: int) -> None:
        if person.place is not None:
            self._close_segment(person, now)
            old = self.places[person.place]
            old.air.remove_occupant(person.infected, self.models[person.model].mask_efficiency)
            old.occupants.discard(person.index)
            if person.home == old.index:
                old.owners_present -= 1
            if old.index != target:
                self._snapshot(old)

        place = self.places[target]
        if not place.spec.allows(person.department):
            raise SimulationError(f"{person.name} ({person.department}) not allowed in {place.name}")
        place.air.advance(now)
        place.air.add_occupant(person.infected, self.models[model].mask_efficiency)
        place.occupants.add(person.index)
        if person.home == target:
            place.owners_present += 1
        if len(place.occupants) > place.spec.capacity:
            raise SimulationError(f"capacity exceeded in {place.name} at {now}")
        person.place = target
        person.model = model
        person.segment_start = now
        person.segment_end = end
        person.quanta_mark = place.air.cum_quanta
        person.co2_mark = place.air.cum_co2_minutes

    def _snapshot(self, place: Place) -> None:
        state = place.air.state
        self.recorder.record(PlaceSnapshot(
            place=place.name,
            time=state.last_update,
            n_people=state.occupants,
            n_infected=state.infected,
            co2=state.co2,
            quanta=state.quanta,
            mask_efficiency=state.mask_efficiency,
        ))


def run_day(config: SimulationConfig, seed: int) -> RunHistory:
    """Simulate one day. Identical (config, seed) pairs give identical histories."""
    return Simulation(config, seed).run()
