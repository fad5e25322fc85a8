"""Priority weights, activity and place selection, durations and collective drafting."""

import numpy as np
import pytest

from conftest import make_config, office_document
from src.behavior import priority
from src.engine import Simulation


def seated(config, seed=0):
    """A simulation with everybody at home doing the fallback activity at day start."""
    sim = Simulation(config, seed)
    start = config.options.day_start
    for person in sim.people:
        sim._move(person, person.home, sim.behavior.fallback, start, start)
    return sim


def person_of(sim, department):
    return next(p for p in sim.people if p.department == department)


def place_index(sim, name):
    return next(p.index for p in sim.places if p.name == name)


def two_model_config():
    return make_config({
        "events": [
            {"name": "a", "activity": "a", "schedule": [["08:00", "17:00"]],
             "duration_min": 5, "duration_max": 10, "repetitions_min": 2, "repetitions_max": 8},
            {"name": "b", "activity": "b", "schedule": [["08:00", "17:00"]],
             "duration_min": 20, "duration_max": 45, "repetitions_max": 2},
        ],
        "places": [
            {"name": "pa", "activity": "a", "building": "x", "area": 10, "height": 3,
             "capacity": 2, "ventilation_natural": 1},
            {"name": "pb", "activity": "b", "building": "x", "area": 10, "height": 3,
             "capacity": 2, "ventilation_natural": 1},
        ],
        "people": [{"name": "solo", "building": "x", "department": "D"}],
        "options": {"fallback_event": "a"},
    })


# ----------------------------------------------------------------------
# Priority
# ----------------------------------------------------------------------

def test_priority_examples():
    assert priority(0, 2, 8, 0.5) == 1.0
    assert priority(2, 2, 8, 0.5) == 0.5
    assert priority(8, 2, 8, 0.5) == 0.0
    assert priority(1, 2, 8, 0.5) == 0.75


def test_priority_degenerate_cases():
    assert priority(1, 0, 2, 0.5) == 0.25
    assert priority(0, 0, 4, 0.3) == pytest.approx(0.3)
    assert priority(5, 0, None, 0.4) == 0.4
    assert priority(0, 1, 1, 0.5) == 1.0
    assert priority(1, 1, 1, 0.5) == 0.0


@pytest.mark.parametrize("r,R,alpha", [(2, 8, 0.5), (0, 5, 0.2), (3, 3, 0.7), (1, None, 0.5)])
def test_priority_is_non_increasing_and_bounded(r, R, alpha):
    top = (R if R is not None else 12) + 2
    weights = [priority(e, r, R, alpha) for e in range(top)]
    assert all(0.0 <= w <= 1.0 for w in weights)
    assert all(a >= b for a, b in zip(weights, weights[1:]))
    if r > 0:
        assert weights[0] == 1.0
    if r < (R if R is not None else float("inf")):
        assert weights[r] == pytest.approx(alpha)


def test_unmet_minimum_outweighs_met_models():
    assert priority(0, 1, 1, 0.5) > priority(2, 2, None, 0.5)
    assert priority(0, 1, 1, 0.5) > priority(0, 0, 5, 0.5)


# ----------------------------------------------------------------------
# Activity selection
# ----------------------------------------------------------------------

def test_weighted_selection_frequencies():
    sim = seated(two_model_config(), seed=7)
    person = sim.people[0]
    person.counts = [1, 1]  # weights 0.75 and 0.25
    chosen = [sim.behavior.select_next_activity(person, 480).model for _ in range(100_000)]
    share = chosen.count(0) / len(chosen)
    assert share == pytest.approx(0.75, abs=0.75 * 0.05)


def test_zero_weight_model_never_chosen():
    sim = seated(two_model_config(), seed=3)
    person = sim.people[0]
    person.counts = [1, 2]  # b reached its maximum
    picks = {sim.behavior.select_next_activity(person, 480).model for _ in range(200)}
    assert picks == {0}


def test_nothing_eligible_returns_fallback_signal():
    sim = seated(two_model_config())
    person = sim.people[0]
    person.counts = [8, 2]
    assert sim.behavior.select_next_activity(person, 480) is None


def test_model_too_long_for_the_remaining_window_is_ineligible(baseline_config):
    sim = seated(baseline_config)
    person = person_of(sim, "D1")
    work = [i for i, m in enumerate(sim.models) if m.name == "work"][0]
    assert work not in {c.model for c in sim.behavior.candidates(person, 995)}
    assert work in {c.model for c in sim.behavior.candidates(person, 990)}


def test_lunch_becomes_urgent_before_its_deadline(baseline_config):
    sim = seated(baseline_config)
    person = person_of(sim, "D2")
    lunch = [i for i, m in enumerate(sim.models) if m.name == "lunch"][0]
    assert sim.behavior.latest_start(person, lunch) == 900 - 20
    assert not sim.behavior.is_urgent(person, lunch, 780)
    assert sim.behavior.is_urgent(person, lunch, 800)
    picks = {sim.behavior.select_next_activity(person, 800).model for _ in range(50)}
    assert picks == {lunch}


# ----------------------------------------------------------------------
# Durations
# ----------------------------------------------------------------------

def test_duration_uniform_mean():
    sim = seated(two_model_config(), seed=11)
    model = sim.models[1]
    draws = np.array([sim.behavior.sample_duration(model, 480) for _ in range(100_000)])
    assert draws.min() >= 20 and draws.max() <= 45
    assert draws.mean() == pytest.approx(32.5, abs=0.5)


def test_degenerate_duration_range(experiment_configs):
    sim = seated(experiment_configs["limited-duration"])
    lunch = next(m for m in sim.models if m.name == "lunch")
    assert {sim.behavior.sample_duration(lunch, 800) for _ in range(100)} == {20}


def test_duration_cut_to_the_open_window(baseline_config):
    sim = seated(baseline_config)
    coffee = next(m for m in sim.models if m.name == "coffee")
    draws = {sim.behavior.sample_duration(coffee, 620) for _ in range(200)}
    assert max(draws) <= 10
    assert min(draws) >= 5


# ----------------------------------------------------------------------
# Places
# ----------------------------------------------------------------------

def _candidate_places(sim, person, model_name, now=600):
    index = [i for i, m in enumerate(sim.models) if m.name == model_name][0]
    for candidate in sim.behavior.candidates(person, now):
        if candidate.model == index:
            return {sim.places[i].name for i in candidate.places}
    return set()


def test_department_access_for_places(baseline_config):
    sim = seated(baseline_config)
    assert _candidate_places(sim, person_of(sim, "D4"), "work") == {"IT Office", "Open Office"}
    assert _candidate_places(sim, person_of(sim, "D7"), "restroom") == {"Restroom A"}
    assert "Meeting Room A" not in _candidate_places(sim, person_of(sim, "D4"), "meeting")
    assert _candidate_places(sim, person_of(sim, "D5"), "work") == {
        "Chief Office A", "Chief Office B", "Chief Office C",
    }


def test_full_places_make_the_activity_ineligible():
    document = office_document()
    document["places"][3]["capacity"] = 1
    sim = seated(make_config(document))
    coffee = [i for i, m in enumerate(sim.models) if m.name == "coffee"][0]
    first, second = sim.people[0], sim.people[1]
    assert _candidate_places(sim, second, "coffee") == {"Coffee"}
    sim._move(first, place_index(sim, "Coffee"), coffee, 600, 605)
    assert _candidate_places(sim, second, "coffee") == set()


def test_place_choice_is_uniform(baseline_config):
    sim = seated(baseline_config, seed=5)
    person = person_of(sim, "D1")
    candidate = next(
        c for c in sim.behavior.candidates(person, 600) if sim.models[c.model].name == "coffee"
    )
    picks = [sim.places[sim.behavior.select_place(candidate)].name for _ in range(4000)]
    assert picks.count("Coffee A") / len(picks) == pytest.approx(0.5, abs=0.05)


def test_absent_owners_keep_their_seats():
    document = office_document()
    document["places"][0]["departments_allowed"] = []
    document["places"][0]["capacity"] = 3
    document["options"]["initial_occupancy"] = {"Office A": ["a"]}
    sim = seated(make_config(document))
    office = sim.places[place_index(sim, "Office A")]
    outsider = next(p for p in sim.people if p.home != office.index)
    owner = next(p for p in sim.people if p.home == office.index)
    meeting = [i for i, m in enumerate(sim.models) if m.name == "meeting"][0]
    sim._move(owner, place_index(sim, "Meeting"), meeting, 600, 620)
    assert office.absent_owners == 1
    assert office.free_seats(outsider) == 0
    assert office.free_seats(owner) == 1


# ----------------------------------------------------------------------
# Collective events
# ----------------------------------------------------------------------

def test_gathering_size_bounded_by_capacity(baseline_config):
    sim = seated(baseline_config, seed=2)
    initiator = person_of(sim, "D1")
    room = place_index(sim, "Meeting Room C")
    meeting = [i for i, m in enumerate(sim.models) if m.name == "meeting"][0]
    sizes = set()
    for _ in range(200):
        gathering = sim.behavior.assemble_collective(initiator, meeting, room, sim.people, 600, 30)
        participants = gathering.participants
        assert participants[0] == initiator.index
        assert len(set(participants)) == len(participants)
        assert all(sim.people[i].department != "D4" for i in participants)
        sizes.add(len(participants))
    assert sizes <= {2, 3, 4}
    assert len(sizes) > 1


def test_gathering_without_invitees_is_solo():
    sim = seated(make_config(office_document(n_people=1, n_infected=0)))
    meeting = [i for i, m in enumerate(sim.models) if m.name == "meeting"][0]
    gathering = sim.behavior.assemble_collective(
        sim.people[0], meeting, place_index(sim, "Meeting"), sim.people, 560, 20
    )
    assert gathering.participants == [0]
    assert gathering.end == 580


def test_invitees_keep_their_deadlines(baseline_config):
    sim = seated(baseline_config)
    person = person_of(sim, "D3")
    room = sim.places[place_index(sim, "Meeting Room D")]
    meeting = [i for i, m in enumerate(sim.models) if m.name == "meeting"][0]
    assert sim.behavior.can_be_drafted(person, meeting, room, 870)
    assert not sim.behavior.can_be_drafted(person, meeting, room, 890)


def test_only_fallback_activity_is_interruptible(baseline_config):
    sim = seated(baseline_config)
    person = person_of(sim, "D3")
    coffee = [i for i, m in enumerate(sim.models) if m.name == "coffee"][0]
    meeting = [i for i, m in enumerate(sim.models) if m.name == "meeting"][0]
    room = sim.places[place_index(sim, "Meeting Room D")]
    sim._move(person, place_index(sim, "Coffee A"), coffee, 600, 610)
    assert not sim.behavior.can_be_drafted(person, meeting, room, 640)


def test_infected_selection():
    sim = Simulation(make_config(office_document(n_people=6, n_infected=3)), 9)
    chosen = sim.behavior.pick_infected(6, 3)
    assert chosen == sorted(set(chosen))
    assert len(chosen) == 3
    assert sim.behavior.pick_infected(6, 0) == []
