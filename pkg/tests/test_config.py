"""Configuration parsing, validation, home places and mechanical ventilation."""

import json

import pytest

from conftest import EXPERIMENTS_DIR, make_config, office_document
from src.config import (
    AerosolConstants,
    ConfigError,
    VentilationSpec,
    config_digest,
    derive_mechanical_rate,
    format_clock,
    load_config,
    parse_clock,
    parse_config,
    resolve_home_places,
    serialize_config,
)


# ----------------------------------------------------------------------
# Clock
# ----------------------------------------------------------------------

def test_parse_clock_accepts_strings_and_minutes():
    assert parse_clock("08:00") == 480
    assert parse_clock("17:30") == 1050
    assert parse_clock(615) == 615
    assert format_clock(1050) == "17:30"


@pytest.mark.parametrize("value", ["8h", "12:60", "25:00", -5, True, 1.5])
def test_parse_clock_rejects_invalid_values(value):
    with pytest.raises(ValueError):
        parse_clock(value)


# ----------------------------------------------------------------------
# Baseline fixture
# ----------------------------------------------------------------------

def test_baseline_fixture_shape(baseline_config):
    assert len(baseline_config.events) == 5
    assert len(baseline_config.places) == 14
    assert len(baseline_config.persons) == 60
    assert len(baseline_config.department_registry) == 7
    assert baseline_config.aerosol == AerosolConstants()
    assert baseline_config.options.day_start == 480
    assert baseline_config.options.day_end == 1020


def test_aerosol_defaults():
    constants = AerosolConstants()
    assert constants.co2_background == 415.0
    assert constants.pressure == 0.95
    assert constants.temperature == 20.0
    assert constants.breathing_rate == 0.52
    assert constants.co2_rate_per_person == 0.005
    assert constants.quanta_exhalation == 25.0
    assert constants.virus_decay == 0.62
    assert constants.deposition == 0.3
    assert constants.quanta_enhancement == 1.0
    assert constants.mask_fraction == 1.0


def test_unbounded_repetitions_are_absent(baseline_config):
    assert baseline_config.event("work").repetitions_max is None
    lunch = baseline_config.event("lunch")
    assert (lunch.repetitions_min, lunch.repetitions_max) == (1, 1)


def test_all_experiment_fixtures_parse(experiment_configs):
    assert set(experiment_configs) == {
        "baseline", "larger-building", "separate-workspaces", "natural-ventilation",
        "mechanical-ventilation", "shifts", "limited-duration", "masks", "combined",
    }
    assert len(experiment_configs["shifts"].persons) == 36
    assert len(experiment_configs["separate-workspaces"].places) == 16


def test_empty_people_is_valid():
    document = office_document()
    document["people"] = []
    document["options"]["n_infected"] = 0
    config = make_config(document)
    assert config.persons == []
    assert resolve_home_places(config) == []


def test_empty_people_without_department_registry():
    document = json.loads((EXPERIMENTS_DIR / "baseline.json").read_text(encoding="utf-8"))
    del document["departments"]
    document["people"] = []
    document["options"]["n_infected"] = 0
    document["options"]["initial_occupancy"] = {}
    config = parse_config(json.dumps(document))
    assert config.persons == []
    assert "D1" in config.department_registry


def test_people_define_departments_without_registry():
    document = office_document()
    del document["departments"]
    assert make_config(document).department_registry == ("A", "B")
    document["places"][0]["departments_allowed"] = ["Z"]
    with pytest.raises(ConfigError, match="undefined department 'Z'"):
        parse_config(json.dumps(document))


# ----------------------------------------------------------------------
# Errors
# ----------------------------------------------------------------------

def test_area_zero_names_the_field():
    document = office_document()
    document["places"][0]["area"] = 0
    with pytest.raises(ConfigError, match="area"):
        parse_config(json.dumps(document))


def test_syntax_error_reports_position():
    with pytest.raises(ConfigError, match="line 2, column"):
        parse_config('{\n  "events": [,]\n}')


def test_unknown_field_rejected():
    document = office_document()
    document["places"][0]["colour"] = "blue"
    with pytest.raises(ConfigError, match="colour"):
        parse_config(json.dumps(document))


def test_undefined_department_rejected():
    document = office_document()
    document["places"][0]["departments_allowed"] = ["Z"]
    with pytest.raises(ConfigError, match="undefined department 'Z'"):
        parse_config(json.dumps(document))


def test_undefined_activity_rejected():
    document = office_document()
    document["places"][0]["activity"] = "yoga"
    with pytest.raises(ConfigError, match="undefined activity 'yoga'"):
        parse_config(json.dumps(document))


def test_too_many_infected_rejected():
    document = office_document(n_people=4, n_infected=5)
    with pytest.raises(ConfigError, match="n_infected"):
        parse_config(json.dumps(document))


def test_overlapping_windows_rejected():
    document = office_document()
    document["events"][2]["schedule"] = [["10:00", "10:30"], ["10:15", "10:45"]]
    with pytest.raises(ConfigError, match="overlap"):
        parse_config(json.dumps(document))


def test_duration_longer_than_window_rejected():
    document = office_document()
    document["events"][2]["duration_max"] = 45
    with pytest.raises(ConfigError, match="longest schedule window"):
        parse_config(json.dumps(document))


def test_day_bounds_ordered():
    document = office_document(day_start="12:00", day_end="08:00")
    with pytest.raises(ConfigError, match="day_start"):
        parse_config(json.dumps(document))


def test_negative_mechanical_rate_rejected():
    document = office_document()
    document["places"][0]["ventilation_mechanical"] = -1
    with pytest.raises(ConfigError, match="ventilation_mechanical"):
        parse_config(json.dumps(document))


def test_missing_file_raises_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.json")


# ----------------------------------------------------------------------
# Homes
# ----------------------------------------------------------------------

def test_homes_follow_initial_occupancy_and_specificity(baseline_config):
    homes = resolve_home_places(baseline_config)
    names = [baseline_config.places[h].name for h in homes]
    by_department = {}
    for person, place in zip(baseline_config.persons, names):
        by_department.setdefault(person.department, set()).add(place)
    assert by_department["D4"] == {"IT Office"}
    assert by_department["D1"] == {"Open Office"}
    assert by_department["D5"] == {"Chief Office A"}
    assert by_department["D6"] == {"Chief Office B"}
    assert by_department["D7"] == {"Chief Office C"}


def test_home_capacity_exhausted_rejected():
    document = office_document(n_people=20)
    with pytest.raises(ConfigError, match="no home place"):
        parse_config(json.dumps(document))


def test_initial_occupancy_department_checked():
    document = office_document(initial_occupancy={"Office B": ["a"]})
    with pytest.raises(ConfigError, match="not allowed"):
        parse_config(json.dumps(document))


# ----------------------------------------------------------------------
# Mechanical ventilation
# ----------------------------------------------------------------------

AC = VentilationSpec(flow_rate=0, filter_efficiency=0.2, duct_removal=0.1, extra_removal=0.0)


def test_mechanical_rate_examples():
    assert derive_mechanical_rate(AC.model_copy(update={"flow_rate": 1000}), 330 * 2.7) == pytest.approx(0.337, abs=5e-4)
    assert derive_mechanical_rate(AC.model_copy(update={"flow_rate": 300}), 16 * 2.7) == pytest.approx(2.083, abs=5e-4)
    assert derive_mechanical_rate(AC, 100.0) == 0.0


def test_mechanical_rate_removal_is_capped():
    spec = VentilationSpec(flow_rate=500, filter_efficiency=0.6, duct_removal=0.5, extra_removal=0.2)
    assert derive_mechanical_rate(spec, 50.0) == pytest.approx(10.0)


def test_mechanical_rate_linear_in_flow_and_inverse_in_volume():
    one = derive_mechanical_rate(AC.model_copy(update={"flow_rate": 100}), 40.0)
    assert derive_mechanical_rate(AC.model_copy(update={"flow_rate": 300}), 40.0) == pytest.approx(3 * one)
    assert derive_mechanical_rate(AC.model_copy(update={"flow_rate": 100}), 80.0) == pytest.approx(one / 2)


EXPECTED_RATES = {
    "Open Office": 0.337,
    "IT Office": 0.641,
    "Chief Office A": 1.587,
    "Chief Office B": 1.587,
    "Chief Office C": 1.389,
    "Meeting Room A": 2.083,
    "Meeting Room B": 2.083,
    "Meeting Room C": 3.030,
    "Meeting Room D": 1.684,
    "Coffee A": 1.333,
    "Coffee B": 2.020,
    "Restroom A": 0.0,
    "Restroom B": 0.0,
    "Lunch": 0.741,
}


def test_mechanical_ventilation_fixture_rates(experiment_configs):
    config = experiment_configs["mechanical-ventilation"]
    rates = {p.name: p.mechanical_rate for p in config.places}
    assert set(rates) == set(EXPECTED_RATES)
    for name, expected in EXPECTED_RATES.items():
        assert rates[name] == pytest.approx(expected, abs=1e-3), name


# ----------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------

@pytest.mark.parametrize("path", sorted(EXPERIMENTS_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_serialize_round_trip(path):
    config = load_config(path)
    again = parse_config(serialize_config(config))
    assert again == config
    assert serialize_config(again) == serialize_config(config)
    assert config_digest(again) == config_digest(config)


def test_digest_changes_with_content(office_config):
    document = office_document()
    document["places"][0]["ventilation_natural"] = 2.0
    assert config_digest(make_config(document)) != config_digest(office_config)
