import json
from dataclasses import replace
from pathlib import Path

import pytest

from tcpair.errors import ParseError, ValidationError
from tcpair.netsim import parse_scenario, scenario_from_dict, scenario_to_dict, serialize_scenario, validate_scenario
from tcpair.netsim.presets import corridor

FIXTURES = Path(__file__).parent / "fixtures"


def test_roundtrip_preserves_scenario():
    s = corridor(noise_sigma_db=1.5, seed=9, gossip_adjacency=(("rsu-A1", "rsu-A2"),))
    assert parse_scenario(serialize_scenario(s)) == s


def test_fixture_parses():
    s = parse_scenario((FIXTURES / "small_corridor.json").read_text())
    assert len(s.municipalities) == 2 and len(s.vehicles) == 2 and len(s.rogue_devices) == 1


def test_json_error_carries_line():
    with pytest.raises(ParseError) as exc:
        parse_scenario((FIXTURES / "truncated.json").read_text())
    assert exc.value.line is not None and exc.value.line > 1


def test_unknown_key_named():
    with pytest.raises(ParseError) as exc:
        parse_scenario((FIXTURES / "unknown_key.json").read_text())
    assert exc.value.path == "gossip_every"


def test_duplicate_rsu_path():
    with pytest.raises(ValidationError) as exc:
        parse_scenario((FIXTURES / "duplicate_rsu.json").read_text())
    assert exc.value.path.startswith("municipalities[1].rsus[0]")


def _doc(**changes):
    d = scenario_to_dict(corridor(municipalities=1, vehicles=1, rogues=0))
    d.update(changes)
    return d


@pytest.mark.parametrize(
    "changes, path",
    [
        ({"duration_ms": -1}, "duration_ms"),
        ({"gossip_period_ms": 0}, "gossip_period_ms"),
        ({"seed": 2**64}, "seed"),
        ({"retention": 0}, "retention"),
    ],
)
def test_validation_paths(changes, path):
    with pytest.raises(ValidationError) as exc:
        scenario_from_dict(_doc(**changes))
    assert exc.value.path == path


def test_wrong_types_rejected():
    with pytest.raises(ParseError):
        scenario_from_dict(_doc(duration_ms="long"))
    with pytest.raises(ParseError):
        scenario_from_dict(_doc(oui_allowlist=["nope"]))
    d = _doc()
    d["vehicles"][0]["route_polyline"] = [[0, 0]]
    with pytest.raises(ValidationError):
        scenario_from_dict(d)
    d = _doc()
    del d["municipalities"]
    with pytest.raises(ParseError):
        scenario_from_dict(d)


def test_validate_direct():
    s = corridor()
    validate_scenario(s)
    with pytest.raises(ValidationError):
        validate_scenario(replace(s, move_period_ms=0))


def test_serialization_is_stable():
    s = corridor()
    assert serialize_scenario(s) == serialize_scenario(parse_scenario(serialize_scenario(s)))
    assert json.loads(serialize_scenario(s))["oui_allowlist"] == ["00:1A:2B"]


def test_minimal_file_gets_defaults():
    text = json.dumps(
        {
            "duration_ms": 10000,
            "municipalities": [{"network_id": "A", "rsus": [{"interface_id": "r1", "position": [0, 0]}]}],
            "vehicles": [{"mac": "00:1A:2B:00:00:01", "route_polyline": [[0, 0], [100, 0]], "speed_mps": 10}],
        }
    )
    s = parse_scenario(text)
    assert (s.gossip_period_ms, s.sense_period_ms, s.cache_capacity) == (1000, 1000, 64)
    assert s.classifier.min_observations == 5 and s.seed == 0
    assert s.vehicles[0].is_legit_manufacturer and s.vehicles[0].start_ms == 0


def test_single_point_polyline_names_field():
    d = _doc()
    d["vehicles"][0]["route_polyline"] = [[0, 0]]
    with pytest.raises(ValidationError) as exc:
        scenario_from_dict(d)
    assert "route_polyline" in exc.value.path
