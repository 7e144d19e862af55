"""Scenario description, strict JSON parsing, defaults and validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any, Optional

from tcpair.errors import InvalidInput, ParseError, ValidationError
from tcpair.identity import ClassifierParams, DEFAULT_PROFILE_EXPIRY_MS, parse_mac, parse_oui, format_mac
from tcpair.ledger import DEFAULT_RULES, RuleSet
from tcpair.ledger.contract import predicate_from_dict, predicate_to_dict
from tcpair.spectrum import DEFAULT_SENSITIVITY_DBM, AirInterface, Owner, PathLossParams

DEFAULT_GOSSIP_PERIOD_MS = 1000
DEFAULT_SENSE_PERIOD_MS = 1000
DEFAULT_MOVE_PERIOD_MS = 500
DEFAULT_EXPIRY_PERIOD_MS = 1000
DEFAULT_CACHE_CAPACITY = 64
DEFAULT_RETENTION = 64
DEFAULT_CHAIN_ID = "authorization"


@dataclass(frozen=True)
class Municipality:
    network_id: str
    rsus: tuple[AirInterface, ...]


@dataclass(frozen=True)
class VehicleSpec:
    mac: str
    route_polyline: tuple[tuple[float, float], ...]
    speed_mps: float
    is_legit_manufacturer: bool = True
    start_ms: int = 0


@dataclass(frozen=True)
class RogueDevice:
    mac: str
    position: tuple[float, float]


@dataclass(frozen=True)
class Scenario:
    duration_ms: int
    municipalities: tuple[Municipality, ...]
    seed: int = 0
    vehicles: tuple[VehicleSpec, ...] = ()
    rogue_devices: tuple[RogueDevice, ...] = ()
    path_loss: PathLossParams = PathLossParams()
    classifier: ClassifierParams = ClassifierParams()
    rules: RuleSet = DEFAULT_RULES
    oui_allowlist: tuple[str, ...] = ()
    gossip_period_ms: int = DEFAULT_GOSSIP_PERIOD_MS
    sense_period_ms: int = DEFAULT_SENSE_PERIOD_MS
    move_period_ms: int = DEFAULT_MOVE_PERIOD_MS
    expiry_period_ms: int = DEFAULT_EXPIRY_PERIOD_MS
    cache_capacity: int = DEFAULT_CACHE_CAPACITY
    profile_expiry_ms: int = DEFAULT_PROFILE_EXPIRY_MS
    retention: int = DEFAULT_RETENTION
    sensitivity_dbm: float = DEFAULT_SENSITIVITY_DBM
    vehicle_tx_power_dbm: float = 20.0
    handoff_hysteresis_db: float = 3.0
    chain_id: str = DEFAULT_CHAIN_ID
    gossip_adjacency: Optional[tuple[tuple[str, str], ...]] = None

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, seed=seed)

    def rsus(self) -> list[AirInterface]:
        return [r for m in self.municipalities for r in m.rsus]


# --- strict field readers -------------------------------------------------


def _check_keys(obj: Any, path: str, required: set[str], optional: set[str]) -> dict:
    if not isinstance(obj, dict):
        raise ParseError(path or "<root>", "expected an object")
    unknown = sorted(set(obj) - required - optional)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ParseError(where, f"unknown key {unknown[0]!r}")
    missing = sorted(required - set(obj))
    if missing:
        where = f"{path}.{missing[0]}" if path else missing[0]
        raise ParseError(where, f"missing required key {missing[0]!r}")
    return obj


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _int(v: Any, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(path, f"expected an integer, got {v!r}")
    return v


def _num(v: Any, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(path, f"expected a number, got {v!r}")
    return float(v)


def _str(v: Any, path: str) -> str:
    if not isinstance(v, str):
        raise ParseError(path, f"expected a string, got {v!r}")
    return v


def _bool(v: Any, path: str) -> bool:
    if not isinstance(v, bool):
        raise ParseError(path, f"expected true/false, got {v!r}")
    return v


def _list(v: Any, path: str) -> list:
    if not isinstance(v, list):
        raise ParseError(path, "expected a list")
    return v


def _point(v: Any, path: str, dims=(2,)) -> tuple[float, ...]:
    items = _list(v, path)
    if len(items) not in dims:
        raise ParseError(path, f"expected a point with {' or '.join(map(str, dims))} coordinates")
    return tuple(_num(x, f"{path}[{i}]") for i, x in enumerate(items))


def _mac(v: Any, path: str) -> str:
    try:
        return format_mac(parse_mac(_str(v, path)))
    except ValueError as exc:
        raise ParseError(path, str(exc)) from None


def _rsu(obj: Any, path: str, network_id: str) -> AirInterface:
    d = _check_keys(obj, path, {"interface_id", "position"}, {"tx_power_dbm", "channel", "ssid_open"})
    try:
        return AirInterface(
            interface_id=_str(d["interface_id"], _join(path, "interface_id")),
            owner=Owner.RoadsideUnit,
            position=_point(d["position"], _join(path, "position")),
            tx_power_dbm=_num(d.get("tx_power_dbm", 20.0), _join(path, "tx_power_dbm")),
            channel=_int(d.get("channel", 1), _join(path, "channel")),
            network_id=network_id,
            ssid_open=_bool(d.get("ssid_open", True), _join(path, "ssid_open")),
        )
    except InvalidInput as exc:
        raise ValidationError(path, str(exc)) from None


def _path_loss(obj: Any, path: str) -> PathLossParams:
    d = _check_keys(obj, path, set(), {"pl0_db", "d0_m", "exponent_n", "noise_sigma_db"})
    base = PathLossParams()
    try:
        return PathLossParams(
            pl0_db=_num(d.get("pl0_db", base.pl0_db), _join(path, "pl0_db")),
            d0_m=_num(d.get("d0_m", base.d0_m), _join(path, "d0_m")),
            exponent_n=_num(d.get("exponent_n", base.exponent_n), _join(path, "exponent_n")),
            noise_sigma_db=_num(d.get("noise_sigma_db", base.noise_sigma_db), _join(path, "noise_sigma_db")),
        )
    except InvalidInput as exc:
        raise ValidationError(path, str(exc)) from None


def _classifier(obj: Any, path: str) -> ClassifierParams:
    names = {"min_observations", "min_distinct_rsus", "speed_lo_mps", "speed_hi_mps", "max_speed_stddev_mps"}
    d = _check_keys(obj, path, set(), names)
    base = ClassifierParams()
    return ClassifierParams(
        min_observations=_int(d.get("min_observations", base.min_observations), _join(path, "min_observations")),
        min_distinct_rsus=_int(d.get("min_distinct_rsus", base.min_distinct_rsus), _join(path, "min_distinct_rsus")),
        speed_lo_mps=_num(d.get("speed_lo_mps", base.speed_lo_mps), _join(path, "speed_lo_mps")),
        speed_hi_mps=_num(d.get("speed_hi_mps", base.speed_hi_mps), _join(path, "speed_hi_mps")),
        max_speed_stddev_mps=_num(
            d.get("max_speed_stddev_mps", base.max_speed_stddev_mps), _join(path, "max_speed_stddev_mps")
        ),
    )


def _rules(obj: Any, path: str) -> RuleSet:
    items = _list(obj, path)
    preds = []
    for i, item in enumerate(items):
        try:
            preds.append(predicate_from_dict(item))
        except InvalidInput as exc:
            raise ParseError(f"{path}[{i}]", str(exc)) from None
    if not preds:
        raise ValidationError(path, "rule set must be non-empty")
    return RuleSet(tuple(preds))


SCENARIO_OPTIONAL = {
    "seed",
    "vehicles",
    "rogue_devices",
    "path_loss",
    "classifier",
    "rules",
    "oui_allowlist",
    "gossip_period_ms",
    "sense_period_ms",
    "move_period_ms",
    "expiry_period_ms",
    "cache_capacity",
    "profile_expiry_ms",
    "retention",
    "sensitivity_dbm",
    "vehicle_tx_power_dbm",
    "handoff_hysteresis_db",
    "chain_id",
    "gossip_adjacency",
}


def scenario_from_dict(doc: Any) -> Scenario:
    d = _check_keys(doc, "", {"duration_ms", "municipalities"}, SCENARIO_OPTIONAL)
    munis = []
    for i, m in enumerate(_list(d["municipalities"], "municipalities")):
        mp = f"municipalities[{i}]"
        md = _check_keys(m, mp, {"network_id", "rsus"}, set())
        net = _str(md["network_id"], _join(mp, "network_id"))
        rsus = tuple(
            _rsu(r, f"{mp}.rsus[{j}]", net) for j, r in enumerate(_list(md["rsus"], _join(mp, "rsus")))
        )
        munis.append(Municipality(net, rsus))

    vehicles = []
    for i, v in enumerate(_list(d.get("vehicles", []), "vehicles")):
        vp = f"vehicles[{i}]"
        vd = _check_keys(v, vp, {"mac", "route_polyline", "speed_mps"}, {"is_legit_manufacturer", "start_ms"})
        poly = tuple(
            _point(p, f"{vp}.route_polyline[{j}]")
            for j, p in enumerate(_list(vd["route_polyline"], _join(vp, "route_polyline")))
        )
        vehicles.append(
            VehicleSpec(
                mac=_mac(vd["mac"], _join(vp, "mac")),
                route_polyline=poly,
                speed_mps=_num(vd["speed_mps"], _join(vp, "speed_mps")),
                is_legit_manufacturer=_bool(vd.get("is_legit_manufacturer", True), _join(vp, "is_legit_manufacturer")),
                start_ms=_int(vd.get("start_ms", 0), _join(vp, "start_ms")),
            )
        )

    rogues = []
    for i, r in enumerate(_list(d.get("rogue_devices", []), "rogue_devices")):
        rp = f"rogue_devices[{i}]"
        rd = _check_keys(r, rp, {"mac", "position"}, set())
        rogues.append(RogueDevice(_mac(rd["mac"], _join(rp, "mac")), _point(rd["position"], _join(rp, "position"))))

    ouis = []
    for i, o in enumerate(_list(d.get("oui_allowlist", []), "oui_allowlist")):
        try:
            raw = parse_oui(_str(o, f"oui_allowlist[{i}]"))
        except ValueError as exc:
            raise ParseError(f"oui_allowlist[{i}]", str(exc)) from None
        ouis.append(":".join(f"{b:02X}" for b in raw))

    adjacency = None
    if d.get("gossip_adjacency") is not None:
        pairs = []
        for i, pair in enumerate(_list(d["gossip_adjacency"], "gossip_adjacency")):
            pp = f"gossip_adjacency[{i}]"
            items = _list(pair, pp)
            if len(items) != 2:
                raise ParseError(pp, "expected a pair of interface ids")
            pairs.append((_str(items[0], f"{pp}[0]"), _str(items[1], f"{pp}[1]")))
        adjacency = tuple(pairs)

    def opt_int(key, default):
        return _int(d.get(key, default), key)

    def opt_num(key, default):
        return _num(d.get(key, default), key)

    scenario = Scenario(
        duration_ms=_int(d["duration_ms"], "duration_ms"),
        municipalities=tuple(munis),
        seed=opt_int("seed", 0),
        vehicles=tuple(vehicles),
        rogue_devices=tuple(rogues),
        path_loss=_path_loss(d["path_loss"], "path_loss") if "path_loss" in d else PathLossParams(),
        classifier=_classifier(d["classifier"], "classifier") if "classifier" in d else ClassifierParams(),
        rules=_rules(d["rules"], "rules") if "rules" in d else DEFAULT_RULES,
        oui_allowlist=tuple(ouis),
        gossip_period_ms=opt_int("gossip_period_ms", DEFAULT_GOSSIP_PERIOD_MS),
        sense_period_ms=opt_int("sense_period_ms", DEFAULT_SENSE_PERIOD_MS),
        move_period_ms=opt_int("move_period_ms", DEFAULT_MOVE_PERIOD_MS),
        expiry_period_ms=opt_int("expiry_period_ms", DEFAULT_EXPIRY_PERIOD_MS),
        cache_capacity=opt_int("cache_capacity", DEFAULT_CACHE_CAPACITY),
        profile_expiry_ms=opt_int("profile_expiry_ms", DEFAULT_PROFILE_EXPIRY_MS),
        retention=opt_int("retention", DEFAULT_RETENTION),
        sensitivity_dbm=opt_num("sensitivity_dbm", DEFAULT_SENSITIVITY_DBM),
        vehicle_tx_power_dbm=opt_num("vehicle_tx_power_dbm", 20.0),
        handoff_hysteresis_db=opt_num("handoff_hysteresis_db", 3.0),
        chain_id=_str(d.get("chain_id", DEFAULT_CHAIN_ID), "chain_id"),
        gossip_adjacency=adjacency,
    )
    validate_scenario(scenario)
    return scenario


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("", f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    return scenario_from_dict(doc)


def validate_scenario(s: Scenario) -> None:
    """Raise ValidationError naming the first violated invariant."""
    if s.duration_ms < 0:
        raise ValidationError("duration_ms", "must be non-negative")
    if not 0 <= s.seed < 2**64:
        raise ValidationError("seed", "must be a 64-bit unsigned integer")
    for name in ("gossip_period_ms", "sense_period_ms", "move_period_ms", "expiry_period_ms"):
        if getattr(s, name) <= 0:
            raise ValidationError(name, "must be positive")
    for name in ("cache_capacity", "retention", "profile_expiry_ms"):
        if getattr(s, name) < 1:
            raise ValidationError(name, "must be positive")
    if s.handoff_hysteresis_db < 0:
        raise ValidationError("handoff_hysteresis_db", "must be non-negative")
    if not s.chain_id:
        raise ValidationError("chain_id", "must be non-empty")
    if not s.municipalities:
        raise ValidationError("municipalities", "at least one municipality is required")
    seen_nets: set[str] = set()
    seen_ids: set[str] = set()
    for i, m in enumerate(s.municipalities):
        if not m.network_id:
            raise ValidationError(f"municipalities[{i}].network_id", "must be non-empty")
        if m.network_id in seen_nets:
            raise ValidationError(f"municipalities[{i}].network_id", f"duplicate network_id {m.network_id!r}")
        seen_nets.add(m.network_id)
        if not m.rsus:
            raise ValidationError(f"municipalities[{i}].rsus", "at least one RSU is required")
        for j, r in enumerate(m.rsus):
            if not r.interface_id:
                raise ValidationError(f"municipalities[{i}].rsus[{j}].interface_id", "must be non-empty")
            if r.interface_id in seen_ids:
                raise ValidationError(
                    f"municipalities[{i}].rsus[{j}].interface_id", f"duplicate rsu_id {r.interface_id!r}"
                )
            seen_ids.add(r.interface_id)
    macs: set[str] = set()
    for i, v in enumerate(s.vehicles):
        if len(v.route_polyline) < 2:
            raise ValidationError(f"vehicles[{i}].route_polyline", "needs at least 2 points")
        if v.speed_mps <= 0:
            raise ValidationError(f"vehicles[{i}].speed_mps", "must be positive")
        if v.start_ms < 0:
            raise ValidationError(f"vehicles[{i}].start_ms", "must be non-negative")
        if v.mac in macs:
            raise ValidationError(f"vehicles[{i}].mac", f"duplicate mac {v.mac}")
        macs.add(v.mac)
    for i, r in enumerate(s.rogue_devices):
        if r.mac in macs:
            raise ValidationError(f"rogue_devices[{i}].mac", f"duplicate mac {r.mac}")
        macs.add(r.mac)
    if s.gossip_adjacency is not None:
        for i, (a, b) in enumerate(s.gossip_adjacency):
            for j, x in enumerate((a, b)):
                if x not in seen_ids:
                    raise ValidationError(f"gossip_adjacency[{i}][{j}]", f"unknown rsu_id {x!r}")
            if a == b:
                raise ValidationError(f"gossip_adjacency[{i}]", "self-loop")
    c = s.classifier
    if c.min_observations < 0 or c.min_distinct_rsus < 0:
        raise ValidationError("classifier", "thresholds must be non-negative")
    if c.speed_lo_mps > c.speed_hi_mps:
        raise ValidationError("classifier.speed_lo_mps", "must not exceed speed_hi_mps")


def scenario_to_dict(s: Scenario) -> dict:
    doc: dict[str, Any] = {
        "seed": s.seed,
        "duration_ms": s.duration_ms,
        "municipalities": [
            {
                "network_id": m.network_id,
                "rsus": [
                    {
                        "interface_id": r.interface_id,
                        "position": list(r.position),
                        "tx_power_dbm": r.tx_power_dbm,
                        "channel": r.channel,
                        "ssid_open": r.ssid_open,
                    }
                    for r in m.rsus
                ],
            }
            for m in s.municipalities
        ],
        "vehicles": [
            {
                "mac": v.mac,
                "route_polyline": [list(p) for p in v.route_polyline],
                "speed_mps": v.speed_mps,
                "is_legit_manufacturer": v.is_legit_manufacturer,
                "start_ms": v.start_ms,
            }
            for v in s.vehicles
        ],
        "rogue_devices": [{"mac": r.mac, "position": list(r.position)} for r in s.rogue_devices],
        "path_loss": {
            "pl0_db": s.path_loss.pl0_db,
            "d0_m": s.path_loss.d0_m,
            "exponent_n": s.path_loss.exponent_n,
            "noise_sigma_db": s.path_loss.noise_sigma_db,
        },
        "classifier": {
            "min_observations": s.classifier.min_observations,
            "min_distinct_rsus": s.classifier.min_distinct_rsus,
            "speed_lo_mps": s.classifier.speed_lo_mps,
            "speed_hi_mps": s.classifier.speed_hi_mps,
            "max_speed_stddev_mps": s.classifier.max_speed_stddev_mps,
        },
        "rules": [predicate_to_dict(p) for p in s.rules.rules],
        "oui_allowlist": list(s.oui_allowlist),
        "gossip_period_ms": s.gossip_period_ms,
        "sense_period_ms": s.sense_period_ms,
        "move_period_ms": s.move_period_ms,
        "expiry_period_ms": s.expiry_period_ms,
        "cache_capacity": s.cache_capacity,
        "profile_expiry_ms": s.profile_expiry_ms,
        "retention": s.retention,
        "sensitivity_dbm": s.sensitivity_dbm,
        "vehicle_tx_power_dbm": s.vehicle_tx_power_dbm,
        "handoff_hysteresis_db": s.handoff_hysteresis_db,
        "chain_id": s.chain_id,
    }
    if s.gossip_adjacency is not None:
        doc["gossip_adjacency"] = [list(p) for p in s.gossip_adjacency]
    return doc


def serialize_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2)
