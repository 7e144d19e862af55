"""Ready-made scenarios: a straight multi-municipality road corridor."""

from __future__ import annotations

from tcpair.identity import ClassifierParams
from tcpair.ledger import DEFAULT_RULES
from tcpair.netsim.scenario import Municipality, RogueDevice, Scenario, VehicleSpec
from tcpair.spectrum import AirInterface, Owner, PathLossParams

VEHICLE_OUI = "00:1A:2B"


def corridor(
    *,
    municipalities: int = 3,
    rsus_per_municipality: int = 3,
    spacing_m: float = 150.0,
    rsu_offset_m: float = 30.0,
    vehicles: int = 10,
    speeds=(10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 11.0, 13.0, 15.0, 17.0),
    rogues: int = 3,
    noise_sigma_db: float = 0.0,
    seed: int = 0,
    duration_ms: int | None = None,
    stagger_ms: int = 1000,
    **overrides,
) -> Scenario:
    """RSUs alternate sides of a straight road (so any three are non-collinear);
    even-numbered vehicles drive west to east, odd ones east to west; rogue
    devices sit stationary next to the first RSU of each municipality."""
    munis = []
    n = 0
    for m in range(municipalities):
        net = f"muni-{chr(ord('A') + m)}"
        rsus = []
        for j in range(rsus_per_municipality):
            y = rsu_offset_m if n % 2 == 0 else -rsu_offset_m
            rsus.append(AirInterface(f"rsu-{net[-1]}{j + 1}", Owner.RoadsideUnit, (n * spacing_m, y), 20.0, 1, net))
            n += 1
        munis.append(Municipality(net, tuple(rsus)))
    west, east = -100.0, (n - 1) * spacing_m + 100.0
    vs = []
    for i in range(vehicles):
        route = ((west, 0.0), (east, 0.0)) if i % 2 == 0 else ((east, 0.0), (west, 0.0))
        vs.append(VehicleSpec(f"{VEHICLE_OUI}:00:00:{i + 1:02X}", route, speeds[i % len(speeds)], True, i * stagger_ms))
    rs = []
    for i in range(rogues):
        x = (i % municipalities) * rsus_per_municipality * spacing_m + spacing_m + 10.0
        rs.append(RogueDevice(f"AA:BB:CC:00:00:{i + 1:02X}", (x, 10.0)))
    if duration_ms is None:
        slowest = min(speeds[i % len(speeds)] for i in range(max(vehicles, 1)))
        duration_ms = int((east - west) / slowest * 1000) + vehicles * stagger_ms + 5000
    params = dict(
        duration_ms=duration_ms,
        municipalities=tuple(munis),
        seed=seed,
        vehicles=tuple(vs),
        rogue_devices=tuple(rs),
        path_loss=PathLossParams(40.0, 1.0, 3.0, noise_sigma_db),
        classifier=ClassifierParams(),
        rules=DEFAULT_RULES,
        oui_allowlist=(VEHICLE_OUI,),
    )
    params.update(overrides)
    return Scenario(**params)
