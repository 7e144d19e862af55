"""Emergency-location floor scenario: access points stacked in a building."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from tcpair.errors import InvalidInput, NoRegisteredAps, ParseError, ValidationError
from tcpair.netsim.scenario import _check_keys, _int, _join, _list, _num, _path_loss, _point, _str
from tcpair.spectrum import (
    DEFAULT_SENSITIVITY_DBM,
    AirInterface,
    Owner,
    PathLossParams,
    deduce_floor,
    gaussian_noise,
    sense,
)


@dataclass(frozen=True)
class FloorConfig:
    aps: tuple[AirInterface, ...]
    device_position: tuple[float, float]
    device_floor: int
    k: int = 3
    floor_height_m: float = 3.0
    # overrides device_floor * floor_height_m when set
    device_z_m: Optional[float] = None
    device_tx_power_dbm: float = 20.0
    path_loss: PathLossParams = PathLossParams()
    sensitivity_dbm: float = DEFAULT_SENSITIVITY_DBM
    seed: int = 0
    trials: int = 1

    def registry(self) -> dict[str, int]:
        return {ap.interface_id: ap.floor for ap in self.aps}


def building(
    floors: int,
    *,
    ap_xy=(0.0, 0.0),
    tx_power_dbm: float = 20.0,
    device_xy=(2.0, 0.0),
    device_floor: int = 1,
    **kwargs,
) -> FloorConfig:
    """One AP per floor (floors numbered from 1), all at the same plan position."""
    aps = tuple(
        AirInterface(f"ap-{f}", Owner.AccessPoint, tuple(ap_xy), tx_power_dbm, floor=f) for f in range(1, floors + 1)
    )
    return FloorConfig(aps, tuple(device_xy), device_floor, **kwargs)


def _ap_3d(ap: AirInterface, h: float) -> AirInterface:
    x, y = ap.position[:2]
    return AirInterface(ap.interface_id, ap.owner, (x, y, ap.floor * h), ap.tx_power_dbm, ap.channel, floor=ap.floor)


def run_floor_scenario(config: FloorConfig, noise=None) -> int:
    h = config.floor_height_m
    z = config.device_z_m if config.device_z_m is not None else config.device_floor * h
    device = AirInterface("device", Owner.Device, (*config.device_position, z), config.device_tx_power_dbm)
    aps = [_ap_3d(ap, h) for ap in config.aps]
    measurements = sense(device, aps, config.path_loss, noise, sensitivity_dbm=config.sensitivity_dbm)
    if not measurements:
        raise NoRegisteredAps("no registered access point in range")
    return deduce_floor(measurements, config.registry(), config.k)


def floor_accuracy(config: FloorConfig, trials: int | None = None, seed: int | None = None) -> float:
    """Fraction of seeded trials in which the deduced floor equals ``device_floor``."""
    trials = config.trials if trials is None else trials
    rng = np.random.default_rng(config.seed if seed is None else seed)
    noise = gaussian_noise(rng, config.path_loss.noise_sigma_db)
    hits = sum(run_floor_scenario(config, noise) == config.device_floor for _ in range(trials))
    return hits / trials


def floor_config_from_dict(doc: Any) -> FloorConfig:
    optional = {
        "k", "floor_height_m", "device_z_m", "device_tx_power_dbm", "path_loss", "sensitivity_dbm", "seed", "trials",
    }
    d = _check_keys(doc, "", {"aps", "device_position", "device_floor"}, optional)
    aps = []
    for i, a in enumerate(_list(d["aps"], "aps")):
        p = f"aps[{i}]"
        ad = _check_keys(a, p, {"interface_id", "position", "floor"}, {"tx_power_dbm", "channel"})
        try:
            aps.append(
                AirInterface(
                    _str(ad["interface_id"], _join(p, "interface_id")),
                    Owner.AccessPoint,
                    _point(ad["position"], _join(p, "position")),
                    _num(ad.get("tx_power_dbm", 20.0), _join(p, "tx_power_dbm")),
                    _int(ad.get("channel", 1), _join(p, "channel")),
                    floor=_int(ad["floor"], _join(p, "floor")),
                )
            )
        except InvalidInput as exc:
            raise ValidationError(p, str(exc)) from None
    if not aps:
        raise ValidationError("aps", "at least one access point is required")
    if len({a.interface_id for a in aps}) != len(aps):
        raise ValidationError("aps", "duplicate interface_id")
    cfg = FloorConfig(
        aps=tuple(aps),
        device_position=_point(d["device_position"], "device_position"),
        device_floor=_int(d["device_floor"], "device_floor"),
        k=_int(d.get("k", 3), "k"),
        floor_height_m=_num(d.get("floor_height_m", 3.0), "floor_height_m"),
        device_z_m=None if d.get("device_z_m") is None else _num(d["device_z_m"], "device_z_m"),
        device_tx_power_dbm=_num(d.get("device_tx_power_dbm", 20.0), "device_tx_power_dbm"),
        path_loss=_path_loss(d["path_loss"], "path_loss") if "path_loss" in d else PathLossParams(),
        sensitivity_dbm=_num(d.get("sensitivity_dbm", DEFAULT_SENSITIVITY_DBM), "sensitivity_dbm"),
        seed=_int(d.get("seed", 0), "seed"),
        trials=_int(d.get("trials", 1), "trials"),
    )
    if cfg.k < 1:
        raise ValidationError("k", "must be positive")
    if cfg.trials < 1:
        raise ValidationError("trials", "must be positive")
    if cfg.floor_height_m <= 0:
        raise ValidationError("floor_height_m", "must be positive")
    return cfg


def parse_floor_config(text: str) -> FloorConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("", f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    return floor_config_from_dict(doc)
