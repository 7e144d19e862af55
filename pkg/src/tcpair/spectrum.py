"""Spectrum layer over a simulated radio environment.

Log-distance path loss with optional Gaussian shadowing, scanning, peer
supplication, trilateration, kinematics, VLAN gating and floor deduction.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from tcpair.errors import (
    DegenerateGeometry,
    InsufficientAnchors,
    InsufficientSamples,
    InvalidInput,
    NoRegisteredAps,
    NonMonotonicTime,
    NotSupplicated,
    OutOfRange,
)
from tcpair.ledger import AccessDecision
from tcpair.ledger.chain import HostIdentityTag

RSSI_MIN_DBM = -120.0
RSSI_MAX_DBM = 30.0
DEFAULT_SENSITIVITY_DBM = -95.0
SINGULAR_TOL = 1e-9

Point = tuple  # 2D or 3D coordinates in metres
NoiseSource = Callable[[], float]


@dataclass(frozen=True)
class PathLossParams:
    pl0_db: float = 40.0
    d0_m: float = 1.0
    exponent_n: float = 3.0
    noise_sigma_db: float = 0.0

    def __post_init__(self):
        if self.d0_m <= 0:
            raise InvalidInput("d0_m must be positive")
        if not 1.5 <= self.exponent_n <= 6:
            raise InvalidInput("exponent_n must lie in [1.5, 6]")
        if self.noise_sigma_db < 0:
            raise InvalidInput("noise_sigma_db must be non-negative")


class Owner(enum.Enum):
    RoadsideUnit = "RoadsideUnit"
    Vehicle = "Vehicle"
    AccessPoint = "AccessPoint"
    Device = "Device"


@dataclass(frozen=True)
class AirInterface:
    interface_id: str
    owner: Owner
    position: Point
    tx_power_dbm: float = 20.0
    channel: int = 1
    network_id: str = ""
    ssid_open: bool = True
    floor: Optional[int] = None

    def __post_init__(self):
        if self.channel < 1:
            raise InvalidInput("channel must be >= 1")
        if (self.floor is not None) != (self.owner is Owner.AccessPoint):
            raise InvalidInput("floor is set exactly for access points")
        if len(self.position) not in (2, 3):
            raise InvalidInput("position must be 2D or 3D")


@dataclass(frozen=True)
class Measurement:
    observer_id: str
    subject_id: str
    rssi_dbm: float
    channel: int
    timestamp_ms: int

    def __post_init__(self):
        if not RSSI_MIN_DBM <= self.rssi_dbm <= RSSI_MAX_DBM:
            raise InvalidInput(f"rssi {self.rssi_dbm} outside [-120, 30]")


def rssi_at(tx_power_dbm: float, params: PathLossParams, distance_m: float, noise_sample: float = 0.0) -> float:
    d = max(distance_m, params.d0_m)
    loss = params.pl0_db + 10.0 * params.exponent_n * math.log10(d / params.d0_m)
    return min(RSSI_MAX_DBM, max(RSSI_MIN_DBM, tx_power_dbm - loss + noise_sample))


def invert_rssi(rssi_dbm: float, tx_power_dbm: float, params: PathLossParams) -> float:
    return params.d0_m * 10.0 ** ((tx_power_dbm - rssi_dbm - params.pl0_db) / (10.0 * params.exponent_n))


def distance(a: Point, b: Point) -> float:
    if len(a) != len(b):
        a, b = tuple(a) + (0.0,) * (3 - len(a)), tuple(b) + (0.0,) * (3 - len(b))
    return math.dist(a, b)


def gaussian_noise(rng: np.random.Generator, sigma_db: float) -> NoiseSource:
    if sigma_db == 0:
        return lambda: 0.0
    return lambda: float(rng.normal(0.0, sigma_db))


def sense(
    observer: AirInterface,
    environment: Sequence[AirInterface],
    params: PathLossParams,
    noise: NoiseSource | None = None,
    *,
    sensitivity_dbm: float = DEFAULT_SENSITIVITY_DBM,
    timestamp_ms: int = 0,
) -> list[Measurement]:
    out = []
    for other in environment:
        if other.interface_id == observer.interface_id:
            continue
        sample = noise() if noise is not None else 0.0
        rssi = rssi_at(other.tx_power_dbm, params, distance(observer.position, other.position), sample)
        if rssi > sensitivity_dbm:
            out.append(Measurement(observer.interface_id, other.interface_id, rssi, other.channel, timestamp_ms))
    return out


class PeeringStatus(enum.Enum):
    Registered = "Registered"
    Rejected = "Rejected"


class TargetPolicy(enum.Enum):
    OpenSsid = "OpenSsid"
    Closed = "Closed"


@dataclass(frozen=True)
class PeeringState:
    client_if: str
    target_if: str
    status: PeeringStatus


def in_mutual_range(
    a: AirInterface, b: AirInterface, params: PathLossParams, sensitivity_dbm: float = DEFAULT_SENSITIVITY_DBM
) -> bool:
    d = distance(a.position, b.position)
    return rssi_at(a.tx_power_dbm, params, d) > sensitivity_dbm and rssi_at(b.tx_power_dbm, params, d) > sensitivity_dbm


def supplicate(
    client: AirInterface,
    target: AirInterface,
    target_policy: TargetPolicy,
    params: PathLossParams,
    *,
    sensitivity_dbm: float = DEFAULT_SENSITIVITY_DBM,
) -> PeeringState:
    """Register ``client`` with ``target``. This grants frame exchange only, never routing."""
    if client.interface_id == target.interface_id:
        raise InvalidInput("an interface cannot supplicate to itself")
    if not in_mutual_range(client, target, params, sensitivity_dbm):
        raise OutOfRange(f"{client.interface_id} and {target.interface_id} cannot hear each other")
    status = PeeringStatus.Registered if target_policy is TargetPolicy.OpenSsid else PeeringStatus.Rejected
    return PeeringState(client.interface_id, target.interface_id, status)


def localize(anchors: Sequence[tuple[Point, float]]) -> tuple[float, float]:
    """Linearised least-squares trilateration.

    Subtracting the first circle equation from the others gives
    2(xi-x0)x + 2(yi-y0)y = di0 terms; solved through the normal equations.
    """
    if len(anchors) < 3:
        raise InsufficientAnchors(f"need at least 3 anchors, got {len(anchors)}")
    pos = np.array([a[0][:2] for a in anchors], dtype=float)
    d = np.array([a[1] for a in anchors], dtype=float)
    x0, y0 = pos[0]
    A = 2.0 * (pos[1:] - pos[0])
    b = (d[0] ** 2 - d[1:] ** 2) + (pos[1:, 0] ** 2 - x0**2) + (pos[1:, 1] ** 2 - y0**2)
    AtA = A.T @ A
    # Scale-free singularity test: det relative to the squared Frobenius norm.
    scale = float(np.sum(AtA * AtA))
    if scale == 0.0 or abs(np.linalg.det(AtA)) / scale < SINGULAR_TOL:
        raise DegenerateGeometry("anchors are collinear or coincident")
    sol = np.linalg.solve(AtA, A.T @ b)
    return float(sol[0]), float(sol[1])


def estimate_kinematics(track: Sequence[tuple[Point, int]]) -> tuple[float, float]:
    """Mean speed (m/s) over consecutive pairs and heading (deg CCW from +x) of the last step."""
    if len(track) < 2:
        raise InsufficientSamples("need at least two samples")
    speeds = []
    for (p0, t0), (p1, t1) in zip(track, track[1:]):
        if t1 <= t0:
            raise NonMonotonicTime(f"timestamps must strictly increase ({t0} -> {t1})")
        speeds.append(distance(p0, p1) / ((t1 - t0) / 1000.0))
    (xa, ya), (xb, yb) = track[-2][0][:2], track[-1][0][:2]
    heading = math.degrees(math.atan2(yb - ya, xb - xa)) % 360.0
    return sum(speeds) / len(speeds), heading


class Vlan(enum.Enum):
    NullRoute = "NullRoute"
    Routed = "Routed"


@dataclass(frozen=True)
class VlanAssignment:
    host: HostIdentityTag
    vlan: Vlan
    assigned_at_ms: int


class VlanTable:
    """Supplicants of one serving interface and their VLAN assignments."""

    def __init__(self, interface_id: str):
        self.interface_id = interface_id
        self.assignments: dict[HostIdentityTag, VlanAssignment] = {}

    def __contains__(self, host: HostIdentityTag) -> bool:
        return host in self.assignments

    def admit(self, host: HostIdentityTag, now_ms: int) -> VlanAssignment:
        a = VlanAssignment(host, Vlan.NullRoute, now_ms)
        self.assignments[host] = a
        return a

    def release(self, host: HostIdentityTag) -> None:
        self.assignments.pop(host, None)

    def vlan_of(self, host: HostIdentityTag) -> Vlan | None:
        a = self.assignments.get(host)
        return None if a is None else a.vlan

    def set(self, host: HostIdentityTag, vlan: Vlan, now_ms: int) -> VlanAssignment:
        if host not in self.assignments:
            raise NotSupplicated(f"host {host.hex()} is not supplicated to {self.interface_id}")
        a = VlanAssignment(host, vlan, now_ms)
        self.assignments[host] = a
        return a


def assign_vlan(table: VlanTable, host: HostIdentityTag, decision: AccessDecision, now_ms: int) -> VlanAssignment:
    return table.set(host, Vlan.Routed if decision.granted else Vlan.NullRoute, now_ms)


def deduce_floor(measurements: Sequence[Measurement], ap_registry: Mapping[str, int], k: int = 3) -> int:
    """Majority floor among the k strongest registered APs; ties go to the strongest AP's floor."""
    if k < 1:
        raise ValueError("k must be positive")
    heard = [m for m in measurements if m.subject_id in ap_registry]
    if not heard:
        raise NoRegisteredAps("no measurement from a registered access point")
    heard.sort(key=lambda m: (-m.rssi_dbm, m.subject_id))
    top = heard[:k]
    counts = Counter(ap_registry[m.subject_id] for m in top)
    best = max(counts.values())
    leaders = {f for f, c in counts.items() if c == best}
    return next(ap_registry[m.subject_id] for m in top if ap_registry[m.subject_id] in leaders)
