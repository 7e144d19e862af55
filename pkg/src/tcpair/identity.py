"""Identity layer: host identities from DH key material, behaviour profiling,
the autonomous access pipeline and profile expiry."""

from __future__ import annotations

import hashlib
import math
import statistics
import struct
from dataclasses import dataclass, replace
from typing import MutableMapping, Optional

from tcpair.errors import (
    GroupMismatch,
    HostMismatch,
    InvalidGroup,
    InvalidInput,
    InvalidPublicKey,
    NoContractOnChain,
)
from tcpair.ledger import (
    AccessDecision,
    AccessGrantRecord,
    AccountingEvent,
    AccountingKind,
    EvalContext,
    Ledger,
    MobilityClass,
    PayloadKind,
    RevocationRecord,
    Route,
    RuleSet,
    evaluate_contract,
    record_route,
)
from tcpair.ledger.chain import Chain, HostIdentityTag, append_block
from tcpair.rng import SplitMix64

TAG_SIZE = 16
MAC_SIZE = 6


@dataclass(frozen=True)
class DhGroup:
    prime_p: int
    generator_g: int

    def __post_init__(self):
        if self.prime_p < 5:
            raise InvalidGroup(f"prime {self.prime_p} too small")
        if not 2 <= self.generator_g <= self.prime_p - 2:
            raise InvalidGroup(f"generator {self.generator_g} outside [2, p-2]")


# Small safe primes with primitive-root generators; for tests and desk-scale runs.
TEST_GROUP = DhGroup(23, 5)
SMALL_SAFE_GROUPS = (DhGroup(23, 5), DhGroup(47, 5), DhGroup(59, 2), DhGroup(83, 2), DhGroup(107, 2))
# Largest safe prime below 2**64; 2 generates the full multiplicative group.
SIM_GROUP = DhGroup(0xFFFFFFFFFFFFFA43, 2)


@dataclass(frozen=True)
class KeyPair:
    private_key: int
    public_key: int
    group: DhGroup


def keypair_from_private(private_key: int, group: DhGroup) -> KeyPair:
    if not 1 <= private_key <= group.prime_p - 2:
        raise InvalidInput("private key outside [1, p-2]")
    return KeyPair(private_key, pow(group.generator_g, private_key, group.prime_p), group)


def _public_ok(public: int, group: DhGroup) -> bool:
    return 2 <= public <= group.prime_p - 2


def generate_keypair(seed: int, group: DhGroup) -> KeyPair:
    """Deterministic keypair: private key uniform over [1, p-2] from SplitMix64(seed).

    Draws that land on a degenerate public value (1 or p-1) are redrawn so
    every generated key is accepted by :func:`dh_shared_secret`.
    """
    if not isinstance(group, DhGroup):
        raise InvalidGroup("group must be a DhGroup")
    rng = SplitMix64(seed)
    for _ in range(1024):
        kp = keypair_from_private(1 + rng.randbelow(group.prime_p - 2), group)
        if _public_ok(kp.public_key, group):
            return kp
    raise InvalidGroup("group yields no usable public keys")


def dh_shared_secret(own: KeyPair, peer_public: int, peer_group: DhGroup | None = None) -> int:
    group = own.group
    if peer_group is not None and peer_group != group:
        raise GroupMismatch("peer key is from a different group")
    if not _public_ok(peer_public, group):
        raise InvalidPublicKey(f"peer public key {peer_public} outside [2, p-2]")
    return pow(peer_public, own.private_key, group.prime_p)


def _limbs(x: int) -> bytes:
    # Minimal count of 8-byte big-endian limbs, prefixed by that count (2 bytes).
    n = max(1, math.ceil(x.bit_length() / 64))
    return struct.pack(">H", n) + x.to_bytes(8 * n, "big")


def encode_public_key(public_key: int, group: DhGroup) -> bytes:
    return _limbs(group.prime_p) + _limbs(group.generator_g) + _limbs(public_key)


def derive_host_tag(public_key: int, group: DhGroup) -> HostIdentityTag:
    if not _public_ok(public_key, group):
        raise InvalidPublicKey(f"public key {public_key} outside [2, p-2]")
    return hashlib.sha256(encode_public_key(public_key, group)).digest()[:TAG_SIZE]


def parse_mac(text: str) -> bytes:
    parts = text.replace("-", ":").split(":")
    if len(parts) != MAC_SIZE or not all(len(p) == 2 for p in parts):
        raise ValueError(f"invalid MAC address {text!r}")
    return bytes(int(p, 16) for p in parts)


def format_mac(mac: bytes) -> str:
    return ":".join(f"{b:02X}" for b in mac)


def parse_oui(text: str) -> bytes:
    parts = text.replace("-", ":").split(":")
    if len(parts) != 3 or not all(len(p) == 2 for p in parts):
        raise ValueError(f"invalid OUI {text!r}")
    return bytes(int(p, 16) for p in parts)


def check_manufacturer(mac: bytes, oui_allowlist) -> bool:
    return bytes(mac[:3]) in oui_allowlist


@dataclass(frozen=True)
class Observation:
    host: HostIdentityTag
    mac: bytes
    rsu_id: str
    rssi_dbm: float
    position_estimate: Optional[tuple[float, float]]
    timestamp_ms: int

    def __post_init__(self):
        if not -120.0 <= self.rssi_dbm <= 30.0:
            raise InvalidInput(f"rssi {self.rssi_dbm} dBm outside [-120, 30]")


@dataclass(frozen=True)
class ClassifierParams:
    min_observations: int = 5
    min_distinct_rsus: int = 3
    speed_lo_mps: float = 1.0
    speed_hi_mps: float = 60.0
    max_speed_stddev_mps: float = 15.0


DEFAULT_PROFILE_EXPIRY_MS = 3_600_000


@dataclass(frozen=True)
class BehaviorProfile:
    host: HostIdentityTag
    mac: bytes
    created_at_ms: int
    expires_at_ms: int
    observations: tuple[Observation, ...] = ()
    distinct_rsus: frozenset[str] = frozenset()
    speed_samples_mps: tuple[float, ...] = ()
    mobility_class: MobilityClass = MobilityClass.Unknown

    def __post_init__(self):
        if self.expires_at_ms <= self.created_at_ms:
            raise InvalidInput("profile must expire after creation")

    @classmethod
    def new(cls, host, mac, now_ms: int, expiry_ms: int = DEFAULT_PROFILE_EXPIRY_MS) -> BehaviorProfile:
        return cls(host, bytes(mac), now_ms, now_ms + expiry_ms)


def ingest_observation(profile: BehaviorProfile, obs: Observation, retention: int) -> BehaviorProfile:
    if obs.host != profile.host:
        raise HostMismatch("observation belongs to another host")
    if retention < 1:
        raise ValueError("retention must be positive")
    speeds = profile.speed_samples_mps
    if profile.observations:
        prev = profile.observations[-1]
        dt = obs.timestamp_ms - prev.timestamp_ms
        if prev.position_estimate is not None and obs.position_estimate is not None and dt > 0:
            dist = math.dist(prev.position_estimate, obs.position_estimate)
            speeds = (speeds + (dist / (dt / 1000.0),))[-retention:]
    observations = (profile.observations + (obs,))[-retention:]
    return replace(
        profile,
        observations=observations,
        distinct_rsus=frozenset(o.rsu_id for o in observations),
        speed_samples_mps=speeds,
    )


def classify_mobility(profile: BehaviorProfile, params: ClassifierParams = ClassifierParams()) -> MobilityClass:
    # A profile without speed samples has no kinematics to judge; stays Unknown.
    if len(profile.observations) < params.min_observations or not profile.speed_samples_mps:
        return MobilityClass.Unknown
    mean = statistics.fmean(profile.speed_samples_mps)
    sd = statistics.pstdev(profile.speed_samples_mps)
    if mean < params.speed_lo_mps:
        return MobilityClass.Stationary
    if mean > params.speed_hi_mps or sd > params.max_speed_stddev_mps:
        return MobilityClass.Anomalous
    if len(profile.distinct_rsus) >= params.min_distinct_rsus:
        return MobilityClass.Vehicle
    return MobilityClass.Unknown


def reclassify(profile: BehaviorProfile, params: ClassifierParams = ClassifierParams()) -> BehaviorProfile:
    cls = classify_mobility(profile, params)
    return profile if cls is profile.mobility_class else replace(profile, mobility_class=cls)


def encode_identity_record(profile: BehaviorProfile) -> bytes:
    order = list(MobilityClass)
    return (
        profile.host
        + profile.mac
        + struct.pack(">QQB", profile.created_at_ms, profile.expires_at_ms, order.index(profile.mobility_class))
    )


def decode_identity_record(payload: bytes) -> tuple[bytes, bytes, int, int, MobilityClass]:
    if len(payload) != TAG_SIZE + MAC_SIZE + 17:
        raise InvalidInput("malformed identity record")
    created, expires, cls = struct.unpack_from(">QQB", payload, TAG_SIZE + MAC_SIZE)
    return payload[:TAG_SIZE], payload[TAG_SIZE : TAG_SIZE + MAC_SIZE], created, expires, list(MobilityClass)[cls]


def current_rules(chain: Chain) -> RuleSet:
    for block in reversed(chain.blocks):
        if block.payload_kind == PayloadKind.ContractRules:
            return RuleSet.decode(block.payload)
    raise NoContractOnChain(f"chain {chain.chain_id!r} carries no ContractRules block")


def run_access_pipeline(
    profile: BehaviorProfile,
    context: EvalContext,
    ledger: Ledger,
    authorization_chain_id: str,
    *,
    author: HostIdentityTag,
    network_id: str,
    interface_id: str,
) -> AccessDecision:
    """Evaluate the on-chain rules for ``profile`` and record the outcome.

    Grant appends an IdentityRecord, one AccessGrant and one RouteRecord block
    and updates the route store; Deny appends one Denied accounting event.
    """
    chain = ledger.chain(authorization_chain_id)
    rules = current_rules(chain)
    decision = evaluate_contract(rules, profile, context)
    now = max(context.now_ms, chain.tip.timestamp_ms)
    cid = authorization_chain_id
    if decision.granted:
        ledger.append(cid, PayloadKind.IdentityRecord, encode_identity_record(profile), now, author)
        grant = AccessGrantRecord(profile.host, context.now_ms, profile.expires_at_ms)
        ledger.append(cid, PayloadKind.AccessGrant, grant.encode(), now, author)
        route = Route(profile.host, network_id, interface_id, context.now_ms)
        ledger.append(cid, PayloadKind.RouteRecord, route.encode(), now, author)
        record_route(ledger, route)
    else:
        event = AccountingEvent(profile.host, AccountingKind.Denied, now)
        ledger.append(cid, PayloadKind.AccountingEvent, event.encode(), now, author)
    return decision


def prune_expired(
    store: MutableMapping[HostIdentityTag, BehaviorProfile],
    now_ms: int,
    chain: Chain,
    author: HostIdentityTag,
) -> list[HostIdentityTag]:
    pruned = sorted(tag for tag, p in store.items() if p.expires_at_ms <= now_ms)
    ts = max(now_ms, chain.tip.timestamp_ms)
    for tag in pruned:
        del store[tag]
        append_block(chain, PayloadKind.AccessRevocation, RevocationRecord(tag, now_ms).encode(), ts, author)
    return pruned
