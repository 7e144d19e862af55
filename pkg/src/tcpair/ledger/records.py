"""Payload codecs for the record kinds carried on an authorization chain."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from tcpair.errors import InvalidInput
from tcpair.ledger.chain import TAG_SIZE, Block, Chain, HostIdentityTag, PayloadKind, append_block

MAC_SIZE = 6


def _pack_text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(">H", len(raw)) + raw


def _unpack_text(data: bytes, off: int) -> tuple[str, int]:
    (n,) = struct.unpack_from(">H", data, off)
    off += 2
    raw = data[off : off + n]
    if len(raw) != n:
        raise InvalidInput("truncated text field")
    return raw.decode("utf-8"), off + n


def encode_authors(authors) -> bytes:
    tags = sorted(set(authors))
    if any(len(t) != TAG_SIZE for t in tags):
        raise InvalidInput("author tags must be 16 bytes")
    return struct.pack(">H", len(tags)) + b"".join(tags)


def decode_authors(payload: bytes) -> frozenset[HostIdentityTag]:
    if not payload:
        return frozenset()
    (n,) = struct.unpack_from(">H", payload, 0)
    body = payload[2:]
    if len(body) != n * TAG_SIZE:
        raise InvalidInput("malformed author list")
    return frozenset(body[i * TAG_SIZE : (i + 1) * TAG_SIZE] for i in range(n))


def registered_authors(chain: Chain) -> frozenset[HostIdentityTag]:
    """Authors allowed to extend ``chain``; empty means unrestricted."""
    return decode_authors(chain.genesis.payload)


class AccountingKind(enum.IntEnum):
    Granted = 0
    Denied = 1
    Revoked = 2
    HandoffObserved = 3


@dataclass(frozen=True)
class AccountingEvent:
    host: HostIdentityTag
    kind: AccountingKind
    timestamp_ms: int

    def encode(self) -> bytes:
        return struct.pack(">B", int(self.kind)) + self.host + struct.pack(">Q", self.timestamp_ms)

    @classmethod
    def decode(cls, payload: bytes) -> AccountingEvent:
        if len(payload) != 1 + TAG_SIZE + 8:
            raise InvalidInput("malformed accounting event")
        kind = AccountingKind(payload[0])
        host = payload[1 : 1 + TAG_SIZE]
        (ts,) = struct.unpack_from(">Q", payload, 1 + TAG_SIZE)
        return cls(host, kind, ts)


@dataclass(frozen=True)
class AccessGrantRecord:
    host: HostIdentityTag
    granted_at_ms: int
    expires_at_ms: int

    def encode(self) -> bytes:
        return self.host + struct.pack(">QQ", self.granted_at_ms, self.expires_at_ms)

    @classmethod
    def decode(cls, payload: bytes) -> AccessGrantRecord:
        if len(payload) != TAG_SIZE + 16:
            raise InvalidInput("malformed access grant")
        g, e = struct.unpack_from(">QQ", payload, TAG_SIZE)
        return cls(payload[:TAG_SIZE], g, e)


@dataclass(frozen=True)
class RevocationRecord:
    host: HostIdentityTag
    revoked_at_ms: int

    def encode(self) -> bytes:
        return self.host + struct.pack(">Q", self.revoked_at_ms)

    @classmethod
    def decode(cls, payload: bytes) -> RevocationRecord:
        if len(payload) != TAG_SIZE + 8:
            raise InvalidInput("malformed revocation")
        (t,) = struct.unpack_from(">Q", payload, TAG_SIZE)
        return cls(payload[:TAG_SIZE], t)


@dataclass(frozen=True)
class Route:
    host: HostIdentityTag
    network_id: str
    interface_id: str
    recorded_at_ms: int

    def __post_init__(self):
        if not self.network_id or not self.interface_id:
            raise InvalidInput("route network_id and interface_id must be non-empty")

    def encode(self) -> bytes:
        return (
            self.host
            + struct.pack(">Q", self.recorded_at_ms)
            + _pack_text(self.network_id)
            + _pack_text(self.interface_id)
        )

    @classmethod
    def decode(cls, payload: bytes) -> Route:
        try:
            host = payload[:TAG_SIZE]
            (t,) = struct.unpack_from(">Q", payload, TAG_SIZE)
            net, off = _unpack_text(payload, TAG_SIZE + 8)
            iface, off = _unpack_text(payload, off)
        except (struct.error, UnicodeDecodeError) as exc:
            raise InvalidInput(f"malformed route record: {exc}") from exc
        if off != len(payload) or len(host) != TAG_SIZE:
            raise InvalidInput("malformed route record")
        return cls(host, net, iface, t)


def scan(chain: Chain, kind: PayloadKind):
    """Yield every block of ``kind`` in chain order."""
    for block in chain.blocks:
        if block.payload_kind == kind:
            yield block


def record_accounting(chain: Chain, event: AccountingEvent, author: HostIdentityTag) -> Block:
    return append_block(chain, PayloadKind.AccountingEvent, event.encode(), event.timestamp_ms, author)


def accounting_events(chain: Chain) -> list[AccountingEvent]:
    return [AccountingEvent.decode(b.payload) for b in scan(chain, PayloadKind.AccountingEvent)]
