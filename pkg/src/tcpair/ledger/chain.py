"""Hash-linked blocks: canonical serialization, chaining, verification, fork choice."""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field

from tcpair.errors import EmptyChain, GenesisMismatch, InvalidInput, StaleTimestamp

DIGEST_SIZE = 32
TAG_SIZE = 16
ZERO_DIGEST = bytes(DIGEST_SIZE)
ZERO_TAG = bytes(TAG_SIZE)

Digest = bytes
HostIdentityTag = bytes


class PayloadKind(enum.IntEnum):
    Genesis = 0
    IdentityRecord = 1
    AccessGrant = 2
    AccessRevocation = 3
    AccountingEvent = 4
    RouteRecord = 5
    ContractRules = 6


@dataclass(frozen=True)
class BlockHeader:
    chain_id: str
    height: int
    timestamp_ms: int
    prev_digest: Digest
    author: HostIdentityTag

    def __post_init__(self):
        if self.height < 0 or self.timestamp_ms < 0:
            raise InvalidInput("height and timestamp_ms must be non-negative")
        if len(self.prev_digest) != DIGEST_SIZE:
            raise InvalidInput("prev_digest must be 32 bytes")
        if len(self.author) != TAG_SIZE:
            raise InvalidInput("author tag must be 16 bytes")


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    payload_kind: PayloadKind
    payload: bytes
    digest: Digest

    @property
    def height(self) -> int:
        return self.header.height

    @property
    def timestamp_ms(self) -> int:
        return self.header.timestamp_ms


def serialize(header: BlockHeader, payload_kind: int, payload: bytes) -> bytes:
    cid = header.chain_id.encode("utf-8")
    return b"".join(
        (
            struct.pack(">H", len(cid)),
            cid,
            struct.pack(">QQ", header.height, header.timestamp_ms),
            header.prev_digest,
            header.author,
            struct.pack(">B", int(payload_kind)),
            struct.pack(">I", len(payload)),
            payload,
        )
    )


def hash_block(header: BlockHeader, payload_kind: int, payload: bytes) -> Digest:
    return hashlib.sha256(serialize(header, payload_kind, payload)).digest()


def encode_block(block: Block) -> bytes:
    """Wire form of a block: canonical serialization followed by its digest."""
    return serialize(block.header, block.payload_kind, block.payload) + block.digest


def decode_block(data: bytes) -> Block:
    try:
        (n,) = struct.unpack_from(">H", data, 0)
        off = 2
        chain_id = data[off : off + n].decode("utf-8")
        off += n
        height, ts = struct.unpack_from(">QQ", data, off)
        off += 16
        prev = data[off : off + DIGEST_SIZE]
        off += DIGEST_SIZE
        author = data[off : off + TAG_SIZE]
        off += TAG_SIZE
        kind = PayloadKind(data[off])
        off += 1
        (plen,) = struct.unpack_from(">I", data, off)
        off += 4
        payload = data[off : off + plen]
        off += plen
        digest = data[off:]
    except (struct.error, IndexError, ValueError, UnicodeDecodeError) as exc:
        raise InvalidInput(f"malformed block encoding: {exc}") from exc
    if len(payload) != plen or len(digest) != DIGEST_SIZE:
        raise InvalidInput("malformed block encoding: truncated")
    header = BlockHeader(chain_id, height, ts, prev, author)
    return Block(header, kind, payload, digest)


def make_block(header: BlockHeader, payload_kind: PayloadKind, payload: bytes) -> Block:
    payload = bytes(payload)
    return Block(header, PayloadKind(payload_kind), payload, hash_block(header, payload_kind, payload))


@dataclass
class Chain:
    chain_id: str
    blocks: list[Block] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def tip(self) -> Block:
        if not self.blocks:
            raise EmptyChain(f"chain {self.chain_id!r} has no genesis")
        return self.blocks[-1]

    @property
    def genesis(self) -> Block:
        if not self.blocks:
            raise EmptyChain(f"chain {self.chain_id!r} has no genesis")
        return self.blocks[0]

    def copy(self) -> Chain:
        return Chain(self.chain_id, list(self.blocks))


def new_chain(
    chain_id: str, author: HostIdentityTag, genesis_payload: bytes = b"", timestamp_ms: int = 0
) -> Chain:
    header = BlockHeader(chain_id, 0, timestamp_ms, ZERO_DIGEST, author)
    return Chain(chain_id, [make_block(header, PayloadKind.Genesis, genesis_payload)])


def append_block(
    chain: Chain,
    payload_kind: PayloadKind,
    payload: bytes,
    timestamp_ms: int,
    author: HostIdentityTag,
) -> Block:
    tip = chain.tip
    if payload_kind == PayloadKind.Genesis:
        raise InvalidInput("Genesis payload only allowed at height 0")
    if timestamp_ms < tip.timestamp_ms:
        raise StaleTimestamp(f"timestamp {timestamp_ms} earlier than tip {tip.timestamp_ms}")
    header = BlockHeader(chain.chain_id, tip.height + 1, timestamp_ms, tip.digest, author)
    block = make_block(header, payload_kind, payload)
    chain.blocks.append(block)
    return block


class Failure(enum.Enum):
    DigestMismatch = "DigestMismatch"
    LinkMismatch = "LinkMismatch"
    HeightMismatch = "HeightMismatch"
    ChainIdMismatch = "ChainIdMismatch"
    TimestampRegression = "TimestampRegression"
    GenesisMisplaced = "GenesisMisplaced"
    EmptyChain = "EmptyChain"


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    first_bad_height: int | None = None
    reason: Failure | None = None

    def __bool__(self) -> bool:
        return self.valid


VALID = ValidationReport(True)


def check_block(block: Block, prev: Block | None, height: int, chain_id: str) -> Failure | None:
    """Return the first rule ``block`` breaks at position ``height``, if any."""
    h = block.header
    if hash_block(h, block.payload_kind, block.payload) != block.digest:
        return Failure.DigestMismatch
    expected_prev = ZERO_DIGEST if prev is None else prev.digest
    if h.prev_digest != expected_prev:
        return Failure.LinkMismatch
    if h.height != height:
        return Failure.HeightMismatch
    if h.chain_id != chain_id:
        return Failure.ChainIdMismatch
    if (block.payload_kind == PayloadKind.Genesis) != (height == 0):
        return Failure.GenesisMisplaced
    if prev is not None and h.timestamp_ms < prev.header.timestamp_ms:
        return Failure.TimestampRegression
    return None


def verify_chain(chain: Chain) -> ValidationReport:
    if not chain.blocks:
        return ValidationReport(False, 0, Failure.EmptyChain)
    prev = None
    for i, block in enumerate(chain.blocks):
        failure = check_block(block, prev, i, chain.chain_id)
        if failure is not None:
            return ValidationReport(False, i, failure)
        prev = block
    return VALID


def resolve_fork(local: Chain, remote: Chain) -> Chain:
    """Longest chain wins; equal lengths go to the lexicographically smaller tip digest."""
    if local.chain_id != remote.chain_id:
        raise InvalidInput("chains have different chain_id")
    for name, c in (("local", local), ("remote", remote)):
        report = verify_chain(c)
        if not report:
            raise InvalidInput(f"{name} chain invalid at height {report.first_bad_height}: {report.reason.value}")
    if local.genesis.digest != remote.genesis.digest:
        raise GenesisMismatch("chains do not share a genesis block")
    if len(local) != len(remote):
        return local if len(local) > len(remote) else remote
    return local if local.tip.digest <= remote.tip.digest else remote
