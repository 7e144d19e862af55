"""A node's ledger replica: chains, route store, block cache and lookup indexes."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from tcpair.errors import InvalidInput, NotFound
from tcpair.ledger.cache import BlockCache, cache_access
from tcpair.ledger.chain import Block, Chain, Digest, HostIdentityTag, PayloadKind, append_block
from tcpair.ledger.records import AccessGrantRecord, RevocationRecord, Route, registered_authors


class GrantState(enum.Enum):
    Absent = "Absent"
    Active = "Active"
    Revoked = "Revoked"
    Expired = "Expired"


def record_key(kind: PayloadKind, payload: bytes) -> tuple[int, bytes]:
    return int(kind), payload


@dataclass
class _ChainIndex:
    chain: Chain
    upto: int = 0
    digests: dict[Digest, int] = field(default_factory=dict)
    records: set = field(default_factory=set)
    # latest AccessGrant / AccessRevocation block per host
    access: dict[HostIdentityTag, Block] = field(default_factory=dict)


class Ledger:
    def __init__(self, cache_capacity: int = 64):
        self.chains: dict[str, Chain] = {}
        self.route_store: dict[HostIdentityTag, Route] = {}
        self.cache = BlockCache(cache_capacity)
        self._index: dict[str, _ChainIndex] = {}

    def install(self, chain: Chain) -> None:
        """Adopt ``chain`` (replacing any chain with the same id)."""
        self.chains[chain.chain_id] = chain
        self._index.pop(chain.chain_id, None)
        self._refresh(chain.chain_id)

    def chain(self, chain_id: str) -> Chain:
        try:
            return self.chains[chain_id]
        except KeyError:
            raise NotFound(f"no chain {chain_id!r}") from None

    def tips(self) -> dict[str, tuple[int, Digest]]:
        return {cid: (c.tip.height, c.tip.digest) for cid, c in self.chains.items() if c.blocks}

    def append(
        self, chain_id: str, kind: PayloadKind, payload: bytes, timestamp_ms: int, author: HostIdentityTag
    ) -> Block:
        chain = self.chain(chain_id)
        authors = registered_authors(chain)
        if authors and author not in authors:
            raise InvalidInput(f"author {author.hex()} is not registered on {chain_id!r}")
        block = append_block(chain, kind, payload, timestamp_ms, author)
        self._refresh(chain_id)
        return block

    def _refresh(self, chain_id: str) -> _ChainIndex:
        # Incremental: picks up blocks appended directly to the Chain object too.
        chain = self.chains[chain_id]
        idx = self._index.get(chain_id)
        if idx is None or idx.chain is not chain or idx.upto > len(chain.blocks):
            idx = _ChainIndex(chain)
            self._index[chain_id] = idx
        for block in chain.blocks[idx.upto :]:
            idx.digests[block.digest] = block.height
            idx.records.add(record_key(block.payload_kind, block.payload))
            if block.payload_kind == PayloadKind.AccessGrant:
                idx.access[block.payload[:16]] = block
            elif block.payload_kind == PayloadKind.AccessRevocation:
                idx.access[block.payload[:16]] = block
            elif block.payload_kind == PayloadKind.RouteRecord:
                record_route(self, Route.decode(block.payload))
        idx.upto = len(chain.blocks)
        return idx

    def has_digest(self, chain_id: str, digest: Digest) -> bool:
        if chain_id not in self.chains:
            return False
        return digest in self._refresh(chain_id).digests

    def has_record(self, chain_id: str, kind: PayloadKind, payload: bytes) -> bool:
        if chain_id not in self.chains:
            return False
        return record_key(kind, payload) in self._refresh(chain_id).records

    def _load(self, digest: Digest) -> Block | None:
        for cid in sorted(self.chains):
            h = self._refresh(cid).digests.get(digest)
            if h is not None:
                return self.chains[cid].blocks[h]
        return None

    def get_block(self, digest: Digest) -> Block:
        return cache_access(self.cache, digest, self._load)

    def grant_state(
        self, host: HostIdentityTag, chain_id: str, now_ms: int
    ) -> tuple[GrantState, AccessGrantRecord | None]:
        if chain_id not in self.chains:
            return GrantState.Absent, None
        latest = self._refresh(chain_id).access.get(host)
        if latest is None:
            return GrantState.Absent, None
        block = self.get_block(latest.digest)
        if block.payload_kind == PayloadKind.AccessRevocation:
            RevocationRecord.decode(block.payload)
            return GrantState.Revoked, None
        grant = AccessGrantRecord.decode(block.payload)
        if grant.expires_at_ms <= now_ms:
            return GrantState.Expired, grant
        return GrantState.Active, grant


def record_route(ledger: Ledger, route: Route) -> None:
    current = ledger.route_store.get(route.host)
    if current is not None and current.recorded_at_ms > route.recorded_at_ms:
        return
    ledger.route_store[route.host] = route


def lookup_route(ledger: Ledger, host: HostIdentityTag) -> Route:
    try:
        return ledger.route_store[host]
    except KeyError:
        raise NotFound(f"no route for host {host.hex()}") from None
