"""Tip exchange, block fetch and fork resolution between ledger replicas."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from tcpair.errors import GenesisMismatch, InvalidInput
from tcpair.ledger.chain import Block, Chain, Digest, HostIdentityTag, check_block, resolve_fork, verify_chain
from tcpair.ledger.records import registered_authors
from tcpair.ledger.store import Ledger

Snapshot = Mapping[str, Sequence[Block]]
FetchPlan = list[tuple[str, int]]


def snapshot(ledger: Ledger) -> dict[str, tuple[Block, ...]]:
    return {cid: tuple(c.blocks) for cid, c in ledger.chains.items() if c.blocks}


def snapshot_tips(snap: Snapshot) -> dict[str, tuple[int, Digest]]:
    return {cid: (blocks[-1].height, blocks[-1].digest) for cid, blocks in snap.items() if blocks}


def sync_peer(local: Ledger, remote_tips: Mapping[str, tuple[int, Digest]]) -> FetchPlan:
    plan = []
    for cid in sorted(remote_tips):
        r_height, r_digest = remote_tips[cid]
        chain = local.chains.get(cid)
        if chain is None or not chain.blocks:
            plan.append((cid, 0))
            continue
        tip = chain.tip
        if r_height > tip.height:
            plan.append((cid, tip.height + 1))
        elif r_height == tip.height and r_digest != tip.digest:
            plan.append((cid, 0))
    return plan


@dataclass
class PullResult:
    extended: list[str] = field(default_factory=list)
    replaced: list[str] = field(default_factory=list)
    rejected: list[str] = field(default_factory=list)
    orphans: list[Block] = field(default_factory=list)
    reappended: list[Block] = field(default_factory=list)

    @property
    def changed(self) -> bool:
        return bool(self.extended or self.replaced)


def _authors_ok(blocks: Iterable[Block], authors: frozenset) -> bool:
    return not authors or all(b.header.author in authors for b in blocks)


def _try_extend(chain: Chain, suffix: Sequence[Block]) -> bool:
    prev = chain.tip
    for block in suffix:
        if check_block(block, prev, prev.height + 1, chain.chain_id) is not None:
            return False
        prev = block
    if not _authors_ok(suffix, registered_authors(chain)):
        return False
    chain.blocks.extend(suffix)
    return True


def pull(
    local: Ledger,
    remote: Snapshot,
    *,
    self_tag: HostIdentityTag | None = None,
    now_ms: int | None = None,
) -> PullResult:
    """Fetch what ``remote`` has that ``local`` lacks and apply fork choice.

    When a remote chain wins, blocks this node authored that fell off its old
    branch are re-appended on the new tip (needs ``self_tag`` and ``now_ms``).
    """
    result = PullResult()
    for cid, from_height in sync_peer(local, snapshot_tips(remote)):
        remote_blocks = remote[cid]
        chain = local.chains.get(cid)
        if chain is not None and from_height > 0:
            if _try_extend(chain, remote_blocks[from_height:]):
                local._refresh(cid)
                result.extended.append(cid)
                continue
        candidate = Chain(cid, list(remote_blocks))
        if chain is None:
            if verify_chain(candidate) and _authors_ok(candidate.blocks[1:], registered_authors(candidate)):
                local.install(candidate)
                result.replaced.append(cid)
            else:
                result.rejected.append(cid)
            continue
        try:
            winner = resolve_fork(chain, candidate)
        except (InvalidInput, GenesisMismatch):
            result.rejected.append(cid)
            continue
        if winner is chain or not _authors_ok(candidate.blocks[1:], registered_authors(candidate)):
            continue
        kept = {b.digest for b in candidate.blocks}
        orphans = [b for b in chain.blocks if b.digest not in kept]
        local.install(candidate)
        result.replaced.append(cid)
        result.orphans.extend(orphans)
        if self_tag is None or now_ms is None:
            continue
        for block in orphans:
            if block.header.author != self_tag:
                continue
            if local.has_record(cid, block.payload_kind, block.payload):
                continue
            ts = max(now_ms, candidate.tip.timestamp_ms)
            result.reappended.append(local.append(cid, block.payload_kind, block.payload, ts, self_tag))
    return result


def gossip_round(
    ledgers: Mapping[str, Ledger],
    adjacency: Mapping[str, Iterable[str]],
    *,
    authors: Mapping[str, HostIdentityTag] | None = None,
    now_ms: int | None = None,
) -> dict[str, PullResult]:
    """One synchronous round: every node pulls from each neighbour's state as of round start."""
    snaps = {node: snapshot(ledger) for node, ledger in ledgers.items()}
    authors = authors or {}
    results = {}
    for node in sorted(ledgers):
        merged = PullResult()
        for peer in sorted(adjacency.get(node, ())):
            r = pull(ledgers[node], snaps[peer], self_tag=authors.get(node), now_ms=now_ms)
            merged.extended += r.extended
            merged.replaced += r.replaced
            merged.rejected += r.rejected
            merged.orphans += r.orphans
            merged.reappended += r.reappended
        results[node] = merged
    return results
