"""LRU block cache."""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Optional

from tcpair.errors import NotFound
from tcpair.ledger.chain import Block, Digest

BlockLoader = Callable[[Digest], Optional[Block]]


class BlockCache:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("cache capacity must be positive")
        self.capacity = capacity
        self.entries: OrderedDict[Digest, Block] = OrderedDict()
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, digest: Digest) -> bool:
        return digest in self.entries

    def clear(self) -> None:
        self.entries.clear()


def cache_access(cache: BlockCache, digest: Digest, loader: BlockLoader) -> Block:
    block = cache.entries.get(digest)
    if block is not None:
        cache.entries.move_to_end(digest)
        cache.hits += 1
        return block
    cache.misses += 1
    block = loader(digest)
    if block is None:
        raise NotFound(f"block {digest.hex()} not found")
    if len(cache.entries) >= cache.capacity:
        cache.entries.popitem(last=False)
        cache.evictions += 1
    cache.entries[digest] = block
    return block
