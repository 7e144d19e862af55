"""Ledger layer: block store, route store, block cache, distribution, contracts, accounting."""

from tcpair.ledger.cache import BlockCache, cache_access
from tcpair.ledger.chain import (
    DIGEST_SIZE,
    TAG_SIZE,
    ZERO_DIGEST,
    ZERO_TAG,
    VALID,
    Block,
    BlockHeader,
    Chain,
    Failure,
    PayloadKind,
    ValidationReport,
    append_block,
    decode_block,
    encode_block,
    hash_block,
    make_block,
    check_block,
    new_chain,
    resolve_fork,
    serialize,
    verify_chain,
)
from tcpair.ledger.contract import (
    DEFAULT_RULES,
    AccessDecision,
    EvalContext,
    MinObservations,
    MobilityClass,
    MobilityClassIs,
    OuiAllowed,
    ProfileNotExpired,
    RuleSet,
    SpeedWithin,
    Verdict,
    evaluate_contract,
)
from tcpair.ledger.gossip import PullResult, gossip_round, pull, snapshot, snapshot_tips, sync_peer
from tcpair.ledger.records import (
    AccessGrantRecord,
    AccountingEvent,
    AccountingKind,
    RevocationRecord,
    Route,
    accounting_events,
    scan,
    decode_authors,
    encode_authors,
    record_accounting,
    registered_authors,
)
from tcpair.ledger.store import GrantState, Ledger, lookup_route, record_key, record_route
