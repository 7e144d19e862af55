"""Declarative access rules stored on-chain and their evaluation.

A rule set is a conjunction of predicates. Evaluation is exhaustive: every
predicate is checked so a denial lists all failures, in rule order.
"""

from __future__ import annotations

import enum
import json
import statistics
from dataclasses import dataclass
from typing import Protocol, Sequence, Union

from tcpair.errors import InvalidInput


class MobilityClass(enum.Enum):
    Unknown = "Unknown"
    Vehicle = "Vehicle"
    Stationary = "Stationary"
    Anomalous = "Anomalous"


class Verdict(enum.Enum):
    Grant = "Grant"
    Deny = "Deny"


class ProfileView(Protocol):
    mac: bytes
    mobility_class: MobilityClass
    expires_at_ms: int
    observations: Sequence
    speed_samples_mps: Sequence[float]


@dataclass(frozen=True)
class EvalContext:
    now_ms: int
    oui_allowlist: frozenset[bytes] = frozenset()


@dataclass(frozen=True)
class MobilityClassIs:
    mobility_class: MobilityClass

    def holds(self, profile: ProfileView, ctx: EvalContext) -> bool:
        return profile.mobility_class == self.mobility_class


@dataclass(frozen=True)
class OuiAllowed:
    def holds(self, profile: ProfileView, ctx: EvalContext) -> bool:
        return bytes(profile.mac[:3]) in ctx.oui_allowlist


@dataclass(frozen=True)
class ProfileNotExpired:
    def holds(self, profile: ProfileView, ctx: EvalContext) -> bool:
        return ctx.now_ms < profile.expires_at_ms


@dataclass(frozen=True)
class MinObservations:
    n: int

    def holds(self, profile: ProfileView, ctx: EvalContext) -> bool:
        return len(profile.observations) >= self.n


@dataclass(frozen=True)
class SpeedWithin:
    lo: float
    hi: float

    def holds(self, profile: ProfileView, ctx: EvalContext) -> bool:
        if not profile.speed_samples_mps:
            return False
        return self.lo <= statistics.fmean(profile.speed_samples_mps) <= self.hi


Predicate = Union[MobilityClassIs, OuiAllowed, ProfileNotExpired, MinObservations, SpeedWithin]

PREDICATE_TYPES = {cls.__name__: cls for cls in (MobilityClassIs, OuiAllowed, ProfileNotExpired, MinObservations, SpeedWithin)}


def predicate_name(p: Predicate) -> str:
    return type(p).__name__


def predicate_to_dict(p: Predicate) -> dict:
    d = {"predicate": predicate_name(p)}
    if isinstance(p, MobilityClassIs):
        d["mobility_class"] = p.mobility_class.value
    elif isinstance(p, MinObservations):
        d["n"] = p.n
    elif isinstance(p, SpeedWithin):
        d["lo"] = p.lo
        d["hi"] = p.hi
    return d


def predicate_from_dict(d: dict) -> Predicate:
    if not isinstance(d, dict) or "predicate" not in d:
        raise InvalidInput("predicate entry must be an object with a 'predicate' key")
    name = d["predicate"]
    cls = PREDICATE_TYPES.get(name)
    if cls is None:
        raise InvalidInput(f"unknown predicate {name!r}")
    args = {k: v for k, v in d.items() if k != "predicate"}
    expected = {
        MobilityClassIs: {"mobility_class"},
        OuiAllowed: set(),
        ProfileNotExpired: set(),
        MinObservations: {"n"},
        SpeedWithin: {"lo", "hi"},
    }[cls]
    if set(args) != expected:
        raise InvalidInput(f"predicate {name} takes fields {sorted(expected)}, got {sorted(args)}")
    if cls is MobilityClassIs:
        try:
            return MobilityClassIs(MobilityClass(args["mobility_class"]))
        except ValueError as exc:
            raise InvalidInput(str(exc)) from exc
    if cls is MinObservations:
        n = args["n"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 0:
            raise InvalidInput("MinObservations.n must be a non-negative integer")
        return MinObservations(n)
    if cls is SpeedWithin:
        lo, hi = float(args["lo"]), float(args["hi"])
        if lo > hi:
            raise InvalidInput("SpeedWithin requires lo <= hi")
        return SpeedWithin(lo, hi)
    return cls()


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Predicate, ...]

    def __post_init__(self):
        if not self.rules:
            raise InvalidInput("rule set must be non-empty")

    def encode(self) -> bytes:
        doc = [predicate_to_dict(p) for p in self.rules]
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def decode(cls, payload: bytes) -> RuleSet:
        try:
            doc = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InvalidInput(f"malformed rule set: {exc}") from exc
        if not isinstance(doc, list):
            raise InvalidInput("rule set must be a list")
        return cls(tuple(predicate_from_dict(d) for d in doc))


DEFAULT_RULES = RuleSet(
    (MobilityClassIs(MobilityClass.Vehicle), OuiAllowed(), ProfileNotExpired(), MinObservations(5))
)


@dataclass(frozen=True)
class AccessDecision:
    verdict: Verdict
    failed_predicates: tuple[str, ...]
    evaluated_at_ms: int

    @property
    def granted(self) -> bool:
        return self.verdict is Verdict.Grant


def evaluate_contract(rules: RuleSet, profile: ProfileView, context: EvalContext) -> AccessDecision:
    failed = tuple(predicate_name(p) for p in rules.rules if not p.holds(profile, context))
    verdict = Verdict.Deny if failed else Verdict.Grant
    return AccessDecision(verdict, failed, context.now_ms)
