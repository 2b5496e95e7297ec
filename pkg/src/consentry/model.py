"""Domain types for data-operation consent decisions.

Everything here is a pure value type: frozen dataclasses and enums with
no interior mutation, safe to share across threads. Canonical JSON forms
(fixed field names, RFC 3339 timestamps) are documented in docs/schema.md
and implemented by the ``to_dict`` / ``*_from_dict`` pairs below.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, time, timezone
from enum import Enum
from typing import Any, Mapping, Union


class ConsentryError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ConsentryError):
    """A value violates a structural invariant.

    ``field`` carries a dotted path to the offending field when known, so
    service layers can surface it to callers.
    """

    def __init__(self, message: str, field: str | None = None) -> None:
        super().__init__(message)
        self.field = field


class ConfigurationError(ConsentryError):
    """Stored state is internally inconsistent (e.g. dangling group ref)."""


# ---------------------------------------------------------------------------
# Timestamps
# ---------------------------------------------------------------------------

def parse_timestamp(value: str) -> datetime:
    """Parse an RFC 3339 timestamp; a trailing 'Z' means UTC."""
    raw = value.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        parsed = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ValidationError(f"not an RFC 3339 timestamp: {value!r}") from exc
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed


def format_timestamp(value: datetime) -> str:
    """Render a timestamp as RFC 3339; naive datetimes are taken as UTC."""
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value.isoformat()


def canonical_json(payload: Any) -> str:
    """Deterministic JSON encoding: sorted keys, no whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# ---------------------------------------------------------------------------
# Actions, data, parties
# ---------------------------------------------------------------------------

class ActionType(str, Enum):
    """Operation a third party wants to perform on a data category.

    ANY is a rule-selector wildcard; it is never legal in a request.
    """

    COLLECT = "collect"
    HISTORY = "history"
    PROFILE = "profile"
    TRANSFER = "transfer"
    ANY = "any"


REQUESTABLE_ACTIONS = (
    ActionType.COLLECT,
    ActionType.HISTORY,
    ActionType.PROFILE,
    ActionType.TRANSFER,
)


class Verdict(str, Enum):
    ALLOW = "allow"
    DENY = "deny"
    PROMPT = "prompt"


@dataclass(frozen=True)
class DataCategory:
    """A kind of user data, identified by a lowercase token."""

    id: str

    def __post_init__(self) -> None:
        if not self.id or not self.id.strip():
            raise ValidationError("data category id must be non-empty", field="id")
        object.__setattr__(self, "id", self.id.strip().lower())


@dataclass(frozen=True)
class DataGroup:
    """User-defined collection of data categories; may be empty."""

    name: str
    members: frozenset[DataCategory] = frozenset()

    def __post_init__(self) -> None:
        if not self.name or not self.name.strip():
            raise ValidationError("data group name must be non-empty", field="name")
        object.__setattr__(self, "members", frozenset(self.members))

    def contains(self, category: DataCategory) -> bool:
        return category in self.members


@dataclass(frozen=True)
class Party:
    """A third party that performs data operations. Ids are case-sensitive."""

    id: str

    def __post_init__(self) -> None:
        if not self.id or not self.id.strip():
            raise ValidationError("party id must be non-empty", field="id")


@dataclass(frozen=True)
class PartyGroup:
    """User-defined collection of parties (friends, low-trust, ...)."""

    name: str
    members: frozenset[Party] = frozenset()

    def __post_init__(self) -> None:
        if not self.name or not self.name.strip():
            raise ValidationError("party group name must be non-empty", field="name")
        object.__setattr__(self, "members", frozenset(self.members))

    def contains(self, party: Party) -> bool:
        return party in self.members


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkDescriptor:
    """A named network plus an optional address token."""

    name: str
    address: str | None = None

    def __post_init__(self) -> None:
        if not self.name or not self.name.strip():
            raise ValidationError("network name must be non-empty", field="name")


@dataclass(frozen=True)
class GeoPoint:
    """Geographic point in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude out of range: {self.lat}", field="lat")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude out of range: {self.lon}", field="lon")


@dataclass(frozen=True)
class NamedZone:
    """A symbolic place ("home", "office") matched by name equality."""

    name: str

    def __post_init__(self) -> None:
        if not self.name or not self.name.strip():
            raise ValidationError("zone name must be non-empty", field="name")


Location = Union[GeoPoint, NamedZone]


@dataclass(frozen=True)
class ContextSnapshot:
    """Sensed situation at decision time.

    ``when`` is always present; the other fields are whatever the configured
    providers could supply.
    """

    when: datetime
    network: NetworkDescriptor | None = None
    location: Location | None = None
    requester_object: str | None = None


@dataclass(frozen=True)
class CircularZone:
    """Disc around a center point; radius in meters."""

    center: GeoPoint
    radius_m: float

    def __post_init__(self) -> None:
        if self.radius_m < 0:
            raise ValidationError("zone radius must be >= 0", field="radius_m")


# Weekday encoding shared by the JSON schema: Monday == 0.
_WEEKDAY_NAMES = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")
_WEEKDAY_INDEX = {name: i for i, name in enumerate(_WEEKDAY_NAMES)}


@dataclass(frozen=True)
class TimeWindow:
    """Recurring daily window [start, end); start > end wraps midnight.

    An optional weekday set further restricts the window (Monday == 0).
    """

    start: time
    end: time
    weekdays: frozenset[int] | None = None

    def __post_init__(self) -> None:
        if self.weekdays is not None:
            days = frozenset(self.weekdays)
            if any(d < 0 or d > 6 for d in days):
                raise ValidationError("weekdays must be in 0..6", field="weekdays")
            object.__setattr__(self, "weekdays", days)

    def contains(self, when: datetime) -> bool:
        if self.weekdays is not None and when.weekday() not in self.weekdays:
            return False
        t = when.time()
        if self.start <= self.end:
            return self.start <= t < self.end
        return t >= self.start or t < self.end


@dataclass(frozen=True)
class ContextPattern:
    """Partial predicate over snapshots; every field is optional.

    The empty pattern matches every snapshot. Matching semantics live in
    :mod:`consentry.context`.
    """

    network: NetworkDescriptor | None = None
    zone: CircularZone | NamedZone | None = None
    time_window: TimeWindow | None = None
    requester_object: str | None = None

    def is_empty(self) -> bool:
        return (
            self.network is None
            and self.zone is None
            and self.time_window is None
            and self.requester_object is None
        )


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------

class SelectorKind(str, Enum):
    EXACT = "exact"
    GROUP = "group"
    ANY = "any"


@dataclass(frozen=True)
class Selector:
    """Rule slot for the data or party dimension.

    ``value`` is a category id / party id for EXACT, a group name for GROUP,
    and None for ANY.
    """

    kind: SelectorKind
    value: str | None = None

    def __post_init__(self) -> None:
        if self.kind is SelectorKind.ANY:
            if self.value is not None:
                raise ValidationError("wildcard selector carries no value", field="value")
        elif not self.value or not self.value.strip():
            raise ValidationError("selector value must be non-empty", field="value")

    @staticmethod
    def exact(value: str) -> "Selector":
        return Selector(SelectorKind.EXACT, value)

    @staticmethod
    def group(name: str) -> "Selector":
        return Selector(SelectorKind.GROUP, name)

    @staticmethod
    def wildcard() -> "Selector":
        return Selector(SelectorKind.ANY)

    def is_wildcard(self) -> bool:
        return self.kind is SelectorKind.ANY


ANY_SELECTOR = Selector.wildcard()


class RuleOrigin(str, Enum):
    USER_AUTHORED = "user"
    BEHAVIOR_HINT = "behavior-hint"
    COMMUNITY_HINT = "community-hint"
    QUESTIONNAIRE = "questionnaire"


@dataclass(frozen=True)
class Rule:
    """One authorization rule: a verdict plus selectors over the four
    dimensions (action, data, party, context)."""

    rule_id: str
    verdict: Verdict
    action: ActionType
    data: Selector
    party: Selector
    context: ContextPattern | None = None
    origin: RuleOrigin = RuleOrigin.USER_AUTHORED
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def __post_init__(self) -> None:
        if not self.rule_id or not self.rule_id.strip():
            raise ValidationError("rule id must be non-empty", field="rule_id")
        # Data category tokens are lowercase everywhere.
        if self.data.kind is SelectorKind.EXACT:
            assert self.data.value is not None
            object.__setattr__(self, "data", Selector.exact(self.data.value.strip().lower()))
        if self.context is not None and self.context.is_empty():
            object.__setattr__(self, "context", None)

    def specificity(self) -> int:
        """Non-wildcard selector count, plus one for a context pattern."""
        score = 0
        if self.action is not ActionType.ANY:
            score += 1
        if not self.data.is_wildcard():
            score += 1
        if not self.party.is_wildcard():
            score += 1
        if self.context is not None:
            score += 1
        return score


# ---------------------------------------------------------------------------
# Requests and decisions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DataOperationRequest:
    """A third party asking to perform one concrete action on one category."""

    request_id: str
    party: Party
    action: ActionType
    data: DataCategory
    received_at: datetime

    def __post_init__(self) -> None:
        if not self.request_id or not self.request_id.strip():
            raise ValidationError("request id must be non-empty", field="request_id")
        if self.action is ActionType.ANY:
            raise ValidationError("requests must name a concrete action", field="action")


class DecisionSourceKind(str, Enum):
    RULE = "rule"
    PROMPT_ANSWER = "prompt-answer"
    ACCEPTED_HINT = "accepted-hint"


@dataclass(frozen=True)
class DecisionSource:
    """Provenance of a final decision: which rule, prompt, or hint made it."""

    kind: DecisionSourceKind
    ref: str | None = None

    def __post_init__(self) -> None:
        if self.kind is DecisionSourceKind.RULE and not self.ref:
            raise ValidationError("rule-sourced decisions must carry the rule id", field="ref")
        if self.kind is DecisionSourceKind.ACCEPTED_HINT and not self.ref:
            raise ValidationError("hint-sourced decisions must carry the hint id", field="ref")


@dataclass(frozen=True)
class DecisionRecord:
    """Final Allow/Deny outcome with full provenance. Append-only."""

    request: DataOperationRequest
    context: ContextSnapshot
    verdict: Verdict
    source: DecisionSource
    decided_at: datetime

    def __post_init__(self) -> None:
        if self.verdict is Verdict.PROMPT:
            raise ValidationError("final decisions are Allow or Deny, never Prompt", field="verdict")


class HintProvenanceKind(str, Enum):
    BEHAVIOR = "behavior"
    COMMUNITY = "community"


@dataclass(frozen=True)
class HintProvenance:
    kind: HintProvenanceKind
    contributor_count: int | None = None

    def __post_init__(self) -> None:
        if self.kind is HintProvenanceKind.COMMUNITY:
            if self.contributor_count is None or self.contributor_count < 1:
                raise ValidationError(
                    "community hints must carry a contributor count", field="contributor_count"
                )
        elif self.contributor_count is not None:
            raise ValidationError(
                "behavior hints carry no contributor count", field="contributor_count"
            )


@dataclass(frozen=True)
class RuleHint:
    """A machine-proposed rule awaiting human confirmation."""

    hint_id: str
    proposed: Rule
    support: int
    confidence: float
    provenance: HintProvenance

    def __post_init__(self) -> None:
        if self.proposed.verdict is Verdict.PROMPT:
            raise ValidationError("hints propose Allow or Deny rules only", field="proposed.verdict")
        if self.support < 0:
            raise ValidationError("support must be >= 0", field="support")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError("confidence must be within [0, 1]", field="confidence")


# ---------------------------------------------------------------------------
# Situation signatures
# ---------------------------------------------------------------------------

def signature_of(request: DataOperationRequest, context: ContextSnapshot) -> str:
    """Canonical encoding of the (action, data, party, context) tuple.

    Deterministic: equal inputs yield byte-identical strings, so the result
    is usable as a mining or community key.
    """
    return canonical_json(
        {
            "action": request.action.value,
            "data": request.data.id,
            "party": request.party.id,
            "context": context_snapshot_to_dict(context, include_when=True),
        }
    )


# ---------------------------------------------------------------------------
# JSON forms
# ---------------------------------------------------------------------------

def _require(payload: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in payload:
        raise ValidationError(f"missing field {key!r} in {where}", field=key)
    return payload[key]


def network_to_dict(network: NetworkDescriptor) -> dict[str, Any]:
    return {"name": network.name, "address": network.address}


def network_from_dict(payload: Mapping[str, Any]) -> NetworkDescriptor:
    return NetworkDescriptor(
        name=_require(payload, "name", "network"), address=payload.get("address")
    )


def location_to_dict(location: Location) -> dict[str, Any]:
    if isinstance(location, GeoPoint):
        return {"kind": "point", "lat": location.lat, "lon": location.lon}
    return {"kind": "zone", "name": location.name}


def location_from_dict(payload: Mapping[str, Any]) -> Location:
    kind = _require(payload, "kind", "location")
    if kind == "point":
        return GeoPoint(lat=float(_require(payload, "lat", "location")),
                        lon=float(_require(payload, "lon", "location")))
    if kind == "zone":
        return NamedZone(name=_require(payload, "name", "location"))
    raise ValidationError(f"unknown location kind: {kind!r}", field="kind")


def context_snapshot_to_dict(snapshot: ContextSnapshot, include_when: bool = True) -> dict[str, Any]:
    payload: dict[str, Any] = {}
    if include_when:
        payload["when"] = format_timestamp(snapshot.when)
    payload["network"] = network_to_dict(snapshot.network) if snapshot.network else None
    payload["location"] = location_to_dict(snapshot.location) if snapshot.location else None
    payload["requesterObject"] = snapshot.requester_object
    return payload


def context_snapshot_from_dict(payload: Mapping[str, Any]) -> ContextSnapshot:
    network = payload.get("network")
    location = payload.get("location")
    return ContextSnapshot(
        when=parse_timestamp(_require(payload, "when", "context snapshot")),
        network=network_from_dict(network) if network else None,
        location=location_from_dict(location) if location else None,
        requester_object=payload.get("requesterObject"),
    )


def _time_to_str(value: time) -> str:
    return value.strftime("%H:%M:%S") if value.second else value.strftime("%H:%M")


def _time_from_str(raw: str) -> time:
    try:
        return time.fromisoformat(raw)
    except ValueError as exc:
        raise ValidationError(f"not a time of day: {raw!r}") from exc


def time_window_to_dict(window: TimeWindow) -> dict[str, Any]:
    payload: dict[str, Any] = {"start": _time_to_str(window.start), "end": _time_to_str(window.end)}
    if window.weekdays is not None:
        payload["weekdays"] = [_WEEKDAY_NAMES[d] for d in sorted(window.weekdays)]
    return payload


def time_window_from_dict(payload: Mapping[str, Any]) -> TimeWindow:
    weekdays = payload.get("weekdays")
    parsed: frozenset[int] | None = None
    if weekdays is not None:
        try:
            parsed = frozenset(_WEEKDAY_INDEX[d] for d in weekdays)
        except KeyError as exc:
            raise ValidationError(f"unknown weekday name: {exc.args[0]!r}", field="weekdays") from exc
    return TimeWindow(
        start=_time_from_str(_require(payload, "start", "time window")),
        end=_time_from_str(_require(payload, "end", "time window")),
        weekdays=parsed,
    )


def context_pattern_to_dict(pattern: ContextPattern) -> dict[str, Any]:
    payload: dict[str, Any] = {}
    payload["network"] = network_to_dict(pattern.network) if pattern.network else None
    if pattern.zone is None:
        payload["zone"] = None
    elif isinstance(pattern.zone, CircularZone):
        payload["zone"] = {
            "kind": "circle",
            "lat": pattern.zone.center.lat,
            "lon": pattern.zone.center.lon,
            "radiusM": pattern.zone.radius_m,
        }
    else:
        payload["zone"] = {"kind": "named", "name": pattern.zone.name}
    payload["timeWindow"] = time_window_to_dict(pattern.time_window) if pattern.time_window else None
    payload["requesterObject"] = pattern.requester_object
    return payload


def context_pattern_from_dict(payload: Mapping[str, Any]) -> ContextPattern:
    network = payload.get("network")
    zone_payload = payload.get("zone")
    zone: CircularZone | NamedZone | None = None
    if zone_payload:
        kind = _require(zone_payload, "kind", "zone")
        if kind == "circle":
            zone = CircularZone(
                center=GeoPoint(
                    lat=float(_require(zone_payload, "lat", "zone")),
                    lon=float(_require(zone_payload, "lon", "zone")),
                ),
                radius_m=float(_require(zone_payload, "radiusM", "zone")),
            )
        elif kind == "named":
            zone = NamedZone(name=_require(zone_payload, "name", "zone"))
        else:
            raise ValidationError(f"unknown zone kind: {kind!r}", field="zone.kind")
    window = payload.get("timeWindow")
    return ContextPattern(
        network=network_from_dict(network) if network else None,
        zone=zone,
        time_window=time_window_from_dict(window) if window else None,
        requester_object=payload.get("requesterObject"),
    )


def selector_to_dict(selector: Selector) -> dict[str, Any]:
    return {"kind": selector.kind.value, "value": selector.value}


def selector_from_dict(payload: Mapping[str, Any]) -> Selector:
    kind_raw = _require(payload, "kind", "selector")
    try:
        kind = SelectorKind(kind_raw)
    except ValueError as exc:
        raise ValidationError(f"unknown selector kind: {kind_raw!r}", field="kind") from exc
    return Selector(kind=kind, value=payload.get("value"))


def _enum_from(value: Any, enum_cls: type, where: str) -> Any:
    try:
        return enum_cls(value)
    except ValueError as exc:
        raise ValidationError(f"unknown {where}: {value!r}", field=where) from exc


def rule_to_dict(rule: Rule) -> dict[str, Any]:
    return {
        "id": rule.rule_id,
        "verdict": rule.verdict.value,
        "action": rule.action.value,
        "data": selector_to_dict(rule.data),
        "party": selector_to_dict(rule.party),
        "context": context_pattern_to_dict(rule.context) if rule.context else None,
        "origin": rule.origin.value,
        "createdAt": format_timestamp(rule.created_at),
    }


def rule_from_dict(payload: Mapping[str, Any]) -> Rule:
    context = payload.get("context")
    return Rule(
        rule_id=_require(payload, "id", "rule"),
        verdict=_enum_from(_require(payload, "verdict", "rule"), Verdict, "verdict"),
        action=_enum_from(_require(payload, "action", "rule"), ActionType, "action"),
        data=selector_from_dict(_require(payload, "data", "rule")),
        party=selector_from_dict(_require(payload, "party", "rule")),
        context=context_pattern_from_dict(context) if context else None,
        origin=_enum_from(payload.get("origin", "user"), RuleOrigin, "origin"),
        created_at=parse_timestamp(_require(payload, "createdAt", "rule")),
    )


def request_to_dict(request: DataOperationRequest) -> dict[str, Any]:
    return {
        "requestId": request.request_id,
        "party": request.party.id,
        "action": request.action.value,
        "data": request.data.id,
        "receivedAt": format_timestamp(request.received_at),
    }


def request_from_dict(payload: Mapping[str, Any]) -> DataOperationRequest:
    return DataOperationRequest(
        request_id=_require(payload, "requestId", "request"),
        party=Party(_require(payload, "party", "request")),
        action=_enum_from(_require(payload, "action", "request"), ActionType, "action"),
        data=DataCategory(_require(payload, "data", "request")),
        received_at=parse_timestamp(_require(payload, "receivedAt", "request")),
    )


def decision_to_dict(record: DecisionRecord) -> dict[str, Any]:
    return {
        "request": request_to_dict(record.request),
        "context": context_snapshot_to_dict(record.context),
        "verdict": record.verdict.value,
        "source": {"kind": record.source.kind.value, "ref": record.source.ref},
        "decidedAt": format_timestamp(record.decided_at),
    }


def decision_from_dict(payload: Mapping[str, Any]) -> DecisionRecord:
    source = _require(payload, "source", "decision")
    return DecisionRecord(
        request=request_from_dict(_require(payload, "request", "decision")),
        context=context_snapshot_from_dict(_require(payload, "context", "decision")),
        verdict=_enum_from(_require(payload, "verdict", "decision"), Verdict, "verdict"),
        source=DecisionSource(
            kind=_enum_from(_require(source, "kind", "decision source"),
                            DecisionSourceKind, "source kind"),
            ref=source.get("ref"),
        ),
        decided_at=parse_timestamp(_require(payload, "decidedAt", "decision")),
    )


def hint_to_dict(hint: RuleHint) -> dict[str, Any]:
    return {
        "hintId": hint.hint_id,
        "proposed": rule_to_dict(hint.proposed),
        "support": hint.support,
        "confidence": hint.confidence,
        "provenance": {
            "kind": hint.provenance.kind.value,
            "contributorCount": hint.provenance.contributor_count,
        },
    }


def hint_from_dict(payload: Mapping[str, Any]) -> RuleHint:
    provenance = _require(payload, "provenance", "hint")
    return RuleHint(
        hint_id=_require(payload, "hintId", "hint"),
        proposed=rule_from_dict(_require(payload, "proposed", "hint")),
        support=int(_require(payload, "support", "hint")),
        confidence=float(_require(payload, "confidence", "hint")),
        provenance=HintProvenance(
            kind=_enum_from(_require(provenance, "kind", "hint provenance"),
                            HintProvenanceKind, "provenance kind"),
            contributor_count=provenance.get("contributorCount"),
        ),
    )
