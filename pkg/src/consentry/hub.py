"""Pseudonymous exchange of privacy profiles and pooled community hints.

Profiles never carry raw party ids or coordinates: the builder replaces
concrete parties with the publisher's own group names and reduces context
patterns to shape labels ("network+timewindow", "zone", ...). Profiles whose
party has no group are simply not shared. Similarity between users is the
Jaccard index of their normalized rule signatures; hints pool Allow/Deny
evidence from sufficiently similar profiles and are withheld below the
k-contributor floor.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from threading import Lock
from typing import Mapping, Sequence

from .engine import RuleSet
from .model import (
    ActionType,
    ContextPattern,
    DataOperationRequest,
    DecisionRecord,
    HintProvenance,
    HintProvenanceKind,
    Rule,
    RuleHint,
    RuleOrigin,
    Selector,
    SelectorKind,
    ValidationError,
    Verdict,
    canonical_json,
)

CONTEXT_CLASS_NONE = "none"
_CONTEXT_FIELD_LABELS = ("network", "requester", "timewindow", "zone")
_NUMBER_PAIR = re.compile(r"^\s*-?\d+(\.\d+)?\s*[,;/ ]\s*-?\d+(\.\d+)?\s*$")


def context_class_of(pattern: ContextPattern | None) -> str:
    """Shape label of a pattern: which fields it constrains, never how."""
    if pattern is None or pattern.is_empty():
        return CONTEXT_CLASS_NONE
    labels = []
    if pattern.network is not None:
        labels.append("network")
    if pattern.requester_object is not None:
        labels.append("requester")
    if pattern.time_window is not None:
        labels.append("timewindow")
    if pattern.zone is not None:
        labels.append("zone")
    return "+".join(labels)


def _valid_context_class(label: str) -> bool:
    if label == CONTEXT_CLASS_NONE:
        return True
    parts = label.split("+")
    return (
        len(parts) == len(set(parts))
        and all(p in _CONTEXT_FIELD_LABELS for p in parts)
        and parts == sorted(parts)
    )


@dataclass(frozen=True)
class RuleSignature:
    """Normalized rule: verdict plus tokenized selectors and context class."""

    verdict: Verdict
    action: ActionType
    data: str   # category id, data-group name, or "*"
    party: str  # party-group name or "*"
    context_class: str = CONTEXT_CLASS_NONE

    def situation(self) -> "QueryKey":
        return QueryKey(self.action, self.data, self.party, self.context_class)


@dataclass(frozen=True)
class QueryKey:
    """Verdict-less signature used to pool evidence for one situation."""

    action: ActionType
    data: str
    party: str
    context_class: str = CONTEXT_CLASS_NONE


@dataclass(frozen=True)
class CommunityProfile:
    pseudonym: str
    rule_signatures: frozenset[RuleSignature] = frozenset()
    decision_summaries: Mapping[QueryKey, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.pseudonym or not self.pseudonym.strip():
            raise ValidationError("pseudonym must be non-empty", field="pseudonym")
        object.__setattr__(self, "rule_signatures", frozenset(self.rule_signatures))
        object.__setattr__(self, "decision_summaries", dict(self.decision_summaries))


@dataclass(frozen=True)
class HubConfig:
    min_contributors: int = 5
    similarity_threshold: float = 0.3
    min_agreement: float = 0.8

    def __post_init__(self) -> None:
        if self.min_contributors < 1:
            raise ValidationError("contributor floor must be >= 1", field="minContributors")
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValidationError("similarity threshold must be in [0, 1]",
                                  field="similarityThreshold")
        if not 0.5 < self.min_agreement <= 1.0:
            raise ValidationError("agreement floor must be in (0.5, 1.0]", field="minAgreement")


def similarity(a: CommunityProfile, b: CommunityProfile) -> float:
    """Jaccard index of rule signatures; two empty profiles count as 1.0."""
    if not a.rule_signatures and not b.rule_signatures:
        return 1.0
    union = a.rule_signatures | b.rule_signatures
    if not union:
        return 1.0
    return len(a.rule_signatures & b.rule_signatures) / len(union)


def validate_profile(profile: CommunityProfile) -> None:
    """Reject profiles that smuggle raw identifiers or coordinates.

    The hub cannot tell a party id from a group name, so this is the
    checkable part of the invariant: well-formed context classes, sane
    counts, and no coordinate-shaped tokens anywhere.
    """
    for sig in profile.rule_signatures:
        if not _valid_context_class(sig.context_class):
            raise ValidationError(
                f"unknown context class: {sig.context_class!r}",
                field="ruleSignatures.contextClass",
            )
        for slot, value in (("party", sig.party), ("data", sig.data)):
            if _NUMBER_PAIR.match(value):
                raise ValidationError(
                    f"coordinate-like token in signature {slot}: {value!r}",
                    field=f"ruleSignatures.{slot}",
                )
    for key, (allow_count, deny_count) in profile.decision_summaries.items():
        if not _valid_context_class(key.context_class):
            raise ValidationError(
                f"unknown context class: {key.context_class!r}",
                field="decisionSummaries.contextClass",
            )
        if _NUMBER_PAIR.match(key.party) or _NUMBER_PAIR.match(key.data):
            raise ValidationError(
                "coordinate-like token in summary key", field="decisionSummaries"
            )
        if allow_count < 0 or deny_count < 0:
            raise ValidationError("decision counts must be >= 0", field="decisionSummaries")


class CommunityHub:
    """In-process profile store; one upsert slot per pseudonym."""

    def __init__(self) -> None:
        self._profiles: dict[str, CommunityProfile] = {}
        self._lock = Lock()

    def publish_profile(self, profile: CommunityProfile) -> None:
        validate_profile(profile)
        with self._lock:
            self._profiles[profile.pseudonym] = profile

    def profiles(self) -> tuple[CommunityProfile, ...]:
        with self._lock:
            return tuple(self._profiles.values())

    def __len__(self) -> int:
        return len(self._profiles)


def get_community_hint(
    hub: CommunityHub,
    requester: CommunityProfile,
    query: QueryKey,
    config: HubConfig = HubConfig(),
    now: datetime | None = None,
) -> RuleHint | None:
    """Pool Allow/Deny evidence for ``query`` from profiles similar to the
    requester; withhold unless enough distinct contributors agree enough."""
    allow_weight = 0
    deny_weight = 0
    contributors: set[str] = set()

    for profile in hub.profiles():
        if profile.pseudonym == requester.pseudonym:
            continue
        if similarity(requester, profile) < config.similarity_threshold:
            continue
        p_allow = p_deny = 0
        for sig in profile.rule_signatures:
            if sig.situation() == query:
                if sig.verdict is Verdict.ALLOW:
                    p_allow += 1
                elif sig.verdict is Verdict.DENY:
                    p_deny += 1
        summary = profile.decision_summaries.get(query)
        if summary is not None:
            p_allow += summary[0]
            p_deny += summary[1]
        if p_allow or p_deny:
            contributors.add(profile.pseudonym)
            allow_weight += p_allow
            deny_weight += p_deny

    if len(contributors) < config.min_contributors:
        return None
    total = allow_weight + deny_weight
    verdict = Verdict.ALLOW if allow_weight > deny_weight else Verdict.DENY
    winning = max(allow_weight, deny_weight)
    agreement = winning / total
    if agreement < config.min_agreement:
        return None

    digest = hashlib.sha1(
        (canonical_json(
            {"action": query.action.value, "data": query.data,
             "party": query.party, "contextClass": query.context_class}
        ) + verdict.value).encode("utf-8")
    ).hexdigest()[:12]
    proposed = Rule(
        rule_id=f"community-{digest}",
        verdict=verdict,
        action=query.action,
        data=_token_to_selector(query.data, is_data=True),
        party=_token_to_selector(query.party, is_data=False),
        context=None,
        origin=RuleOrigin.COMMUNITY_HINT,
        created_at=now or datetime.now(timezone.utc),
    )
    return RuleHint(
        hint_id=f"ch-{digest}",
        proposed=proposed,
        support=winning,
        confidence=agreement,
        provenance=HintProvenance(
            kind=HintProvenanceKind.COMMUNITY, contributor_count=len(contributors)
        ),
    )


def _token_to_selector(token: str, is_data: bool) -> Selector:
    if token == "*":
        return Selector.wildcard()
    if is_data:
        return Selector.exact(token)
    return Selector.group(token)


# ---------------------------------------------------------------------------
# Profile building and query normalization (butler side)
# ---------------------------------------------------------------------------

def _party_tokens(selector: Selector, rule_set: RuleSet) -> list[str]:
    """Group-name tokens for a party selector; concrete parties map to every
    group containing them and vanish when ungrouped."""
    if selector.kind is SelectorKind.ANY:
        return ["*"]
    if selector.kind is SelectorKind.GROUP:
        return [selector.value or ""]
    containing = [
        name for name in sorted(rule_set.party_groups)
        if any(member.id == selector.value for member in rule_set.party_groups[name].members)
    ]
    return containing


def _data_token(selector: Selector) -> str:
    return "*" if selector.kind is SelectorKind.ANY else (selector.value or "")


def build_profile(
    pseudonym: str,
    rule_set: RuleSet,
    decisions: Sequence[DecisionRecord] = (),
) -> CommunityProfile:
    """Publishable profile: normalized rule signatures plus per-situation
    Allow/Deny decision counts."""
    signatures: set[RuleSignature] = set()
    for rule in rule_set.rules:
        for party_token in _party_tokens(rule.party, rule_set):
            signatures.add(
                RuleSignature(
                    verdict=rule.verdict,
                    action=rule.action,
                    data=_data_token(rule.data),
                    party=party_token,
                    context_class=context_class_of(rule.context),
                )
            )

    summaries: dict[QueryKey, list[int]] = {}
    for record in decisions:
        for party_token in _party_tokens(Selector.exact(record.request.party.id), rule_set):
            key = QueryKey(
                action=record.request.action,
                data=record.request.data.id,
                party=party_token,
                context_class=CONTEXT_CLASS_NONE,
            )
            counts = summaries.setdefault(key, [0, 0])
            if record.verdict is Verdict.ALLOW:
                counts[0] += 1
            else:
                counts[1] += 1

    return CommunityProfile(
        pseudonym=pseudonym,
        rule_signatures=frozenset(signatures),
        decision_summaries={k: (v[0], v[1]) for k, v in summaries.items()},
    )


def query_key_for(request: DataOperationRequest, rule_set: RuleSet) -> QueryKey:
    """Normalize a concrete request the same way profiles are normalized:
    party becomes its alphabetically-first containing group (wildcard when
    ungrouped), data stays the concrete category, context class is none."""
    tokens = _party_tokens(Selector.exact(request.party.id), rule_set)
    party_token = tokens[0] if tokens else "*"
    return QueryKey(
        action=request.action,
        data=request.data.id,
        party=party_token,
        context_class=CONTEXT_CLASS_NONE,
    )


# ---------------------------------------------------------------------------
# Wire forms (shared by the hub service and its client)
# ---------------------------------------------------------------------------

def rule_signature_to_dict(sig: RuleSignature) -> dict:
    return {
        "verdict": sig.verdict.value,
        "action": sig.action.value,
        "data": sig.data,
        "party": sig.party,
        "contextClass": sig.context_class,
    }


def rule_signature_from_dict(payload: Mapping) -> RuleSignature:
    return RuleSignature(
        verdict=Verdict(payload["verdict"]),
        action=ActionType(payload["action"]),
        data=payload["data"],
        party=payload["party"],
        context_class=payload.get("contextClass", CONTEXT_CLASS_NONE),
    )


def query_key_to_dict(key: QueryKey) -> dict:
    return {
        "action": key.action.value,
        "data": key.data,
        "party": key.party,
        "contextClass": key.context_class,
    }


def query_key_from_dict(payload: Mapping) -> QueryKey:
    return QueryKey(
        action=ActionType(payload["action"]),
        data=payload["data"],
        party=payload["party"],
        context_class=payload.get("contextClass", CONTEXT_CLASS_NONE),
    )


def profile_to_dict(profile: CommunityProfile) -> dict:
    return {
        "pseudonym": profile.pseudonym,
        "ruleSignatures": sorted(
            (rule_signature_to_dict(s) for s in profile.rule_signatures),
            key=canonical_json,
        ),
        "decisionSummaries": sorted(
            (
                {**query_key_to_dict(key), "allowCount": counts[0], "denyCount": counts[1]}
                for key, counts in profile.decision_summaries.items()
            ),
            key=canonical_json,
        ),
    }


def profile_from_dict(payload: Mapping) -> CommunityProfile:
    try:
        signatures = frozenset(
            rule_signature_from_dict(s) for s in payload.get("ruleSignatures", [])
        )
        summaries = {
            query_key_from_dict(s): (int(s["allowCount"]), int(s["denyCount"]))
            for s in payload.get("decisionSummaries", [])
        }
        return CommunityProfile(
            pseudonym=payload["pseudonym"],
            rule_signatures=signatures,
            decision_summaries=summaries,
        )
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"malformed profile: {exc}") from exc
