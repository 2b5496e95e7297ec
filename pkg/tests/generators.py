"""Seeded random fixtures shared by property tests and the acceptance suite."""

from __future__ import annotations

import random
from datetime import datetime, time, timedelta, timezone

from consentry.engine import RuleSet
from consentry.model import (
    ActionType,
    ContextPattern,
    ContextSnapshot,
    DataCategory,
    DataGroup,
    DataOperationRequest,
    DecisionRecord,
    DecisionSource,
    DecisionSourceKind,
    NamedZone,
    NetworkDescriptor,
    Party,
    PartyGroup,
    Rule,
    Selector,
    TimeWindow,
    Verdict,
)

T0 = datetime(2026, 3, 2, 10, 0, 0, tzinfo=timezone.utc)  # a Monday

PARTIES = ["Alice", "Bob", "Carol", "Dave", "Employer", "WeatherCo"]
CATEGORIES = ["location", "temperature", "contacts", "heartrate", "email"]
NETWORKS = [NetworkDescriptor("home-wifi"), NetworkDescriptor("office-lan", "10.0.0.0/24")]
ZONES = [NamedZone("home"), NamedZone("office")]
REQUESTERS = ["sensor-1", "sensor-2", "cam-3"]
CONCRETE_ACTIONS = [ActionType.COLLECT, ActionType.HISTORY, ActionType.PROFILE, ActionType.TRANSFER]


def random_groups(rng: random.Random) -> tuple[dict, dict]:
    data_groups = {}
    for name in ("personal", "environment"):
        members = frozenset(
            DataCategory(c) for c in rng.sample(CATEGORIES, rng.randint(1, 3))
        )
        data_groups[name] = DataGroup(name, members)
    party_groups = {}
    for name in ("friends", "lowtrust"):
        members = frozenset(Party(p) for p in rng.sample(PARTIES, rng.randint(1, 4)))
        party_groups[name] = PartyGroup(name, members)
    return data_groups, party_groups


def random_pattern(rng: random.Random) -> ContextPattern | None:
    if rng.random() < 0.5:
        return None
    network = rng.choice(NETWORKS) if rng.random() < 0.4 else None
    zone = rng.choice(ZONES) if rng.random() < 0.4 else None
    window = None
    if rng.random() < 0.5:
        start = time(rng.randrange(24), rng.choice([0, 15, 30, 45]))
        end = time(rng.randrange(24), rng.choice([0, 15, 30, 45]))
        weekdays = frozenset(rng.sample(range(7), rng.randint(1, 7))) if rng.random() < 0.5 else None
        window = TimeWindow(start, end, weekdays)
    requester = rng.choice(REQUESTERS) if rng.random() < 0.3 else None
    pattern = ContextPattern(network=network, zone=zone, time_window=window,
                             requester_object=requester)
    return None if pattern.is_empty() else pattern


def random_rule(rng: random.Random, rule_id: str, data_groups, party_groups,
                verdicts=(Verdict.ALLOW, Verdict.DENY, Verdict.PROMPT)) -> Rule:
    roll = rng.random()
    if roll < 0.4:
        data = Selector.exact(rng.choice(CATEGORIES))
    elif roll < 0.7:
        data = Selector.group(rng.choice(sorted(data_groups)))
    else:
        data = Selector.wildcard()
    roll = rng.random()
    if roll < 0.4:
        party = Selector.exact(rng.choice(PARTIES))
    elif roll < 0.7:
        party = Selector.group(rng.choice(sorted(party_groups)))
    else:
        party = Selector.wildcard()
    return Rule(
        rule_id=rule_id,
        verdict=rng.choice(verdicts),
        action=rng.choice(CONCRETE_ACTIONS + [ActionType.ANY]),
        data=data,
        party=party,
        context=random_pattern(rng),
        created_at=T0 + timedelta(seconds=rng.randrange(100_000)),
    )


def random_rule_set(rng: random.Random, max_rules: int = 6) -> RuleSet:
    data_groups, party_groups = random_groups(rng)
    rules = tuple(
        random_rule(rng, f"r{i}", data_groups, party_groups)
        for i in range(rng.randint(0, max_rules))
    )
    return RuleSet(rules=rules, data_groups=data_groups, party_groups=party_groups)


def random_request(rng: random.Random, request_id: str = "q") -> DataOperationRequest:
    return DataOperationRequest(
        request_id=request_id,
        party=Party(rng.choice(PARTIES)),
        action=rng.choice(CONCRETE_ACTIONS),
        data=DataCategory(rng.choice(CATEGORIES)),
        received_at=T0,
    )


def random_snapshot(rng: random.Random) -> ContextSnapshot:
    when = T0 + timedelta(
        days=rng.randrange(7), hours=rng.randrange(24), minutes=rng.randrange(60)
    )
    return ContextSnapshot(
        when=when,
        network=rng.choice(NETWORKS) if rng.random() < 0.6 else None,
        location=rng.choice(ZONES) if rng.random() < 0.6 else None,
        requester_object=rng.choice(REQUESTERS) if rng.random() < 0.5 else None,
    )


def random_decision(rng: random.Random, index: int,
                    verdict: Verdict | None = None) -> DecisionRecord:
    request = random_request(rng, request_id=f"req-{index}")
    return DecisionRecord(
        request=request,
        context=random_snapshot(rng),
        verdict=verdict or rng.choice([Verdict.ALLOW, Verdict.DENY]),
        source=DecisionSource(kind=DecisionSourceKind.PROMPT_ANSWER, ref=f"prompt-{index}"),
        decided_at=T0 + timedelta(seconds=index),
    )
