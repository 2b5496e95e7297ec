"""Deterministic scenarios that drive the whole decision chain and measure
whether learning actually reduces prompting.

A scenario fixes a latent policy (the ground truth the simulated user
answers from), a request universe, context fixtures, and thresholds; the
run replays it request by request with a virtual clock. The simulated user
is perfectly consistent: every prompt is answered with the latent verdict,
and "remember as rule" is ticked exactly when the attached hint agrees.
Metrics are a pure function of (seed, config).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

from .agent import AgentConfig, ConsentAgent, ResultStatus
from .context import ContextManager
from .engine import RuleSet, resolve
from .hub import CommunityHub, HubConfig, profile_from_dict
from .hubservice import LocalHubSource
from .miner import DecisionLog, MinerConfig
from .model import (
    ActionType,
    ContextSnapshot,
    DataCategory,
    DataGroup,
    DataOperationRequest,
    Party,
    PartyGroup,
    Rule,
    ValidationError,
    Verdict,
    location_from_dict,
    network_from_dict,
    parse_timestamp,
    rule_from_dict,
)

WINDOW_SIZE = 100
SIM_PSEUDONYM = "sim-user"


@dataclass(frozen=True)
class Scenario:
    seed: int = 42
    request_count: int = 500
    parties: tuple[str, ...] = ()
    categories: tuple[str, ...] = ()
    party_groups: dict = field(default_factory=dict)   # name -> [party ids]
    data_groups: dict = field(default_factory=dict)    # name -> [category ids]
    latent_rules: tuple[dict, ...] = ()
    preseed_rules: tuple[dict, ...] = ()
    context_fixtures: tuple[dict, ...] = ()
    hub_profiles: tuple[dict, ...] = ()
    min_support: int = 3
    min_confidence: float = 0.9
    hub_min_contributors: int = 5
    hub_similarity_threshold: float = 0.3
    hub_min_agreement: float = 0.8
    clock_step_s: float = 5.0
    answer_delay_s: float = 0.0
    zipf_exponent: float = 0.0
    start_time: datetime = datetime(2026, 3, 2, 10, 0, tzinfo=timezone.utc)

    @staticmethod
    def from_dict(payload: dict) -> "Scenario":
        miner = payload.get("miner", {})
        hub = payload.get("hub", {})
        return Scenario(
            seed=payload.get("seed", 42),
            request_count=payload.get("requestCount", 500),
            parties=tuple(payload["parties"]),
            categories=tuple(payload["categories"]),
            party_groups=dict(payload.get("partyGroups", {})),
            data_groups=dict(payload.get("dataGroups", {})),
            latent_rules=tuple(payload["latentRules"]),
            preseed_rules=tuple(payload.get("preseedRules", ())),
            context_fixtures=tuple(payload.get("contextFixtures", ({},))),
            hub_profiles=tuple(payload.get("hubProfiles", ())),
            min_support=miner.get("minSupport", 3),
            min_confidence=miner.get("minConfidence", 0.9),
            hub_min_contributors=hub.get("minContributors", 5),
            hub_similarity_threshold=hub.get("similarityThreshold", 0.3),
            hub_min_agreement=hub.get("minAgreement", 0.8),
            clock_step_s=payload.get("clockStepS", 5.0),
            answer_delay_s=payload.get("answerDelayS", 0.0),
            zipf_exponent=payload.get("zipfExponent", 0.0),
            start_time=parse_timestamp(payload.get("startTime", "2026-03-02T10:00:00Z")),
        )

    @staticmethod
    def from_file(path: Path | str) -> "Scenario":
        return Scenario.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class WindowMetrics:
    index: int
    requests: int
    prompts: int
    rules_at_end: int

    @property
    def prompt_rate(self) -> float:
        return self.prompts / self.requests if self.requests else 0.0


@dataclass(frozen=True)
class Metrics:
    windows: tuple[WindowMetrics, ...]
    total_requests: int
    total_prompts: int
    hints_attached: int
    hints_correct: int
    correct_decisions: int

    @property
    def hint_precision(self) -> float:
        return self.hints_correct / self.hints_attached if self.hints_attached else 1.0

    @property
    def hint_recall(self) -> float:
        # Share of escalations that arrived with the right suggestion.
        return self.hints_correct / self.total_prompts if self.total_prompts else 1.0

    @property
    def decision_accuracy(self) -> float:
        return self.correct_decisions / self.total_requests if self.total_requests else 1.0

    @property
    def first_window_prompt_rate(self) -> float:
        return self.windows[0].prompt_rate if self.windows else 0.0

    @property
    def last_window_prompt_rate(self) -> float:
        return self.windows[-1].prompt_rate if self.windows else 0.0

    def to_csv(self) -> str:
        lines = ["window,requests,prompts,prompt_rate,rules"]
        for w in self.windows:
            lines.append(
                f"{w.index},{w.requests},{w.prompts},{w.prompt_rate:.6f},{w.rules_at_end}"
            )
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        lines = [
            f"requests          {self.total_requests}",
            f"prompts           {self.total_prompts}"
            f" ({self.total_prompts / max(1, self.total_requests):.1%} overall)",
            f"prompt rate       first window {self.first_window_prompt_rate:.3f}"
            f" -> last window {self.last_window_prompt_rate:.3f}",
            f"hints attached    {self.hints_attached}",
            f"hint precision    {self.hint_precision:.3f}",
            f"hint recall       {self.hint_recall:.3f}",
            f"decision accuracy {self.decision_accuracy:.3f}",
            f"rules learned     {self.windows[-1].rules_at_end if self.windows else 0}",
        ]
        return "\n".join(lines) + "\n"


def _build_groups(scenario: Scenario) -> tuple[dict, dict]:
    data_groups = {
        name: DataGroup(name, frozenset(DataCategory(c) for c in members))
        for name, members in scenario.data_groups.items()
    }
    party_groups = {
        name: PartyGroup(name, frozenset(Party(p) for p in members))
        for name, members in scenario.party_groups.items()
    }
    return data_groups, party_groups


def _parse_rules(docs: Sequence[dict], default_created: datetime) -> tuple[Rule, ...]:
    rules = []
    for doc in docs:
        payload = dict(doc)
        payload.setdefault("createdAt", default_created.isoformat())
        rules.append(rule_from_dict(payload))
    return tuple(rules)


def _fixture_snapshot(fixture: dict, when: datetime) -> ContextSnapshot:
    network = fixture.get("network")
    location = fixture.get("location")
    return ContextSnapshot(
        when=when,
        network=network_from_dict(network) if network else None,
        location=location_from_dict(location) if location else None,
        requester_object=fixture.get("requesterObject"),
    )


def _validate_latent(latent: RuleSet, scenario: Scenario) -> None:
    for rule in latent.rules:
        if rule.verdict is Verdict.PROMPT:
            raise ValidationError(
                f"latent rule {rule.rule_id} must be Allow or Deny", field="latentRules"
            )
    has_wildcard_default = any(
        r.action is ActionType.ANY
        and r.data.is_wildcard()
        and r.party.is_wildcard()
        and r.context is None
        for r in latent.rules
    )
    if has_wildcard_default:
        return
    # No catch-all rule: prove totality exhaustively over the universe.
    for party in scenario.parties:
        for category in scenario.categories:
            for action in (ActionType.COLLECT, ActionType.HISTORY,
                           ActionType.PROFILE, ActionType.TRANSFER):
                for fixture in scenario.context_fixtures:
                    probe = DataOperationRequest(
                        request_id="probe",
                        party=Party(party),
                        action=action,
                        data=DataCategory(category),
                        received_at=scenario.start_time,
                    )
                    snapshot = _fixture_snapshot(fixture, scenario.start_time)
                    if resolve(latent, probe, snapshot).is_no_rule():
                        raise ValidationError(
                            f"latent policy is not total: no rule covers "
                            f"({party}, {action.value}, {category})",
                            field="latentRules",
                        )


def _weights(count: int, exponent: float) -> list[float] | None:
    if exponent == 0.0:
        return None
    return [1.0 / (rank + 1) ** exponent for rank in range(count)]


def run_scenario(scenario: Scenario) -> Metrics:
    rng = random.Random(scenario.seed)
    data_groups, party_groups = _build_groups(scenario)

    latent = RuleSet(
        rules=_parse_rules(scenario.latent_rules, scenario.start_time),
        data_groups=data_groups,
        party_groups=party_groups,
    )
    _validate_latent(latent, scenario)

    # The agent starts with the user's groups (and any pre-seeded rules),
    # but none of the latent policy: that is what it has to learn.
    agent_rules = RuleSet(
        rules=_parse_rules(scenario.preseed_rules, scenario.start_time),
        data_groups=data_groups,
        party_groups=party_groups,
    )

    hub = CommunityHub()
    for doc in scenario.hub_profiles:
        hub.publish_profile(profile_from_dict(doc))
    hub_config = HubConfig(
        min_contributors=scenario.hub_min_contributors,
        similarity_threshold=scenario.hub_similarity_threshold,
        min_agreement=scenario.hub_min_agreement,
    )
    community = LocalHubSource(hub, SIM_PSEUDONYM, hub_config) if len(hub) else None

    fixture_cell: dict = {"fixture": scenario.context_fixtures[0] if scenario.context_fixtures else {}}
    clock_cell = {"now": scenario.start_time}

    def _network():
        raw = fixture_cell["fixture"].get("network")
        return network_from_dict(raw) if raw else None

    def _location():
        raw = fixture_cell["fixture"].get("location")
        return location_from_dict(raw) if raw else None

    def _requester():
        return fixture_cell["fixture"].get("requesterObject")

    agent = ConsentAgent(
        rule_set=agent_rules,
        context_manager=ContextManager(network=_network, location=_location,
                                       requester_object=_requester),
        log=DecisionLog(),
        miner_config=MinerConfig(scenario.min_support, scenario.min_confidence),
        community=community,
        config=AgentConfig(),
        clock=lambda: clock_cell["now"],
    )

    weights_p = _weights(len(scenario.parties), scenario.zipf_exponent)
    weights_c = _weights(len(scenario.categories), scenario.zipf_exponent)
    actions = (ActionType.COLLECT, ActionType.HISTORY, ActionType.PROFILE, ActionType.TRANSFER)

    windows: list[WindowMetrics] = []
    window_prompts = 0
    window_requests = 0
    total_prompts = 0
    hints_attached = 0
    hints_correct = 0
    correct = 0

    for i in range(scenario.request_count):
        party = rng.choices(scenario.parties, weights=weights_p)[0] if weights_p \
            else rng.choice(scenario.parties)
        category = rng.choices(scenario.categories, weights=weights_c)[0] if weights_c \
            else rng.choice(scenario.categories)
        action = rng.choice(actions)
        fixture_cell["fixture"] = rng.choice(scenario.context_fixtures) \
            if scenario.context_fixtures else {}

        now = clock_cell["now"]
        request = DataOperationRequest(
            request_id=f"sim-{i}",
            party=Party(party),
            action=action,
            data=DataCategory(category),
            received_at=now,
        )
        snapshot = _fixture_snapshot(fixture_cell["fixture"], now)
        latent_outcome = resolve(latent, request, snapshot)
        latent_verdict = latent_outcome.kind
        assert latent_verdict in (Verdict.ALLOW, Verdict.DENY)

        result = agent.authorize(request)
        if result.status is ResultStatus.PENDING:
            total_prompts += 1
            window_prompts += 1
            prompt = agent.prompt(result.prompt_id)
            hint = prompt.attached_hint
            make_rule = False
            if hint is not None:
                hints_attached += 1
                if hint.proposed.verdict is latent_verdict:
                    hints_correct += 1
                    make_rule = True
            if scenario.answer_delay_s:
                clock_cell["now"] = clock_cell["now"] + timedelta(seconds=scenario.answer_delay_s)
            agent.answer_prompt(result.prompt_id, latent_verdict, make_rule)
            final_verdict = latent_verdict
        else:
            final_verdict = Verdict(result.status.value)

        if final_verdict is latent_verdict:
            correct += 1

        window_requests += 1
        if window_requests == WINDOW_SIZE or i == scenario.request_count - 1:
            windows.append(
                WindowMetrics(
                    index=len(windows),
                    requests=window_requests,
                    prompts=window_prompts,
                    rules_at_end=len(agent.rule_set.rules),
                )
            )
            window_prompts = 0
            window_requests = 0

        clock_cell["now"] = clock_cell["now"] + timedelta(seconds=scenario.clock_step_s)

    return Metrics(
        windows=tuple(windows),
        total_requests=scenario.request_count,
        total_prompts=total_prompts,
        hints_attached=hints_attached,
        hints_correct=hints_correct,
        correct_decisions=correct,
    )


# ---------------------------------------------------------------------------
# The default scenario: 10 latent rules, 500 requests, seed 42.
# ---------------------------------------------------------------------------

def default_scenario(**overrides) -> Scenario:
    parties = ("Alice", "Bob", "HealthApp", "WeatherCo", "AdTech", "DataBroker")
    categories = ("location", "temperature", "humidity", "heartrate", "contacts")
    party_groups = {
        "friends": ["Alice", "Bob"],
        "services": ["HealthApp", "WeatherCo"],
        "lowtrust": ["AdTech", "DataBroker"],
    }
    data_groups = {
        "environment": ["temperature", "humidity"],
        "sensitive": ["location", "heartrate", "contacts"],
    }

    def rule(rule_id, verdict, action, data, party):
        return {
            "id": rule_id,
            "verdict": verdict,
            "action": action,
            "data": data,
            "party": party,
            "context": None,
            "origin": "user",
        }

    wildcard = {"kind": "any", "value": None}
    latent = [
        rule("lp-1", "deny", "any", {"kind": "group", "value": "sensitive"},
             {"kind": "group", "value": "lowtrust"}),
        rule("lp-2", "deny", "transfer", wildcard, wildcard),
        rule("lp-3", "deny", "history", {"kind": "group", "value": "sensitive"}, wildcard),
        rule("lp-4", "deny", "profile", wildcard, {"kind": "group", "value": "lowtrust"}),
        rule("lp-5", "deny", "any", {"kind": "exact", "value": "contacts"},
             {"kind": "group", "value": "services"}),
        rule("lp-6", "deny", "profile", {"kind": "exact", "value": "heartrate"}, wildcard),
        rule("lp-7", "deny", "history", {"kind": "exact", "value": "location"},
             {"kind": "group", "value": "friends"}),
        rule("lp-8", "allow", "any", {"kind": "group", "value": "environment"}, wildcard),
        rule("lp-9", "allow", "collect", wildcard, {"kind": "group", "value": "friends"}),
        rule("lp-10", "allow", "any", wildcard, wildcard),
    ]

    fixtures = (
        {"network": {"name": "home-wifi"},
         "location": {"kind": "point", "lat": 43.62, "lon": 7.05},
         "requesterObject": "sensor-1"},
        {"network": {"name": "home-wifi"},
         "location": {"kind": "zone", "name": "home"},
         "requesterObject": "sensor-2"},
        {"network": {"name": "home-wifi"}, "requesterObject": "cam-3"},
    )

    # A small consistent community: peers who already deny what the latent
    # policy denies. Rule signatures carry the context class a learned rule
    # would have; evidence lives in context-free decision summaries.
    hub_profiles = []
    deny_keys = [
        ("collect", "location", "lowtrust"),
        ("collect", "contacts", "lowtrust"),
        ("history", "location", "friends"),
        ("transfer", "temperature", "services"),
        ("profile", "heartrate", "services"),
    ]
    for p in range(6):
        signatures = [
            {"verdict": "deny", "action": action, "data": data, "party": party,
             "contextClass": "network+timewindow"}
            for action, data, party in deny_keys
        ]
        summaries = [
            {"action": action, "data": data, "party": party, "contextClass": "none",
             "allowCount": 0, "denyCount": 2}
            for action, data, party in deny_keys
        ]
        hub_profiles.append(
            {"pseudonym": f"peer-{p}", "ruleSignatures": signatures,
             "decisionSummaries": summaries}
        )

    base = Scenario(
        seed=42,
        request_count=500,
        parties=parties,
        categories=categories,
        party_groups=party_groups,
        data_groups=data_groups,
        latent_rules=tuple(latent),
        context_fixtures=fixtures,
        hub_profiles=tuple(hub_profiles),
    )
    if overrides:
        from dataclasses import replace

        base = replace(base, **overrides)
    return base
