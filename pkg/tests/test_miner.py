"""Behavior mining: lattice search under support/confidence thresholds,
checked exactly against the brute-force oracle."""

from __future__ import annotations

import random
from datetime import timedelta

import pytest

from consentry import engine
from consentry.miner import DecisionLog, MinerConfig, get_rule_hint
from consentry.model import (
    ActionType,
    DataCategory,
    DecisionRecord,
    DecisionSource,
    DecisionSourceKind,
    HintProvenanceKind,
    NetworkDescriptor,
    Party,
    SelectorKind,
    ValidationError,
    Verdict,
)

import oracles
from conftest import make_request, make_snapshot
from generators import T0, random_decision, random_groups, random_snapshot


def record(party, action, data, when, verdict, index=0) -> DecisionRecord:
    return DecisionRecord(
        request=make_request(party=party, action=action, data=data, request_id=f"req-{index}"),
        context=make_snapshot(when=when),
        verdict=verdict,
        source=DecisionSource(DecisionSourceKind.PROMPT_ANSWER, f"prompt-{index}"),
        decided_at=when,
    )


class TestRegisterAction:
    def test_append_to_empty_log(self):
        log = DecisionLog()
        log.register_action(record("Bob", ActionType.COLLECT, "temperature", T0, Verdict.ALLOW))
        assert len(log) == 1

    def test_chronological_order_preserved(self):
        log = DecisionLog()
        stamps = [T0 + timedelta(seconds=i) for i in range(5)]
        for i, when in enumerate(stamps):
            log.register_action(
                record("Bob", ActionType.COLLECT, "temperature", when, Verdict.ALLOW, index=i)
            )
        assert [r.decided_at for r in log.snapshot()] == stamps


class TestMinerConfig:
    def test_defaults(self):
        config = MinerConfig()
        assert config.min_support == 3
        assert config.min_confidence == 0.9

    @pytest.mark.parametrize("confidence", [0.5, 0.3, 1.1])
    def test_confidence_must_be_a_strict_majority(self, confidence):
        with pytest.raises(ValidationError):
            MinerConfig(min_confidence=confidence)


class TestGetRuleHint:
    def test_empty_log_yields_nothing(self):
        hint = get_rule_hint(
            DecisionLog(), Party("Bob"), DataCategory("temperature"),
            ActionType.COLLECT, make_snapshot(), {}, {},
        )
        assert hint is None

    def test_unanimous_history_yields_exact_hint(self):
        # Five Deny records for the same triple, spread across times of day
        # so the context-level candidate cannot reach min support.
        hours = [1, 4, 8, 13, 18]
        log = DecisionLog(
            record("Employer", ActionType.HISTORY, "location",
                   (T0 + timedelta(days=i)).replace(hour=h), Verdict.DENY, index=i)
            for i, h in enumerate(hours)
        )
        hint = get_rule_hint(
            log, Party("Employer"), DataCategory("location"),
            ActionType.HISTORY, make_snapshot(), {}, {},
        )
        assert hint is not None
        assert hint.proposed.verdict is Verdict.DENY
        assert hint.proposed.action is ActionType.HISTORY
        assert hint.proposed.data.value == "location"
        assert hint.proposed.party.value == "Employer"
        assert hint.proposed.context is None
        assert hint.support == 5
        assert hint.confidence == 1.0
        assert hint.provenance.kind is HintProvenanceKind.BEHAVIOR

    def test_mixed_history_below_confidence_yields_nothing(self):
        # 3 Deny + 2 Allow on one exact signature, all in the same context
        # slice, so every lattice ancestor sees the same 0.6 confidence.
        verdicts = [Verdict.DENY] * 3 + [Verdict.ALLOW] * 2
        log = DecisionLog(
            record("Employer", ActionType.HISTORY, "location",
                   T0 + timedelta(minutes=i), v, index=i)
            for i, v in enumerate(verdicts)
        )
        query_ctx = make_snapshot(when=T0 + timedelta(minutes=2))
        assert (
            get_rule_hint(log, Party("Employer"), DataCategory("location"),
                          ActionType.HISTORY, query_ctx, {}, {})
            is None
        )
        # Oracle agrees that no candidate anywhere on the lattice qualifies.
        assert (
            oracles.mine(log.snapshot(), Party("Employer"), DataCategory("location"),
                         ActionType.HISTORY, query_ctx, {}, {}, MinerConfig())
            is None
        )

    def test_wildcard_action_query_rejected(self):
        with pytest.raises(ValidationError):
            get_rule_hint(DecisionLog(), Party("Bob"), DataCategory("temperature"),
                          ActionType.ANY, make_snapshot(), {}, {})

    def test_context_level_candidate_wins_when_history_is_habitual(self):
        # All records inside tonight's window on the same weekday and
        # network: the most specific (context-carrying) candidate qualifies.
        wifi = NetworkDescriptor("home-wifi")
        log = DecisionLog(
            DecisionRecord(
                request=make_request(party="Bob", action=ActionType.COLLECT,
                                     data="temperature", request_id=f"req-{i}"),
                context=make_snapshot(when=T0 + timedelta(minutes=5 * i), network=wifi),
                verdict=Verdict.ALLOW,
                source=DecisionSource(DecisionSourceKind.PROMPT_ANSWER, f"prompt-{i}"),
                decided_at=T0 + timedelta(minutes=5 * i),
            )
            for i in range(4)
        )
        query_ctx = make_snapshot(when=T0 + timedelta(minutes=10), network=wifi)
        hint = get_rule_hint(log, Party("Bob"), DataCategory("temperature"),
                             ActionType.COLLECT, query_ctx, {}, {})
        assert hint is not None
        assert hint.proposed.context is not None
        assert hint.proposed.context.network == wifi
        assert hint.support == 4

    def test_returned_hint_always_matches_the_query(self):
        rng = random.Random(31)
        data_groups, party_groups = random_groups(rng)
        returned = 0
        for i in range(300):
            records = [random_decision(rng, j) for j in range(rng.randint(0, 25))]
            log = DecisionLog(records)
            request = make_request(
                party=rng.choice(["Alice", "Bob", "Employer"]),
                action=rng.choice([ActionType.COLLECT, ActionType.HISTORY]),
                data=rng.choice(["location", "temperature", "contacts"]),
                request_id=f"q{i}",
            )
            snapshot = random_snapshot(rng)
            hint = get_rule_hint(log, request.party, request.data, request.action,
                                 snapshot, data_groups, party_groups)
            if hint is None:
                continue
            returned += 1
            assert engine.matches(hint.proposed, request, snapshot, data_groups, party_groups)
        assert returned > 10

    def test_determinism(self):
        rng = random.Random(13)
        records = [random_decision(rng, i) for i in range(30)]
        log = DecisionLog(records)
        data_groups, party_groups = random_groups(rng)
        snapshot = random_snapshot(rng)
        args = (log, Party("Bob"), DataCategory("location"), ActionType.COLLECT,
                snapshot, data_groups, party_groups)
        assert get_rule_hint(*args) == get_rule_hint(*args)


def assert_hint_equals_oracle(hint, expected) -> None:
    if expected is None:
        assert hint is None
        return
    assert hint is not None, f"oracle found {expected}"
    assert hint.proposed.verdict is expected["verdict"]
    assert hint.support == expected["support"]
    assert hint.confidence == pytest.approx(expected["confidence"], abs=0)
    kind, value = expected["party"]
    assert hint.proposed.party.kind is SelectorKind(kind)
    assert hint.proposed.party.value == value
    kind, value = expected["data"]
    assert hint.proposed.data.kind is SelectorKind(kind)
    assert hint.proposed.data.value == value
    assert hint.proposed.action is expected["action"]
    assert (hint.proposed.context is not None) == expected["has_context"]


class TestLatticeOracle:
    def test_faithfulness_on_randomized_logs(self):
        rng = random.Random(2026)
        config = MinerConfig()
        hits = 0
        for i in range(400):
            records = [random_decision(rng, j) for j in range(rng.randint(0, 30))]
            log = DecisionLog(records)
            data_groups, party_groups = random_groups(rng)
            request = make_request(
                party=rng.choice(["Alice", "Bob", "Carol", "Employer"]),
                action=rng.choice([ActionType.COLLECT, ActionType.HISTORY,
                                   ActionType.TRANSFER]),
                data=rng.choice(["location", "temperature", "contacts", "email"]),
                request_id=f"q{i}",
            )
            snapshot = random_snapshot(rng)
            hint = get_rule_hint(log, request.party, request.data, request.action,
                                 snapshot, data_groups, party_groups, config)
            expected = oracles.mine(records, request.party, request.data, request.action,
                                    snapshot, data_groups, party_groups, config)
            assert_hint_equals_oracle(hint, expected)
            if hint is not None:
                hits += 1
        assert hits > 30  # the sample actually produced hints

    def test_specificity_maximality(self):
        # When a hint is returned, the oracle's full enumeration agrees no
        # strictly more specific candidate qualifies.
        rng = random.Random(404)
        config = MinerConfig(min_support=2, min_confidence=0.75)
        for i in range(200):
            records = [random_decision(rng, j) for j in range(rng.randint(5, 25))]
            data_groups, party_groups = random_groups(rng)
            request = make_request(
                party=rng.choice(["Alice", "Bob"]),
                action=ActionType.COLLECT,
                data=rng.choice(["location", "temperature"]),
                request_id=f"q{i}",
            )
            snapshot = random_snapshot(rng)
            hint = get_rule_hint(DecisionLog(records), request.party, request.data,
                                 request.action, snapshot, data_groups, party_groups, config)
            expected = oracles.mine(records, request.party, request.data, request.action,
                                    snapshot, data_groups, party_groups, config)
            if hint is None:
                assert expected is None
                continue
            generalized = sum(
                1
                for flag in (
                    hint.proposed.party.kind is not SelectorKind.EXACT,
                    hint.proposed.data.kind is not SelectorKind.EXACT,
                    hint.proposed.action is ActionType.ANY,
                    hint.proposed.context is None,
                )
                if flag
            )
            assert generalized == sum(1 for lvl in expected["levels"] if lvl > 0)
