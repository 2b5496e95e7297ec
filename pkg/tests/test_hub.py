"""Community hub: profile normalization, similarity, pooled hints, and the
k-contributor floor."""

from __future__ import annotations

import random

import pytest

from consentry.engine import RuleSet
from consentry.hub import (
    CommunityHub,
    CommunityProfile,
    HubConfig,
    QueryKey,
    RuleSignature,
    build_profile,
    context_class_of,
    get_community_hint,
    profile_from_dict,
    profile_to_dict,
    query_key_for,
    similarity,
)
from consentry.model import (
    ActionType,
    ContextPattern,
    DataCategory,
    DataGroup,
    NamedZone,
    NetworkDescriptor,
    Party,
    PartyGroup,
    Rule,
    Selector,
    TimeWindow,
    ValidationError,
    Verdict,
)

import oracles
from conftest import make_request
from generators import T0, random_decision

QUERY = QueryKey(action=ActionType.COLLECT, data="location", party="lowtrust")


def signature(verdict=Verdict.DENY, action=ActionType.COLLECT, data="location",
              party="lowtrust", context_class="none") -> RuleSignature:
    return RuleSignature(verdict=verdict, action=action, data=data, party=party,
                         context_class=context_class)


def profile(pseudonym: str, *signatures: RuleSignature, summaries=None) -> CommunityProfile:
    return CommunityProfile(
        pseudonym=pseudonym,
        rule_signatures=frozenset(signatures),
        decision_summaries=summaries or {},
    )


class TestSimilarity:
    def test_identical_sets(self):
        a = profile("a", signature(), signature(action=ActionType.TRANSFER))
        b = profile("b", signature(), signature(action=ActionType.TRANSFER))
        assert similarity(a, b) == 1.0

    def test_disjoint_sets(self):
        a = profile("a", signature())
        b = profile("b", signature(action=ActionType.TRANSFER))
        assert similarity(a, b) == 0.0

    def test_partial_overlap(self):
        # |A| = |B| = 4 with 2 shared: 2 / 6.
        shared = [signature(data=d) for d in ("location", "email")]
        only_a = [signature(data=d) for d in ("contacts", "heartrate")]
        only_b = [signature(data=d) for d in ("temperature", "name")]
        a = profile("a", *shared, *only_a)
        b = profile("b", *shared, *only_b)
        assert similarity(a, b) == pytest.approx(2 / 6)

    def test_symmetric_and_reflexive(self):
        a = profile("a", signature())
        b = profile("b", signature(), signature(party="friends"))
        assert similarity(a, b) == similarity(b, a)
        assert similarity(a, a) == 1.0

    def test_two_empty_profiles_count_as_identical(self):
        assert similarity(profile("a"), profile("b")) == 1.0


class TestPublish:
    def test_upsert_replaces_by_pseudonym(self):
        hub = CommunityHub()
        hub.publish_profile(profile("a", signature()))
        hub.publish_profile(profile("a", signature(), signature(party="friends")))
        assert len(hub) == 1
        assert len(hub.profiles()[0].rule_signatures) == 2

    def test_identical_rule_sets_under_distinct_pseudonyms_coexist(self):
        hub = CommunityHub()
        hub.publish_profile(profile("a", signature()))
        hub.publish_profile(profile("b", signature()))
        assert len(hub) == 2

    def test_coordinate_pair_rejected(self):
        hub = CommunityHub()
        leaky = profile("a", signature(party="43.62,7.05"))
        with pytest.raises(ValidationError) as err:
            hub.publish_profile(leaky)
        assert "party" in (err.value.field or "")

    def test_unknown_context_class_rejected(self):
        hub = CommunityHub()
        with pytest.raises(ValidationError):
            hub.publish_profile(profile("a", signature(context_class="lat:43.62")))


class TestGetCommunityHint:
    def _crowd(self, count: int, verdict=Verdict.DENY) -> CommunityHub:
        hub = CommunityHub()
        for i in range(count):
            hub.publish_profile(profile(f"peer-{i}", signature(verdict=verdict)))
        return hub

    def test_empty_hub_yields_nothing(self):
        requester = profile("me", signature())
        assert get_community_hint(CommunityHub(), requester, QUERY) is None

    def test_five_unanimous_similar_profiles(self):
        hub = self._crowd(5)
        requester = profile("me", signature())
        hint = get_community_hint(hub, requester, QUERY)
        assert hint is not None
        assert hint.proposed.verdict is Verdict.DENY
        assert hint.provenance.contributor_count == 5
        assert hint.confidence == 1.0
        assert hint.support == 5

    def test_four_contributors_stay_below_the_floor(self):
        hub = self._crowd(4)
        requester = profile("me", signature())
        assert get_community_hint(hub, requester, QUERY) is None

    def test_requesters_own_profile_is_excluded(self):
        hub = self._crowd(4)
        mine = profile("me", signature())
        hub.publish_profile(mine)  # now 5 stored, but one is the requester
        assert get_community_hint(hub, mine, QUERY) is None

    def test_dissimilar_profiles_do_not_contribute(self):
        hub = self._crowd(5)
        stranger = profile("me", signature(action=ActionType.TRANSFER, data="email",
                                           party="friends"))
        assert get_community_hint(hub, stranger, QUERY) is None

    def test_agreement_floor(self):
        # A shared baseline signature keeps everyone above the similarity
        # threshold regardless of how they vote on the query.
        baseline = signature(verdict=Verdict.ALLOW, action=ActionType.COLLECT,
                             data="temperature", party="friends")
        hub = CommunityHub()
        for i in range(4):
            hub.publish_profile(profile(f"deny-{i}", baseline, signature(verdict=Verdict.DENY)))
        for i in range(2):
            hub.publish_profile(profile(f"allow-{i}", baseline, signature(verdict=Verdict.ALLOW)))
        requester = profile("me", baseline)
        # 4 deny vs 2 allow = 0.667 agreement < 0.8 default.
        assert get_community_hint(hub, requester, QUERY, HubConfig()) is None
        relaxed = HubConfig(min_agreement=0.6)
        hint = get_community_hint(hub, requester, QUERY, relaxed)
        assert hint is not None
        assert hint.proposed.verdict is Verdict.DENY
        assert hint.support == 4
        assert hint.confidence == pytest.approx(4 / 6)

    def test_decision_summaries_add_weight(self):
        hub = CommunityHub()
        for i in range(5):
            hub.publish_profile(
                profile(f"peer-{i}", signature(), summaries={QUERY: (0, 3)})
            )
        requester = profile("me", signature())
        hint = get_community_hint(hub, requester, QUERY)
        assert hint is not None
        assert hint.support == 5 * (1 + 3)

    def test_randomized_hubs_agree_with_pool_oracle(self):
        rng = random.Random(606)
        config = HubConfig(min_contributors=2, similarity_threshold=0.15,
                           min_agreement=0.55)
        verdicts = [Verdict.ALLOW, Verdict.DENY]
        hints = 0
        for i in range(300):
            hub = CommunityHub()
            for p in range(rng.randint(0, 8)):
                sigs = [
                    signature(
                        verdict=rng.choice(verdicts),
                        action=rng.choice([ActionType.COLLECT, ActionType.TRANSFER]),
                        data=rng.choice(["location", "email"]),
                        party=rng.choice(["lowtrust", "friends"]),
                    )
                    for _ in range(rng.randint(1, 4))
                ]
                summaries = {}
                if rng.random() < 0.5:
                    summaries[QUERY] = (rng.randint(0, 3), rng.randint(0, 3))
                hub.publish_profile(
                    CommunityProfile(
                        pseudonym=f"peer-{p}",
                        rule_signatures=frozenset(sigs),
                        decision_summaries=summaries,
                    )
                )
            requester = profile(
                "me",
                *[
                    signature(
                        verdict=rng.choice(verdicts),
                        action=rng.choice([ActionType.COLLECT, ActionType.TRANSFER]),
                        data=rng.choice(["location", "email"]),
                        party=rng.choice(["lowtrust", "friends"]),
                    )
                    for _ in range(rng.randint(1, 3))
                ],
            )
            hint = get_community_hint(hub, requester, QUERY, config)
            expected = oracles.pool_hint(hub.profiles(), requester, QUERY, config)
            if expected is None:
                assert hint is None
                continue
            verdict, support, agreement, contributors = expected
            assert hint is not None
            assert hint.proposed.verdict is verdict
            assert hint.support == support
            assert hint.confidence == pytest.approx(agreement, abs=0)
            assert hint.provenance.contributor_count == contributors
            hints += 1
        assert hints > 20

    def test_k_floor_holds_on_randomized_hubs(self):
        rng = random.Random(707)
        config = HubConfig(min_contributors=4, similarity_threshold=0.0, min_agreement=0.51)
        for i in range(200):
            hub = CommunityHub()
            contributors = rng.randint(0, 6)
            for p in range(contributors):
                hub.publish_profile(profile(f"peer-{p}", signature()))
            requester = profile("me", signature())
            hint = get_community_hint(hub, requester, QUERY, config)
            if contributors < 4:
                assert hint is None
            else:
                assert hint is not None
                assert hint.provenance.contributor_count >= 4


class TestProfileBuilding:
    def _rule_set(self) -> RuleSet:
        lowtrust = PartyGroup("lowtrust", frozenset({Party("AdTech"), Party("FreeApp")}))
        friends = PartyGroup("friends", frozenset({Party("Bob"), Party("AdTech")}))
        personal = DataGroup("personal", frozenset({DataCategory("contacts")}))
        rules = (
            Rule(
                rule_id="r1",
                verdict=Verdict.DENY,
                action=ActionType.ANY,
                data=Selector.group("personal"),
                party=Selector.group("lowtrust"),
                created_at=T0,
            ),
            Rule(
                rule_id="r2",
                verdict=Verdict.ALLOW,
                action=ActionType.COLLECT,
                data=Selector.exact("temperature"),
                party=Selector.exact("AdTech"),  # in two groups
                created_at=T0,
            ),
            Rule(
                rule_id="r3",
                verdict=Verdict.ALLOW,
                action=ActionType.COLLECT,
                data=Selector.exact("heartrate"),
                party=Selector.exact("Stranger"),  # ungrouped: dropped
                created_at=T0,
            ),
        )
        return RuleSet(
            rules=rules,
            data_groups={"personal": personal},
            party_groups={"lowtrust": lowtrust, "friends": friends},
        )

    def test_concrete_parties_become_group_names(self):
        built = build_profile("me", self._rule_set())
        parties = {s.party for s in built.rule_signatures}
        assert parties == {"lowtrust", "friends"}
        # r2's AdTech appears once per containing group.
        r2_sigs = {s for s in built.rule_signatures if s.data == "temperature"}
        assert {s.party for s in r2_sigs} == {"friends", "lowtrust"}

    def test_ungrouped_party_rules_are_dropped(self):
        built = build_profile("me", self._rule_set())
        assert all(s.data != "heartrate" for s in built.rule_signatures)

    def test_context_patterns_reduce_to_class_labels(self):
        pattern = ContextPattern(
            network=NetworkDescriptor("home-wifi"),
            time_window=TimeWindow(T0.time(), T0.time()),
        )
        assert context_class_of(pattern) == "network+timewindow"
        assert context_class_of(ContextPattern(zone=NamedZone("home"))) == "zone"
        assert context_class_of(None) == "none"

    def test_decisions_summarized_under_group_names(self):
        rng = random.Random(5)
        decisions = [random_decision(rng, i) for i in range(10)]
        built = build_profile("me", self._rule_set(), decisions)
        for key in built.decision_summaries:
            assert key.party in {"lowtrust", "friends", "*"}
            assert key.context_class == "none"

    def test_built_profiles_pass_hub_validation(self):
        rng = random.Random(6)
        decisions = [random_decision(rng, i) for i in range(10)]
        built = build_profile("me", self._rule_set(), decisions)
        CommunityHub().publish_profile(built)

    def test_query_key_uses_first_containing_group(self):
        request = make_request(party="AdTech", action=ActionType.COLLECT, data="contacts")
        key = query_key_for(request, self._rule_set())
        assert key.party == "friends"  # alphabetically first of the two
        assert key.data == "contacts"
        request = make_request(party="Nobody", action=ActionType.COLLECT, data="contacts")
        assert query_key_for(request, self._rule_set()).party == "*"

    def test_profile_wire_round_trip(self):
        built = build_profile("me", self._rule_set(),
                              [random_decision(random.Random(9), i) for i in range(5)])
        assert profile_from_dict(profile_to_dict(built)) == built
