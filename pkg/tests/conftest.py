from __future__ import annotations

from datetime import datetime

import pytest

from consentry.engine import RuleSet
from consentry.model import (
    ActionType,
    ContextSnapshot,
    DataCategory,
    DataGroup,
    DataOperationRequest,
    Party,
    PartyGroup,
    Rule,
    Selector,
    Verdict,
)

from generators import T0


@pytest.fixture
def paper_rule_set() -> RuleSet:
    """The three illustrative rules: allow Bob's temperature collection,
    deny the employer's location history, deny everything on direct
    personal data for the low-trust group."""
    low_trust = PartyGroup(
        "Low Trust", frozenset({Party("AdTech"), Party("DataBroker"), Party("FreeApp")})
    )
    direct_personal = DataGroup(
        "Direct Personal Data",
        frozenset({DataCategory("contacts"), DataCategory("email"), DataCategory("name")}),
    )
    rules = (
        Rule(
            rule_id="allow-bob-temp",
            verdict=Verdict.ALLOW,
            action=ActionType.COLLECT,
            data=Selector.exact("temperature"),
            party=Selector.exact("Bob"),
            created_at=T0,
        ),
        Rule(
            rule_id="deny-employer-history",
            verdict=Verdict.DENY,
            action=ActionType.HISTORY,
            data=Selector.exact("location"),
            party=Selector.exact("Employer"),
            created_at=T0,
        ),
        Rule(
            rule_id="deny-lowtrust-personal",
            verdict=Verdict.DENY,
            action=ActionType.ANY,
            data=Selector.group("Direct Personal Data"),
            party=Selector.group("Low Trust"),
            created_at=T0,
        ),
    )
    return RuleSet(
        rules=rules,
        data_groups={direct_personal.name: direct_personal},
        party_groups={low_trust.name: low_trust},
    )


def make_request(
    party: str = "Bob",
    action: ActionType = ActionType.COLLECT,
    data: str = "temperature",
    request_id: str = "req-1",
    at: datetime = T0,
) -> DataOperationRequest:
    return DataOperationRequest(
        request_id=request_id,
        party=Party(party),
        action=action,
        data=DataCategory(data),
        received_at=at,
    )


def make_snapshot(when: datetime = T0, **kwargs) -> ContextSnapshot:
    return ContextSnapshot(when=when, **kwargs)
