"""Rule matching and deny-priority conflict resolution.

``resolve`` collects every applicable rule for a (request, context) pair and
combines verdicts as Deny > Prompt > Allow: a single matching Deny settles
the outcome regardless of anything else. Specificity only orders the matched
rule ids for explanation; it never changes the verdict.

RuleSet is an immutable snapshot; every mutation returns a fresh instance
with the revision bumped, so readers never observe a torn state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

from .context import context_matches
from .model import (
    ActionType,
    ConfigurationError,
    ContextSnapshot,
    DataCategory,
    DataGroup,
    DataOperationRequest,
    Party,
    PartyGroup,
    Rule,
    SelectorKind,
    ValidationError,
    Verdict,
)


class RuleSetError(ValidationError):
    """A rule-set mutation violated a precondition; the set is unchanged."""


class DuplicateRuleError(RuleSetError):
    pass


class UnknownEntityError(RuleSetError):
    """The named rule or group does not exist."""


class GroupInUseError(RuleSetError):
    """A live rule still references the group."""


@dataclass(frozen=True)
class Outcome:
    """Result of resolving a request against a rule set.

    ``matched_rule_ids`` is ordered by descending specificity (ties: older
    rule first) and is empty exactly when no rule matched.
    """

    kind: Verdict | None
    matched_rule_ids: tuple[str, ...] = ()

    def is_no_rule(self) -> bool:
        return self.kind is None


NO_RULE = Outcome(kind=None)


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...] = ()
    data_groups: Mapping[str, DataGroup] = field(default_factory=dict)
    party_groups: Mapping[str, PartyGroup] = field(default_factory=dict)
    revision: int = 0

    def __post_init__(self) -> None:
        ids = [r.rule_id for r in self.rules]
        if len(ids) != len(set(ids)):
            raise RuleSetError("rule ids must be unique", field="rules")

    def rule(self, rule_id: str) -> Rule | None:
        for r in self.rules:
            if r.rule_id == rule_id:
                return r
        return None

    # -- mutations (functional: each returns the updated set) --------------

    def add_rule(self, rule: Rule) -> "RuleSet":
        if self.rule(rule.rule_id) is not None:
            raise DuplicateRuleError(f"duplicate rule id: {rule.rule_id}", field="id")
        _check_group_refs(rule, self.data_groups, self.party_groups)
        return replace(self, rules=self.rules + (rule,), revision=self.revision + 1)

    def remove_rule(self, rule_id: str) -> "RuleSet":
        if self.rule(rule_id) is None:
            raise UnknownEntityError(f"unknown rule id: {rule_id}", field="id")
        remaining = tuple(r for r in self.rules if r.rule_id != rule_id)
        return replace(self, rules=remaining, revision=self.revision + 1)

    def upsert_data_group(self, group: DataGroup) -> "RuleSet":
        groups = dict(self.data_groups)
        groups[group.name] = group
        return replace(self, data_groups=groups, revision=self.revision + 1)

    def delete_data_group(self, name: str) -> "RuleSet":
        if name not in self.data_groups:
            raise UnknownEntityError(f"unknown data group: {name}", field="name")
        holders = [r.rule_id for r in self.rules
                   if r.data.kind is SelectorKind.GROUP and r.data.value == name]
        if holders:
            raise GroupInUseError(
                f"data group {name!r} is referenced by rules: {', '.join(holders)}", field="name"
            )
        groups = dict(self.data_groups)
        del groups[name]
        return replace(self, data_groups=groups, revision=self.revision + 1)

    def upsert_party_group(self, group: PartyGroup) -> "RuleSet":
        groups = dict(self.party_groups)
        groups[group.name] = group
        return replace(self, party_groups=groups, revision=self.revision + 1)

    def delete_party_group(self, name: str) -> "RuleSet":
        if name not in self.party_groups:
            raise UnknownEntityError(f"unknown party group: {name}", field="name")
        holders = [r.rule_id for r in self.rules
                   if r.party.kind is SelectorKind.GROUP and r.party.value == name]
        if holders:
            raise GroupInUseError(
                f"party group {name!r} is referenced by rules: {', '.join(holders)}", field="name"
            )
        groups = dict(self.party_groups)
        del groups[name]
        return replace(self, party_groups=groups, revision=self.revision + 1)


def _check_group_refs(
    rule: Rule,
    data_groups: Mapping[str, DataGroup],
    party_groups: Mapping[str, PartyGroup],
) -> None:
    if rule.data.kind is SelectorKind.GROUP and rule.data.value not in data_groups:
        raise RuleSetError(f"rule references unknown data group: {rule.data.value}", field="data")
    if rule.party.kind is SelectorKind.GROUP and rule.party.value not in party_groups:
        raise RuleSetError(f"rule references unknown party group: {rule.party.value}", field="party")


def matches(
    rule: Rule,
    request: DataOperationRequest,
    context: ContextSnapshot,
    data_groups: Mapping[str, DataGroup],
    party_groups: Mapping[str, PartyGroup],
) -> bool:
    """Applicability test: every rule dimension accepts the request.

    Group references are expanded at match time against the supplied tables;
    a dangling reference signals a corrupted rule set.
    """
    if rule.action is not ActionType.ANY and rule.action is not request.action:
        return False
    if not _data_matches(rule, request.data, data_groups):
        return False
    if not _party_matches(rule, request.party, party_groups):
        return False
    if rule.context is not None and not context_matches(rule.context, context):
        return False
    return True


def _data_matches(rule: Rule, data: DataCategory, groups: Mapping[str, DataGroup]) -> bool:
    sel = rule.data
    if sel.kind is SelectorKind.ANY:
        return True
    if sel.kind is SelectorKind.EXACT:
        return sel.value == data.id
    group = groups.get(sel.value or "")
    if group is None:
        raise ConfigurationError(
            f"rule {rule.rule_id} references unknown data group {sel.value!r}"
        )
    return group.contains(data)


def _party_matches(rule: Rule, party: Party, groups: Mapping[str, PartyGroup]) -> bool:
    sel = rule.party
    if sel.kind is SelectorKind.ANY:
        return True
    if sel.kind is SelectorKind.EXACT:
        return sel.value == party.id
    group = groups.get(sel.value or "")
    if group is None:
        raise ConfigurationError(
            f"rule {rule.rule_id} references unknown party group {sel.value!r}"
        )
    return group.contains(party)


def resolve(rule_set: RuleSet, request: DataOperationRequest, context: ContextSnapshot) -> Outcome:
    """Collect all matching rules and combine with Deny > Prompt > Allow.

    Returns NO_RULE when nothing matches. Pure: same inputs, same outcome.
    """
    matched = [
        r for r in rule_set.rules
        if matches(r, request, context, rule_set.data_groups, rule_set.party_groups)
    ]
    if not matched:
        return NO_RULE
    matched.sort(key=lambda r: (-r.specificity(), r.created_at))
    verdicts = {r.verdict for r in matched}
    if Verdict.DENY in verdicts:
        kind = Verdict.DENY
    elif Verdict.PROMPT in verdicts:
        kind = Verdict.PROMPT
    else:
        kind = Verdict.ALLOW
    return Outcome(kind=kind, matched_rule_ids=tuple(r.rule_id for r in matched))


def deciding_rule_id(outcome: Outcome, rule_set: RuleSet) -> str | None:
    """Most specific matched rule whose verdict equals the outcome's."""
    if outcome.kind is None:
        return None
    for rule_id in outcome.matched_rule_ids:
        rule = rule_set.rule(rule_id)
        if rule is not None and rule.verdict is outcome.kind:
            return rule_id
    return None
