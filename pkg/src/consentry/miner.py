"""Frequency-based mining of rule hints from the decision log.

The miner generalizes the queried situation along four dimensions (party,
data, action, context), each independently relaxed from its exact value
through containing groups to a wildcard, and scores every candidate against
the decision log with plain support/confidence counting. The most specific
candidate clearing both thresholds wins. No model, no weights: every hint is
auditable by recounting the log.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from datetime import timedelta
from threading import Lock
from typing import Iterable, Mapping, Sequence

from .context import context_matches
from .model import (
    ActionType,
    ContextPattern,
    ContextSnapshot,
    DataCategory,
    DataGroup,
    DecisionRecord,
    HintProvenance,
    HintProvenanceKind,
    Party,
    PartyGroup,
    Rule,
    RuleHint,
    RuleOrigin,
    Selector,
    SelectorKind,
    TimeWindow,
    ValidationError,
    Verdict,
)

HALF_WINDOW = timedelta(hours=1)


@dataclass(frozen=True)
class MinerConfig:
    min_support: int = 3
    min_confidence: float = 0.9

    def __post_init__(self) -> None:
        if self.min_support < 1:
            raise ValidationError("min support must be >= 1", field="minSupport")
        if not 0.5 < self.min_confidence <= 1.0:
            raise ValidationError(
                "min confidence must be in (0.5, 1.0]: hints need a strict majority",
                field="minConfidence",
            )


class DecisionLog:
    """Append-only sequence of decision records.

    Readers work from a snapshot taken at call start; appends never mutate
    or reorder existing entries.
    """

    def __init__(self, records: Iterable[DecisionRecord] = ()) -> None:
        self._records: list[DecisionRecord] = list(records)
        self._lock = Lock()

    def register_action(self, record: DecisionRecord) -> None:
        with self._lock:
            self._records.append(record)

    def snapshot(self) -> tuple[DecisionRecord, ...]:
        with self._lock:
            return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)


def derived_context_pattern(snapshot: ContextSnapshot) -> ContextPattern:
    """Habitual-context pattern for a snapshot: its network (when known),
    its weekday, and a two-hour window centered on its time of day."""
    start = (snapshot.when - HALF_WINDOW).time()
    end = (snapshot.when + HALF_WINDOW).time()
    return ContextPattern(
        network=snapshot.network,
        time_window=TimeWindow(start=start, end=end,
                               weekdays=frozenset({snapshot.when.weekday()})),
    )


def _selector_levels(
    token: str, groups: Mapping[str, DataGroup] | Mapping[str, PartyGroup], member_id
) -> list[tuple[Selector, int]]:
    """exact(0) -> each containing group(1) -> wildcard(2)."""
    levels: list[tuple[Selector, int]] = [(Selector.exact(token), 0)]
    for name in sorted(groups):
        if groups[name].contains(member_id):
            levels.append((Selector.group(name), 1))
    levels.append((Selector.wildcard(), 2))
    return levels


def get_rule_hint(
    log: DecisionLog | Sequence[DecisionRecord],
    party: Party,
    data: DataCategory,
    action: ActionType,
    context: ContextSnapshot,
    data_groups: Mapping[str, DataGroup],
    party_groups: Mapping[str, PartyGroup],
    config: MinerConfig = MinerConfig(),
) -> RuleHint | None:
    """Most specific qualifying generalization of the queried situation.

    Support counts the log records a candidate covers; confidence is the
    majority verdict's share of them. Ties between equally specific
    qualifying candidates break toward higher confidence, then higher
    support, then toward keeping the earlier dimensions (party, data,
    action, context) at their more specific level.
    """
    if action is ActionType.ANY:
        raise ValidationError("cannot mine a wildcard action", field="action")
    records = log.snapshot() if isinstance(log, DecisionLog) else tuple(log)
    if not records:
        return None

    party_levels = _selector_levels(party.id, party_groups, party)
    data_levels = _selector_levels(data.id, data_groups, data)
    action_levels: list[tuple[ActionType, int]] = [(action, 0), (ActionType.ANY, 1)]
    derived = derived_context_pattern(context)
    context_levels: list[tuple[ContextPattern | None, int]] = [(derived, 0), (None, 1)]

    counts = _count_matches(
        party_levels, data_levels, action_levels, derived, records,
        data_groups, party_groups,
    )

    best_rank: tuple | None = None
    best: tuple[Selector, Selector, ActionType, ContextPattern | None,
                int, int, Verdict] | None = None
    index = 0
    for p_sel, p_lvl in party_levels:
        for d_sel, d_lvl in data_levels:
            for a_val, a_lvl in action_levels:
                for c_pat, c_lvl in context_levels:
                    allow, deny = counts[index]
                    index += 1
                    support = allow + deny
                    if support < config.min_support:
                        continue
                    majority = max(allow, deny)
                    confidence = majority / support
                    if confidence < config.min_confidence:
                        continue
                    levels = (p_lvl, d_lvl, a_lvl, c_lvl)
                    rank = (
                        sum(1 for lvl in levels if lvl > 0),
                        -confidence,
                        -support,
                        levels,
                        # Group names are the only thing left to
                        # disambiguate once the level vector is fixed.
                        (p_sel.value or "", d_sel.value or ""),
                    )
                    if best_rank is None or rank < best_rank:
                        best_rank = rank
                        verdict = Verdict.ALLOW if allow > deny else Verdict.DENY
                        best = (p_sel, d_sel, a_val, c_pat, support, majority, verdict)

    if best is None:
        return None

    p_sel, d_sel, a_val, c_pat, support, majority, verdict = best
    encoding = "|".join(
        (
            p_sel.kind.value, p_sel.value or "*",
            d_sel.kind.value, d_sel.value or "*",
            a_val.value,
            "ctx" if c_pat is not None else "-",
        )
    )
    digest = hashlib.sha1(encoding.encode("utf-8")).hexdigest()[:12]
    proposed = Rule(
        rule_id=f"mined-{digest}",
        verdict=verdict,
        action=a_val,
        data=d_sel,
        party=p_sel,
        context=c_pat,
        origin=RuleOrigin.BEHAVIOR_HINT,
        created_at=max(r.decided_at for r in records),
    )
    return RuleHint(
        hint_id=f"bh-{digest}",
        proposed=proposed,
        support=support,
        confidence=majority / support,
        provenance=HintProvenance(kind=HintProvenanceKind.BEHAVIOR),
    )


def _count_matches(
    party_levels: Sequence[tuple[Selector, int]],
    data_levels: Sequence[tuple[Selector, int]],
    action_levels: Sequence[tuple[ActionType, int]],
    derived: ContextPattern,
    records: Sequence[DecisionRecord],
    data_groups: Mapping[str, DataGroup],
    party_groups: Mapping[str, PartyGroup],
) -> list[list[int]]:
    """Per-candidate [allow, deny] counts in one pass over the log.

    Candidate index follows product order (party, data, action, context),
    which lets each dimension be tested once per record instead of once
    per candidate.
    """
    party_members = [
        frozenset(p.id for p in party_groups[sel.value].members)
        if sel.kind is SelectorKind.GROUP else None
        for sel, _ in party_levels
    ]
    data_members = [
        frozenset(c.id for c in data_groups[sel.value].members)
        if sel.kind is SelectorKind.GROUP else None
        for sel, _ in data_levels
    ]
    exact_action = action_levels[0][0]

    n_ctx = 2
    stride_a = n_ctx
    stride_d = len(action_levels) * n_ctx
    stride_p = len(data_levels) * stride_d
    counts = [[0, 0] for _ in range(len(party_levels) * stride_p)]

    for record in records:
        party_id = record.request.party.id
        data_id = record.request.data.id
        p_flags = [
            sel.kind is SelectorKind.ANY
            or (party_id == sel.value if sel.kind is SelectorKind.EXACT
                else party_id in party_members[i])
            for i, (sel, _) in enumerate(party_levels)
        ]
        if not any(p_flags):
            continue
        d_flags = [
            sel.kind is SelectorKind.ANY
            or (data_id == sel.value if sel.kind is SelectorKind.EXACT
                else data_id in data_members[i])
            for i, (sel, _) in enumerate(data_levels)
        ]
        if not any(d_flags):
            continue
        a_flags = (record.request.action is exact_action, True)
        c_flags = (context_matches(derived, record.context), True)
        slot = 0 if record.verdict is Verdict.ALLOW else 1
        for pi, p_ok in enumerate(p_flags):
            if not p_ok:
                continue
            base_p = pi * stride_p
            for di, d_ok in enumerate(d_flags):
                if not d_ok:
                    continue
                base_d = base_p + di * stride_d
                for ai in (0, 1):
                    if not a_flags[ai]:
                        continue
                    base_a = base_d + ai * stride_a
                    for ci in (0, 1):
                        if c_flags[ci]:
                            counts[base_a + ci][slot] += 1
    return counts
