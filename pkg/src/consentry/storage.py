"""On-disk state: rule set, decision log, pending prompts.

The rule set is one JSON document replaced atomically via rename. The
decision log is JSON-lines, append-only, rotated by size; a torn final line
(interrupted append) is dropped with a warning on load, while corruption
anywhere else refuses the load and names the offending line. Pending
prompts are snapshotted as a JSON document; terminal prompts live on only
through their decision records.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .agent import Prompt, PromptState
from .engine import RuleSet
from .model import (
    ConsentryError,
    DataGroup,
    DecisionRecord,
    PartyGroup,
    ValidationError,
    canonical_json,
    context_snapshot_from_dict,
    context_snapshot_to_dict,
    decision_from_dict,
    decision_to_dict,
    format_timestamp,
    hint_from_dict,
    hint_to_dict,
    parse_timestamp,
    request_from_dict,
    request_to_dict,
    rule_from_dict,
    rule_to_dict,
)

log = logging.getLogger(__name__)

RULES_FILE = "rules.json"
DECISIONS_FILE = "decisions.jsonl"
PROMPTS_FILE = "prompts.json"
_ROTATED = re.compile(r"^decisions-(\d{5})\.jsonl$")

DEFAULT_ROTATE_BYTES = 10 * 1024 * 1024


class StorageError(ConsentryError):
    """Load or save failed; ``line`` names the offending record if known."""

    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(message)
        self.line = line


# ---------------------------------------------------------------------------
# Rule set document
# ---------------------------------------------------------------------------

def rule_set_to_dict(rule_set: RuleSet) -> dict:
    return {
        "revision": rule_set.revision,
        "rules": [rule_to_dict(r) for r in rule_set.rules],
        "dataGroups": [
            {"name": g.name, "members": sorted(c.id for c in g.members)}
            for g in sorted(rule_set.data_groups.values(), key=lambda g: g.name)
        ],
        "partyGroups": [
            {"name": g.name, "members": sorted(p.id for p in g.members)}
            for g in sorted(rule_set.party_groups.values(), key=lambda g: g.name)
        ],
    }


def rule_set_from_dict(payload: dict) -> RuleSet:
    from .model import DataCategory, Party

    data_groups = {
        g["name"]: DataGroup(g["name"], frozenset(DataCategory(m) for m in g["members"]))
        for g in payload.get("dataGroups", [])
    }
    party_groups = {
        g["name"]: PartyGroup(g["name"], frozenset(Party(m) for m in g["members"]))
        for g in payload.get("partyGroups", [])
    }
    rules = tuple(rule_from_dict(r) for r in payload.get("rules", []))
    rule_set = RuleSet(
        rules=rules,
        data_groups=data_groups,
        party_groups=party_groups,
        revision=int(payload.get("revision", 0)),
    )
    for rule in rules:
        if rule.data.kind.value == "group" and rule.data.value not in data_groups:
            raise ValidationError(
                f"rule {rule.rule_id} references unknown data group {rule.data.value!r}",
                field="rules",
            )
        if rule.party.kind.value == "group" and rule.party.value not in party_groups:
            raise ValidationError(
                f"rule {rule.rule_id} references unknown party group {rule.party.value!r}",
                field="rules",
            )
    return rule_set


def export_rule_set(rule_set: RuleSet) -> str:
    """Canonical textual export; identical states export byte-identically."""
    return canonical_json(rule_set_to_dict(rule_set)) + "\n"


def import_rule_set(text: str) -> RuleSet:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StorageError(f"rule set document is not valid JSON: {exc}") from exc
    return rule_set_from_dict(payload)


# ---------------------------------------------------------------------------
# Prompt document
# ---------------------------------------------------------------------------

def prompt_to_dict(prompt: Prompt) -> dict:
    return {
        "promptId": prompt.prompt_id,
        "request": request_to_dict(prompt.request),
        "context": context_snapshot_to_dict(prompt.context),
        "createdAt": format_timestamp(prompt.created_at),
        "attachedHint": hint_to_dict(prompt.attached_hint) if prompt.attached_hint else None,
        "state": prompt.state.value,
    }


def prompt_from_dict(payload: dict) -> Prompt:
    hint = payload.get("attachedHint")
    return Prompt(
        prompt_id=payload["promptId"],
        request=request_from_dict(payload["request"]),
        context=context_snapshot_from_dict(payload["context"]),
        created_at=parse_timestamp(payload["createdAt"]),
        attached_hint=hint_from_dict(hint) if hint else None,
        state=PromptState(payload.get("state", "pending")),
    )


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------

class StateStore:
    def __init__(self, directory: Path | str, rotate_bytes: int = DEFAULT_ROTATE_BYTES) -> None:
        self.directory = Path(directory)
        self.rotate_bytes = rotate_bytes

    def initialize(self) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)

    @property
    def rules_path(self) -> Path:
        return self.directory / RULES_FILE

    @property
    def decisions_path(self) -> Path:
        return self.directory / DECISIONS_FILE

    @property
    def prompts_path(self) -> Path:
        return self.directory / PROMPTS_FILE

    # -- rule set ------------------------------------------------------------

    def save_rule_set(self, rule_set: RuleSet) -> None:
        self.initialize()
        _atomic_write(self.rules_path, export_rule_set(rule_set))

    def load_rule_set(self) -> RuleSet:
        if not self.rules_path.exists():
            return RuleSet()
        return import_rule_set(self.rules_path.read_text(encoding="utf-8"))

    # -- decision log ----------------------------------------------------------

    def append_decision(self, record: DecisionRecord) -> None:
        self.initialize()
        path = self.decisions_path
        if path.exists() and path.stat().st_size >= self.rotate_bytes:
            self._rotate()
        line = canonical_json(decision_to_dict(record)) + "\n"
        with path.open("a", encoding="utf-8") as handle:
            handle.write(line)
            handle.flush()
            os.fsync(handle.fileno())

    def _rotate(self) -> None:
        seq = 1 + max(
            (int(m.group(1)) for p in self.directory.iterdir()
             if (m := _ROTATED.match(p.name))),
            default=0,
        )
        self.decisions_path.rename(self.directory / f"decisions-{seq:05d}.jsonl")

    def write_decisions(self, records: Sequence[DecisionRecord]) -> None:
        """Replace the whole log (all segments) with ``records``."""
        self.initialize()
        for path in self._log_segments():
            path.unlink(missing_ok=True)
        with self.decisions_path.open("w", encoding="utf-8") as handle:
            for record in records:
                handle.write(canonical_json(decision_to_dict(record)) + "\n")
            handle.flush()
            os.fsync(handle.fileno())

    def load_decisions(self) -> list[DecisionRecord]:
        records: list[DecisionRecord] = []
        for path in self._log_segments():
            records.extend(self._read_segment(path, truncatable=path == self.decisions_path))
        return records

    def _log_segments(self) -> list[Path]:
        if not self.directory.exists():
            return []
        rotated = sorted(
            (p for p in self.directory.iterdir() if _ROTATED.match(p.name)),
            key=lambda p: p.name,
        )
        if self.decisions_path.exists():
            rotated.append(self.decisions_path)
        return rotated

    def _read_segment(self, path: Path, truncatable: bool) -> list[DecisionRecord]:
        raw = path.read_text(encoding="utf-8")
        lines = raw.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        records: list[DecisionRecord] = []
        for index, line in enumerate(lines, start=1):
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                if truncatable and index == len(lines):
                    log.warning(
                        "decision log %s: dropping torn final line %d", path.name, index
                    )
                    _truncate_to(path, lines[: index - 1])
                    return records
                raise StorageError(
                    f"corrupt decision log {path.name} at line {index}: {exc.msg}", line=index
                ) from exc
            try:
                records.append(decision_from_dict(payload))
            except (ValidationError, KeyError, TypeError) as exc:
                raise StorageError(
                    f"invalid decision record in {path.name} at line {index}: {exc}", line=index
                ) from exc
        return records

    # -- prompts ---------------------------------------------------------------

    def save_prompts(self, prompts: Iterable[Prompt]) -> None:
        self.initialize()
        pending = [p for p in prompts if p.state is PromptState.PENDING]
        pending.sort(key=lambda p: (p.created_at, p.prompt_id))
        payload = {"prompts": [prompt_to_dict(p) for p in pending]}
        _atomic_write(self.prompts_path, canonical_json(payload) + "\n")

    def load_prompts(self) -> list[Prompt]:
        if not self.prompts_path.exists():
            return []
        try:
            payload = json.loads(self.prompts_path.read_text(encoding="utf-8"))
            return [prompt_from_dict(p) for p in payload.get("prompts", [])]
        except (json.JSONDecodeError, KeyError, ValidationError) as exc:
            raise StorageError(f"corrupt prompt store: {exc}") from exc


@dataclass
class PersistedState:
    rule_set: RuleSet
    decisions: list[DecisionRecord]
    prompts: list[Prompt]


def save_state(
    directory: Path | str,
    rule_set: RuleSet,
    decisions: Sequence[DecisionRecord],
    prompts: Sequence[Prompt] = (),
) -> None:
    """Write a full state snapshot (rule set, log, pending prompts)."""
    store = StateStore(directory)
    store.initialize()
    store.save_rule_set(rule_set)
    store.write_decisions(list(decisions))
    store.save_prompts(prompts)


def load_state(directory: Path | str) -> PersistedState:
    store = StateStore(directory)
    return PersistedState(
        rule_set=store.load_rule_set(),
        decisions=store.load_decisions(),
        prompts=store.load_prompts(),
    )


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)


def _truncate_to(path: Path, lines: list[str]) -> None:
    content = "".join(line + "\n" for line in lines)
    _atomic_write(path, content)
