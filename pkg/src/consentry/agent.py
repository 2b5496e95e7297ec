"""The semi-autonomous decision agent.

``authorize`` runs one fixed chain per request: sense context, resolve the
rule set, and on a miss consult behavior mining, then the community, before
escalating to the prompt inbox. Explicit Prompt rules mean "always ask" and
skip the hint sources entirely. Every terminal Allow/Deny, whether decided
by a rule or by a human answer, lands exactly once in the decision log.

Unanswered prompts expire to Deny: absence of a response is not consent,
so the timeout verdict is fixed and not configurable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from threading import Lock
from typing import Callable, Optional, Protocol, Sequence

from . import engine, miner
from .context import ContextManager
from .engine import RuleSet
from .miner import DecisionLog, MinerConfig, derived_context_pattern
from .model import (
    ConfigurationError,
    ContextSnapshot,
    DataOperationRequest,
    DecisionRecord,
    DecisionSource,
    DecisionSourceKind,
    HintProvenanceKind,
    Rule,
    RuleHint,
    RuleOrigin,
    Selector,
    ValidationError,
    Verdict,
)


class PromptState(str, Enum):
    PENDING = "pending"
    ANSWERED = "answered"
    EXPIRED = "expired"


@dataclass(frozen=True)
class Prompt:
    """One open question to the human; transitions once, to Answered or
    Expired, and never leaves that state."""

    prompt_id: str
    request: DataOperationRequest
    context: ContextSnapshot
    created_at: datetime
    attached_hint: RuleHint | None = None
    state: PromptState = PromptState.PENDING
    answered_verdict: Verdict | None = None
    made_rule: bool = False


@dataclass(frozen=True)
class AgentConfig:
    """Timeout after which a pending prompt expires. The expiry verdict is
    always Deny, by design."""

    prompt_timeout: timedelta = timedelta(seconds=300)


TIMEOUT_VERDICT = Verdict.DENY


class ResultStatus(str, Enum):
    ALLOW = "allow"
    DENY = "deny"
    PENDING = "pending"


@dataclass(frozen=True)
class AuthorizationResult:
    status: ResultStatus
    prompt_id: str | None = None
    record: DecisionRecord | None = None
    matched_rule_id: str | None = None
    fault: str | None = None


@dataclass(frozen=True)
class FaultRecord:
    """Operator-visible note about a failed (fail-closed) evaluation."""

    at: datetime
    request_id: str
    message: str


class UnknownPromptError(ValidationError):
    pass


class PromptAlreadyClosedError(ValidationError):
    pass


class CommunityHintSource(Protocol):
    """Anything that can ask the community about a situation.

    Implementations must swallow transport failures and return None; the
    decision chain never stalls on the hub.
    """

    def __call__(
        self,
        request: DataOperationRequest,
        context: ContextSnapshot,
        rule_set: RuleSet,
        decisions: Sequence[DecisionRecord],
    ) -> RuleHint | None: ...


TraceSink = Optional[list]


class ConsentAgent:
    """One agent per data subject; calls are serialized into one pipeline."""

    def __init__(
        self,
        rule_set: RuleSet | None = None,
        context_manager: ContextManager | None = None,
        log: DecisionLog | None = None,
        miner_config: MinerConfig = MinerConfig(),
        community: CommunityHintSource | None = None,
        config: AgentConfig = AgentConfig(),
        clock: Callable[[], datetime] | None = None,
        prompts: Sequence[Prompt] = (),
        decision_sink: Callable[[DecisionRecord], None] | None = None,
        rules_sink: Callable[[RuleSet], None] | None = None,
        prompts_sink: Callable[[tuple[Prompt, ...]], None] | None = None,
    ) -> None:
        self._rule_set = rule_set if rule_set is not None else RuleSet()
        self._context = context_manager if context_manager is not None else ContextManager()
        self._log = log if log is not None else DecisionLog()
        self._miner_config = miner_config
        self._community = community
        self._config = config
        self._clock = clock if clock is not None else (lambda: datetime.now(timezone.utc))
        self._prompts: dict[str, Prompt] = {p.prompt_id: p for p in prompts}
        self._statuses: dict[str, AuthorizationResult] = {}
        self._faults: list[FaultRecord] = []
        self._lock = Lock()
        self._decision_sink = decision_sink
        self._rules_sink = rules_sink
        self._prompts_sink = prompts_sink
        self._prompt_seq = _next_prompt_seq(self._prompts)

    # -- read-only views ----------------------------------------------------

    @property
    def rule_set(self) -> RuleSet:
        return self._rule_set

    @property
    def log(self) -> DecisionLog:
        return self._log

    @property
    def config(self) -> AgentConfig:
        return self._config

    def pending_prompts(self) -> list[Prompt]:
        with self._lock:
            pending = [p for p in self._prompts.values() if p.state is PromptState.PENDING]
        pending.sort(key=lambda p: (p.created_at, p.prompt_id))
        return pending

    def all_prompts(self) -> list[Prompt]:
        with self._lock:
            prompts = list(self._prompts.values())
        prompts.sort(key=lambda p: (p.created_at, p.prompt_id))
        return prompts

    def prompt(self, prompt_id: str) -> Prompt | None:
        return self._prompts.get(prompt_id)

    def request_status(self, request_id: str) -> AuthorizationResult | None:
        return self._statuses.get(request_id)

    def faults(self) -> list[FaultRecord]:
        return list(self._faults)

    # -- rule-set administration (gateway surface) ---------------------------

    def update_rules(self, mutate: Callable[[RuleSet], RuleSet]) -> RuleSet:
        with self._lock:
            self._rule_set = mutate(self._rule_set)
            if self._rules_sink:
                self._rules_sink(self._rule_set)
            return self._rule_set

    # -- the decision chain ---------------------------------------------------

    def authorize(self, request: DataOperationRequest, trace: TraceSink = None) -> AuthorizationResult:
        with self._lock:
            now = self._clock()
            _mark(trace, "getContext")
            ctx = self._context.get_context(now)

            _mark(trace, "resolve")
            try:
                outcome = engine.resolve(self._rule_set, request, ctx)
            except ConfigurationError as exc:
                fault = FaultRecord(at=now, request_id=request.request_id, message=str(exc))
                self._faults.append(fault)
                result = AuthorizationResult(status=ResultStatus.DENY, fault=fault.message)
                self._statuses[request.request_id] = result
                return result

            if outcome.kind in (Verdict.ALLOW, Verdict.DENY):
                rule_id = engine.deciding_rule_id(outcome, self._rule_set)
                record = DecisionRecord(
                    request=request,
                    context=ctx,
                    verdict=outcome.kind,
                    source=DecisionSource(kind=DecisionSourceKind.RULE, ref=rule_id),
                    decided_at=now,
                )
                self._append_decision(record)
                result = AuthorizationResult(
                    status=ResultStatus(outcome.kind.value),
                    record=record,
                    matched_rule_id=rule_id,
                )
                self._statuses[request.request_id] = result
                return result

            if outcome.kind is Verdict.PROMPT:
                # The user asked to be asked; hints stay out of the way.
                return self._open_prompt(request, ctx, hint=None, now=now, trace=trace)

            # No rule matched: consult the hint sources in order.
            _mark(trace, "minerHint")
            hint = miner.get_rule_hint(
                self._log,
                request.party,
                request.data,
                request.action,
                ctx,
                self._rule_set.data_groups,
                self._rule_set.party_groups,
                self._miner_config,
            )
            if hint is None:
                _mark(trace, "communityHint")
                if self._community is not None:
                    hint = self._community(request, ctx, self._rule_set, self._log.snapshot())
            return self._open_prompt(request, ctx, hint=hint, now=now, trace=trace)

    def _open_prompt(
        self,
        request: DataOperationRequest,
        ctx: ContextSnapshot,
        hint: RuleHint | None,
        now: datetime,
        trace: TraceSink,
    ) -> AuthorizationResult:
        _mark(trace, "prompt")
        self._prompt_seq += 1
        prompt = Prompt(
            prompt_id=f"prompt-{self._prompt_seq}",
            request=request,
            context=ctx,
            created_at=now,
            attached_hint=hint,
        )
        self._prompts[prompt.prompt_id] = prompt
        self._notify_prompts()
        result = AuthorizationResult(status=ResultStatus.PENDING, prompt_id=prompt.prompt_id)
        self._statuses[request.request_id] = result
        return result

    def answer_prompt(self, prompt_id: str, verdict: Verdict, make_rule: bool) -> DecisionRecord:
        if verdict not in (Verdict.ALLOW, Verdict.DENY):
            raise ValidationError("answers are Allow or Deny", field="verdict")
        with self._lock:
            prompt = self._prompts.get(prompt_id)
            if prompt is None:
                raise UnknownPromptError(f"unknown prompt: {prompt_id}", field="promptId")
            if prompt.state is not PromptState.PENDING:
                raise PromptAlreadyClosedError(
                    f"prompt {prompt_id} is already {prompt.state.value}", field="promptId"
                )
            now = self._clock()

            hint = prompt.attached_hint
            if hint is not None and hint.proposed.verdict is verdict:
                source = DecisionSource(kind=DecisionSourceKind.ACCEPTED_HINT, ref=hint.hint_id)
            else:
                source = DecisionSource(kind=DecisionSourceKind.PROMPT_ANSWER, ref=prompt_id)
            record = DecisionRecord(
                request=prompt.request,
                context=prompt.context,
                verdict=verdict,
                source=source,
                decided_at=now,
            )
            self._append_decision(record)

            if make_rule:
                rule = Rule(
                    rule_id=f"rule-{prompt_id}",
                    verdict=verdict,
                    action=prompt.request.action,
                    data=Selector.exact(prompt.request.data.id),
                    party=Selector.exact(prompt.request.party.id),
                    context=derived_context_pattern(prompt.context),
                    origin=_rule_origin_for(hint),
                    created_at=now,
                )
                self._rule_set = self._rule_set.add_rule(rule)
                if self._rules_sink:
                    self._rules_sink(self._rule_set)

            self._prompts[prompt_id] = replace(
                prompt, state=PromptState.ANSWERED, answered_verdict=verdict, made_rule=make_rule
            )
            self._notify_prompts()
            result = AuthorizationResult(status=ResultStatus(verdict.value), record=record)
            self._statuses[prompt.request.request_id] = result
            return record

    def expire_prompts(self, now: datetime | None = None) -> list[str]:
        """Expire pending prompts older than the timeout; each expiry is a
        Deny decision and creates no rule."""
        with self._lock:
            if now is None:
                now = self._clock()
            expired: list[str] = []
            for prompt_id, prompt in list(self._prompts.items()):
                if prompt.state is not PromptState.PENDING:
                    continue
                if now - prompt.created_at <= self._config.prompt_timeout:
                    continue
                record = DecisionRecord(
                    request=prompt.request,
                    context=prompt.context,
                    verdict=TIMEOUT_VERDICT,
                    source=DecisionSource(kind=DecisionSourceKind.PROMPT_ANSWER, ref=prompt_id),
                    decided_at=now,
                )
                self._append_decision(record)
                self._prompts[prompt_id] = replace(prompt, state=PromptState.EXPIRED)
                self._statuses[prompt.request.request_id] = AuthorizationResult(
                    status=ResultStatus.DENY, record=record
                )
                expired.append(prompt_id)
            if expired:
                self._notify_prompts()
            return expired

    # -- internals ------------------------------------------------------------

    def _append_decision(self, record: DecisionRecord) -> None:
        self._log.register_action(record)
        if self._decision_sink:
            self._decision_sink(record)

    def _notify_prompts(self) -> None:
        if self._prompts_sink:
            self._prompts_sink(tuple(self._prompts.values()))


def _mark(trace: TraceSink, step: str) -> None:
    if trace is not None:
        trace.append(step)


def _rule_origin_for(hint: RuleHint | None) -> RuleOrigin:
    if hint is None:
        return RuleOrigin.USER_AUTHORED
    if hint.provenance.kind is HintProvenanceKind.BEHAVIOR:
        return RuleOrigin.BEHAVIOR_HINT
    return RuleOrigin.COMMUNITY_HINT


def _next_prompt_seq(prompts: dict[str, Prompt]) -> int:
    top = 0
    for prompt_id in prompts:
        tail = prompt_id.rsplit("-", 1)[-1]
        if tail.isdigit():
            top = max(top, int(tail))
    return top
