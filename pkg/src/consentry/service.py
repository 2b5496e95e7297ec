"""HTTP gateway: the one surface third parties, the console, and the CLI
talk to. JSON request/response over a versioned path prefix (/v1).

Every verdict visible here comes straight from the in-process agent; the
service layer adds validation, persistence wiring, and paging, never
authorization logic of its own.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Callable, Literal, Optional

from fastapi import FastAPI, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .agent import (
    AgentConfig,
    ConsentAgent,
    PromptAlreadyClosedError,
    UnknownPromptError,
)
from .context import ContextManager, manager_from_file
from .engine import DuplicateRuleError, GroupInUseError, UnknownEntityError
from .hub import build_profile
from .hubservice import (
    DEFAULT_CLIENT_TIMEOUT_S,
    RemoteHubClient,
    RemoteHubSource,
    load_or_create_pseudonym,
)
from .miner import DecisionLog, MinerConfig
from .model import (
    ActionType,
    DataCategory,
    DataGroup,
    DataOperationRequest,
    Party,
    PartyGroup,
    Rule,
    ValidationError,
    Verdict,
    decision_to_dict,
    rule_from_dict,
    rule_to_dict,
)
from .storage import (
    DEFAULT_ROTATE_BYTES,
    StateStore,
    StorageError,
    export_rule_set,
    import_rule_set,
    prompt_to_dict,
    rule_set_to_dict,
)

API_PREFIX = "/v1"


@dataclass
class GatewayConfig:
    data_dir: Path
    hub_url: str | None = None
    providers_file: Path | None = None
    min_support: int = 3
    min_confidence: float = 0.9
    prompt_timeout_s: float = 300.0
    hub_timeout_s: float = DEFAULT_CLIENT_TIMEOUT_S
    rotate_bytes: int = DEFAULT_ROTATE_BYTES

    @staticmethod
    def from_file(path: Path | str, **overrides: Any) -> "GatewayConfig":
        import json

        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        merged = {
            "data_dir": Path(payload.get("dataDir", ".")),
            "hub_url": payload.get("hubUrl"),
            "providers_file": Path(payload["providersFile"]) if payload.get("providersFile") else None,
            "min_support": payload.get("minSupport", 3),
            "min_confidence": payload.get("minConfidence", 0.9),
            "prompt_timeout_s": payload.get("promptTimeoutS", 300.0),
            "hub_timeout_s": payload.get("hubTimeoutS", DEFAULT_CLIENT_TIMEOUT_S),
            "rotate_bytes": payload.get("rotateBytes", DEFAULT_ROTATE_BYTES),
        }
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return GatewayConfig(**merged)


class GatewayRuntime:
    """Everything the endpoints need: the agent plus its persistence."""

    def __init__(self, config: GatewayConfig, clock: Callable[[], datetime] | None = None) -> None:
        self.config = config
        self.store = StateStore(config.data_dir, rotate_bytes=config.rotate_bytes)
        self.store.initialize()
        self.clock = clock if clock is not None else (lambda: datetime.now(timezone.utc))

        rule_set = self.store.load_rule_set()
        decisions = self.store.load_decisions()
        prompts = self.store.load_prompts()

        providers = config.providers_file
        if providers is None:
            default_providers = Path(config.data_dir) / "providers.json"
            providers = default_providers if default_providers.exists() else None
        context_manager = manager_from_file(providers) if providers else ContextManager()

        community = None
        self.pseudonym = load_or_create_pseudonym(config.data_dir)
        self.hub_client: RemoteHubClient | None = None
        if config.hub_url:
            self.hub_client = RemoteHubClient(config.hub_url, timeout_s=config.hub_timeout_s)
            community = RemoteHubSource(self.hub_client, self.pseudonym)

        self.agent = ConsentAgent(
            rule_set=rule_set,
            context_manager=context_manager,
            log=DecisionLog(decisions),
            miner_config=MinerConfig(config.min_support, config.min_confidence),
            community=community,
            config=AgentConfig(prompt_timeout=timedelta(seconds=config.prompt_timeout_s)),
            clock=self.clock,
            prompts=prompts,
            decision_sink=self.store.append_decision,
            rules_sink=self.store.save_rule_set,
            prompts_sink=self.store.save_prompts,
        )
        if not self.store.rules_path.exists():
            self.store.save_rule_set(rule_set)


# -- request bodies -----------------------------------------------------------

RequestableAction = Literal["collect", "history", "profile", "transfer"]


class SubmitRequestBody(BaseModel):
    party: str = Field(min_length=1)
    action: RequestableAction
    data: str = Field(min_length=1)
    requestId: Optional[str] = None


class AnswerBody(BaseModel):
    verdict: Literal["allow", "deny"]
    makeRule: bool = False


class SelectorBody(BaseModel):
    kind: Literal["exact", "group", "any"]
    value: Optional[str] = None


class RuleBody(BaseModel):
    id: Optional[str] = None
    verdict: Literal["allow", "deny", "prompt"]
    action: Literal["collect", "history", "profile", "transfer", "any"]
    data: SelectorBody
    party: SelectorBody
    context: Optional[dict] = None
    origin: Literal["user", "behavior-hint", "community-hint", "questionnaire"] = "user"


class GroupBody(BaseModel):
    members: list[str]


def create_gateway_app(
    config: GatewayConfig, clock: Callable[[], datetime] | None = None
) -> FastAPI:
    runtime = GatewayRuntime(config, clock=clock)
    agent = runtime.agent

    app = FastAPI(title="consentry gateway")
    app.state.runtime = runtime
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ValidationError)
    async def _domain_validation_error(request, exc: ValidationError):
        status = 422
        if isinstance(exc, (UnknownPromptError, UnknownEntityError)):
            status = 404
        elif isinstance(exc, (PromptAlreadyClosedError, DuplicateRuleError, GroupInUseError)):
            status = 409
        return JSONResponse(
            status_code=status,
            content={"detail": [{"loc": (exc.field or "").split("."), "msg": str(exc)}]},
        )

    @app.exception_handler(StorageError)
    async def _storage_error(request, exc: StorageError):
        return JSONResponse(status_code=422, content={"detail": [{"loc": [], "msg": str(exc)}]})

    # -- health and faults ---------------------------------------------------

    @app.get(f"{API_PREFIX}/health")
    def health() -> dict:
        return {
            "status": "ok",
            "revision": agent.rule_set.revision,
            "pendingPrompts": len(agent.pending_prompts()),
            "decisions": len(agent.log),
        }

    @app.get(f"{API_PREFIX}/faults")
    def faults() -> dict:
        return {
            "faults": [
                {"at": f.at.isoformat(), "requestId": f.request_id, "message": f.message}
                for f in agent.faults()
            ]
        }

    # -- data-operation requests ----------------------------------------------

    @app.post(f"{API_PREFIX}/requests")
    def submit_request(body: SubmitRequestBody) -> dict:
        agent.expire_prompts()
        request = DataOperationRequest(
            request_id=body.requestId or f"req-{uuid.uuid4().hex[:12]}",
            party=Party(body.party),
            action=ActionType(body.action),
            data=DataCategory(body.data),
            received_at=runtime.clock(),
        )
        result = agent.authorize(request)
        return _result_payload(request.request_id, result)

    @app.get(f"{API_PREFIX}/requests/{{request_id}}")
    def request_status(request_id: str) -> dict:
        agent.expire_prompts()
        result = agent.request_status(request_id)
        if result is None:
            raise UnknownPromptError(f"unknown request: {request_id}", field="requestId")
        return _result_payload(request_id, result)

    # -- prompts ---------------------------------------------------------------

    @app.get(f"{API_PREFIX}/prompts")
    def list_prompts(state: Literal["pending", "all"] = "pending") -> dict:
        agent.expire_prompts()
        prompts = agent.pending_prompts() if state == "pending" else agent.all_prompts()
        return {"prompts": [prompt_to_dict(p) for p in prompts]}

    @app.post(f"{API_PREFIX}/prompts/{{prompt_id}}/answer")
    def answer_prompt(prompt_id: str, body: AnswerBody) -> dict:
        agent.expire_prompts()
        record = agent.answer_prompt(prompt_id, Verdict(body.verdict), body.makeRule)
        return {"record": decision_to_dict(record), "madeRule": body.makeRule}

    # -- rules and groups --------------------------------------------------------

    @app.get(f"{API_PREFIX}/rules")
    def list_rules() -> dict:
        return rule_set_to_dict(agent.rule_set)

    @app.post(f"{API_PREFIX}/rules", status_code=201)
    def add_rule(body: RuleBody) -> dict:
        rule = _rule_from_body(body, runtime.clock())
        agent.update_rules(lambda rs: rs.add_rule(rule))
        return {"rule": rule_to_dict(rule), "revision": agent.rule_set.revision}

    @app.delete(f"{API_PREFIX}/rules/{{rule_id}}")
    def remove_rule(rule_id: str) -> dict:
        agent.update_rules(lambda rs: rs.remove_rule(rule_id))
        return {"removed": rule_id, "revision": agent.rule_set.revision}

    @app.get(f"{API_PREFIX}/rules/export", response_class=PlainTextResponse)
    def export_rules() -> str:
        return export_rule_set(agent.rule_set)

    @app.post(f"{API_PREFIX}/rules/import")
    def import_rules(body: dict) -> dict:
        import json as _json

        imported = import_rule_set(_json.dumps(body))
        agent.update_rules(lambda _: imported)
        return {"rules": len(imported.rules), "revision": imported.revision}

    @app.get(f"{API_PREFIX}/groups")
    def list_groups() -> dict:
        doc = rule_set_to_dict(agent.rule_set)
        return {"dataGroups": doc["dataGroups"], "partyGroups": doc["partyGroups"]}

    @app.put(f"{API_PREFIX}/groups/data/{{name}}")
    def upsert_data_group(name: str, body: GroupBody) -> dict:
        group = DataGroup(name, frozenset(DataCategory(m) for m in body.members))
        agent.update_rules(lambda rs: rs.upsert_data_group(group))
        return {"name": name, "members": sorted(c.id for c in group.members)}

    @app.delete(f"{API_PREFIX}/groups/data/{{name}}")
    def delete_data_group(name: str) -> dict:
        agent.update_rules(lambda rs: rs.delete_data_group(name))
        return {"deleted": name}

    @app.put(f"{API_PREFIX}/groups/party/{{name}}")
    def upsert_party_group(name: str, body: GroupBody) -> dict:
        group = PartyGroup(name, frozenset(Party(m) for m in body.members))
        agent.update_rules(lambda rs: rs.upsert_party_group(group))
        return {"name": name, "members": sorted(p.id for p in group.members)}

    @app.delete(f"{API_PREFIX}/groups/party/{{name}}")
    def delete_party_group(name: str) -> dict:
        agent.update_rules(lambda rs: rs.delete_party_group(name))
        return {"deleted": name}

    # -- decisions ---------------------------------------------------------------

    @app.get(f"{API_PREFIX}/decisions")
    def list_decisions(
        party: Optional[str] = None,
        verdict: Optional[Literal["allow", "deny"]] = None,
        source: Optional[Literal["rule", "prompt-answer", "accepted-hint"]] = None,
        page: int = Query(default=1, ge=1),
        pageSize: int = Query(default=50, ge=1, le=500),
    ) -> dict:
        records = list(agent.log.snapshot())
        if party is not None:
            records = [r for r in records if r.request.party.id == party]
        if verdict is not None:
            records = [r for r in records if r.verdict.value == verdict]
        if source is not None:
            records = [r for r in records if r.source.kind.value == source]
        records.reverse()  # newest first
        total = len(records)
        start = (page - 1) * pageSize
        page_records = records[start : start + pageSize]
        return {
            "total": total,
            "page": page,
            "pageSize": pageSize,
            "records": [decision_to_dict(r) for r in page_records],
        }

    # -- community ------------------------------------------------------------------

    @app.post(f"{API_PREFIX}/community/publish")
    def publish_profile() -> dict:
        if runtime.hub_client is None:
            raise ValidationError("no community hub configured", field="hubUrl")
        profile = build_profile(runtime.pseudonym, agent.rule_set, agent.log.snapshot())
        ack = runtime.hub_client.publish(profile)
        return {
            "published": True,
            "pseudonym": runtime.pseudonym,
            "ruleSignatures": len(profile.rule_signatures),
            "ack": ack,
        }

    return app


def _result_payload(request_id: str, result) -> dict:
    payload: dict[str, Any] = {"requestId": request_id, "status": result.status.value}
    if result.prompt_id is not None:
        payload["promptId"] = result.prompt_id
    if result.matched_rule_id is not None:
        payload["matchedRuleId"] = result.matched_rule_id
    if result.record is not None:
        payload["record"] = decision_to_dict(result.record)
    if result.fault is not None:
        payload["fault"] = result.fault
    return payload


def _rule_from_body(body: RuleBody, now: datetime) -> Rule:
    payload = {
        "id": body.id or f"rule-{uuid.uuid4().hex[:12]}",
        "verdict": body.verdict,
        "action": body.action,
        "data": body.data.model_dump(),
        "party": body.party.model_dump(),
        "context": body.context,
        "origin": body.origin,
        "createdAt": now.isoformat(),
    }
    return rule_from_dict(payload)


def serve(config: GatewayConfig, host: str = "127.0.0.1", port: int = 8400) -> None:
    """Run the gateway under uvicorn (blocking)."""
    import uvicorn

    app = create_gateway_app(config)
    uvicorn.run(app, host=host, port=port, log_level="info")


def serve_hub(
    data_dir: Path | str | None = None,
    host: str = "127.0.0.1",
    port: int = 8500,
    config=None,
) -> None:
    """Run the community hub under uvicorn (blocking)."""
    import uvicorn

    from .hub import HubConfig
    from .hubservice import create_hub_app

    app = create_hub_app(config=config or HubConfig(), data_dir=data_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
