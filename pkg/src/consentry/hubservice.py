"""Wire surface of the community hub: a small JSON-over-HTTP service with
two messages (`publish-profile`, `query-hint`) plus the matching client.

The client treats every transport problem — timeout, refusal, bad payload —
as "no hint": the decision chain must degrade gracefully, never stall.
"""

from __future__ import annotations

import json
import logging
import secrets
from pathlib import Path
from typing import Sequence

import httpx
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .engine import RuleSet
from .hub import (
    CommunityHub,
    CommunityProfile,
    HubConfig,
    build_profile,
    get_community_hint,
    profile_from_dict,
    profile_to_dict,
    query_key_for,
    query_key_from_dict,
    query_key_to_dict,
)
from .model import (
    ContextSnapshot,
    DataOperationRequest,
    DecisionRecord,
    RuleHint,
    ValidationError,
    hint_from_dict,
    hint_to_dict,
)

log = logging.getLogger(__name__)

DEFAULT_CLIENT_TIMEOUT_S = 2.0
PROFILES_FILE = "profiles.json"


def create_hub_app(
    hub: CommunityHub | None = None,
    config: HubConfig = HubConfig(),
    data_dir: Path | str | None = None,
) -> FastAPI:
    """Hub service; pass ``data_dir`` to persist profiles across restarts."""
    hub = hub if hub is not None else CommunityHub()
    store_path = Path(data_dir) / PROFILES_FILE if data_dir else None
    if store_path and store_path.exists():
        payload = json.loads(store_path.read_text(encoding="utf-8"))
        for raw in payload.get("profiles", []):
            hub.publish_profile(profile_from_dict(raw))

    app = FastAPI(title="consentry community hub")
    app.state.hub = hub
    app.state.config = config

    def _persist() -> None:
        if store_path is None:
            return
        store_path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"profiles": [profile_to_dict(p) for p in hub.profiles()]}
        tmp = store_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        tmp.replace(store_path)

    @app.exception_handler(ValidationError)
    async def _validation_error(request, exc: ValidationError):
        return JSONResponse(
            status_code=422,
            content={"detail": [{"loc": (exc.field or "").split("."), "msg": str(exc)}]},
        )

    @app.get("/v1/hub/health")
    def health() -> dict:
        return {"status": "ok", "profiles": len(hub)}

    @app.post("/v1/hub/publish-profile")
    def publish_profile(body: dict) -> dict:
        profile = profile_from_dict(body)
        hub.publish_profile(profile)
        _persist()
        return {"stored": True, "pseudonym": profile.pseudonym}

    @app.post("/v1/hub/query-hint")
    def query_hint(body: dict) -> dict:
        requester = profile_from_dict(body.get("requester", {}))
        query = query_key_from_dict(body.get("query", {}))
        hint = get_community_hint(hub, requester, query, config)
        return {"hint": hint_to_dict(hint) if hint else None}

    return app


class RemoteHubClient:
    """Talks to a hub service; ``query_hint`` never raises."""

    def __init__(self, base_url: str, timeout_s: float = DEFAULT_CLIENT_TIMEOUT_S) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def publish(self, profile: CommunityProfile) -> dict:
        response = httpx.post(
            f"{self.base_url}/v1/hub/publish-profile",
            json=profile_to_dict(profile),
            timeout=self.timeout_s,
        )
        response.raise_for_status()
        return response.json()

    def query_hint(self, requester: CommunityProfile, query) -> RuleHint | None:
        try:
            response = httpx.post(
                f"{self.base_url}/v1/hub/query-hint",
                json={"requester": profile_to_dict(requester), "query": query_key_to_dict(query)},
                timeout=self.timeout_s,
            )
            response.raise_for_status()
            payload = response.json().get("hint")
            return hint_from_dict(payload) if payload else None
        except Exception as exc:
            log.debug("community hub unavailable, continuing without a hint: %s", exc)
            return None


class RemoteHubSource:
    """Community hint source for the agent, backed by a RemoteHubClient."""

    def __init__(self, client: RemoteHubClient, pseudonym: str) -> None:
        self.client = client
        self.pseudonym = pseudonym

    def __call__(
        self,
        request: DataOperationRequest,
        context: ContextSnapshot,
        rule_set: RuleSet,
        decisions: Sequence[DecisionRecord],
    ) -> RuleHint | None:
        try:
            requester = build_profile(self.pseudonym, rule_set, decisions)
            query = query_key_for(request, rule_set)
        except Exception as exc:
            log.debug("could not build community query: %s", exc)
            return None
        return self.client.query_hint(requester, query)


class LocalHubSource:
    """In-process counterpart of RemoteHubSource, used by the simulator."""

    def __init__(self, hub: CommunityHub, pseudonym: str, config: HubConfig = HubConfig()) -> None:
        self.hub = hub
        self.pseudonym = pseudonym
        self.config = config

    def __call__(
        self,
        request: DataOperationRequest,
        context: ContextSnapshot,
        rule_set: RuleSet,
        decisions: Sequence[DecisionRecord],
    ) -> RuleHint | None:
        requester = build_profile(self.pseudonym, rule_set, decisions)
        query = query_key_for(request, rule_set)
        return get_community_hint(self.hub, requester, query, self.config, now=context.when)


def load_or_create_pseudonym(data_dir: Path | str) -> str:
    """Stable random pseudonym for this data directory."""
    path = Path(data_dir) / "pseudonym"
    if path.exists():
        return path.read_text(encoding="utf-8").strip()
    path.parent.mkdir(parents=True, exist_ok=True)
    pseudonym = secrets.token_hex(8)
    path.write_text(pseudonym + "\n", encoding="utf-8")
    return pseudonym
