"""Context-aware consent agent for data-operation requests.

A rule engine with deny-priority conflict resolution, behavior-mined and
community-pooled rule hints, a human prompt inbox, and a gateway service
tying them together. See README.md for the tour.
"""

from .agent import (
    AgentConfig,
    AuthorizationResult,
    ConsentAgent,
    Prompt,
    PromptState,
    ResultStatus,
)
from .context import ContextManager, context_matches, haversine_m
from .engine import Outcome, RuleSet, matches, resolve
from .hub import CommunityHub, CommunityProfile, HubConfig, get_community_hint, similarity
from .miner import DecisionLog, MinerConfig, get_rule_hint
from .model import (
    ActionType,
    ContextPattern,
    ContextSnapshot,
    DataCategory,
    DataGroup,
    DataOperationRequest,
    DecisionRecord,
    Party,
    PartyGroup,
    Rule,
    RuleHint,
    Selector,
    Verdict,
    signature_of,
)

__version__ = "0.1.0"

__all__ = [
    "ActionType",
    "AgentConfig",
    "AuthorizationResult",
    "CommunityHub",
    "CommunityProfile",
    "ConsentAgent",
    "ContextManager",
    "ContextPattern",
    "ContextSnapshot",
    "DataCategory",
    "DataGroup",
    "DataOperationRequest",
    "DecisionLog",
    "DecisionRecord",
    "HubConfig",
    "MinerConfig",
    "Outcome",
    "Party",
    "PartyGroup",
    "Prompt",
    "PromptState",
    "ResultStatus",
    "Rule",
    "RuleHint",
    "RuleSet",
    "Selector",
    "Verdict",
    "context_matches",
    "get_community_hint",
    "get_rule_hint",
    "haversine_m",
    "matches",
    "resolve",
    "signature_of",
    "similarity",
]
