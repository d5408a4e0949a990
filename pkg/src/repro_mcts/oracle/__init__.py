"""Expander and Simulator roles: prompts, grammars, clients, scripted double."""

from .base import ExpandRequest, LLMOracle, OraclePair, SimulateRequest
from .client import RemoteChatClient, expander_call, simulator_call
from .parsing import parse_expand_response, parse_simulate_response, serialize_proposals
from .prompts import (
    ABLATION_FLAGS,
    DISABLE_FEWSHOT_COT,
    DISABLE_IMAGE,
    DISABLE_TOPK,
    STANDARD_ROLLOUT,
    HistoryStep,
    PromptBundle,
    build_expand_prompt,
    build_simulate_prompt,
)
from .scripted import (
    ScriptedOracle,
    ScriptedOracleSpec,
    check_scripted_spec,
    load_scripted_oracle,
    scripted_propose,
    scripted_score,
)

__all__ = [
    "ABLATION_FLAGS",
    "DISABLE_FEWSHOT_COT",
    "DISABLE_IMAGE",
    "DISABLE_TOPK",
    "STANDARD_ROLLOUT",
    "ExpandRequest",
    "HistoryStep",
    "LLMOracle",
    "OraclePair",
    "PromptBundle",
    "RemoteChatClient",
    "ScriptedOracle",
    "ScriptedOracleSpec",
    "SimulateRequest",
    "build_expand_prompt",
    "build_simulate_prompt",
    "check_scripted_spec",
    "expander_call",
    "load_scripted_oracle",
    "parse_expand_response",
    "parse_simulate_response",
    "scripted_propose",
    "scripted_score",
    "serialize_proposals",
    "simulator_call",
]
