"""Request types and the two oracle roles the engine talks to."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

from ..env import ActionCommand, Observation
from .client import ChatClient, expander_call, simulator_call
from .prompts import HistoryStep, build_expand_prompt, build_simulate_prompt


@dataclass(frozen=True)
class ExpandRequest:
    report: str
    app_name: str
    observation: Observation
    history: tuple[HistoryStep, ...]
    k: int | None
    flags: frozenset[str] = frozenset()


@dataclass(frozen=True)
class SimulateRequest:
    report: str
    app_name: str
    history: tuple[HistoryStep, ...]
    action: ActionCommand
    before: Observation
    after: Observation
    flags: frozenset[str] = frozenset()


class Expander(Protocol):
    def propose(self, request: ExpandRequest) -> list[ActionCommand]: ...


class Simulator(Protocol):
    def score(self, request: SimulateRequest) -> int: ...


@dataclass
class OraclePair:
    expander: Expander
    simulator: Simulator

    @classmethod
    def of(cls, oracle) -> "OraclePair":
        """Wrap one object that plays both roles."""
        return cls(oracle, oracle)


class LLMOracle:
    """Both roles backed by a chat client."""

    def __init__(self, client: ChatClient, retries: int = 3):
        self.client = client
        self.retries = retries

    def propose(self, request: ExpandRequest) -> list[ActionCommand]:
        bundle = build_expand_prompt(
            request.report, request.app_name, request.observation, request.history, request.k, request.flags
        )
        return expander_call(self.client, bundle, request.k, self.retries)

    def score(self, request: SimulateRequest) -> int:
        bundle = build_simulate_prompt(
            request.report,
            request.history,
            request.action,
            request.before,
            request.after,
            request.flags,
            app_name=request.app_name,
        )
        return simulator_call(self.client, bundle, self.retries)
