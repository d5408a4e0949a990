"""The search loop: selection, top-k expansion, one-step simulation, backup."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .env import ActionCommand, Environment, Observation, TraceStep, observation_digest, restore_state
from .errors import ConfigError, ContractError, DeterminismError, OracleError, SubtreeExhausted
from .oracle.base import ExpandRequest, OraclePair, SimulateRequest
from .oracle.prompts import ABLATION_FLAGS, DISABLE_TOPK, STANDARD_ROLLOUT, HistoryStep
from .tree import (
    LevelConfig,
    NodeStatus,
    SearchEdge,
    SearchNode,
    SearchTree,
    SelectionPolicy,
    backpropagate,
    map_score,
    sample_child,
    validate_level_config,
)

log = logging.getLogger(__name__)

CRASH_REPRODUCED = "crash_reproduced"
BUDGET_EXHAUSTED = "budget_exhausted"
TREE_EXHAUSTED = "tree_exhausted"

ROLLOUT_CRASH_SCORE = 10
ROLLOUT_MISS_SCORE = 0


@dataclass(frozen=True)
class SearchConfig:
    k: int = 3
    iteration_budget: int = 200
    wall_clock_budget: float = 30 * 60.0
    max_depth: int = 25
    levels: LevelConfig = field(default_factory=LevelConfig)
    policy: SelectionPolicy = field(default_factory=SelectionPolicy)
    ablations: frozenset[str] = frozenset()
    rollout_horizon: int = 10
    history_limit: int = 20
    shorten_trace: bool = True

    def __post_init__(self):
        object.__setattr__(self, "ablations", frozenset(self.ablations))
        unknown = self.ablations - ABLATION_FLAGS
        if unknown:
            raise ConfigError(f"unknown ablation flags {sorted(unknown)}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.iteration_budget < 1 or self.wall_clock_budget <= 0:
            raise ConfigError("budgets must be positive")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.levels.k != self.k:
            raise ConfigError(f"levels were validated for k={self.levels.k} but the search uses k={self.k}")
        validate_level_config(self.levels)

    @classmethod
    def for_k(cls, k: int, **kwargs) -> "SearchConfig":
        return cls(k=k, levels=LevelConfig.for_k(k), **kwargs)

    def with_seed(self, seed: int) -> "SearchConfig":
        return replace(self, policy=replace(self.policy, rng_seed=seed))

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "iteration_budget": self.iteration_budget,
            "wall_clock_budget": self.wall_clock_budget,
            "max_depth": self.max_depth,
            "levels": self.levels.to_dict(),
            "policy": {
                "temperature": self.policy.temperature,
                "exploration": self.policy.exploration,
                "rng_seed": self.policy.rng_seed,
            },
            "ablations": sorted(self.ablations),
            "rollout_horizon": self.rollout_horizon,
            "history_limit": self.history_limit,
            "shorten_trace": self.shorten_trace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        d = dict(d)
        d["levels"] = LevelConfig(**d["levels"])
        d["policy"] = SelectionPolicy(**d["policy"])
        d["ablations"] = frozenset(d.get("ablations", ()))
        return cls(**d)


@dataclass
class ChildResult:
    action: ActionCommand
    raw: int
    mapped: int
    post_digest: str
    crash: bool = False
    restored_digest: str | None = None


@dataclass
class IterationOutcome:
    index: int
    selected_path: list[int]
    path_actions: list[ActionCommand]
    status: str = "expanded"
    children: list[ChildResult] = field(default_factory=list)
    crash_found: bool = False
    backprop_mean: float | None = None
    parent_digest: str = ""
    root_digest_end: str | None = None

    @property
    def expanded_actions(self) -> list[ActionCommand]:
        return [c.action for c in self.children]

    @property
    def raw_scores(self) -> list[int]:
        return [c.raw for c in self.children]

    @property
    def mapped_scores(self) -> list[int]:
        return [c.mapped for c in self.children]

    def to_record(self) -> dict:
        """JSON-ready log record for this iteration."""
        return {
            "iteration": self.index,
            "status": self.status,
            "selected_path": self.selected_path,
            "path_actions": [a.to_line() for a in self.path_actions],
            "children": [
                {
                    "action": c.action.to_line(),
                    "raw": c.raw,
                    "mapped": c.mapped,
                    "crash": c.crash,
                    "post_digest": c.post_digest,
                    "restored_digest": c.restored_digest,
                }
                for c in self.children
            ],
            "backprop_mean": self.backprop_mean,
            "crash_found": self.crash_found,
            "parent_digest": self.parent_digest,
            "root_digest_end": self.root_digest_end,
        }


@dataclass
class ReproductionTrace:
    steps: list[TraceStep]
    outcome: str
    iterations_used: int
    wall_clock_used: float

    @property
    def actions(self) -> list[ActionCommand]:
        return [s.action for s in self.steps]


def detect_terminal(obs: Observation) -> bool:
    return obs.crash


def remove_cycles(root_digest: str, steps: list[TraceStep]) -> list[TraceStep]:
    """Drop every stretch of steps that leads back to an observation seen before it."""
    digests = [root_digest] + [s.digest for s in steps]
    last_seen = {d: i for i, d in enumerate(digests)}
    out, pos = [], 0
    while pos < len(steps):
        pos = last_seen[digests[pos]]
        if pos >= len(steps):
            break
        out.append(steps[pos])
        pos += 1
    return out


def shorten_trace(env: Environment, root_digest: str, steps: list[TraceStep]) -> list[TraceStep]:
    """Cycle-free version of a crash trace, kept only if a fresh replay confirms it."""
    short = remove_cycles(root_digest, steps)
    if len(short) == len(steps):
        return steps
    try:
        obs = restore_state(env, [s.action for s in short], [s.digest for s in short])
    except DeterminismError:
        return steps
    return short if detect_terminal(obs) else steps


class MCTSSearch:
    """One search over one environment; owns the tree and the RNG streams."""

    def __init__(
        self,
        config: SearchConfig,
        env: Environment,
        oracle: OraclePair,
        report: str,
        app_name: str = "",
        on_iteration: Callable[[IterationOutcome], None] | None = None,
        clock: Callable[[], float] = time.monotonic,
    ):
        if not report or not report.strip():
            raise ContractError("bug report is empty")
        self.config = config
        self.env = env
        self.oracle = oracle
        self.report = report
        self.app_name = app_name
        self.on_iteration = on_iteration
        self.clock = clock
        self.rng = config.policy.make_rng()
        self.rollout_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.policy.rng_seed, 1])))
        self.tree: SearchTree | None = None
        self.iterations = 0

    # -- stages -------------------------------------------------------------

    def _select(self) -> tuple[SearchNode, list[SearchNode], list[SearchEdge]]:
        root = self.tree.root
        while True:
            if root.status is NodeStatus.EXHAUSTED:
                raise SubtreeExhausted("root exhausted")
            node, path, edges = root, [root], []
            while node.status is NodeStatus.EXPANDED:
                try:
                    edge = sample_child(node, self.config.policy, self.rng)
                except SubtreeExhausted:
                    node.status = NodeStatus.EXHAUSTED
                    break
                edges.append(edge)
                node = edge.child
                path.append(node)
            else:
                return node, path, edges

    def _history(self, edges: list[SearchEdge]) -> tuple[HistoryStep, ...]:
        steps = [HistoryStep(e.action, e.post_summary) for e in edges]
        return tuple(steps[-self.config.history_limit :])

    def _restore(self, edges: list[SearchEdge]) -> Observation:
        obs = restore_state(self.env, [e.action for e in edges], [e.post_digest for e in edges])
        if not edges and observation_digest(obs) != self.tree.root_digest:
            raise DeterminismError("reset observation differs from the recorded root", step=0)
        return obs

    def _rollout(self, after: Observation) -> int:
        if after.crash:
            return ROLLOUT_CRASH_SCORE
        for _ in range(self.config.rollout_horizon):
            options = self.env.executable_actions()
            if not options:
                break
            action = options[int(self.rollout_rng.integers(len(options)))]
            if self.env.execute(action).observation.crash:
                return ROLLOUT_CRASH_SCORE
        return ROLLOUT_MISS_SCORE

    def _give_up(self, node: SearchNode, path: list[SearchNode], outcome: IterationOutcome, status: str):
        node.children.clear()
        node.status = NodeStatus.EXHAUSTED
        outcome.status = status
        outcome.children.clear()
        outcome.backprop_mean = backpropagate(path, [self.config.levels.low])

    def _finish(self, outcome: IterationOutcome):
        obs = self._restore([])
        outcome.root_digest_end = observation_digest(obs)

    def iterate(self) -> IterationOutcome:
        cfg = self.config
        node, path, edges = self._select()
        outcome = IterationOutcome(
            index=self.iterations + 1,
            selected_path=[n.node_id for n in path],
            path_actions=[e.action for e in edges],
        )
        parent_obs = self._restore(edges)
        outcome.parent_digest = observation_digest(parent_obs)

        if node.depth >= cfg.max_depth:
            self._give_up(node, path, outcome, "depth_cap")
            self._finish(outcome)
            return outcome

        history = self._history(edges)
        k = None if DISABLE_TOPK in cfg.ablations else cfg.k
        try:
            proposals = self.oracle.expander.propose(
                ExpandRequest(self.report, self.app_name, parent_obs, history, k, cfg.ablations)
            )
        except OracleError as exc:
            log.warning("expander failed at node %d: %s", node.node_id, exc)
            self._give_up(node, path, outcome, "oracle_failure")
            self._finish(outcome)
            return outcome

        unique, seen = [], set()
        for action in proposals:
            if action.key not in seen:
                seen.add(action.key)
                unique.append(action)
        if k is not None:
            unique = unique[:k]
        if not unique:
            self._give_up(node, path, outcome, "no_proposals")
            self._finish(outcome)
            return outcome

        for action in unique:
            after = self.env.execute(action).observation
            post_digest = observation_digest(after)
            edge = self.tree.add_child(node, action, post_digest, after.summary())
            if STANDARD_ROLLOUT in cfg.ablations:
                raw = self._rollout(after)
            else:
                try:
                    raw = self.oracle.simulator.score(
                        SimulateRequest(self.report, self.app_name, history, action, parent_obs, after, cfg.ablations)
                    )
                except OracleError as exc:
                    log.warning("simulator failed at node %d: %s", node.node_id, exc)
                    self._give_up(node, path, outcome, "oracle_failure")
                    self._finish(outcome)
                    return outcome
            mapped = map_score(raw, cfg.levels)
            edge.child.visit_count = 1
            edge.child.total_score = float(mapped)
            result = ChildResult(action, raw, mapped, post_digest)
            outcome.children.append(result)
            if detect_terminal(after):
                edge.child.status = NodeStatus.TERMINAL_CRASH
                result.crash = True
                outcome.crash_found = True
                break
            result.restored_digest = observation_digest(self._restore(edges))
            if result.restored_digest != outcome.parent_digest:
                raise DeterminismError(f"simulation of {action} leaked state into the parent", step=len(edges))

        node.status = NodeStatus.EXPANDED
        outcome.backprop_mean = backpropagate(path, outcome.mapped_scores)
        if not outcome.crash_found:
            self._finish(outcome)
        return outcome

    # -- driver ---------------------------------------------------------------

    def _crash_trace(self, outcome: IterationOutcome) -> list[TraceStep]:
        node, steps = self.tree.root, []
        for node_id in outcome.selected_path[1:]:
            edge = next(e for e in node.children if e.child.node_id == node_id)
            steps.append(TraceStep(edge.action, edge.post_digest))
            node = edge.child
        crash = outcome.children[-1]
        steps.append(TraceStep(crash.action, crash.post_digest))
        return steps

    def run(self) -> ReproductionTrace:
        start = self.clock()
        root_obs = self.env.reset()
        if root_obs.crash:
            raise ContractError("app is already crashed after reset")
        self.tree = SearchTree(observation_digest(root_obs))
        self.iterations = 0
        cfg = self.config
        steps: list[TraceStep] = []
        while True:
            if self.iterations >= cfg.iteration_budget or self.clock() - start >= cfg.wall_clock_budget:
                result = BUDGET_EXHAUSTED
                break
            try:
                outcome = self.iterate()
            except SubtreeExhausted:
                result = TREE_EXHAUSTED
                break
            self.iterations += 1
            if self.on_iteration is not None:
                self.on_iteration(outcome)
            if outcome.crash_found:
                result = CRASH_REPRODUCED
                steps = self._crash_trace(outcome)
                if cfg.shorten_trace:
                    steps = shorten_trace(self.env, self.tree.root_digest, steps)
                break
        trace = ReproductionTrace(steps, result, self.iterations, self.clock() - start)
        log.info("search finished: %s after %d iterations", result, self.iterations)
        return trace


def run_search(
    config: SearchConfig,
    env: Environment,
    oracle: OraclePair,
    report: str,
    app_name: str = "",
    on_iteration: Callable[[IterationOutcome], None] | None = None,
) -> ReproductionTrace:
    return MCTSSearch(config, env, oracle, report, app_name, on_iteration).run()
