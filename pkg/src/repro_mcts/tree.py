"""Search tree structures and the numeric selection/backup policies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .env import ActionCommand
from .errors import ConfigError, ContractError, SubtreeExhausted


class NodeStatus(str, Enum):
    UNEXPANDED = "unexpanded"
    EXPANDED = "expanded"
    TERMINAL_CRASH = "terminal_crash"
    EXHAUSTED = "exhausted"


@dataclass(eq=False)
class SearchNode:
    node_id: int
    depth: int = 0
    visit_count: int = 0
    total_score: float = 0.0
    status: NodeStatus = NodeStatus.UNEXPANDED
    children: list["SearchEdge"] = field(default_factory=list)

    @property
    def value(self) -> float:
        return self.total_score / self.visit_count if self.visit_count else 0.0

    @property
    def eligible(self) -> bool:
        return self.status not in (NodeStatus.EXHAUSTED, NodeStatus.TERMINAL_CRASH)


@dataclass(eq=False)
class SearchEdge:
    action: ActionCommand
    child: SearchNode
    post_digest: str
    post_summary: str = ""


class SearchTree:
    """Owns the root and hands out node ids."""

    def __init__(self, root_digest: str):
        self.root_digest = root_digest
        self._next_id = 0
        self.root = self.new_node(depth=0)

    def new_node(self, depth: int) -> SearchNode:
        node = SearchNode(node_id=self._next_id, depth=depth)
        self._next_id += 1
        return node

    def add_child(
        self, parent: SearchNode, action: ActionCommand, post_digest: str, post_summary: str = ""
    ) -> SearchEdge:
        if any(e.action.key == action.key for e in parent.children):
            raise ContractError(f"duplicate action {action} under node {parent.node_id}")
        edge = SearchEdge(action, self.new_node(parent.depth + 1), post_digest, post_summary)
        parent.children.append(edge)
        return edge

    def __len__(self):
        return self._next_id

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(e.child for e in reversed(node.children))


@dataclass(frozen=True)
class LevelConfig:
    """Fixed values that raw 0-10 oracle scores are discretized into."""

    high: int = 5
    mid: int = 2
    low: int = 1
    k: int = 3
    high_threshold: int = 8
    low_threshold: int = 3

    @classmethod
    def for_k(cls, k: int) -> "LevelConfig":
        """Default 5/2/1 levels, raising ``high`` just enough to keep the constraint for larger k."""
        return cls(high=max(5, k + 2), mid=2, low=1, k=k)

    def to_dict(self) -> dict:
        return {
            "high": self.high,
            "mid": self.mid,
            "low": self.low,
            "k": self.k,
            "high_threshold": self.high_threshold,
            "low_threshold": self.low_threshold,
        }


def level_constraint_holds(high: int, mid: int, low: int, k: int) -> bool:
    """One high child among k-1 low ones must still out-average k mid children."""
    return high + (k - 1) * low > k * mid


def validate_level_config(cfg: LevelConfig) -> LevelConfig:
    """Return ``cfg`` unchanged or raise :class:`ConfigError` naming the failed rule."""
    if cfg.k < 1:
        raise ConfigError(f"k must be >= 1, got {cfg.k}")
    if not cfg.high > cfg.mid > cfg.low >= 1:
        raise ConfigError(
            f"level ordering high > mid > low >= 1 violated: high={cfg.high}, mid={cfg.mid}, low={cfg.low}"
        )
    if not 0 <= cfg.low_threshold < cfg.high_threshold <= 10:
        raise ConfigError(
            "threshold ordering 0 <= low_threshold < high_threshold <= 10 violated: "
            f"low_threshold={cfg.low_threshold}, high_threshold={cfg.high_threshold}"
        )
    if not level_constraint_holds(cfg.high, cfg.mid, cfg.low, cfg.k):
        lhs = cfg.high + (cfg.k - 1) * cfg.low
        rhs = cfg.k * cfg.mid
        raise ConfigError(
            f"level constraint high + (k-1)*low > k*mid violated: "
            f"{cfg.high} + {cfg.k - 1}*{cfg.low} = {lhs} <= {cfg.k}*{cfg.mid} = {rhs}"
        )
    return cfg


def map_score(raw: int, cfg: LevelConfig) -> int:
    if isinstance(raw, bool) or not isinstance(raw, (int, np.integer)) or not 0 <= raw <= 10:
        raise ContractError(f"raw score must be an integer in [0, 10], got {raw!r}")
    if raw >= cfg.high_threshold:
        return cfg.high
    if raw <= cfg.low_threshold:
        return cfg.low
    return cfg.mid


@dataclass(frozen=True)
class SelectionPolicy:
    temperature: float = 1.8
    exploration: float = 1.414
    rng_seed: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.exploration < 0:
            raise ConfigError(f"exploration constant must be >= 0, got {self.exploration}")

    def make_rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.rng_seed))


def ucb_score(node: SearchNode, parent_visits: int, c: float) -> float:
    """UCB1: mean value plus ``c * sqrt(ln(parent_visits) / visits)``."""
    n = node.visit_count
    if n < 1:
        raise ContractError(f"node {node.node_id} has no visits; simulation must assign one")
    if parent_visits < n:
        raise ContractError(f"parent visits {parent_visits} < child visits {n}")
    return node.total_score / n + c * math.sqrt(math.log(parent_visits) / n)


def softmax_probabilities(ucb_values: Sequence[float], temperature: float) -> np.ndarray:
    u = np.asarray(ucb_values, dtype=float)
    if u.size == 0:
        raise ValueError("no expanded children")
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z = np.exp((u - u.max()) / temperature)
    return z / z.sum()


def sample_index(probabilities: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; a uniform landing exactly on a boundary goes to the lower index."""
    cdf = np.cumsum(probabilities)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, len(cdf) - 1)


def sample_child(parent: SearchNode, policy: SelectionPolicy, rng: np.random.Generator) -> SearchEdge:
    if parent.status is not NodeStatus.EXPANDED:
        raise ContractError(f"node {parent.node_id} is {parent.status.value}, not expanded")
    edges = [e for e in parent.children if e.child.eligible]
    if not edges:
        raise SubtreeExhausted(f"node {parent.node_id} has no eligible children")
    if len(edges) == 1:
        return edges[0]
    ucbs = [ucb_score(e.child, parent.visit_count, policy.exploration) for e in edges]
    probs = softmax_probabilities(ucbs, policy.temperature)
    return edges[sample_index(probs, rng)]


def backpropagate(path: Sequence[SearchNode], child_mapped_scores: Sequence[float]) -> float:
    """Add one visit and the mean mapped child score to every node on ``path``.

    Returns the mean that was added.
    """
    if not path:
        raise ContractError("backpropagation path is empty")
    if len(child_mapped_scores) == 0:
        raise ContractError("expansion produced no scorable children")
    mean = sum(child_mapped_scores) / len(child_mapped_scores)
    for node in path:
        node.visit_count += 1
        node.total_score += mean
    return mean
