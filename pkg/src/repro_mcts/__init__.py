"""Crash-reproduction planning with LLM-guided Monte Carlo Tree Search.

The search tree (:mod:`repro_mcts.tree`) is driven by :mod:`repro_mcts.engine`
against an :class:`~repro_mcts.env.Environment`, with candidate actions and
relevance scores supplied by an :class:`~repro_mcts.oracle.OraclePair`.
"""

from .engine import (
    BUDGET_EXHAUSTED,
    CRASH_REPRODUCED,
    TREE_EXHAUSTED,
    IterationOutcome,
    MCTSSearch,
    ReproductionTrace,
    SearchConfig,
    detect_terminal,
    run_search,
)
from .env import (
    ActionCommand,
    ActionKind,
    Environment,
    Observation,
    SimAppSpec,
    SimEnvironment,
    TraceStep,
    load_sim_app,
    observation_digest,
    replay_trace,
    restore_state,
)
from .oracle import OraclePair, ScriptedOracle, load_scripted_oracle
from .tree import (
    LevelConfig,
    SelectionPolicy,
    backpropagate,
    map_score,
    softmax_probabilities,
    ucb_score,
    validate_level_config,
)

__version__ = "0.1.0"

__all__ = [
    "BUDGET_EXHAUSTED",
    "CRASH_REPRODUCED",
    "TREE_EXHAUSTED",
    "ActionCommand",
    "ActionKind",
    "Environment",
    "IterationOutcome",
    "LevelConfig",
    "MCTSSearch",
    "Observation",
    "OraclePair",
    "ReproductionTrace",
    "ScriptedOracle",
    "SearchConfig",
    "SelectionPolicy",
    "SimAppSpec",
    "SimEnvironment",
    "TraceStep",
    "backpropagate",
    "detect_terminal",
    "load_scripted_oracle",
    "load_sim_app",
    "map_score",
    "observation_digest",
    "replay_trace",
    "restore_state",
    "run_search",
    "softmax_probabilities",
    "ucb_score",
    "validate_level_config",
]
