"""Deterministic, file-configured stand-in for the LLM roles.

Rules match on the observation the action is taken from::

    {
      "default_score": 2,
      "noise": 1,
      "proposals": [
        {"when": {"state": "State#1", "orientation": "portrait"},
         "actions": [{"action": "rotate", "feature": ""}, ...]}
      ],
      "default_proposals": [{"action": "back", "feature": ""}],
      "scores": [
        {"when": {"state": "State#1"}, "action": "rotate", "feature": "", "score": 8}
      ]
    }

``when`` keys: ``state``, ``activity``, ``orientation``, ``dialog_open``; an
empty ``when`` matches everything and the first matching rule wins. ``noise``
adds an offset in ``[-noise, noise]`` that is a pure function of
(seed, observation digest, action), clamped to [0, 10].
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any

from ..env import ActionCommand, ActionKind, Observation, SimAppSpec, WIDGET_ACTIONS, observation_digest, read_json
from ..errors import SpecError
from .base import ExpandRequest, SimulateRequest

PREDICATE_KEYS = ("state", "activity", "orientation", "dialog_open")
MAX_NOISE = 1


def _matches(when: dict, obs: Observation) -> bool:
    observed = {
        "state": obs.state_id,
        "activity": obs.activity,
        "orientation": obs.orientation,
        "dialog_open": obs.dialog_open,
    }
    return all(observed[key] == value for key, value in when.items())


def _action(entry: dict) -> ActionCommand:
    return ActionCommand(entry["action"], entry.get("feature", ""), entry.get("text"))


@dataclass(frozen=True)
class ProposalRule:
    when: dict
    actions: tuple[ActionCommand, ...]


@dataclass(frozen=True)
class ScoreRule:
    when: dict
    action: ActionCommand
    score: int


@dataclass(frozen=True)
class ScriptedOracleSpec:
    proposals: tuple[ProposalRule, ...]
    scores: tuple[ScoreRule, ...]
    default_proposals: tuple[ActionCommand, ...] = ()
    default_score: int = 2
    noise: int = 0
    source: str | None = None

    @classmethod
    def from_dict(cls, data: dict, source: str | None = None, app: SimAppSpec | None = None) -> "ScriptedOracleSpec":
        issues = check_scripted_spec(data, app)
        if issues:
            raise SpecError([f"{source}: {i}" if source else i for i in issues])
        return cls(
            proposals=tuple(
                ProposalRule(dict(r.get("when", {})), tuple(_action(a) for a in r["actions"]))
                for r in data.get("proposals", [])
            ),
            scores=tuple(
                ScoreRule(dict(r.get("when", {})), _action(r), int(r["score"])) for r in data.get("scores", [])
            ),
            default_proposals=tuple(_action(a) for a in data.get("default_proposals", [])),
            default_score=int(data.get("default_score", 2)),
            noise=int(data.get("noise", 0)),
            source=source,
        )


def load_scripted_oracle(path, app: SimAppSpec | None = None) -> ScriptedOracleSpec:
    return ScriptedOracleSpec.from_dict(read_json(path), source=str(path), app=app)


def _check_when(when: Any, loc: str, app: SimAppSpec | None) -> list[str]:
    if not isinstance(when, dict):
        return [f"{loc}: must be an object"]
    issues = [f"{loc}.{key}: unknown predicate key" for key in when if key not in PREDICATE_KEYS]
    if app is not None and "state" in when and when["state"] not in app.states:
        issues.append(f"{loc}.state: undeclared state {when['state']!r}")
    return issues


def _check_action(entry: Any, loc: str, when: dict, app: SimAppSpec | None) -> list[str]:
    if not isinstance(entry, dict):
        return [f"{loc}: must be an object"]
    try:
        action = _action(entry)
    except (KeyError, ValueError) as exc:
        return [f"{loc}: {exc}"]
    if app is not None and isinstance(when, dict) and when.get("state") in app.states and action.kind in WIDGET_ACTIONS:
        declared = {w.id for w in app.states[when["state"]].widgets}
        ids = action.feature.split(",") if action.kind is ActionKind.MULTIPLE_SELECT else [action.feature]
        missing = [i for i in ids if i.strip() not in declared]
        if missing:
            return [f"{loc}.feature: widget {missing[0]!r} not declared in state {when['state']!r}"]
    return []


def _check_score(value: Any, loc: str) -> list[str]:
    if isinstance(value, bool) or not isinstance(value, int):
        return [f"{loc}: must be an integer"]
    if not 0 <= value <= 10:
        return [f"{loc}: {value} outside [0, 10]"]
    return []


def check_scripted_spec(data, app: SimAppSpec | None = None) -> list[str]:
    """All violations in a scripted-oracle document.

    With ``app`` given, state predicates and widget features are cross-checked.
    """
    if not isinstance(data, dict):
        return ["top level: expected an object"]
    issues = []
    issues += _check_score(data.get("default_score", 2), "default_score")
    noise = data.get("noise", 0)
    if isinstance(noise, bool) or not isinstance(noise, int) or not 0 <= noise <= MAX_NOISE:
        issues.append(f"noise: must be an integer in [0, {MAX_NOISE}]")
    for i, rule in enumerate(data.get("proposals", [])):
        loc = f"proposals[{i}]"
        if not isinstance(rule, dict):
            issues.append(f"{loc}: must be an object")
            continue
        when = rule.get("when", {})
        issues += _check_when(when, f"{loc}.when", app)
        actions = rule.get("actions")
        if not isinstance(actions, list) or not actions:
            issues.append(f"{loc}.actions: must be a non-empty list")
            continue
        for j, a in enumerate(actions):
            issues += _check_action(a, f"{loc}.actions[{j}]", when, app)
    for j, a in enumerate(data.get("default_proposals", [])):
        issues += _check_action(a, f"default_proposals[{j}]", {}, app)
    for i, rule in enumerate(data.get("scores", [])):
        loc = f"scores[{i}]"
        if not isinstance(rule, dict):
            issues.append(f"{loc}: must be an object")
            continue
        when = rule.get("when", {})
        issues += _check_when(when, f"{loc}.when", app)
        issues += _check_action(rule, loc, when, app)
        issues += _check_score(rule.get("score"), f"{loc}.score")
    return issues


def scripted_propose(spec: ScriptedOracleSpec, obs: Observation, k: int | None) -> list[ActionCommand]:
    actions = spec.default_proposals
    for rule in spec.proposals:
        if _matches(rule.when, obs):
            actions = rule.actions
            break
    return list(actions if k is None else actions[:k])


def noise_offset(seed: int, obs: Observation, action: ActionCommand, amplitude: int) -> int:
    if amplitude == 0:
        return 0
    key = f"{seed}|{observation_digest(obs)}|{action.to_line()}".encode("utf-8")
    h = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")
    return h % (2 * amplitude + 1) - amplitude


def scripted_score(spec: ScriptedOracleSpec, obs: Observation, action: ActionCommand, seed: int) -> int:
    base = spec.default_score
    for rule in spec.scores:
        if rule.action.key == action.key and _matches(rule.when, obs):
            base = rule.score
            break
    return min(10, max(0, base + noise_offset(seed, obs, action, spec.noise)))


class ScriptedOracle:
    """Plays both roles from a :class:`ScriptedOracleSpec`."""

    def __init__(self, spec: ScriptedOracleSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed

    def propose(self, request: ExpandRequest) -> list[ActionCommand]:
        return scripted_propose(self.spec, request.observation, request.k)

    def score(self, request: SimulateRequest) -> int:
        return scripted_score(self.spec, request.before, request.action, self.seed)
