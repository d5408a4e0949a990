"""Action execution: the environment contract and a deterministic simulated app.

A simulated app is a state machine loaded from a JSON document::

    {
      "name": "FakeStandby",
      "initial": "State#1",
      "states": {
        "State#1": {"activity": "Main", "orientation": "portrait",
                    "widgets": [{"id": "escape_methods", "label": "Escape methods",
                                 "kind": "TextView"}]},
        ...
      },
      "transitions": [
        {"from": "State#1", "action": "click", "feature": "escape_methods",
         "to": "State#2"},
        ...
      ]
    }

Rotation toggles the orientation in place unless the current state declares a
``rotate`` transition. Actions without a matching transition are no-ops.
"""

from __future__ import annotations

import hashlib
import json
import shlex
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .errors import ContractError, DeterminismError, SpecError


class ActionKind(str, Enum):
    CLICK = "click"
    LONG_CLICK = "long_click"
    SET_TEXT = "set_text"
    MULTIPLE_SELECT = "multiple_select"
    ROTATE = "rotate"
    BACK = "back"


WIDGET_ACTIONS = frozenset(
    {ActionKind.CLICK, ActionKind.LONG_CLICK, ActionKind.SET_TEXT, ActionKind.MULTIPLE_SELECT}
)
ORIENTATIONS = ("portrait", "landscape")


def _normalize_feature(kind: ActionKind, feature: str) -> str:
    feature = feature.strip()
    if kind is ActionKind.MULTIPLE_SELECT:
        return ",".join(sorted(part.strip() for part in feature.split(",") if part.strip()))
    return feature


@dataclass(frozen=True)
class ActionCommand:
    """One of the six supported UI actions aimed at a widget id."""

    kind: ActionKind
    feature: str = ""
    text: str | None = None

    def __post_init__(self):
        try:
            kind = ActionKind(self.kind)
        except ValueError:
            raise ValueError(f"unknown action kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        feature = (self.feature or "").strip()
        if kind in (ActionKind.ROTATE, ActionKind.BACK):
            if feature:
                raise ValueError(f"{kind.value} takes no feature, got {feature!r}")
            if self.text is not None:
                raise ValueError(f"{kind.value} takes no text")
        elif not feature:
            raise ValueError(f"{kind.value} requires a widget feature")
        if kind is ActionKind.SET_TEXT and self.text is None:
            raise ValueError("set_text requires text")
        if kind is not ActionKind.SET_TEXT and self.text is not None:
            raise ValueError(f"{kind.value} does not accept text")
        object.__setattr__(self, "feature", feature)

    @property
    def key(self) -> tuple[str, str, str | None]:
        """Dedup key: kind, case-folded feature, text."""
        return (self.kind.value, _normalize_feature(self.kind, self.feature.casefold()), self.text)

    def to_line(self) -> str:
        parts = [self.kind.value]
        if self.feature:
            parts.append(self.feature)
        if self.text is not None:
            parts.append(self.text)
        return " ".join(shlex.quote(p) for p in parts)

    @classmethod
    def from_line(cls, line: str) -> "ActionCommand":
        """Parse ``kind feature [text]``; ``#`` starts a comment."""
        parts = shlex.split(line, comments=True)
        if not parts:
            raise ValueError("empty action line")
        kind = parts[0]
        if kind in (ActionKind.ROTATE.value, ActionKind.BACK.value):
            if len(parts) != 1:
                raise ValueError(f"{kind} takes no arguments: {line!r}")
            return cls(kind)
        if len(parts) < 2:
            raise ValueError(f"{kind} requires a feature: {line!r}")
        if kind == ActionKind.SET_TEXT.value:
            if len(parts) != 3:
                raise ValueError(f"set_text needs feature and text: {line!r}")
            return cls(kind, parts[1], parts[2])
        if len(parts) != 2:
            raise ValueError(f"too many fields for {kind}: {line!r}")
        return cls(kind, parts[1])

    def to_dict(self) -> dict:
        d = {"action": self.kind.value, "feature": self.feature}
        if self.text is not None:
            d["text"] = self.text
        return d

    def __str__(self):
        return self.to_line()


@dataclass(frozen=True)
class Widget:
    id: str
    label: str = ""
    kind: str = "View"
    enabled: bool = True
    checked: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "kind": self.kind,
            "enabled": self.enabled,
            "checked": self.checked,
        }


@dataclass(frozen=True)
class Observation:
    """What the agents see of the current screen.

    ``state_id`` is backend bookkeeping (the sim state name); it is hashed but
    never rendered into prompts.
    """

    activity: str
    widgets: tuple[Widget, ...] = ()
    orientation: str = "portrait"
    dialog_open: bool = False
    crash: bool = False
    attachment: bytes | None = None
    state_id: str | None = None

    def __post_init__(self):
        ids = [w.id for w in self.widgets]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate widget ids in observation of {self.activity!r}")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"bad orientation {self.orientation!r}")

    def widget(self, widget_id: str) -> Widget | None:
        for w in self.widgets:
            if w.id == widget_id:
                return w
        return None

    def canonical(self) -> dict:
        return {
            "activity": self.activity,
            "widgets": [w.to_dict() for w in self.widgets],
            "orientation": self.orientation,
            "dialog_open": self.dialog_open,
            "crash": self.crash,
            "attachment": None if self.attachment is None else self.attachment.hex(),
            "state_id": self.state_id,
        }

    def describe(self) -> str:
        """Structured text description of the screen for prompts."""
        if self.crash:
            return f"Activity: {self.activity}\nThe app has crashed."
        lines = [
            f"Activity: {self.activity}",
            f"Orientation: {self.orientation}",
            f"Dialog open: {'yes' if self.dialog_open else 'no'}",
            "Widgets:",
        ]
        for w in self.widgets:
            flags = []
            if not w.enabled:
                flags.append("disabled")
            if w.checked:
                flags.append("checked")
            suffix = f" [{', '.join(flags)}]" if flags else ""
            lines.append(f'  - {w.kind} id="{w.id}" text="{w.label}"{suffix}')
        return "\n".join(lines)

    def summary(self) -> str:
        """One-line form used in history listings."""
        if self.crash:
            return f"{self.activity} (crashed)"
        extra = ", dialog open" if self.dialog_open else ""
        return f"{self.activity} ({self.orientation}{extra})"


def observation_digest(obs: Observation) -> str:
    """SHA-256 hex digest over every observation field, attachment bytes included."""
    cached = obs.__dict__.get("_digest")
    if cached is None:
        blob = json.dumps(obs.canonical(), sort_keys=True, separators=(",", ":"))
        cached = hashlib.sha256(blob.encode("utf-8")).hexdigest()
        # observations are frozen, so the digest can live on the instance
        object.__setattr__(obs, "_digest", cached)
    return cached


@dataclass(frozen=True)
class TransitionResult:
    observation: Observation
    applied: bool


class Environment(Protocol):
    """Contract every execution backend implements.

    A device backend would drive a real app here; only the simulated backend
    ships with this package.
    """

    def reset(self) -> Observation: ...

    def execute(self, action: ActionCommand) -> TransitionResult: ...

    def observe(self) -> Observation: ...

    def executable_actions(self) -> list[ActionCommand]: ...


# ---------------------------------------------------------------------------
# Simulated app spec


@dataclass(frozen=True)
class StateSpec:
    activity: str
    widgets: tuple[Widget, ...] = ()
    orientation: str | None = None
    dialog_open: bool = False
    crash: bool = False
    attachment: bytes | None = None


@dataclass(frozen=True)
class SimAppSpec:
    states: dict[str, StateSpec]
    transitions: dict[tuple[str, tuple[str, str, str | None]], str]
    initial: str
    name: str = "app"
    source: str | None = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, data, source: str | None = None) -> "SimAppSpec":
        issues = check_sim_app(data)
        if issues:
            raise SpecError([f"{source}: {i}" if source else i for i in issues])
        states = {}
        for sid, raw in data["states"].items():
            att = raw.get("attachment")
            states[sid] = StateSpec(
                activity=raw["activity"],
                widgets=tuple(Widget(**w) for w in raw.get("widgets", [])),
                orientation=raw.get("orientation"),
                dialog_open=bool(raw.get("dialog_open", False)),
                crash=bool(raw.get("crash", False)),
                attachment=None if att is None else att.encode("utf-8"),
            )
        transitions = {}
        for t in data.get("transitions", []):
            action = _pattern_action(t)
            transitions[(t["from"], action.key)] = t["to"]
        return cls(
            states=states,
            transitions=transitions,
            initial=data["initial"],
            name=data.get("name", "app"),
            source=source,
        )

    def to_dict(self) -> dict:
        states = {}
        for sid, s in self.states.items():
            d = {
                "activity": s.activity,
                "widgets": [w.to_dict() for w in s.widgets],
                "dialog_open": s.dialog_open,
                "crash": s.crash,
            }
            if s.orientation is not None:
                d["orientation"] = s.orientation
            if s.attachment is not None:
                d["attachment"] = s.attachment.decode("utf-8")
            states[sid] = d
        transitions = []
        for (src, (kind, feature, text)), dst in self.transitions.items():
            t = {"from": src, "action": kind, "feature": feature, "to": dst}
            if text is not None:
                t["text"] = text
            transitions.append(t)
        return {"name": self.name, "initial": self.initial, "states": states, "transitions": transitions}


def _pattern_action(t: dict) -> ActionCommand:
    kind = t["action"]
    text = t.get("text")
    if kind == ActionKind.SET_TEXT.value and text is None:
        text = "*"
    return ActionCommand(kind, t.get("feature", ""), text)


def check_sim_app(data) -> list[str]:
    """Every invariant violation in a sim-app document, each with its location."""
    if not isinstance(data, dict):
        return ["top level: expected an object"]
    issues = []
    states = data.get("states")
    if not isinstance(states, dict) or not states:
        issues.append("states: must be a non-empty object")
        states = {}
    initial = data.get("initial")
    if initial is None:
        issues.append("initial: missing")
    elif initial not in states:
        issues.append(f"initial: undeclared state {initial!r}")

    for sid, raw in states.items():
        loc = f"states[{sid!r}]"
        if not isinstance(raw, dict):
            issues.append(f"{loc}: expected an object")
            continue
        if not isinstance(raw.get("activity"), str):
            issues.append(f"{loc}.activity: missing or not a string")
        orient = raw.get("orientation")
        if orient is not None and orient not in ORIENTATIONS:
            issues.append(f"{loc}.orientation: {orient!r} not in {ORIENTATIONS}")
        seen = set()
        for i, w in enumerate(raw.get("widgets", [])):
            wloc = f"{loc}.widgets[{i}]"
            if not isinstance(w, dict) or not isinstance(w.get("id"), str) or not w["id"]:
                issues.append(f"{wloc}.id: missing")
                continue
            unknown = set(w) - {"id", "label", "kind", "enabled", "checked"}
            if unknown:
                issues.append(f"{wloc}: unknown fields {sorted(unknown)}")
            if w["id"] in seen:
                issues.append(f"{wloc}.id: duplicate widget id {w['id']!r}")
            seen.add(w["id"])
        att = raw.get("attachment")
        if att is not None and not isinstance(att, str):
            issues.append(f"{loc}.attachment: must be a string")

    transitions = data.get("transitions", [])
    if not isinstance(transitions, list):
        issues.append("transitions: must be a list")
        transitions = []
    keys = {}
    for i, t in enumerate(transitions):
        loc = f"transitions[{i}]"
        if not isinstance(t, dict):
            issues.append(f"{loc}: expected an object")
            continue
        src, dst = t.get("from"), t.get("to")
        if src not in states:
            issues.append(f"{loc}.from: undeclared state {src!r}")
        if dst not in states:
            issues.append(f"{loc}.to: undeclared state {dst!r}")
        try:
            action = _pattern_action(t)
        except (KeyError, ValueError) as exc:
            issues.append(f"{loc}.action: {exc}")
            continue
        if src in states and action.kind in WIDGET_ACTIONS:
            declared = {w.get("id") for w in states[src].get("widgets", []) if isinstance(w, dict)}
            for wid in action.feature.split(",") if action.kind is ActionKind.MULTIPLE_SELECT else [action.feature]:
                if wid.strip() not in declared:
                    issues.append(f"{loc}.feature: widget {wid.strip()!r} not declared in state {src!r}")
        key = (src, action.key)
        if key in keys:
            issues.append(f"{loc}: duplicate transition for {src!r} {action} (first at transitions[{keys[key]}])")
        else:
            keys[key] = i
    return issues


def read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def load_sim_app(path) -> SimAppSpec:
    return SimAppSpec.from_dict(read_json(path), source=str(path))


# ---------------------------------------------------------------------------
# Simulated environment


class SimEnvironment:
    """Deterministic backend over a :class:`SimAppSpec`."""

    def __init__(self, spec: SimAppSpec):
        self.spec = spec
        self._state = spec.initial
        self._orientation = self._declared_orientation(spec.initial, "portrait")
        self._observations: dict[tuple[str, str], Observation] = {}

    def _declared_orientation(self, state_id, current):
        declared = self.spec.states[state_id].orientation
        return declared if declared is not None else current

    @property
    def state_id(self) -> str:
        return self._state

    def observe(self) -> Observation:
        key = (self._state, self._orientation)
        obs = self._observations.get(key)
        if obs is None:
            s = self.spec.states[self._state]
            obs = Observation(
                activity=s.activity,
                widgets=s.widgets,
                orientation=self._orientation,
                dialog_open=s.dialog_open,
                crash=s.crash,
                attachment=s.attachment,
                state_id=self._state,
            )
            self._observations[key] = obs
        return obs

    def reset(self) -> Observation:
        self._state = self.spec.initial
        self._orientation = self._declared_orientation(self.spec.initial, "portrait")
        return self.observe()

    def _lookup(self, action: ActionCommand) -> str | None:
        table = self.spec.transitions
        target = table.get((self._state, action.key))
        if target is None and action.kind is ActionKind.SET_TEXT:
            target = table.get((self._state, (action.key[0], action.key[1], "*")))
        return target

    def execute(self, action: ActionCommand) -> TransitionResult:
        if self.spec.states[self._state].crash:
            raise ContractError("cannot execute actions in a crashed app; reset first")
        target = self._lookup(action)
        if target is not None:
            self._state = target
            self._orientation = self._declared_orientation(target, self._orientation)
            return TransitionResult(self.observe(), True)
        if action.kind is ActionKind.ROTATE:
            self._orientation = "landscape" if self._orientation == "portrait" else "portrait"
            return TransitionResult(self.observe(), True)
        return TransitionResult(self.observe(), False)

    def executable_actions(self) -> list[ActionCommand]:
        """Actions a random rollout may pick on the current screen."""
        s = self.spec.states[self._state]
        if s.crash:
            return []
        actions = []
        for w in s.widgets:
            if not w.enabled:
                continue
            actions.append(ActionCommand(ActionKind.CLICK, w.id))
            actions.append(ActionCommand(ActionKind.LONG_CLICK, w.id))
            if w.kind == "EditText":
                actions.append(ActionCommand(ActionKind.SET_TEXT, w.id, "text"))
        actions.append(ActionCommand(ActionKind.ROTATE))
        actions.append(ActionCommand(ActionKind.BACK))
        return actions


def restore_state(
    env: Environment,
    path_actions: Sequence[ActionCommand],
    expected_digests: Sequence[str] | None = None,
) -> Observation:
    """Reset ``env`` and replay ``path_actions``.

    When ``expected_digests`` is given (one per action), each post-action
    observation is checked against it and the first divergence raises
    :class:`DeterminismError` with the 1-based step number.
    """
    if expected_digests is not None and len(expected_digests) != len(path_actions):
        raise ContractError("expected_digests must align with path_actions")
    obs = env.reset()
    for i, action in enumerate(path_actions):
        if obs.crash:
            raise DeterminismError(f"step {i + 1} ({action}): app crashed before this step", step=i + 1)
        obs = env.execute(action).observation
        if expected_digests is not None:
            got = observation_digest(obs)
            if got != expected_digests[i]:
                raise DeterminismError(
                    f"step {i + 1} ({action}): digest {got[:12]} != recorded {expected_digests[i][:12]}",
                    step=i + 1,
                )
    return obs


# ---------------------------------------------------------------------------
# Trace files: one action per line, ``kind feature [text]  # digest=<hex>``


@dataclass(frozen=True)
class TraceStep:
    action: ActionCommand
    digest: str | None = None


def format_trace(steps: Iterable[TraceStep]) -> str:
    lines = []
    for step in steps:
        line = step.action.to_line()
        if step.digest:
            line += f"  # digest={step.digest}"
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")


def parse_trace(text: str) -> list[TraceStep]:
    steps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        digest = None
        if "# digest=" in raw:
            digest = raw.rsplit("# digest=", 1)[1].strip()
        try:
            action = ActionCommand.from_line(raw)
        except ValueError as exc:
            raise SpecError(f"line {lineno}: {exc}") from None
        steps.append(TraceStep(action, digest))
    return steps


@dataclass(frozen=True)
class ReplayResult:
    steps_run: int
    crash: bool
    mismatch_step: int | None = None
    message: str = ""

    @property
    def matched(self) -> bool:
        return self.mismatch_step is None


def replay_trace(env: Environment, steps: Sequence[TraceStep]) -> ReplayResult:
    """Run ``steps`` from reset, checking each recorded digest.

    Steps without a digest are executed but not checked.
    """
    obs = env.reset()
    for i, step in enumerate(steps, 1):
        if obs.crash:
            return ReplayResult(i - 1, True, i, f"step {i} ({step.action}): app already crashed")
        obs = env.execute(step.action).observation
        if step.digest is not None:
            got = observation_digest(obs)
            if got != step.digest:
                return ReplayResult(
                    i, obs.crash, i, f"step {i} ({step.action}): digest {got[:12]} != recorded {step.digest[:12]}"
                )
    return ReplayResult(len(steps), obs.crash)
