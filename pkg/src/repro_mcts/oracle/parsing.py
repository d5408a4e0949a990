"""Response grammars for both oracle roles."""

from __future__ import annotations

import json
import re

from ..env import ActionCommand, ActionKind
from ..errors import RetryableParseError

_SCORE = re.compile(r"score:\s*(\d+)", re.IGNORECASE)
_DECODER = json.JSONDecoder()


def _proposal_arrays(text: str):
    pos = text.find("[")
    while pos != -1:
        try:
            value, _ = _DECODER.raw_decode(text, pos)
        except json.JSONDecodeError:
            value = None
        if isinstance(value, list) and value and all(isinstance(v, dict) and "action" in v for v in value):
            yield value
        pos = text.find("[", pos + 1)


def _to_action(entry: dict) -> ActionCommand:
    kind = ActionKind(str(entry["action"]).strip().lower())
    feature = entry.get("feature") or ""
    if not isinstance(feature, str):
        raise ValueError("feature must be a string")
    if kind in (ActionKind.ROTATE, ActionKind.BACK):
        return ActionCommand(kind)
    text = entry.get("text")
    return ActionCommand(kind, feature, None if text is None else str(text))


def parse_expand_response(text: str, k: int | None) -> list[ActionCommand]:
    """First JSON array of ``{"action", "feature"}`` objects in ``text``.

    Entries with an unknown kind or malformed fields are dropped; duplicates
    collapse onto their first occurrence; the result is cut to ``k``.
    """
    array = next(_proposal_arrays(text), None)
    if array is None:
        raise RetryableParseError("no JSON array of action objects found")
    proposals, seen = [], set()
    for entry in array:
        try:
            action = _to_action(entry)
        except (ValueError, KeyError):
            continue
        if action.key in seen:
            continue
        seen.add(action.key)
        proposals.append(action)
    if not proposals:
        raise RetryableParseError("no entry uses a supported action kind")
    return proposals if k is None else proposals[:k]


def serialize_proposals(proposals) -> str:
    return json.dumps([p.to_dict() for p in proposals])


def parse_simulate_response(text: str) -> int:
    """Integer from the first ``Score: N``; N must lie in [0, 10]."""
    m = _SCORE.search(text)
    if m is None:
        raise RetryableParseError("no 'Score: N' found")
    value = int(m.group(1))
    if value > 10:
        raise RetryableParseError(f"score {m.group(1)} outside [0, 10]")
    return value
