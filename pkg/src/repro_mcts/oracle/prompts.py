"""Prompt construction for the Expander and Simulator roles.

Template text lives in ``templates/`` so operators can extend the few-shot
and reasoning blocks without touching code. Few-shot files hold one example
per block, separated by a line containing only ``---``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Iterable, Sequence

from ..env import ActionCommand, ActionKind, Observation

DISABLE_TOPK = "disable_topk"
DISABLE_FEWSHOT_COT = "disable_fewshot_cot"
DISABLE_IMAGE = "disable_image"
STANDARD_ROLLOUT = "standard_rollout"
ABLATION_FLAGS = frozenset({DISABLE_TOPK, DISABLE_FEWSHOT_COT, DISABLE_IMAGE, STANDARD_ROLLOUT})

MAX_HISTORY = 20
NO_HISTORY = "(no prior steps)"


@dataclass(frozen=True)
class HistoryStep:
    action: ActionCommand
    result: str


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    fewshot_blocks: tuple[str, ...] = ()
    cot_block: str = ""
    user_text: str = ""
    attachments: tuple[bytes, ...] = field(default=(), repr=False)

    def system_message(self) -> str:
        parts = [self.system_text, *self.fewshot_blocks]
        if self.cot_block:
            parts.append(self.cot_block)
        return "\n\n".join(parts)


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files(__package__).joinpath("templates", name).read_text(encoding="utf-8").strip()


def _fewshot(name: str) -> tuple[str, ...]:
    text = load_template(name)
    return tuple(b.strip() for b in text.split("\n---\n") if b.strip())


def check_flags(flags: Iterable[str]) -> frozenset[str]:
    flags = frozenset(flags)
    unknown = flags - ABLATION_FLAGS
    if unknown:
        raise ValueError(f"unknown ablation flags: {sorted(unknown)}")
    return flags


def describe_action(action: ActionCommand) -> str:
    kind = action.kind
    if kind is ActionKind.ROTATE:
        return "rotate the screen"
    if kind is ActionKind.BACK:
        return "press back"
    if kind is ActionKind.SET_TEXT:
        return f'type "{action.text}" into "{action.feature}"'
    if kind is ActionKind.MULTIPLE_SELECT:
        return f'select "{action.feature}"'
    return f'{kind.value.replace("_", " ")} on "{action.feature}"'


def render_history(history: Sequence[HistoryStep]) -> str:
    if not history:
        return NO_HISTORY
    offset = max(0, len(history) - MAX_HISTORY)
    lines = []
    for i, step in enumerate(history[offset:], offset + 1):
        lines.append(f"{i}. {describe_action(step.action)} -> {step.result}")
    return "\n".join(lines)


def _attachments(flags, *observations: Observation | None) -> tuple[bytes, ...]:
    if DISABLE_IMAGE in flags:
        return ()
    return tuple(o.attachment for o in observations if o is not None and o.attachment is not None)


def build_expand_prompt(
    report: str,
    app_name: str,
    obs: Observation,
    history: Sequence[HistoryStep],
    k: int | None,
    flags: Iterable[str] = (),
) -> PromptBundle:
    """``k=None`` asks for every plausible action instead of the top k."""
    flags = check_flags(flags)
    if k is not None and k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k is None:
        count_phrase = "list every action on this screen that could plausibly help reproduce the bug, most promising first."
        request = "List every plausible action."
    else:
        count_phrase = f"give me the {k} actions most likely to move toward reproducing the bug, most promising first."
        request = f"Suggest exactly {k} actions."
    system = Template(load_template("expand_task.txt")).substitute(count_phrase=count_phrase)
    user = (
        f"App name: {app_name}\n"
        f"Bug report:\n{report}\n\n"
        f"Current screen:\n{obs.describe()}\n\n"
        f"History:\n{render_history(history)}\n\n"
        f"{request}"
    )
    with_examples = DISABLE_FEWSHOT_COT not in flags
    return PromptBundle(
        system_text=system,
        fewshot_blocks=_fewshot("expand_fewshot.txt") if with_examples else (),
        cot_block=load_template("expand_cot.txt") if with_examples else "",
        user_text=user,
        attachments=_attachments(flags, obs),
    )


def build_simulate_prompt(
    report: str,
    history: Sequence[HistoryStep],
    target_action: ActionCommand,
    before_obs: Observation,
    after_obs: Observation,
    flags: Iterable[str] = (),
    app_name: str = "",
) -> PromptBundle:
    flags = check_flags(flags)
    user = (
        (f"App name: {app_name}\n" if app_name else "")
        + f"Bug report:\n{report}\n\n"
        f"Reproduction path so far:\n{render_history(history)}\n\n"
        f"Previous page:\n{before_obs.describe()}\n\n"
        f"Target action: {describe_action(target_action)}\n\n"
        f"Page after the action:\n{after_obs.describe()}\n\n"
        "Reply with the score in the form 'Score: N'."
    )
    with_examples = DISABLE_FEWSHOT_COT not in flags
    return PromptBundle(
        system_text=load_template("simulate_task.txt"),
        fewshot_blocks=_fewshot("simulate_fewshot.txt") if with_examples else (),
        cot_block=load_template("simulate_cot.txt") if with_examples else "",
        user_text=user,
        attachments=_attachments(flags, before_obs, after_obs),
    )
