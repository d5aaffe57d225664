"""Prompt rendering for the power-control task and parsing of free-text replies."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .env import CONTINUOUS, DISCRETE, ConfigurationError
from .pool import Example, SelectionResult

_STATE_LABEL = {
    DISCRETE: "Base station user number",
    CONTINUOUS: "Average user distance to the Base station",
}
_STATE_DESCRIPTION = {
    DISCRETE: 'the specific user number of each case, which is the "base station user number"',
    CONTINUOUS: "the specific average user distance of each case",
}


class ParseConfidence(enum.Enum):
    EXACT = "exact"
    FALLBACK = "fallback"
    FAILED = "failed"


@dataclass(frozen=True)
class PromptDocument:
    text: str
    state: float
    num_good: int
    num_bad: int


@dataclass(frozen=True)
class ParsedReply:
    action: int | None
    rationale_text: str
    confidence: ParseConfidence


def format_state(value, mode: str) -> str:
    if mode == DISCRETE:
        return str(int(value)) if float(value).is_integer() else f"{value:.2f}"
    return f"{value:.2f}"


def format_reward(value: float) -> str:
    text = f"{value:.2f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


def level_names(num_levels: int) -> str:
    names = [f'"level {i}"' for i in range(1, num_levels + 1)]
    if num_levels == 2:
        return " and ".join(names)
    return ", ".join(names[:-1]) + ", and " + names[-1]


def _example_line(e: Example, mode: str, verdict: str) -> str:
    return (
        f"Example {e.episode}: {_STATE_LABEL[mode]}: {format_state(e.state, mode)}, "
        f"your selected power level: {e.action}, reward: {format_reward(e.reward)}, "
        f"evaluation = {verdict}."
    )


def render(state, selection: SelectionResult, mode: str, num_levels: int = 4) -> PromptDocument:
    """Build the task prompt for one decision.

    Sections with no examples are left out entirely.
    """
    if mode not in _STATE_LABEL:
        raise ConfigurationError(f"unknown state mode {mode!r}")
    lines = [
        "You have a decision-making task for Base Station power control.",
        "",
        f"Task goal: You need to select between {num_levels} power levels from 1 to {num_levels}.",
        "",
        f"Task description: You have to consider {_STATE_DESCRIPTION[mode]}.",
        "",
    ]
    if selection.recommended:
        lines += ["Following are some good examples I recommend:", ""]
        lines += [_example_line(e, mode, "good") for e in selection.recommended]
        lines.append("")
    if selection.inadvisable:
        lines += ["Following are some bad examples I do not recommend:", ""]
        lines += [_example_line(e, mode, "bad") for e in selection.inadvisable]
        lines.append("")
    lines += [
        f"Now I will give you a new condition to solve: {_STATE_LABEL[mode]}: {format_state(state, mode)}.",
        "",
        f"Please select from {level_names(num_levels)} based on the above examples. "
        "Please explain the reasons for your selection.",
    ]
    return PromptDocument(
        text="\n".join(lines) + "\n",
        state=state,
        num_good=len(selection.recommended),
        num_bad=len(selection.inadvisable),
    )


# "level 1" and "level 1.0" count, "level 1.5" does not
_LEVEL_RE = re.compile(r"\blevel[ -](\d+)(?:\.0+)?(?!\.?\d)", re.IGNORECASE)
_INT_RE = re.compile(r"(?<![\d.])(\d+)(?![\d]|\.\d)")


def parse_reply(text: str, num_levels: int = 4) -> ParsedReply:
    """Extract the chosen power level from a model reply.

    The last in-range ``level N`` mention wins, since replies reason about
    several levels before concluding.  Failing that, a single in-range
    integer on the final non-empty line is accepted as a fallback.  Numbers
    elsewhere in the reasoning are never trusted.
    """
    hits = [int(m.group(1)) for m in _LEVEL_RE.finditer(text)]
    hits = [h for h in hits if 1 <= h <= num_levels]
    if hits:
        return ParsedReply(hits[-1], text, ParseConfidence.EXACT)

    final = next((ln for ln in reversed(text.splitlines()) if ln.strip()), "")
    ints = {int(m.group(1)) for m in _INT_RE.finditer(final)}
    if len(ints) == 1:
        (value,) = ints
        if 1 <= value <= num_levels:
            return ParsedReply(value, text, ParseConfidence.FALLBACK)
    return ParsedReply(None, text, ParseConfidence.FAILED)
