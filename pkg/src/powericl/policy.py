"""Decision backends, the epsilon-greedy wrapper and a tabular Q-learning baseline."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .env import CONTINUOUS, DISCRETE
from .pool import SelectionResult, score
from .prompt import ParseConfidence, PromptDocument


class BackendError(RuntimeError):
    """A backend could not produce an action (e.g. retries exhausted)."""

    def __init__(self, message: str, retry_count: int = 0, reply_text: str = ""):
        super().__init__(message)
        self.retry_count = retry_count
        self.reply_text = reply_text


@dataclass(frozen=True)
class Decision:
    level: int
    was_random: bool = False
    retry_count: int = 0
    confidence: ParseConfidence | None = None
    reply_text: str = ""


class DecisionBackend(Protocol):
    name: str

    def decide(self, state, selection: SelectionResult, prompt: PromptDocument) -> Decision: ...


def epsilon_greedy(backend: DecisionBackend, state, selection: SelectionResult,
                   prompt: PromptDocument, epsilon: float, rng: np.random.Generator,
                   num_levels: int = 4) -> Decision:
    """With probability ``epsilon`` pick a uniform random level, else ask ``backend``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return Decision(level=int(rng.integers(1, num_levels + 1)), was_random=True)
    decision = backend.decide(state, selection, prompt)
    if not 1 <= decision.level <= num_levels:
        raise BackendError(f"{backend.name} returned level {decision.level} outside 1..{num_levels}")
    return decision


def surrogate_decide(state, selection: SelectionResult, tau: float | None = None) -> int:
    """Copy the action of the best recommended example.

    Examples are scored by reward, or by the ranking metric when ``tau`` is
    given.  Ties go to the most recent episode, then to the earlier entry.
    With nothing recommended the lowest level is returned.
    """
    if not selection.recommended:
        return 1
    best = max(
        enumerate(selection.recommended),
        key=lambda item: (
            item[1].reward if tau is None else score(item[1], state, tau),
            item[1].episode,
            -item[0],
        ),
    )
    return int(best[1].action)


class SurrogateBackend:
    """Deterministic offline stand-in for the language model."""

    name = "surrogate"

    def __init__(self, mode: str = DISCRETE, tau: float = 1.0):
        self.tau = tau if mode == CONTINUOUS else None

    def decide(self, state, selection, prompt=None) -> Decision:
        return Decision(level=surrogate_decide(state, selection, self.tau))


class RandomBackend:
    name = "random"

    def __init__(self, num_levels: int, rng: np.random.Generator):
        self.num_levels = num_levels
        self.rng = rng

    def decide(self, state, selection=None, prompt=None) -> Decision:
        return Decision(level=int(self.rng.integers(1, self.num_levels + 1)))


@dataclass
class QTable:
    """Tabular action values keyed by (state bin, level).

    ``learning_rate=None`` uses a 1/n step size per entry (sample average).
    """

    num_levels: int
    learning_rate: float | None = 0.1
    discount: float = 0.0
    init_value: float = 0.0
    values: dict = field(default_factory=dict)
    visits: dict = field(default_factory=lambda: defaultdict(int))

    def __post_init__(self):
        if self.learning_rate is not None and not 0.0 <= self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in [0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")

    def get(self, s, a: int) -> float:
        return self.values.get((s, a), self.init_value)

    def row(self, s) -> list[float]:
        return [self.get(s, a) for a in range(1, self.num_levels + 1)]

    def greedy(self, s) -> int:
        return int(np.argmax(self.row(s))) + 1


def discretize(state, mode: str, bin_width: float = 1.0):
    """Q-table key of a state: the count itself, or a distance bin (1 = (0, w])."""
    if mode == DISCRETE:
        return int(state)
    return max(1, math.ceil(state / bin_width))


def qlearn_update(table: QTable, s, a: int, r: float, s_next) -> QTable:
    """One Q-learning backup on already-discretized states."""
    table.visits[(s, a)] += 1
    alpha = 1.0 / table.visits[(s, a)] if table.learning_rate is None else table.learning_rate
    target = r + table.discount * max(table.row(s_next))
    q = table.get(s, a)
    table.values[(s, a)] = q + alpha * (target - q)
    return table


class QLearningBackend:
    """Greedy policy over a Q-table; the runner feeds rewards back via :meth:`observe`."""

    name = "qlearn"

    def __init__(self, num_levels: int, mode: str = DISCRETE, learning_rate: float | None = None,
                 discount: float = 0.0, init_value: float = 0.0, bin_width: float = 1.0):
        self.mode = mode
        self.bin_width = bin_width
        self.table = QTable(num_levels, learning_rate, discount, init_value)

    def key(self, state):
        return discretize(state, self.mode, self.bin_width)

    def decide(self, state, selection=None, prompt=None) -> Decision:
        return Decision(level=self.table.greedy(self.key(state)))

    def observe(self, state, level: int, reward: float, next_state) -> None:
        qlearn_update(self.table, self.key(state), level, reward, self.key(next_state))
