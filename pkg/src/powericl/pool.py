"""Experience pool of (state, action, reward) examples and example selection."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

State = float | tuple[float, ...]


@dataclass(frozen=True)
class Example:
    state: State
    action: int
    reward: float
    episode: int
    constraint_ok: bool = True

    def __post_init__(self):
        if self.episode < 0:
            raise ValueError("episode index must be >= 0")
        if isinstance(self.action, bool) or int(self.action) != self.action or self.action < 1:
            raise ValueError(f"invalid action {self.action!r}")

    def to_json(self) -> str:
        state = list(self.state) if isinstance(self.state, tuple) else self.state
        return json.dumps({
            "episode": self.episode,
            "state": state,
            "action": self.action,
            "reward": self.reward,
            "constraint_ok": self.constraint_ok,
        })

    @classmethod
    def from_json(cls, line: str) -> "Example":
        d = json.loads(line)
        state = tuple(d["state"]) if isinstance(d["state"], list) else d["state"]
        return cls(state=state, action=int(d["action"]), reward=float(d["reward"]),
                   episode=int(d["episode"]), constraint_ok=bool(d["constraint_ok"]))


@dataclass(frozen=True)
class SelectionResult:
    recommended: tuple[Example, ...] = ()
    inadvisable: tuple[Example, ...] = ()
    # score of each recommended example (reward, or the ranking metric)
    scores: tuple[float, ...] = ()

    def __len__(self):
        return len(self.recommended) + len(self.inadvisable)


class ExperiencePool:
    """Append-only log of examples, optionally capped as a ring buffer."""

    def __init__(self, examples: Iterable[Example] = (), capacity: int | None = None):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._examples: deque[Example] = deque(maxlen=capacity)
        for e in examples:
            self.insert(e)

    def insert(self, example: Example) -> "ExperiencePool":
        if self._examples and example.episode < self._examples[-1].episode:
            raise ValueError(
                f"episode {example.episode} inserted after episode {self._examples[-1].episode}"
            )
        self._examples.append(example)
        return self

    def __len__(self) -> int:
        return len(self._examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self._examples)

    def __getitem__(self, i: int) -> Example:
        return self._examples[i]

    @property
    def last_episode(self) -> int:
        return self._examples[-1].episode if self._examples else -1

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for e in self._examples:
                fh.write(e.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path, capacity: int | None = None) -> "ExperiencePool":
        with open(path) as fh:
            return cls((Example.from_json(line) for line in fh if line.strip()), capacity=capacity)

    def select_discrete(self, s_target: State, k_good: int, k_bad: int) -> SelectionResult:
        return select_discrete(list(self._examples), s_target, k_good, k_bad)

    def select_ranked(self, s_target: State, tau: float, k_good: int, k_bad: int) -> SelectionResult:
        return select_ranked(list(self._examples), s_target, tau, k_good, k_bad)


def score(example: Example, s_target: State, tau: float) -> float:
    """Usefulness of ``example`` for ``s_target``: reward minus tau times the state distance."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return example.reward - tau * _distance(example.state, s_target)


def _distance(a: State, b: State) -> float:
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return abs(a - b)
    return float(np.linalg.norm(np.subtract(a, b, dtype=float)))


def _order(values: np.ndarray, episodes: np.ndarray, descending: bool) -> np.ndarray:
    # last key is primary: value, then most recent episode, then insertion position
    position = np.arange(values.size)
    primary = -values if descending else values
    return np.lexsort((position, -episodes, primary))


def _select(examples: Sequence[Example], values: np.ndarray, k_good: int, k_bad: int,
            bad_mask_fn) -> SelectionResult:
    if not examples:
        return SelectionResult()
    episodes = np.array([e.episode for e in examples])
    best = _order(values, episodes, descending=True)[: max(k_good, 0)]
    chosen = np.zeros(len(examples), dtype=bool)
    chosen[best] = True
    eligible = bad_mask_fn(chosen, values[best] if best.size else None) & ~chosen
    worst = [i for i in _order(values, episodes, descending=False) if eligible[i]][: max(k_bad, 0)]
    return SelectionResult(
        recommended=tuple(examples[i] for i in best),
        inadvisable=tuple(examples[i] for i in worst),
        scores=tuple(float(values[i]) for i in best),
    )


def select_discrete(examples: Sequence[Example], s_target: State, k_good: int,
                    k_bad: int) -> SelectionResult:
    """Exact-state matching.

    Among examples whose state equals ``s_target`` the ``k_good`` highest
    rewards are recommended.  Inadvisable examples are the lowest rewards
    among the remaining candidates that violated the rate constraint or
    scored below the weakest recommended one.
    """
    candidates = [e for e in examples if _same_state(e.state, s_target)]
    values = np.array([e.reward for e in candidates], dtype=float)
    violated = np.array([not e.constraint_ok for e in candidates], dtype=bool)

    def bad_mask(chosen, best_values):
        if best_values is None:
            return np.ones(len(candidates), dtype=bool)
        return violated | (values < best_values.min())

    return _select(candidates, values, k_good, k_bad, bad_mask)


def select_ranked(examples: Sequence[Example], s_target: State, tau: float, k_good: int,
                  k_bad: int) -> SelectionResult:
    """Rank every example by ``reward - tau * |s - s_target|``.

    Inadvisable examples are the lowest-ranked constraint violators, or the
    lowest-ranked examples overall when nothing in the pool violated.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    values = np.array([score(e, s_target, tau) for e in examples], dtype=float)
    violated = np.array([not e.constraint_ok for e in examples], dtype=bool)

    def bad_mask(chosen, best_values):
        if (violated & ~chosen).any():
            return violated
        return np.ones(len(examples), dtype=bool)

    return _select(list(examples), values, k_good, k_bad, bad_mask)


def _same_state(a: State, b: State) -> bool:
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return a == b
    return tuple(np.atleast_1d(a)) == tuple(np.atleast_1d(b))
