"""The in-context learning control loop, its metrics and the exhaustive-search oracle."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import env
from .config import RunConfig
from .env import CONTINUOUS, DomainError, NetworkConfig, NetworkState
from .policy import (BackendError, Decision, QLearningBackend, RandomBackend, SurrogateBackend,
                     epsilon_greedy)
from .pool import Example, ExperiencePool, SelectionResult
from .prompt import render

log = logging.getLogger(__name__)

METRICS_SCHEMA = "powericl-metrics/1"
SUMMARY_SCHEMA = "powericl-summary/1"


@dataclass
class EpisodeRecord:
    episode: int
    state_seed: int
    state: str
    epsilon: float
    action: str
    reward: float
    power: float
    total_power: float
    constraint_ok: bool
    was_random: bool
    backend: str
    retry_count: int
    parse_confidence: str
    backend_failed: bool

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.action.split(";"))


@dataclass
class RunResult:
    records: list[EpisodeRecord]
    pool: ExperiencePool
    transcript: list[str]


def episode_seed(seed: int, episode: int) -> int:
    """Seed of the network state drawn in ``episode`` of a run seeded with ``seed``."""
    return int(np.random.SeedSequence([seed, episode]).generate_state(1)[0])


def exploration_episodes(config: RunConfig) -> int:
    return math.ceil(round(config.exploration_fraction * config.episodes, 9))


def make_backend(config: RunConfig):
    net = config.network
    if config.backend == "surrogate":
        return SurrogateBackend(config.state_mode, config.tau)
    if config.backend == "random":
        return RandomBackend(net.num_levels, np.random.default_rng([config.seed, 2]))
    if config.backend == "qlearn":
        # optimistic start so every level gets tried once per state
        return QLearningBackend(net.num_levels, config.state_mode, config.q_learning_rate,
                                config.q_discount, init_value=net.target_power,
                                bin_width=config.q_bin_width)
    from .llm import LlmBackend, file_fixture_transport

    transport = file_fixture_transport(config.llm_reply_fixtures) if config.llm_reply_fixtures else None
    return LlmBackend(config.llm, net.num_levels, transport=transport)


def select(pool: ExperiencePool, config: RunConfig, s_target) -> SelectionResult:
    if config.state_mode == CONTINUOUS:
        return pool.select_ranked(s_target, config.tau, config.k_good, config.k_bad)
    return pool.select_discrete(s_target, config.k_good, config.k_bad)


def _fmt_state(values: Sequence) -> str:
    return ";".join(repr(float(v)) if isinstance(v, float) else str(v) for v in values)


def run(config: RunConfig, backend=None, pool: ExperiencePool | None = None) -> RunResult:
    """Run the control loop for ``config.episodes`` episodes.

    Each episode draws a state, selects examples from the pool, renders the
    prompt, decides epsilon-greedily, steps the environment and appends the
    outcome to the pool.  The first ``ceil(exploration_fraction * episodes)``
    episodes use ``config.epsilon``; later ones are purely greedy.
    """
    net = config.network
    backend = backend or make_backend(config)
    if pool is None:
        pool = (ExperiencePool.load(config.warm_start_pool, config.pool_capacity)
                if config.warm_start_pool else ExperiencePool(capacity=config.pool_capacity))
    offset = max(pool.last_episode, 0)
    rng = np.random.default_rng([config.seed, 1])
    n_explore = exploration_episodes(config)
    bs_ids = list(range(net.num_bs)) if config.independent_actions else [None]

    records, transcript = [], []
    next_state = None
    for t in range(1, config.episodes + 1):
        episode = offset + t
        seed_t = episode_seed(config.seed, t)
        if next_state is None:
            state = env.sample_state(net, config.state_mode, seed_t)
        else:
            state, next_state = next_state, None
        epsilon = config.epsilon if t <= n_explore else 0.0

        s_values = [state.decision_state(b) for b in bs_ids]
        decisions: list[Decision] = []
        failed = False
        for b, s in zip(bs_ids, s_values):
            selection = select(pool, config, s)
            prompt = render(s, selection, config.state_mode, net.num_levels)
            try:
                decision = epsilon_greedy(backend, s, selection, prompt, epsilon, rng, net.num_levels)
                asked = not decision.was_random
            except BackendError as exc:
                log.warning("episode %d: %s; substituting a random level", episode, exc)
                failed = asked = True
                decision = Decision(level=int(rng.integers(1, net.num_levels + 1)),
                                    retry_count=exc.retry_count, reply_text=exc.reply_text)
            decisions.append(decision)
            if asked:
                tag = f"episode {episode}" + ("" if b is None else f" bs {b}")
                transcript.append(f"=== {tag} ===\n--- prompt ---\n{prompt.text}"
                                  f"--- reply ---\n{decision.reply_text}\n")

        if config.independent_actions:
            outcome = env.step(state, tuple(d.level for d in decisions), net)
        else:
            outcome = env.step(state, decisions[0].level, net)

        if not config.independent_actions:
            pool.insert(Example(s_values[0], decisions[0].level, outcome.system_reward, episode,
                                outcome.all_ok))
        else:
            for bs, s, d in zip(bs_ids, s_values, decisions):
                pool.insert(Example(s, d.level, float(outcome.reward[bs]), episode,
                                    bool(outcome.constraint_ok[bs])))

        if isinstance(backend, QLearningBackend):
            next_state = env.sample_state(net, config.state_mode, episode_seed(config.seed, t + 1))
            for bs, s, d in zip(bs_ids, s_values, decisions):
                r = outcome.system_reward if bs is None else float(outcome.reward[bs])
                backend.observe(s, d.level, r, next_state.decision_state(bs))

        confidence = [d.confidence.value for d in decisions if d.confidence is not None]
        records.append(EpisodeRecord(
            episode=episode,
            state_seed=seed_t,
            state=_fmt_state(s_values),
            epsilon=epsilon,
            action=";".join(str(d.level) for d in decisions),
            reward=float(outcome.system_reward),
            power=outcome.mean_power,
            total_power=outcome.total_power,
            constraint_ok=outcome.all_ok,
            was_random=any(d.was_random for d in decisions),
            backend=backend.name,
            retry_count=sum(d.retry_count for d in decisions),
            parse_confidence=";".join(confidence),
            backend_failed=failed,
        ))
    return RunResult(records, pool, transcript)


def evaluate_exhaustive(state: NetworkState, config: NetworkConfig,
                        independent: bool = False) -> tuple[tuple[int, ...] | int, float]:
    """Best level (or per-BS level vector) for ``state`` by full enumeration.

    Ties go to the first candidate in enumeration order, i.e. the lowest levels.
    """
    if config.num_levels > 16:
        raise DomainError("exhaustive search needs num_levels <= 16")
    alloc = env.allocate_rbs(state, config)
    levels = range(1, config.num_levels + 1)
    candidates = itertools.product(levels, repeat=config.num_bs) if independent else levels
    best, best_reward = None, -math.inf
    for cand in candidates:
        r = env.step(state, cand, config, alloc=alloc).system_reward
        if r > best_reward:
            best, best_reward = cand, r
    return best, best_reward


def summarize(records: Sequence[EpisodeRecord], window: tuple[int, int] | None = None) -> dict:
    """Mean reward, mean per-BS power and service quality over episodes ``window`` (inclusive)."""
    if window is not None:
        lo, hi = window
        records = [r for r in records if lo <= r.episode <= hi]
    if not records:
        raise DomainError("empty summary window")
    return {
        "episodes": len(records),
        "mean_reward": float(np.mean([r.reward for r in records])),
        "mean_power": float(np.mean([r.power for r in records])),
        "service_quality": float(np.mean([r.constraint_ok for r in records])),
    }


def tail_window(records: Sequence[EpisodeRecord], fraction: float = 0.2) -> tuple[int, int]:
    n = len(records)
    k = max(1, math.ceil(round(fraction * n, 9)))
    return records[n - k].episode, records[-1].episode


def head_window(records: Sequence[EpisodeRecord], fraction: float = 0.2) -> tuple[int, int]:
    k = max(1, math.ceil(round(fraction * len(records), 9)))
    return records[0].episode, records[k - 1].episode


_FIELDS = [f.name for f in fields(EpisodeRecord)]
_CASTS = {f.name: f.type for f in fields(EpisodeRecord)}


def _cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics(records: Sequence[EpisodeRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {METRICS_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(_FIELDS)
        for r in records:
            writer.writerow([_cell(getattr(r, name)) for name in _FIELDS])


def read_metrics(path: str | Path) -> list[EpisodeRecord]:
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != f"# schema: {METRICS_SCHEMA}":
            raise ValueError(f"{path}: unsupported metrics schema line {header!r}")
        out = []
        for row in csv.DictReader(fh):
            kw = {}
            for name, raw in row.items():
                kind = _CASTS[name]
                if kind == "bool":
                    kw[name] = raw == "1"
                elif kind == "int":
                    kw[name] = int(raw)
                elif kind == "float":
                    kw[name] = float(raw)
                else:
                    kw[name] = raw
            out.append(EpisodeRecord(**kw))
    return out


def summary_rows(records: Sequence[EpisodeRecord]) -> list[dict]:
    rows = []
    for label, window in (("all", None), ("first_20pct", head_window(records)),
                          ("final_20pct", tail_window(records))):
        rows.append({"window": label, **summarize(records, window)})
    return rows


def write_summary(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {SUMMARY_SCHEMA}\n")
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})


def write_outputs(result: RunResult, config: RunConfig, out_dir: str | Path) -> Path:
    from .config import save_config

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics(result.records, out / "metrics.csv")
    write_summary(summary_rows(result.records), out / "summary.csv")
    result.pool.save(out / "pool.jsonl")
    (out / "transcript.txt").write_text("\n".join(result.transcript))
    save_config(config, out / "config.yaml")
    if config.plots:
        from .plots import plot_run

        plot_run(result.records, out)
    return out


@dataclass
class ReplayReport:
    checked: int
    mismatches: list[str]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def replay(records: Sequence[EpisodeRecord], pool: ExperiencePool, config: RunConfig) -> ReplayReport:
    """Recompute every logged reward from its state seed and action."""
    net = config.network
    by_episode: dict[int, list[Example]] = {}
    for e in pool:
        by_episode.setdefault(e.episode, []).append(e)
    mismatches = []
    for r in records:
        state = env.sample_state(net, config.state_mode, r.state_seed)
        levels = r.levels
        outcome = env.step(state, levels[0] if len(levels) == 1 else levels, net)
        if outcome.system_reward != r.reward:
            mismatches.append(f"episode {r.episode}: logged reward {r.reward!r}, "
                              f"recomputed {outcome.system_reward!r}")
        examples = by_episode.get(r.episode, [])
        expected = ([float(v) for v in outcome.reward] if config.independent_actions
                    else [outcome.system_reward])
        if examples and [e.reward for e in examples] != expected:
            mismatches.append(f"episode {r.episode}: pool rewards {[e.reward for e in examples]} "
                              f"do not match recomputed {expected}")
    return ReplayReport(len(records), mismatches)


def sweep(config: RunConfig, param: str, values: Sequence, seeds: Sequence[int],
          fraction: float = 0.2) -> list[dict]:
    """Converged (final-window) summary for every (value, seed) pair of a parameter sweep."""
    rows = []
    for value in values:
        for seed in seeds:
            cfg = config.with_overrides(**{param: value, "seed": seed})
            records = run(cfg).records
            rows.append({param: value, "seed": seed,
                         **summarize(records, tail_window(records, fraction))})
    return rows


def calibrate_min_rate(config: NetworkConfig, mode: str = "discrete", samples: int = 2000,
                       level: int = 2, fraction: float = 0.6) -> float:
    """``fraction`` of the median per-BS average rate at ``level`` over sampled layouts.

    This is how the default ``min_rate`` was chosen: it sits where the lower
    levels start to miss the rate target on crowded cells.
    """
    rates = []
    for seed in range(samples):
        state = env.sample_state(config, mode, seed)
        rates.extend(env.step(state, level, config).avg_rate)
    return fraction * float(np.median(rates))
