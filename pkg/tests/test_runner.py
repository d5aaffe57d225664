import itertools
from dataclasses import replace

import numpy as np
import pytest

import oracles
from powericl import env, runner
from powericl.config import RunConfig, load_config, save_config
from powericl.env import ConfigurationError, DomainError
from powericl.pool import ExperiencePool

BASE = RunConfig(episodes=40, plots=False)


def test_exploration_episodes():
    assert runner.exploration_episodes(RunConfig(episodes=100, exploration_fraction=0.4)) == 40
    assert runner.exploration_episodes(RunConfig(episodes=7, exploration_fraction=0.3)) == 3
    assert runner.exploration_episodes(RunConfig(episodes=10, exploration_fraction=0.0)) == 0


def test_episode_seeds_are_stable_and_distinct():
    seeds = [runner.episode_seed(0, t) for t in range(1, 200)]
    assert len(set(seeds)) == len(seeds)
    assert runner.episode_seed(3, 5) == runner.episode_seed(3, 5)


@pytest.mark.parametrize("mode", ["discrete", "continuous"])
def test_run_records_and_pool(mode):
    cfg = replace(BASE, state_mode=mode)
    result = runner.run(cfg)
    assert [r.episode for r in result.records] == list(range(1, 41))
    assert [e.episode for e in result.pool] == list(range(1, 41))
    for r, e in zip(result.records, result.pool):
        assert e.reward == r.reward and e.action == int(r.action)
        assert r.epsilon == (cfg.epsilon if r.episode <= 16 else 0.0)
        assert r.power == float(r.action) and r.total_power == 3 * r.power


def test_every_logged_reward_is_reproducible():
    cfg = replace(BASE, state_mode="discrete")
    for r in runner.run(cfg).records:
        state = env.sample_state(cfg.network, "discrete", r.state_seed)
        assert env.step(state, r.levels[0], cfg.network).system_reward == r.reward
        assert r.state == str(state.decision_state())


def test_independent_actions_insert_one_example_per_bs():
    cfg = replace(BASE, independent_actions=True, episodes=12)
    result = runner.run(cfg)
    assert len(result.pool) == 36
    for r in result.records:
        assert len(r.levels) == 3 and len(r.state.split(";")) == 3
    assert runner.replay(result.records, result.pool, cfg).ok


def test_warm_start_continues_episode_numbers(tmp_path):
    first = runner.run(replace(BASE, episodes=10))
    first.pool.save(tmp_path / "pool.jsonl")
    second = runner.run(replace(BASE, episodes=5, warm_start_pool=str(tmp_path / "pool.jsonl")))
    assert [r.episode for r in second.records] == [11, 12, 13, 14, 15]
    assert len(second.pool) == 15


def test_qlearn_backend_runs_and_learns():
    result = runner.run(replace(BASE, backend="qlearn", state_mode="discrete", episodes=30))
    assert {r.backend for r in result.records} == {"qlearn"}


@pytest.mark.parametrize("seed", range(4))
def test_exhaustive_matches_brute_force(seed):
    net = env.NetworkConfig()
    state = env.sample_state(net, "continuous", seed)
    best, reward = runner.evaluate_exhaustive(state, net)
    brute = [np.mean(oracles.rewards_scalar(state, (lv,) * 3, net)) for lv in range(1, 5)]
    assert reward == pytest.approx(max(brute))
    assert best == 1 + int(np.argmax(brute))
    best_vec, reward_vec = runner.evaluate_exhaustive(state, net, independent=True)
    grid = {v: np.mean(oracles.rewards_scalar(state, v, net))
            for v in itertools.product(range(1, 5), repeat=3)}
    assert reward_vec == pytest.approx(max(grid.values()))
    assert reward_vec >= reward - 1e-12
    assert grid[best_vec] == pytest.approx(reward_vec)


def test_exhaustive_rejects_huge_level_sets():
    net = env.NetworkConfig(num_levels=17)
    with pytest.raises(DomainError):
        runner.evaluate_exhaustive(env.sample_state(net, "discrete", 0), net)


def test_summarize_and_windows():
    records = runner.run(replace(BASE, episodes=10)).records
    assert runner.tail_window(records) == (9, 10)
    assert runner.head_window(records) == (1, 2)
    s = runner.summarize(records, (9, 10))
    assert s["episodes"] == 2
    assert s["mean_reward"] == pytest.approx(np.mean([r.reward for r in records[8:]]))
    with pytest.raises(DomainError):
        runner.summarize(records, (50, 60))


def test_metrics_roundtrip(tmp_path):
    records = runner.run(replace(BASE, episodes=15, state_mode="continuous")).records
    runner.write_metrics(records, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().startswith("# schema: powericl-metrics/1\n")
    assert runner.read_metrics(tmp_path / "m.csv") == records


def test_read_metrics_rejects_unknown_schema(tmp_path):
    (tmp_path / "m.csv").write_text("episode\n1\n")
    with pytest.raises(ValueError):
        runner.read_metrics(tmp_path / "m.csv")


def test_replay_detects_tampering():
    cfg = replace(BASE, episodes=8)
    result = runner.run(cfg)
    assert runner.replay(result.records, result.pool, cfg).ok
    result.records[3] = replace(result.records[3], reward=result.records[3].reward + 1e-9)
    report = runner.replay(result.records, result.pool, cfg)
    assert not report.ok and "episode 4" in report.mismatches[0]


def test_write_outputs(tmp_path):
    cfg = replace(BASE, episodes=10, plots=True)
    out = runner.write_outputs(runner.run(cfg), cfg, tmp_path / "run")
    for name in ("metrics.csv", "summary.csv", "pool.jsonl", "transcript.txt", "config.yaml",
                 "reward.png", "power.png", "service_quality.png"):
        assert (out / name).stat().st_size > 0
    assert load_config(out / "config.yaml") == cfg


def test_sweep_rows():
    rows = runner.sweep(replace(BASE, episodes=10), "min_rate", [4e5, 1.1e6], seeds=[0, 1])
    assert [(r["min_rate"], r["seed"]) for r in rows] == [(4e5, 0), (4e5, 1), (1.1e6, 0), (1.1e6, 1)]
    assert all(r["episodes"] == 2 for r in rows)


def test_calibrated_min_rate_reproduces_default():
    # the packaged default was computed with 2000 samples; 400 must land within 2%
    value = runner.calibrate_min_rate(env.NetworkConfig(), samples=400)
    assert value == pytest.approx(RunConfig().network.min_rate, rel=0.02)


def test_packaged_config_equals_dataclass_defaults():
    assert load_config() == RunConfig()


def test_config_file_overrides_and_validation(tmp_path):
    (tmp_path / "c.yaml").write_text("episodes: 7\nmin_rate: 5.0e5\nllm_model_name: x\n")
    cfg = load_config(tmp_path / "c.yaml")
    assert (cfg.episodes, cfg.network.min_rate, cfg.llm.model_name) == (7, 5e5, "x")
    assert cfg.with_overrides(seed=4, num_bs=2, tau=None).network.num_bs == 2
    (tmp_path / "bad.yaml").write_text("epsiode: 7\n")
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "bad.yaml")
    with pytest.raises(ConfigurationError):
        RunConfig(backend="gpt")
    save_config(cfg, tmp_path / "again.yaml")
    assert load_config(tmp_path / "again.yaml") == cfg


def test_pool_capacity_from_config():
    result = runner.run(replace(BASE, episodes=12, pool_capacity=5))
    assert isinstance(result.pool, ExperiencePool) and len(result.pool) == 5
