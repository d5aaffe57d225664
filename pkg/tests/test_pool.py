import random

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from powericl.pool import Example, ExperiencePool, select_discrete, select_ranked


def random_pool(rng: random.Random, size: int, discrete: bool) -> list[Example]:
    out, episode = [], 0
    for _ in range(size):
        episode += rng.choice((0, 0, 1, 2))
        state = rng.randint(5, 8) if discrete else round(rng.uniform(5, 12), rng.choice((1, 2)))
        level = rng.randint(1, 4)
        ok = rng.random() < 0.7
        out.append(Example(state, level, 5.0 - level - (0 if ok else 5), episode, ok))
    return out


def positions(examples, chosen):
    ids = [id(e) for e in chosen]
    return [next(i for i, e in enumerate(examples) if id(e) == x) for x in ids]


def check_against_oracle(examples, target, kg, kb, tau=None):
    if tau is None:
        got = select_discrete(examples, target, kg, kb)
    else:
        got = select_ranked(examples, target, tau, kg, kb)
    want_good, want_bad = oracles.select_oracle(examples, target, kg, kb, tau)
    assert positions(examples, got.recommended) == want_good
    assert positions(examples, got.inadvisable) == want_bad


@pytest.mark.parametrize("seed", range(30))
def test_selection_matches_oracle(seed):
    rng = random.Random(seed)
    examples = random_pool(rng, rng.randint(1, 120), discrete=seed % 2 == 0)
    kg, kb = rng.randint(0, 8), rng.randint(0, 8)
    check_against_oracle(examples, rng.randint(5, 8), kg, kb)
    check_against_oracle(examples, round(rng.uniform(5, 12), 2), kg, kb, tau=rng.choice((0.0, 0.5, 1.0)))


def test_tie_break_prefers_recent_then_earlier_insertion():
    a = Example(7, 1, 4.0, 3)
    b = Example(7, 2, 4.0, 5)
    c = Example(7, 3, 4.0, 5)
    sel = select_discrete([a, b, c], 7, 2, 0)
    assert sel.recommended == (b, c)


def test_discrete_requires_exact_state():
    pool = [Example(7, 1, 4.0, 1), Example(8, 1, 4.0, 2)]
    sel = select_discrete(pool, 7, 5, 5)
    assert sel.recommended == (pool[0],)
    assert select_discrete(pool, 9, 5, 5).recommended == ()


def test_discrete_bad_examples_are_violators_or_below_recommended():
    pool = [Example(7, 1, 4.0, 1), Example(7, 2, 3.0, 2), Example(7, 4, 1.0, 3),
            Example(7, 1, -1.0, 4, constraint_ok=False)]
    sel = select_discrete(pool, 7, 2, 5)
    assert sel.recommended == (pool[0], pool[1])
    assert sel.inadvisable == (pool[3], pool[2])
    assert sel.scores == (4.0, 3.0)


def test_ranked_prefers_close_states():
    pool = [Example(9.0, 1, 4.0, 1), Example(12.0, 1, 4.0, 2), Example(9.1, 3, 2.0, 3, False)]
    sel = select_ranked(pool, 9.0, 1.0, 1, 1)
    assert sel.recommended == (pool[0],)
    assert sel.inadvisable == (pool[2],)
    assert sel.scores == (4.0,)


def test_ranked_falls_back_to_lowest_when_nothing_violated():
    pool = [Example(9.0, 1, 4.0, 1), Example(9.0, 4, 1.0, 2), Example(9.0, 3, 2.0, 3)]
    sel = select_ranked(pool, 9.0, 1.0, 1, 1)
    assert sel.inadvisable == (pool[1],)


def test_empty_pool_selects_nothing():
    assert len(select_ranked([], 1.0, 1.0, 3, 3)) == 0
    assert len(ExperiencePool().select_discrete(5, 3, 3)) == 0


def test_negative_tau_rejected():
    with pytest.raises(ValueError):
        select_ranked([Example(1.0, 1, 1.0, 1)], 1.0, -1.0, 1, 1)


def test_pool_enforces_episode_order_and_capacity():
    pool = ExperiencePool(capacity=3)
    for t in range(1, 6):
        pool.insert(Example(float(t), 1, 1.0, t))
    assert [e.episode for e in pool] == [3, 4, 5]
    assert pool.last_episode == 5
    with pytest.raises(ValueError):
        pool.insert(Example(1.0, 1, 1.0, 2))
    with pytest.raises(ValueError):
        ExperiencePool(capacity=0)


def test_example_validation():
    with pytest.raises(ValueError):
        Example(1.0, 0, 1.0, 1)
    with pytest.raises(ValueError):
        Example(1.0, 1, 1.0, -1)


def test_save_load_roundtrip(tmp_path):
    pool = ExperiencePool([Example(8.78, 1, 4.0, 1), Example((1.5, 2.0), 2, -2.0, 2, False),
                           Example(12, 4, 1.0, 2)])
    pool.save(tmp_path / "pool.jsonl")
    back = ExperiencePool.load(tmp_path / "pool.jsonl")
    assert list(back) == list(pool)


@given(
    data=st.lists(st.tuples(st.integers(5, 7), st.integers(1, 4), st.booleans(),
                            st.integers(0, 2)), min_size=1, max_size=60),
    target=st.integers(5, 7), kg=st.integers(0, 6), kb=st.integers(0, 6),
)
@settings(max_examples=100, deadline=None)
def test_selection_properties(data, target, kg, kb):
    episode, examples = 0, []
    for s, a, ok, gap in data:
        episode += gap
        examples.append(Example(s, a, 5.0 - a - (0 if ok else 5), episode, ok))
    sel = select_discrete(examples, target, kg, kb)
    assert len(sel.recommended) <= kg and len(sel.inadvisable) <= kb
    assert all(e.state == target for e in sel.recommended + sel.inadvisable)
    assert not {id(e) for e in sel.recommended} & {id(e) for e in sel.inadvisable}
    rewards = [e.reward for e in sel.recommended]
    assert rewards == sorted(rewards, reverse=True)
    if sel.recommended and sel.inadvisable:
        assert max(e.reward for e in sel.inadvisable) <= min(rewards)
    check_against_oracle(examples, target, kg, kb)

    rsel = select_ranked(examples, float(target), 0.7, kg, kb)
    scores = list(rsel.scores)
    assert scores == sorted(scores, reverse=True)
    check_against_oracle(examples, float(target), kg, kb, tau=0.7)
