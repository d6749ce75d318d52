import random
from dataclasses import replace

import numpy as np
import pytest

import forge.search as search
from forge.features import schema_default, vectorize, vectorize_many
from forge.forest import ForestParams
from forge.generator import GenConfig, random_game, sanity_check
from forge.search import (
    BudgetExhausted,
    SearchConfig,
    Stuck,
    adversarial_loop,
    generate_batch,
    hill_climb,
    random_batch,
)
from forge.seeding import derive_rng
from forge.vgdl import BLANK, game_key

SMALL = GenConfig(level_size=(5, 5))


def blank_fraction(game):
    cells = [ch for row in game.level.rows for ch in row]
    return sum(ch == BLANK for ch in cells) / len(cells)


class ConstFitness:
    def __init__(self, value):
        self.value = value

    def __call__(self, game):
        return self.value


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(threshold=1.5)
    with pytest.raises(ValueError):
        SearchConfig(neighbors_per_step=0)


def test_start_above_threshold_returns_start():
    g = random_game(SMALL, random.Random(0))
    res = hill_climb(g, ConstFitness(0.97), SearchConfig(), random.Random(0), SMALL)
    assert res.game is g
    assert res.trace == [0.97]


def test_blank_fraction_mock_reaches_threshold():
    cfg = SearchConfig(threshold=0.9, max_steps=300)
    for seed in range(5):
        rng = random.Random(seed)
        g = random_game(SMALL, rng)
        res = hill_climb(g, blank_fraction, cfg, rng, SMALL)
        assert blank_fraction(res.game) >= 0.9
        assert res.trace[-1] >= 0.9
        assert all(b > a for a, b in zip(res.trace, res.trace[1:]))


def test_stuck_after_max_steps():
    g = random_game(SMALL, random.Random(1))
    with pytest.raises(Stuck) as info:
        hill_climb(g, ConstFitness(0.1), SearchConfig(max_steps=3), random.Random(1), SMALL)
    assert info.value.trace == [0.1]


def test_zero_threshold_batch_is_first_sane_random_games():
    cfg = SearchConfig(threshold=0.0)
    batch = generate_batch(ConstFitness(0.0), cfg, SMALL, seed=77)
    assert len(batch.games) == 8
    assert batch.restarts == 0
    for j, g in enumerate(batch.games):
        rng = derive_rng(77, "slot", j, "attempt", 0)
        start = random_game(SMALL, rng, name=f"game{j}")
        assert sanity_check(start, rng, SMALL.sanity_moves)
        assert g == start


def test_batch_games_are_distinct(monkeypatch):
    pool = [random_game(SMALL, random.Random(k), name="pooled") for k in range(3)]
    counter = iter(range(10**6))

    def few_games(config, rng, name="generated"):
        return replace(pool[next(counter) % len(pool)], name=name)

    monkeypatch.setattr(search, "random_game", few_games)
    cfg = SearchConfig(threshold=0.0, batch_size=3, max_restarts=50)
    batch = generate_batch(ConstFitness(1.0), cfg, SMALL, seed=1)
    keys = [game_key(g) for g in batch.games]
    assert len(set(keys)) == 3


def test_budget_exhausted():
    cfg = SearchConfig(threshold=0.99, max_steps=2, neighbors_per_step=2, max_restarts=3)
    with pytest.raises(BudgetExhausted):
        generate_batch(ConstFitness(0.0), cfg, SMALL, seed=0)


def test_no_restarts_means_no_second_chance():
    cfg = SearchConfig(threshold=0.99, max_steps=2, neighbors_per_step=2, restarts_allowed=False)
    with pytest.raises(BudgetExhausted):
        generate_batch(ConstFitness(0.0), cfg, SMALL, seed=0)


def test_batch_is_deterministic():
    cfg = SearchConfig(threshold=0.9, max_steps=200)
    a = generate_batch(blank_fraction, cfg, SMALL, seed=5)
    b = generate_batch(blank_fraction, cfg, SMALL, seed=5)
    assert a.games == b.games and a.traces == b.traces


def test_parallel_batch_matches_serial():
    cfg = SearchConfig(threshold=0.9, max_steps=200)
    a = generate_batch(blank_fraction, cfg, SMALL, seed=6, workers=1)
    b = generate_batch(blank_fraction, cfg, SMALL, seed=6, workers=2)
    assert a.games == b.games


def test_random_batch_is_sane_and_seeded():
    a = random_batch(SMALL, 3, 8)
    assert a == random_batch(SMALL, 3, 8)
    assert all(sanity_check(g, random.Random(0)) for g in a)


def _loop(corpus, n=2, **kw):
    return adversarial_loop(
        corpus, GenConfig(), ForestParams(n_trees=15), SearchConfig(threshold=0.0, **kw), n, seed=3,
    )


def test_adversarial_bookkeeping(corpus):
    schema = schema_default()
    archive = _loop(corpus, 3)
    assert archive.complete
    assert len(archive.batches) == 3 and all(len(b) == 8 for b in archive.batches)
    assert len(archive.forests) == 4
    human = vectorize_many(corpus.games, schema)
    groups = [archive.initial_games] + archive.batches
    for data, games in zip(archive.training_sets, groups):
        assert data.X.shape == (16, schema.total_length)
        assert list(data.y) == [1] * 8 + [0] * 8
        assert data.X[:8].tobytes() == human.tobytes()
        assert np.array_equal(data.X[8:], vectorize_many(games, schema))
    # generated games take the corpus's most common level size
    assert all(g.level.size == (12, 9) for g in archive.initial_games)


def test_adversarial_loop_is_deterministic(corpus):
    a, b = _loop(corpus, 1), _loop(corpus, 1)
    assert a.batches == b.batches
    assert [t.X.tobytes() for t in a.training_sets] == [t.X.tobytes() for t in b.training_sets]


def test_random_mix_hook(corpus):
    archive = _loop(corpus, 1, random_mix=4)
    assert archive.training_sets[0].X.shape[0] == 16
    assert archive.training_sets[1].X.shape[0] == 20


def test_archive_layout(tmp_path, corpus):
    archive = _loop(corpus, 2)
    archive.save(tmp_path)
    for i in range(3):
        d = tmp_path / f"iter{i}"
        assert (d / "model.rf").exists()
        assert len(list(d.glob("game*.desc"))) == 8
        assert (d / "trace.csv").exists() == (i >= 1)


def test_budget_exhaustion_keeps_partial_archive(corpus, monkeypatch):
    real = search.generate_batch
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] == 2:
            raise BudgetExhausted("out of restarts")
        return real(*args, **kw)

    monkeypatch.setattr(search, "generate_batch", flaky)
    with pytest.raises(BudgetExhausted) as info:
        _loop(corpus, 3)
    archive = info.value.archive
    assert archive is not None and not archive.complete
    assert len(archive.batches) == 1 and len(archive.forests) == 2


def test_fitness_of_batch_games_meets_threshold(corpus):
    from forge import forest as rf
    from forge.search import ForestFitness

    schema = schema_default()
    data = rf.Dataset.from_arrays(
        vectorize_many(corpus.games, schema),
        vectorize_many(random_batch(GenConfig(level_size=(12, 9)), 0, 8), schema),
        schema.hash,
    )
    fitness = ForestFitness(rf.fit(data, ForestParams(n_trees=20)), schema)
    batch = generate_batch(fitness, SearchConfig(threshold=0.95), GenConfig(level_size=(12, 9)), seed=4)
    assert len(batch.games) == 8
    for g, trace in zip(batch.games, batch.traces):
        assert fitness(g) == trace[-1] >= 0.95
        assert rf.predict_proba(fitness.forest, vectorize(g, schema)) >= 0.95
