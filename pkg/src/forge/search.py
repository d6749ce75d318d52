"""Greedy hill climbing under a learned fitness, and the adversarial retraining loop."""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import forest as rf
from .agents import run_jobs
from .corpus import Corpus, most_common_level_size
from .features import FeatureSchema, schema_default, vectorize, vectorize_many
from .generator import GenConfig, neighbor, random_game, sanity_check
from .seeding import derive_rng, derive_seed
from .vgdl import Game, game_key, save_game

Fitness = Callable[[Game], float]


class Stuck(Exception):
    def __init__(self, game: Game, trace: list[float]):
        super().__init__(f"no game reached the threshold; best fitness {max(trace):.3f}")
        self.game = game
        self.trace = trace


class BudgetExhausted(Exception):
    def __init__(self, message: str, games=(), archive: "IterationArchive | None" = None):
        super().__init__(message)
        self.games = list(games)
        self.archive = archive


@dataclass
class SearchConfig:
    threshold: float = 0.95
    neighbors_per_step: int = 20
    max_steps: int = 500
    restarts_allowed: bool = True
    # total restarts tolerated per batch before giving up
    max_restarts: int = 200
    batch_size: int = 8
    # ablation: fresh random games added to every retrain (0 = off)
    random_mix: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        if self.neighbors_per_step < 1 or self.max_steps < 1 or self.batch_size < 1:
            raise ValueError("neighbors_per_step, max_steps and batch_size must be positive")


class ForestFitness:
    """Picklable ``game -> P(Human)`` under a forest and schema."""

    def __init__(self, forest: rf.Forest, schema: FeatureSchema):
        self.forest = forest
        self.schema = schema

    def __call__(self, game: Game) -> float:
        return rf.predict_proba(self.forest, vectorize(game, self.schema))


@dataclass
class ClimbResult:
    game: Game
    trace: list[float]
    steps: int


def hill_climb(
    start: Game,
    fitness: Fitness,
    config: SearchConfig,
    rng: random.Random,
    gen_config: GenConfig | None = None,
) -> ClimbResult:
    """Move to the best of ``neighbors_per_step`` sampled neighbours while it improves.

    The incumbent is kept on ties, so the trace of accepted fitness values is
    non-decreasing. Raises Stuck after ``max_steps`` without reaching the
    threshold.
    """
    current = start
    score = fitness(start)
    trace = [score]
    for steps in range(config.max_steps):
        if score >= config.threshold:
            return ClimbResult(current, trace, steps)
        best, best_score = current, score
        for _ in range(config.neighbors_per_step):
            cand = neighbor(current, rng, gen_config)
            s = fitness(cand)
            if s > best_score:
                best, best_score = cand, s
        if best is not current:
            current, score = best, best_score
            trace.append(score)
    if score >= config.threshold:
        return ClimbResult(current, trace, config.max_steps)
    raise Stuck(current, trace)


@dataclass
class BatchResult:
    games: list[Game]
    traces: list[list[float]]
    restarts: int


def _climb_slot(job):
    """Climb from fresh random starts for one batch slot until one succeeds."""
    fitness, config, gen_config, seed, slot, first_attempt, budget = job
    attempt = first_attempt
    while attempt - first_attempt <= budget:
        rng = derive_rng(seed, "slot", slot, "attempt", attempt)
        attempt += 1
        start = random_game(gen_config, rng, name=f"game{slot}")
        if not sanity_check(start, rng, gen_config.sanity_moves):
            continue
        try:
            res = hill_climb(start, fitness, config, rng, gen_config)
        except Stuck:
            if not config.restarts_allowed:
                return None, None, attempt
            continue
        if sanity_check(res.game, rng, gen_config.sanity_moves):
            return res.game, res.trace, attempt
    return None, None, attempt


def generate_batch(
    fitness: Fitness,
    config: SearchConfig,
    gen_config: GenConfig,
    rng: random.Random | None = None,
    seed: int | None = None,
    workers: int | None = 1,
) -> BatchResult:
    """Produce ``config.batch_size`` pairwise-distinct games at or above the threshold."""
    if seed is None:
        seed = (rng or random.Random(config.seed)).getrandbits(63)
    budget = config.max_restarts if config.restarts_allowed else 0
    jobs = [(fitness, config, gen_config, seed, j, 0, budget) for j in range(config.batch_size)]
    results = run_jobs(_climb_slot, jobs, workers)
    games: list[Game] = []
    traces: list[list[float]] = []
    keys: set[str] = set()
    restarts = 0
    for j, (game, trace, next_attempt) in enumerate(results):
        while game is not None and game_key(game) in keys:
            # duplicate of an earlier slot: climb again from the next start
            game, trace, next_attempt = _climb_slot(
                (fitness, config, gen_config, seed, j, next_attempt, budget)
            )
        # every start but the successful one counts as a restart
        restarts += next_attempt - (1 if game is not None else 0)
        if game is None or restarts > budget:
            raise BudgetExhausted(
                f"slot {j}: no game reached {config.threshold} within the restart budget", games
            )
        keys.add(game_key(game))
        games.append(game)
        traces.append(trace)
    return BatchResult(games, traces, restarts)


# ---------------------------------------------------------------------------
# adversarial loop


@dataclass
class IterationArchive:
    schema: FeatureSchema
    human_vectors: np.ndarray
    initial_games: list[Game] = field(default_factory=list)
    batches: list[list[Game]] = field(default_factory=list)
    traces: list[list[list[float]]] = field(default_factory=list)
    forests: list[rf.Forest] = field(default_factory=list)
    training_sets: list[rf.Dataset] = field(default_factory=list)
    complete: bool = False

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        groups = [self.initial_games] + self.batches
        for i, forest in enumerate(self.forests):
            d = out / f"iter{i}"
            d.mkdir(parents=True, exist_ok=True)
            for j, g in enumerate(groups[i] if i < len(groups) else []):
                save_game(g, d / f"game{j}")
            rf.save(forest, d / "model.rf")
            if i >= 1:
                (d / "trace.csv").write_text(_trace_csv(self.traces[i - 1]), encoding="utf-8")


def _trace_csv(traces: list[list[float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["game", "step", "fitness"])
    for j, trace in enumerate(traces):
        for k, f in enumerate(trace):
            w.writerow([j, k, repr(float(f))])
    return buf.getvalue()


def random_batch(gen_config: GenConfig, seed: int, n: int, label: str = "init") -> list[Game]:
    """``n`` sanity-checked random games, each from its own labeled stream."""
    games = []
    for j in range(n):
        attempt = 0
        while True:
            rng = derive_rng(seed, label, j, attempt)
            g = random_game(gen_config, rng, name=f"game{j}")
            if sanity_check(g, rng, gen_config.sanity_moves):
                games.append(g)
                break
            attempt += 1
    return games


def adversarial_loop(
    corpus: Corpus,
    gen_config: GenConfig,
    forest_params: rf.ForestParams,
    search_config: SearchConfig,
    n_iterations: int,
    schema: FeatureSchema | None = None,
    seed: int | None = None,
    workers: int | None = 1,
    progress: Callable[[str], None] | None = None,
) -> IterationArchive:
    """Train on human vs random games, then alternate search and retraining.

    Iteration ``i`` searches with forest ``i-1`` and retrains forest ``i`` on
    the original human vectors plus that batch. Human rows never change.
    Generated levels default to the corpus's most common size.
    """
    schema = schema or schema_default()
    seed = search_config.seed if seed is None else seed
    say = progress or (lambda msg: None)
    if gen_config.level_size is None:
        gen_config = replace(gen_config, level_size=most_common_level_size(corpus))
    human = vectorize_many(corpus.games, schema)
    archive = IterationArchive(schema=schema, human_vectors=human)

    def retrain(i: int, generated: Sequence[Game]) -> None:
        gen = vectorize_many(generated, schema)
        if search_config.random_mix and i > 0:
            extra = random_batch(gen_config, derive_seed(seed, "mix", i), search_config.random_mix, "mix")
            gen = np.vstack([gen, vectorize_many(extra, schema)])
        data = rf.Dataset.from_arrays(human.copy(), gen, schema.hash)
        params = rf.ForestParams(**{**forest_params.__dict__, "seed": derive_seed(seed, "forest", i)})
        archive.training_sets.append(data)
        archive.forests.append(rf.fit(data, params))

    archive.initial_games = random_batch(gen_config, derive_seed(seed, "init"), len(corpus.games))
    retrain(0, archive.initial_games)
    say("iteration 0: trained on human + random games")
    for i in range(1, n_iterations + 1):
        fitness = ForestFitness(archive.forests[-1], schema)
        try:
            batch = generate_batch(
                fitness, search_config, gen_config, seed=derive_seed(seed, "batch", i), workers=workers
            )
        except BudgetExhausted as exc:
            exc.archive = archive
            raise
        archive.batches.append(batch.games)
        archive.traces.append(batch.traces)
        retrain(i, batch.games)
        say(f"iteration {i}: batch of {len(batch.games)} found ({batch.restarts} restarts), retrained")
    archive.complete = True
    return archive
