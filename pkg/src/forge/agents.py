"""Game-playing agents and the evaluation harness.

The MCTS agent is plain UCT: UCB1 selection, one expansion per iteration, a
uniformly random rollout, and backpropagation of a bounded reward built from
the score change plus a discounted win/loss bonus. The move is the root child
with the most visits.

Actions that lead to equivalent states (same ``GameState.key``) share one
child: the first one expanded stands for the rest. Without this, a handful
of do-nothing moves split the visits and drown a single good one.
"""

from __future__ import annotations

import math
import os
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .engine import Action, GameState, Outcome, PlayoutResult, legal_actions, playout, step
from .seeding import derive_seed
from .vgdl import Game

AGENTS = ("MCTS", "Random")


@dataclass
class MctsParams:
    iterations_per_move: int = 100
    rollout_depth: int = 20
    exploration_constant: float = math.sqrt(2)
    # per-step discount on the terminal bonus so nearer wins score higher
    discount: float = 0.95
    score_scale: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.iterations_per_move < 1 or self.rollout_depth < 1:
            raise ValueError("iterations_per_move and rollout_depth must be positive")
        if self.exploration_constant <= 0:
            raise ValueError("exploration_constant must be positive")


def random_agent(state: GameState, rng: random.Random) -> Action:
    """Uniform choice over the avatar's legal actions."""
    if state.is_terminal:
        raise ValueError("random_agent called on a terminal state")
    return rng.choice(legal_actions(state))


class Node:
    __slots__ = ("state", "parent", "action", "children", "untried", "visits", "value", "depth", "seen")

    def __init__(self, state: GameState, parent: "Node | None", action: Action | None, rng):
        self.state = state
        self.parent = parent
        self.action = action
        self.children: dict[Action, Node] = {}
        self.visits = 0
        self.value = 0.0
        self.depth = 0 if parent is None else parent.depth + 1
        # keys of expanded children, for merging equivalent actions
        self.seen: set = set()
        if state.is_terminal:
            self.untried: list[Action] = []
        else:
            self.untried = list(legal_actions(state))
            rng.shuffle(self.untried)

    @property
    def mean(self) -> float:
        return self.value / self.visits if self.visits else 0.0


def ucb1(child: Node, parent_visits: int, c: float) -> float:
    return child.mean + c * math.sqrt(math.log(parent_visits) / child.visits)


def _select(node: Node, c: float, log: list | None) -> Node:
    best = None
    best_score = -math.inf
    for child in node.children.values():
        score = ucb1(child, node.visits, c)
        if score > best_score:
            best, best_score = child, score
    if log is not None:
        log.append(
            (node.visits, [(ch.action, ch.mean, ch.visits) for ch in node.children.values()], best.action)
        )
    return best


def _expand(node: Node, rng: random.Random) -> "Node | None":
    """Add the next untried action as a child, skipping ones equivalent to a sibling."""
    while node.untried:
        a = node.untried.pop()
        nxt = step(node.state, a)
        k = nxt.key()
        if k in node.seen:
            continue
        node.seen.add(k)
        child = Node(nxt, node, a, rng)
        node.children[a] = child
        return child
    return None


def _reward(root: GameState, final: GameState, depth: int, params: MctsParams) -> float:
    r = math.tanh((final.score - root.score) / params.score_scale)
    if final.outcome is Outcome.WIN:
        r += params.discount ** depth
    elif final.outcome is Outcome.LOSS:
        r -= params.discount ** depth
    return r / 2.0


def mcts_search(
    state: GameState, params: MctsParams, rng: random.Random, log: list | None = None
) -> tuple[Action, Node]:
    """Run ``params.iterations_per_move`` UCT iterations from ``state``."""
    if state.is_terminal:
        raise ValueError("mcts_search called on a terminal state")
    root = Node(state, None, None, rng)
    actions = legal_actions(state)
    c = params.exploration_constant
    for _ in range(params.iterations_per_move):
        node = root
        while True:
            if node.untried:
                child = _expand(node, rng)
                if child is not None:
                    node = child
                    break
            if not node.children:
                break  # terminal
            node = _select(node, c, log)
        sim = node.state
        depth = node.depth
        # rollout states are thrown away, so the chain may reuse its own sprites
        scratch = object()
        for _ in range(params.rollout_depth):
            if sim.is_terminal:
                break
            sim = step(sim, rng.choice(actions), scratch=scratch)
            depth += 1
        reward = _reward(state, sim, depth, params)
        while node is not None:
            node.visits += 1
            node.value += reward
            node = node.parent
    best = max(root.children.values(), key=lambda ch: (ch.visits, -int(ch.action)))
    return best.action, root


def mcts_agent(state: GameState, params: MctsParams, rng: random.Random) -> Action:
    return mcts_search(state, params, rng)[0]


def make_agent(kind: str, seed: int, params: MctsParams | None = None):
    """Return a ``state -> Action`` callable with its own seeded stream."""
    rng = random.Random(seed)
    if kind.lower() == "random":
        return lambda s: random_agent(s, rng)
    if kind.lower() == "mcts":
        p = params or MctsParams()
        return lambda s: mcts_agent(s, p, rng)
    raise ValueError(f"unknown agent {kind!r}")


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class PlayoutRecord:
    agent: str
    game_index: int
    game_name: str
    seed: int
    outcome: str
    score: int
    moves: int

    @property
    def completed(self) -> bool:
        return self.outcome in (Outcome.WIN.value, Outcome.LOSS.value)


@dataclass
class AgentMetrics:
    games_completed: int
    avg_score: float
    std_score: float
    max_score: float
    avg_moves: float
    std_moves: float
    playouts: int

    @classmethod
    def from_records(cls, records: Sequence[PlayoutRecord]) -> "AgentMetrics":
        if not records:
            raise ValueError("no playouts to aggregate")
        scores = [r.score for r in records]
        moves = [r.moves for r in records]
        return cls(
            games_completed=sum(r.completed for r in records),
            avg_score=statistics.fmean(scores),
            std_score=statistics.pstdev(scores),
            max_score=max(scores),
            avg_moves=statistics.fmean(moves),
            std_moves=statistics.pstdev(moves),
            playouts=len(records),
        )


@dataclass
class IterationReport:
    label: str
    mcts: AgentMetrics
    random: AgentMetrics
    records: list[PlayoutRecord] = field(default_factory=list)

    @classmethod
    def from_records(cls, label: str, records: Sequence[PlayoutRecord]) -> "IterationReport":
        return cls(
            label=label,
            mcts=AgentMetrics.from_records([r for r in records if r.agent == "MCTS"]),
            random=AgentMetrics.from_records([r for r in records if r.agent == "Random"]),
            records=list(records),
        )

    def metrics(self, agent: str) -> AgentMetrics:
        return self.mcts if agent == "MCTS" else self.random

    def to_dict(self) -> dict:
        return {"label": self.label, "MCTS": asdict(self.mcts), "Random": asdict(self.random)}


def _run_playout(job) -> PlayoutRecord:
    agent, index, game, seed, params, move_cap, wallclock = job
    agent_fn = make_agent(agent, derive_seed(seed, agent, index), params)
    result: PlayoutResult = playout(
        game, agent_fn, derive_seed(seed, "engine", index), move_cap, wallclock_secs=wallclock
    )
    return PlayoutRecord(agent, index, game.name, seed, result.outcome.value, result.score, result.moves)


def worker_count() -> int:
    """Parallelism cap from ``FORGE_THREADS`` (default: all cores)."""
    env = os.environ.get("FORGE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_jobs(fn, jobs: list, workers: int | None = None) -> list:
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def evaluate_batch(
    games: Sequence[Game],
    seeds: Sequence[int] = (0,),
    params: MctsParams | None = None,
    move_cap: int = 700,
    label: str = "",
    workers: int | None = None,
    wallclock_secs: float | None = None,
) -> IterationReport:
    """Play every game once per seed with both agents and aggregate metrics.

    Both agents see the same engine seed for a given (seed, game) pair.
    ``games_completed`` counts in-game terminations over all playouts.
    """
    return evaluate_many([(label, games)], seeds, params, move_cap, workers, wallclock_secs)[0]


def evaluate_many(
    batches: Sequence[tuple[str, Sequence[Game]]],
    seeds: Sequence[int] = (0,),
    params: MctsParams | None = None,
    move_cap: int = 700,
    workers: int | None = None,
    wallclock_secs: float | None = None,
) -> list[IterationReport]:
    """:func:`evaluate_batch` for several labeled batches sharing one worker pool.

    Playout seeds depend only on (seed, agent, game index), so the reports are
    the same as evaluating each batch on its own.
    """
    params = params or MctsParams()
    jobs, owners = [], []
    # MCTS playouts first: they are the long ones, so the pool drains evenly
    for agent in AGENTS:
        for b, (_, games) in enumerate(batches):
            for seed in seeds:
                for i, game in enumerate(games):
                    jobs.append((agent, i, game, seed, params, move_cap, wallclock_secs))
                    owners.append(b)
    records = run_jobs(_run_playout, jobs, workers)
    per_batch: list[list[PlayoutRecord]] = [[] for _ in batches]
    for b, rec in zip(owners, records):
        per_batch[b].append(rec)
    return [IterationReport.from_records(label, recs) for (label, _), recs in zip(batches, per_batch)]
