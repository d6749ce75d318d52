"""The eight hand-authored games that anchor the Human class."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .engine import ACTION_TOKENS, Action, Outcome, init_state, legal_actions, step
from .vgdl import Game, load_game

CORPUS_SIZE = 8
WITNESS_SEED = 0
CRASH_CHECK_MOVES = 50

# one line per game: which arcade genre it imitates
PROVENANCE = {
    "chase": "maze chase: eat every pellet while a ghost hunts the avatar",
    "collect": "gem collecting in a walled room, no enemies",
    "crossing": "road crossing: reach the goal past wrapping cars",
    "defend": "spawner defense: shoot the hives before their drones reach the base",
    "escape": "portal escape through a lava maze",
    "push": "box pushing into holes",
    "shooter": "fixed shooter against wandering aliens",
    "survive": "survival: dodge random zombies until the timer runs out",
}


class CorpusError(ValueError):
    pass


class WrongCount(CorpusError):
    pass


class UnplayableGame(CorpusError):
    pass


@dataclass
class Corpus:
    games: list[Game]
    notes: dict[str, str] = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [g.name for g in self.games]

    def get(self, name: str) -> Game:
        for g in self.games:
            if g.name == name:
                return g
        raise KeyError(name)

    def __len__(self) -> int:
        return len(self.games)


def default_path() -> Path:
    return Path(str(resources.files("forge") / "data" / "corpus"))


def crash_check(game: Game, seed: int = 0, moves: int = CRASH_CHECK_MOVES) -> None:
    """Play ``moves`` random actions; any engine exception becomes UnplayableGame."""
    rng = random.Random(seed)
    try:
        state = init_state(game, seed)
        for _ in range(moves):
            if state.is_terminal:
                break
            state = step(state, rng.choice(legal_actions(state)))
    except Exception as exc:  # noqa: BLE001 - any crash disqualifies the game
        raise UnplayableGame(f"{game.name}: {type(exc).__name__}: {exc}") from exc


def load_corpus(path=None, expected: int | None = CORPUS_SIZE) -> Corpus:
    """Load every ``.desc``/``.lvl`` pair under ``path`` (shipped corpus by default).

    ParseError from a malformed file propagates unchanged.
    """
    root = Path(path) if path is not None else default_path()
    stems = sorted(p.with_suffix("") for p in root.glob("*.desc"))
    if expected is not None and len(stems) != expected:
        raise WrongCount(f"{root}: expected {expected} games, found {len(stems)}")
    games = []
    for stem in stems:
        if not stem.with_suffix(".lvl").exists():
            raise WrongCount(f"{stem.name}.desc has no matching .lvl")
        game = load_game(stem)
        crash_check(game)
        games.append(game)
    notes = {g.name: PROVENANCE.get(g.name, "") for g in games}
    return Corpus(games, notes)


def most_common_level_size(games) -> tuple[int, int]:
    """Modal (width, height); ties go to larger area, then larger width."""
    if isinstance(games, Corpus):
        games = games.games
    sizes = Counter(g.level.size for g in games)
    if not sizes:
        raise ValueError("no games")
    return max(sizes, key=lambda wh: (sizes[wh], wh[0] * wh[1], wh[0]))


# ---------------------------------------------------------------------------
# witnesses


def parse_moves(text: str) -> list[Action]:
    moves = []
    for n, line in enumerate(text.splitlines(), 1):
        token = line.strip()
        if not token:
            continue
        if token not in ACTION_TOKENS:
            raise ValueError(f"line {n}: unknown action {token!r}")
        moves.append(ACTION_TOKENS[token])
    return moves


def format_moves(moves: Iterable[Action]) -> str:
    names = {a: tok for tok, a in ACTION_TOKENS.items()}
    return "".join(names[Action(a)] + "\n" for a in moves)


def load_witness(name: str, path=None) -> list[Action]:
    root = Path(path) if path is not None else default_path()
    return parse_moves((root / "witness" / f"{name}.moves").read_text(encoding="utf-8"))


def replay(game: Game, moves: Sequence[Action], seed: int = WITNESS_SEED):
    """Apply ``moves`` from a fresh state; stops early once the game ends."""
    state = init_state(game, seed)
    for a in moves:
        if state.is_terminal:
            break
        state = step(state, a)
    return state


def witness_outcome(game: Game, path=None) -> Outcome:
    return replay(game, load_witness(game.name, path)).outcome
