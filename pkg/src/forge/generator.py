"""Random game generation and the search neighbourhood.

Generated sprites are named ``avatar`` and ``s1``..``sN``; a rule-level
neighbour keeps the name of the sprite it replaces so every reference in the
description stays resolvable.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

from .engine import playout
from .vgdl import (
    AVATAR_CLASSES,
    BLANK,
    EOS,
    NPC_CLASSES,
    SPAWNING_CLASSES,
    Effect,
    Game,
    GameError,
    GameSpec,
    InteractionDef,
    Level,
    Orientation,
    SpriteClass,
    SpriteDef,
    TerminationDef,
    TerminationKind,
    check_spec,
    validate_game,
)

AVATAR_CHAR = "A"
SPRITE_CHARS = "bcdefghijklmnopqrstuvwxyz"
SPEEDS = (Fraction(1, 2), Fraction(2), Fraction(3, 2), Fraction(1, 3))
MODIFIERS = ("speed", "cooldown", "limit", "orientation")
_AVATARS = tuple(c for c in SpriteClass if c in AVATAR_CLASSES)


class ConfigInfeasible(ValueError):
    pass


@dataclass
class GenConfig:
    sprite_count_range: tuple[int, int] = (3, 8)
    interaction_count_range: tuple[int, int] = (2, 6)
    termination_count_range: tuple[int, int] = (2, 3)
    # (width, height); None until set from the corpus
    level_size: tuple[int, int] | None = None
    modifier_probability: float = 0.2
    sanity_moves: int = 50
    max_cells: int = 358
    eos_probability: float = 0.15
    score_range: tuple[int, int] = (-5, 5)
    counter_limit_range: tuple[int, int] = (0, 3)
    timeout_range: tuple[int, int] = (50, 1000)
    cooldown_range: tuple[int, int] = (1, 5)
    limit_range: tuple[int, int] = (1, 5)
    max_retries: int = 100
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                setattr(self, f.name, tuple(v))
        self.validate()

    def validate(self) -> None:
        for name in (
            "sprite_count_range", "interaction_count_range", "termination_count_range",
            "score_range", "counter_limit_range", "timeout_range", "cooldown_range", "limit_range",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigInfeasible(f"{name} is empty: {lo}..{hi}")
        if self.sprite_count_range[0] < 1:
            raise ConfigInfeasible("need at least one sprite (the avatar)")
        if self.interaction_count_range[0] < 0:
            raise ConfigInfeasible("interaction count cannot be negative")
        if self.termination_count_range[0] < 2:
            raise ConfigInfeasible("need at least two terminations (a win and a loss)")
        if not 0.0 <= self.modifier_probability <= 1.0:
            raise ConfigInfeasible("modifier_probability must be in [0, 1]")
        if self.sanity_moves < 1:
            raise ConfigInfeasible("sanity_moves must be positive")
        if self.level_size is not None:
            w, h = self.level_size
            if w < 1 or h < 1 or w * h > self.max_cells:
                raise ConfigInfeasible(f"level size {w}x{h} outside 1..{self.max_cells} cells")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GenConfig":
        data = json.loads(text)
        data = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**data)


# ---------------------------------------------------------------------------
# random rules


def _randint(rng: random.Random, bounds: tuple[int, int]) -> int:
    return rng.randint(bounds[0], bounds[1])


def _random_modifier(rng: random.Random, config: GenConfig) -> dict:
    key = rng.choice(MODIFIERS)
    if key == "speed":
        return {"speed": rng.choice(SPEEDS)}
    if key == "cooldown":
        return {"cooldown": _randint(rng, config.cooldown_range)}
    if key == "limit":
        return {"limit": _randint(rng, config.limit_range)}
    return {"orientation": rng.choice(list(Orientation))}


def random_sprite(name: str, cls: SpriteClass, others: list[str], rng, config: GenConfig) -> SpriteDef:
    """A sprite of class ``cls``; ``others`` are legal spawn targets."""
    kwargs: dict = {}
    if rng.random() < config.modifier_probability:
        kwargs.update(_random_modifier(rng, config))
    if cls in SPAWNING_CLASSES:
        targets = [o for o in others if o != name]
        if targets:
            kwargs["spawn_target"] = rng.choice(targets)
    return SpriteDef(name, cls, **kwargs)


def random_interaction(names: list[str], avatar: str, rng, config: GenConfig) -> InteractionDef:
    creatable = [n for n in names if n != avatar]
    effects = list(Effect) if creatable else [e for e in Effect if not e.needs_target]
    actor = rng.choice(names)
    other = EOS if rng.random() < config.eos_probability else rng.choice(names)
    effect = rng.choice(effects)
    target = rng.choice(creatable) if effect.needs_target else None
    score = 0
    if rng.random() < config.modifier_probability:
        lo, hi = config.score_range
        choices = [s for s in range(lo, hi + 1) if s != 0]
        if choices:
            score = rng.choice(choices)
    return InteractionDef(actor, other, effect, target, score)


def random_termination(names: list[str], win: bool, rng, config: GenConfig) -> TerminationDef:
    if rng.random() < 0.5:
        return TerminationDef(
            TerminationKind.SPRITE_COUNTER, _randint(rng, config.counter_limit_range), win, rng.choice(names)
        )
    return TerminationDef(TerminationKind.TIMEOUT, _randint(rng, config.timeout_range), win)


def has_modifier(game: Game) -> bool:
    """True if any sprite carries a modifier or any interaction changes score."""
    for s in game.spec.sprites:
        if any(getattr(s, k) is not None for k in MODIFIERS):
            return True
    return any(it.score for it in game.spec.interactions)


# ---------------------------------------------------------------------------
# random games


def _mapping_for(sprites: list[SpriteDef]) -> dict[str, tuple[str, ...]]:
    mapping = {}
    letters = iter(SPRITE_CHARS)
    for s in sprites:
        ch = AVATAR_CHAR if s.cls in AVATAR_CLASSES else next(letters)
        mapping[ch] = (s.name,)
    return mapping


def _fill_chars(spec: GameSpec) -> list[str]:
    """Characters a generated tile may take: non-avatar mapped chars and blank."""
    avatar = spec.avatar.name
    return [ch for ch, names in spec.level_mapping if avatar not in names] + [BLANK]


def random_level(spec: GameSpec, size: tuple[int, int], rng: random.Random) -> Level:
    width, height = size
    chars = _fill_chars(spec)
    grid = [[rng.choice(chars) for _ in range(width)] for _ in range(height)]
    cell = rng.randrange(width * height)
    grid[cell // width][cell % width] = spec.avatar_char
    return Level(tuple("".join(r) for r in grid))


def random_spec(config: GenConfig, rng: random.Random) -> GameSpec:
    k = _randint(rng, config.sprite_count_range)
    names = ["avatar"] + [f"s{i}" for i in range(1, k)]
    others = names[1:]
    sprites = [random_sprite("avatar", rng.choice(_AVATARS), others, rng, config)]
    for name in others:
        sprites.append(random_sprite(name, rng.choice(NPC_CLASSES), others, rng, config))
    interactions = [
        random_interaction(names, "avatar", rng, config)
        for _ in range(_randint(rng, config.interaction_count_range))
    ]
    n_terms = _randint(rng, config.termination_count_range)
    outcomes = [True, False] + [rng.random() < 0.5 for _ in range(n_terms - 2)]
    rng.shuffle(outcomes)
    terminations = [random_termination(names, win, rng, config) for win in outcomes]
    return GameSpec(sprites, interactions, terminations, _mapping_for(sprites))


def random_game(config: GenConfig, rng: random.Random, name: str = "generated") -> Game:
    """Draw a structurally valid random game.

    Raises ConfigInfeasible if ``config.max_retries`` draws all fail to
    validate, or if no level size has been configured.
    """
    if config.level_size is None:
        raise ConfigInfeasible("level_size is not set; use the corpus's most common size")
    last: Exception | None = None
    for _ in range(config.max_retries):
        spec = random_spec(config, rng)
        game = Game(spec, random_level(spec, config.level_size, rng), name)
        try:
            return validate_game(game)
        except GameError as exc:
            last = exc
    raise ConfigInfeasible(f"no valid game after {config.max_retries} attempts: {last}")


def sanity_check(game: Game, rng: random.Random, moves: int = 50) -> bool:
    """True iff a random agent can play ``moves`` steps (or to an in-game end)."""
    from .agents import random_agent

    try:
        validate_game(game)
        playout(game, lambda s: random_agent(s, rng), rng.getrandbits(63), moves)
    except Exception:
        return False
    return True


# ---------------------------------------------------------------------------
# neighbours


def rule_neighbor(game: Game, rng: random.Random, config: GenConfig | None = None) -> Game:
    """Replace exactly one sprite, interaction or termination by a fresh one of the same kind."""
    config = config or GenConfig()
    spec = game.spec
    kinds = [k for k in ("sprites", "interactions", "terminations") if getattr(spec, k)]
    names = [s.name for s in spec.sprites]
    avatar = spec.avatar.name
    for _ in range(config.max_retries):
        kind = rng.choice(kinds)
        rules = list(getattr(spec, kind))
        i = rng.randrange(len(rules))
        old = rules[i]
        if kind == "sprites":
            cls = rng.choice(_AVATARS) if old.cls in AVATAR_CLASSES else rng.choice(NPC_CLASSES)
            new = random_sprite(old.name, cls, [n for n in names if n != avatar], rng, config)
        elif kind == "interactions":
            new = random_interaction(names, avatar, rng, config)
        else:
            new = random_termination(names, rng.random() < 0.5, rng, config)
        if new == old:
            continue
        rules[i] = new
        candidate = GameSpec(**{**_spec_fields(spec), kind: rules})
        try:
            check_spec(candidate)
        except GameError:
            continue
        return game.with_spec(candidate)
    return game


def _spec_fields(spec: GameSpec) -> dict:
    return {
        "sprites": spec.sprites,
        "interactions": spec.interactions,
        "terminations": spec.terminations,
        "level_mapping": spec.level_mapping,
    }


def repair_avatar(rows: list[list[str]], avatar_char: str, rng: random.Random) -> None:
    """Leave exactly one avatar: keep the first, blank the rest, or place one."""
    found = [(r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch == avatar_char]
    for r, c in found[1:]:
        rows[r][c] = BLANK
    if found:
        return
    cells = [(r, c) for r, row in enumerate(rows) for c, ch in enumerate(row)]
    blanks = [rc for rc in cells if rows[rc[0]][rc[1]] == BLANK]
    r, c = rng.choice(blanks or cells)
    rows[r][c] = avatar_char


def _tile_neighbor(game: Game, rng: random.Random) -> Game | None:
    spec = game.spec
    options = _fill_chars(spec)
    if len(options) < 2:
        return None
    avatar = spec.avatar_char
    rows = [list(r) for r in game.level.rows]
    cells = [(r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch != avatar]
    if not cells:
        return None
    t = min(rng.randint(1, 10), len(cells))
    for r, c in rng.sample(cells, t):
        rows[r][c] = rng.choice([o for o in options if o != rows[r][c]])
    return game.with_level(Level(tuple("".join(r) for r in rows)))


def _resize_neighbor(game: Game, rng: random.Random, config: GenConfig) -> Game | None:
    spec = game.spec
    rows = [list(r) for r in game.level.rows]
    w, h = game.level.size
    ops = []
    if (h + 1) * w <= config.max_cells:
        ops.append(("insert", "row"))
    if h * (w + 1) <= config.max_cells:
        ops.append(("insert", "col"))
    if h >= 2:
        ops.append(("delete", "row"))
    if w >= 2:
        ops.append(("delete", "col"))
    if not ops:
        return None
    op, axis = rng.choice(ops)
    chars = _fill_chars(spec)
    if op == "insert" and axis == "row":
        rows.insert(rng.randint(0, h), [rng.choice(chars) for _ in range(w)])
    elif op == "insert":
        at = rng.randint(0, w)
        for row in rows:
            row.insert(at, rng.choice(chars))
    elif axis == "row":
        del rows[rng.randrange(h)]
    else:
        at = rng.randrange(w)
        for row in rows:
            del row[at]
    repair_avatar(rows, spec.avatar_char, rng)
    return game.with_level(Level(tuple("".join(r) for r in rows)))


def level_neighbor(game: Game, rng: random.Random, config: GenConfig | None = None) -> Game:
    """Replace 1-10 tiles, or insert/delete one row or column (coin flip)."""
    config = config or GenConfig()
    if rng.random() < 0.5:
        branches = (_tile_neighbor, lambda g, r: _resize_neighbor(g, r, config))
    else:
        branches = (lambda g, r: _resize_neighbor(g, r, config), _tile_neighbor)
    for branch in branches:
        out = branch(game, rng)
        if out is not None:
            return out
    return game


def neighbor(game: Game, rng: random.Random, config: GenConfig | None = None) -> Game:
    if rng.random() < 0.5:
        return rule_neighbor(game, rng, config)
    return level_neighbor(game, rng, config)
