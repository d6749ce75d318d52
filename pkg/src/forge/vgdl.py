"""Mini-VGDL dialect: data model, parser, validator and canonical serializer.

A game is stored as two text files. The description (``.desc``) holds four
sections introduced by an unindented header and populated by indented lines::

    SpriteSet
        avatar > MovingAvatar
        wall > Immovable
    InteractionSet
        avatar wall > StepBack
    TerminationSet
        Timeout limit=100 win=True
        SpriteCounter sprite=avatar limit=0 win=False
    LevelMapping
        A > avatar
        w > wall

The level (``.lvl``) is a rectangular character grid where ``.`` is blank.
See ``docs/dialect.md`` for the grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Iterable

BLANK = "."
EOS = "EOS"

SECTIONS = ("SpriteSet", "InteractionSet", "TerminationSet", "LevelMapping")

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class SpriteClass(str, Enum):
    IMMOVABLE = "Immovable"
    PASSIVE = "Passive"
    MISSILE = "Missile"
    RANDOM_NPC = "RandomNPC"
    CHASER = "Chaser"
    FLEEING = "Fleeing"
    SPAWN_POINT = "SpawnPoint"
    PORTAL = "Portal"
    RESOURCE = "Resource"
    MOVING_AVATAR = "MovingAvatar"
    SHOOT_AVATAR = "ShootAvatar"

    @property
    def is_avatar(self) -> bool:
        return self in AVATAR_CLASSES

    @property
    def class_id(self) -> int:
        """1-based id used in level features; 0 is reserved for blank."""
        return _CLASS_ORDER.index(self) + 1


_CLASS_ORDER = list(SpriteClass)
AVATAR_CLASSES = frozenset({SpriteClass.MOVING_AVATAR, SpriteClass.SHOOT_AVATAR})
NPC_CLASSES = tuple(c for c in SpriteClass if c not in AVATAR_CLASSES)
SPAWNING_CLASSES = frozenset({SpriteClass.SPAWN_POINT, SpriteClass.SHOOT_AVATAR})


class Effect(str, Enum):
    KILL_SPRITE = "KillSprite"
    KILL_BOTH = "KillBoth"
    STEP_BACK = "StepBack"
    TRANSFORM_TO = "TransformTo"
    COLLECT_RESOURCE = "CollectResource"
    SPAWN_BEHIND = "SpawnBehind"

    @property
    def needs_target(self) -> bool:
        return self in (Effect.TRANSFORM_TO, Effect.SPAWN_BEHIND)


class TerminationKind(str, Enum):
    SPRITE_COUNTER = "SpriteCounter"
    TIMEOUT = "Timeout"


class Orientation(str, Enum):
    UP = "Up"
    DOWN = "Down"
    LEFT = "Left"
    RIGHT = "Right"


# ---------------------------------------------------------------------------
# errors


class GameError(Exception):
    """Base for every dialect error. ``line`` is 1-based, None post-parse."""

    def __init__(self, message: str, line: int | None = None, source: str = ""):
        self.message = message
        self.line = line
        self.source = source
        where = f"{source} line {line}: " if line is not None else ""
        super().__init__(where + message)


ParseError = GameError


class MissingSection(GameError):
    pass


class UnknownSpriteClass(GameError):
    pass


class UnresolvedIdentifier(GameError):
    pass


class NonRectangularLevel(GameError):
    pass


class NoAvatar(GameError):
    pass


class DuplicateAvatar(GameError):
    pass


class MalformedLine(GameError):
    pass


class InvalidRule(GameError):
    pass


# ---------------------------------------------------------------------------
# data model


@dataclass(frozen=True)
class SpriteDef:
    name: str
    cls: SpriteClass
    speed: Fraction | None = None
    cooldown: int | None = None
    limit: int | None = None
    orientation: Orientation | None = None
    spawn_target: str | None = None

    def modifiers(self) -> dict[str, object]:
        out: dict[str, object] = {}
        for key in MODIFIER_KEYS:
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


MODIFIER_KEYS = ("speed", "cooldown", "limit", "orientation", "spawn_target")


@dataclass(frozen=True)
class InteractionDef:
    actor: str
    other: str
    effect: Effect
    target: str | None = None
    score: int = 0


@dataclass(frozen=True)
class TerminationDef:
    kind: TerminationKind
    limit: int
    win: bool
    sprite: str | None = None


@dataclass(frozen=True)
class GameSpec:
    sprites: tuple[SpriteDef, ...]
    interactions: tuple[InteractionDef, ...]
    terminations: tuple[TerminationDef, ...]
    # sorted by character so equality ignores insertion order
    level_mapping: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        object.__setattr__(self, "sprites", tuple(self.sprites))
        object.__setattr__(self, "interactions", tuple(self.interactions))
        object.__setattr__(self, "terminations", tuple(self.terminations))
        mapping = self.level_mapping
        if isinstance(mapping, dict):
            mapping = mapping.items()
        object.__setattr__(
            self,
            "level_mapping",
            tuple(sorted((ch, tuple(names)) for ch, names in mapping)),
        )

    @property
    def mapping(self) -> dict[str, tuple[str, ...]]:
        return dict(self.level_mapping)

    def sprite(self, name: str) -> SpriteDef:
        for s in self.sprites:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def avatar(self) -> SpriteDef:
        for s in self.sprites:
            if s.cls.is_avatar:
                return s
        raise NoAvatar("no avatar sprite defined")

    @property
    def avatar_char(self) -> str:
        name = self.avatar.name
        for ch, names in self.level_mapping:
            if name in names:
                return ch
        raise NoAvatar("avatar sprite is not mapped to a level character")


@dataclass(frozen=True)
class Level:
    rows: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    @property
    def width(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    def cells(self) -> Iterable[tuple[int, int, str]]:
        """Yield ``(col, row, char)`` in row-major order."""
        for r, row in enumerate(self.rows):
            for c, ch in enumerate(row):
                yield c, r, ch


@dataclass(frozen=True)
class Game:
    spec: GameSpec
    level: Level
    name: str = field(default="game", compare=True)

    def with_spec(self, spec: GameSpec) -> "Game":
        return replace(self, spec=spec)

    def with_level(self, level: Level) -> "Game":
        return replace(self, level=level)


# ---------------------------------------------------------------------------
# validation


def _where(lines: dict | None, key) -> int | None:
    return None if lines is None else lines.get(key)


def check_spec(spec: GameSpec, lines: dict | None = None, source: str = "") -> None:
    """Raise a :class:`GameError` if ``spec`` breaks any rule invariant."""
    names: dict[str, SpriteDef] = {}
    for i, s in enumerate(spec.sprites):
        ln = _where(lines, ("sprite", i))
        if not _IDENT.match(s.name) or s.name == EOS:
            raise MalformedLine(f"bad sprite name {s.name!r}", ln, source)
        if s.name in names:
            raise InvalidRule(f"duplicate sprite name {s.name!r}", ln, source)
        names[s.name] = s
        if s.speed is not None and s.speed < 0:
            raise InvalidRule("speed must be non-negative", ln, source)
        for key in ("cooldown", "limit"):
            v = getattr(s, key)
            if v is not None and v < 0:
                raise InvalidRule(f"{key} must be non-negative", ln, source)
        if s.spawn_target is not None and s.cls not in SPAWNING_CLASSES:
            raise InvalidRule(f"spawn_target not allowed on {s.cls.value}", ln, source)

    avatars = [i for i, s in enumerate(spec.sprites) if s.cls.is_avatar]
    if not avatars:
        raise NoAvatar("no sprite has an avatar class", _where(lines, "SpriteSet"), source)
    if len(avatars) > 1:
        raise DuplicateAvatar(
            "more than one sprite has an avatar class",
            _where(lines, ("sprite", avatars[1])),
            source,
        )
    avatar_name = spec.sprites[avatars[0]].name

    def resolve(name, ln, allow_avatar=True):
        if name not in names:
            raise UnresolvedIdentifier(f"unknown sprite {name!r}", ln, source)
        if not allow_avatar and name == avatar_name:
            raise InvalidRule(f"{name!r} is the avatar and cannot be created", ln, source)

    for i, s in enumerate(spec.sprites):
        if s.spawn_target is not None:
            resolve(s.spawn_target, _where(lines, ("sprite", i)), allow_avatar=False)

    for i, it in enumerate(spec.interactions):
        ln = _where(lines, ("interaction", i))
        resolve(it.actor, ln)
        if it.other != EOS:
            resolve(it.other, ln)
        if it.effect.needs_target:
            if it.target is None:
                raise InvalidRule(f"{it.effect.value} requires target=", ln, source)
            resolve(it.target, ln, allow_avatar=False)
        elif it.target is not None:
            raise InvalidRule(f"{it.effect.value} takes no target", ln, source)

    wins = losses = 0
    for i, t in enumerate(spec.terminations):
        ln = _where(lines, ("termination", i))
        if t.limit < 0:
            raise InvalidRule("limit must be non-negative", ln, source)
        if t.kind is TerminationKind.SPRITE_COUNTER:
            if t.sprite is None:
                raise InvalidRule("SpriteCounter requires sprite=", ln, source)
            resolve(t.sprite, ln)
        elif t.sprite is not None:
            raise InvalidRule("Timeout takes no sprite", ln, source)
        if t.win:
            wins += 1
        else:
            losses += 1
    if not wins or not losses:
        raise InvalidRule(
            "need at least one win and one loss termination",
            _where(lines, "TerminationSet"),
            source,
        )

    avatar_entries = 0
    for ch, mapped in spec.level_mapping:
        ln = _where(lines, ("mapping", ch))
        if len(ch) != 1 or ch.isspace() or ch == BLANK:
            raise MalformedLine(f"bad level character {ch!r}", ln, source)
        if not mapped:
            raise MalformedLine(f"character {ch!r} maps to nothing", ln, source)
        for name in mapped:
            resolve(name, ln)
        avatar_entries += mapped.count(avatar_name)
    if avatar_entries == 0:
        raise NoAvatar("avatar is not mapped to a level character", _where(lines, "LevelMapping"), source)
    if avatar_entries > 1:
        raise DuplicateAvatar("avatar is mapped more than once", _where(lines, "LevelMapping"), source)


def check_level(spec: GameSpec, level: Level, lines: dict | None = None, source: str = "") -> None:
    if not level.rows:
        raise NoAvatar("level is empty", None, source)
    width = len(level.rows[0])
    mapping = spec.mapping
    avatar_char = spec.avatar_char
    seen_avatar: int | None = None
    for r, row in enumerate(level.rows):
        ln = _where(lines, ("row", r))
        if len(row) != width or width == 0:
            raise NonRectangularLevel(
                f"row has length {len(row)}, expected {width}", ln, source
            )
        for ch in row:
            if ch != BLANK and ch not in mapping:
                raise UnresolvedIdentifier(f"unmapped level character {ch!r}", ln, source)
        count = row.count(avatar_char)
        if count:
            if seen_avatar is not None or count > 1:
                raise DuplicateAvatar("avatar placed more than once", ln, source)
            seen_avatar = r
    if seen_avatar is None:
        raise NoAvatar("no avatar in level", None, source)


def validate_game(game: Game) -> Game:
    """Check every invariant of an in-memory game; return it unchanged."""
    check_spec(game.spec)
    check_level(game.spec, game.level)
    return game


# ---------------------------------------------------------------------------
# parsing


def _kv(tokens: list[str], ln: int, source: str) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise MalformedLine(f"expected key=value, got {tok!r}", ln, source)
        k, v = tok.split("=", 1)
        if k in out:
            raise MalformedLine(f"repeated key {k!r}", ln, source)
        out[k] = v
    return out


def _int(value: str, ln: int, source: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise MalformedLine(f"expected an integer, got {value!r}", ln, source) from None


def _bool(value: str, ln: int, source: str) -> bool:
    if value in ("True", "true"):
        return True
    if value in ("False", "false"):
        return False
    raise MalformedLine(f"expected True/False, got {value!r}", ln, source)


def _enum(enum, value: str, ln: int, source: str, error=MalformedLine):
    try:
        return enum(value)
    except ValueError:
        raise error(f"unknown {enum.__name__} {value!r}", ln, source) from None


def _parse_sprite(body: str, ln: int, source: str) -> SpriteDef:
    left, sep, right = body.partition(">")
    if not sep:
        raise MalformedLine("sprite line needs 'name > Class'", ln, source)
    name = left.strip()
    tokens = right.split()
    if not tokens or not _IDENT.match(name):
        raise MalformedLine("sprite line needs 'name > Class'", ln, source)
    cls = _enum(SpriteClass, tokens[0], ln, source, UnknownSpriteClass)
    kwargs: dict = {}
    for key, value in _kv(tokens[1:], ln, source).items():
        if key == "speed":
            try:
                kwargs["speed"] = Fraction(value)
            except (ValueError, ZeroDivisionError):
                raise MalformedLine(f"bad speed {value!r}", ln, source) from None
        elif key in ("cooldown", "limit"):
            kwargs[key] = _int(value, ln, source)
        elif key == "orientation":
            kwargs[key] = _enum(Orientation, value, ln, source)
        elif key == "spawn_target":
            kwargs[key] = value
        else:
            raise MalformedLine(f"unknown sprite modifier {key!r}", ln, source)
    return SpriteDef(name, cls, **kwargs)


def _parse_interaction(body: str, ln: int, source: str) -> InteractionDef:
    left, sep, right = body.partition(">")
    pair = left.split()
    tokens = right.split()
    if not sep or len(pair) != 2 or not tokens:
        raise MalformedLine("interaction line needs 'actor other > Effect'", ln, source)
    effect = _enum(Effect, tokens[0], ln, source)
    kwargs: dict = {}
    for key, value in _kv(tokens[1:], ln, source).items():
        if key == "target":
            kwargs["target"] = value
        elif key == "score":
            kwargs["score"] = _int(value, ln, source)
        else:
            raise MalformedLine(f"unknown interaction option {key!r}", ln, source)
    return InteractionDef(pair[0], pair[1], effect, **kwargs)


def _parse_termination(body: str, ln: int, source: str) -> TerminationDef:
    tokens = body.split()
    kind = _enum(TerminationKind, tokens[0], ln, source)
    kv = _kv(tokens[1:], ln, source)
    unknown = set(kv) - {"sprite", "limit", "win"}
    if unknown:
        raise MalformedLine(f"unknown termination option {sorted(unknown)[0]!r}", ln, source)
    if "limit" not in kv or "win" not in kv:
        raise MalformedLine("termination needs limit= and win=", ln, source)
    return TerminationDef(
        kind=kind,
        limit=_int(kv["limit"], ln, source),
        win=_bool(kv["win"], ln, source),
        sprite=kv.get("sprite"),
    )


def _parse_mapping(body: str, ln: int, source: str) -> tuple[str, tuple[str, ...]]:
    left, sep, right = body.partition(">")
    ch = left.strip()
    names = tuple(right.split())
    if not sep or len(ch) != 1 or not names:
        raise MalformedLine("mapping line needs 'c > sprite [sprite ...]'", ln, source)
    return ch, names


_SECTION_PARSERS = {
    "SpriteSet": ("sprite", _parse_sprite),
    "InteractionSet": ("interaction", _parse_interaction),
    "TerminationSet": ("termination", _parse_termination),
    "LevelMapping": ("mapping", _parse_mapping),
}


def parse_description(text: str, source: str = "description") -> tuple[GameSpec, dict]:
    sections: dict[str, list] = {}
    lines: dict = {}
    current: str | None = None
    last_ln = 0
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        last_ln = ln
        if not line[0].isspace():
            header = line.strip()
            if header not in _SECTION_PARSERS:
                raise MalformedLine(f"unknown section {header!r}", ln, source)
            if header in sections:
                raise MalformedLine(f"repeated section {header!r}", ln, source)
            sections[header] = []
            lines[header] = ln
            current = header
            continue
        if current is None:
            raise MalformedLine("indented line outside any section", ln, source)
        tag, parser = _SECTION_PARSERS[current]
        item = parser(line.strip(), ln, source)
        if tag == "mapping":
            if item[0] in lines.get("_chars", set()):
                raise MalformedLine(f"character {item[0]!r} mapped twice", ln, source)
            lines.setdefault("_chars", set()).add(item[0])
            lines[("mapping", item[0])] = ln
        else:
            lines[(tag, len(sections[current]))] = ln
        sections[current].append(item)

    for name in SECTIONS:
        if name not in sections:
            raise MissingSection(f"missing section {name}", last_ln or 1, source)

    spec = GameSpec(
        sprites=sections["SpriteSet"],
        interactions=sections["InteractionSet"],
        terminations=sections["TerminationSet"],
        level_mapping=sections["LevelMapping"],
    )
    check_spec(spec, lines, source)
    return spec, lines


def parse_level(text: str, spec: GameSpec, source: str = "level") -> Level:
    rows = []
    lines = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        row = raw.rstrip()
        if not row:
            continue
        lines[("row", len(rows))] = ln
        rows.append(row)
    level = Level(tuple(rows))
    check_level(spec, level, lines, source)
    return level


def parse_game(description_text: str, level_text: str, name: str = "game") -> Game:
    """Parse a description/level pair into a validated :class:`Game`.

    Raises a :class:`GameError` subclass naming the offending line on any
    malformed or inconsistent input.
    """
    spec, _ = parse_description(description_text)
    level = parse_level(level_text, spec)
    return Game(spec, level, name)


# ---------------------------------------------------------------------------
# serialization

_INDENT = "    "


def _fmt_modifier(key: str, value) -> str:
    if isinstance(value, Enum):
        value = value.value
    return f"{key}={value}"


def serialize_description(spec: GameSpec) -> str:
    out = ["SpriteSet"]
    for s in spec.sprites:
        mods = "".join(" " + _fmt_modifier(k, v) for k, v in s.modifiers().items())
        out.append(f"{_INDENT}{s.name} > {s.cls.value}{mods}")
    out.append("InteractionSet")
    for it in spec.interactions:
        line = f"{_INDENT}{it.actor} {it.other} > {it.effect.value}"
        if it.target is not None:
            line += f" target={it.target}"
        if it.score:
            line += f" score={it.score}"
        out.append(line)
    out.append("TerminationSet")
    for t in spec.terminations:
        line = f"{_INDENT}{t.kind.value}"
        if t.sprite is not None:
            line += f" sprite={t.sprite}"
        line += f" limit={t.limit} win={t.win}"
        out.append(line)
    out.append("LevelMapping")
    for ch, names in spec.level_mapping:
        out.append(f"{_INDENT}{ch} > {' '.join(names)}")
    return "\n".join(out) + "\n"


def serialize_level(level: Level) -> str:
    return "\n".join(level.rows) + "\n"


def serialize_game(game: Game) -> tuple[str, str]:
    return serialize_description(game.spec), serialize_level(game.level)


def game_key(game: Game) -> str:
    """Canonical text identifying a game's structure (name excluded)."""
    desc, lvl = serialize_game(game)
    return desc + "\n" + lvl


def load_game(path_stem: str, name: str | None = None) -> Game:
    """Load ``<stem>.desc`` and ``<stem>.lvl``."""
    from pathlib import Path

    stem = Path(path_stem)
    if stem.suffix in (".desc", ".lvl"):
        stem = stem.with_suffix("")
    desc = stem.with_suffix(".desc").read_text(encoding="utf-8")
    lvl = stem.with_suffix(".lvl").read_text(encoding="utf-8")
    spec, _ = parse_description(desc, source=str(stem.with_suffix(".desc")))
    level = parse_level(lvl, spec, source=str(stem.with_suffix(".lvl")))
    return Game(spec, level, name or stem.name)


def save_game(game: Game, path_stem) -> None:
    from pathlib import Path

    stem = Path(path_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    desc, lvl = serialize_game(game)
    stem.with_suffix(".desc").write_text(desc, encoding="utf-8")
    stem.with_suffix(".lvl").write_text(lvl, encoding="utf-8")
