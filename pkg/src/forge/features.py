"""Fixed-length numeric encoding of a game for the classifier.

Layout with the default termination-aware schema (413 entries):

====================  =======  ============================================
indices               count    meaning
====================  =======  ============================================
0-10                  11       sprite definitions per sprite class
11-16                 6        interactions per effect
17-27                 11       interactions whose actor has each class
28-38                 11       interactions whose other has each class
39                    1        interactions whose other is EOS
40-41                 2        terminations per kind
42-49                 8        first four terminations: (sprite class id, limit)
50-52                 3        win count, loss count, smallest limit
53-54                 2        level width, level height
55-412                358      level cells, row-major, class id (blank = 0)
====================  =======  ============================================

The termination-free schema drops indices 40-52 (400 entries). See
``docs/schema.md``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .vgdl import BLANK, EOS, Effect, Game, SpriteClass, TerminationKind

CLASSES = list(SpriteClass)
EFFECTS = list(Effect)
TERMINATION_SLOTS = 4
DEFAULT_LEVEL_FEATURES = 360


class LevelTooLarge(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    include_termination: bool = True
    termination_slots: int = TERMINATION_SLOTS
    # level section = width + height + cells
    level_features: int = DEFAULT_LEVEL_FEATURES
    # off by default: the original representation carries no score information
    include_score: bool = False

    @property
    def max_cells(self) -> int:
        return self.level_features - 2

    @cached_property
    def index_map(self) -> tuple[str, ...]:
        names = [f"sprite_class[{c.value}]" for c in CLASSES]
        names += [f"effect[{e.value}]" for e in EFFECTS]
        names += [f"actor_class[{c.value}]" for c in CLASSES]
        names += [f"other_class[{c.value}]" for c in CLASSES]
        names.append("other_class[EOS]")
        if self.include_score:
            names += ["score[positive_sum]", "score[negative_sum]", "score[scoring_interactions]"]
        if self.include_termination:
            names += [f"termination_kind[{k.value}]" for k in TerminationKind]
            for k in range(self.termination_slots):
                names += [f"termination[{k}].sprite_class", f"termination[{k}].limit"]
            names += ["termination.wins", "termination.losses", "termination.min_limit"]
        names += ["level.width", "level.height"]
        names += [f"level.cell[{i}]" for i in range(self.max_cells)]
        return tuple(names)

    @property
    def total_length(self) -> int:
        return len(self.index_map)

    @property
    def level_length(self) -> int:
        return self.level_features

    @property
    def rule_length(self) -> int:
        return self.total_length - self.level_length

    @cached_property
    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.index_map).encode()).hexdigest()[:16]

    def describe(self) -> str:
        return "\n".join(f"{i}\t{name}" for i, name in enumerate(self.index_map))


def schema_default(include_termination: bool = True) -> FeatureSchema:
    return FeatureSchema(include_termination=include_termination)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    schema: FeatureSchema = field(repr=False)

    def __len__(self) -> int:
        return len(self.values)

    def to_csv(self) -> str:
        return ",".join(f"{v:g}" for v in self.values)


def vectorize(game: Game, schema: FeatureSchema | None = None) -> FeatureVector:
    """Encode ``game`` under ``schema``; raises LevelTooLarge past capacity."""
    schema = schema or schema_default()
    spec = game.spec
    level = game.level
    width, height = level.size
    if width * height > schema.max_cells:
        raise LevelTooLarge(
            f"level {width}x{height} has {width * height} cells, capacity is {schema.max_cells}"
        )
    cls_of = {s.name: s.cls for s in spec.sprites}
    out: list[float] = []

    counts = [0] * len(CLASSES)
    for s in spec.sprites:
        counts[CLASSES.index(s.cls)] += 1
    out += counts

    effects = [0] * len(EFFECTS)
    actors = [0] * len(CLASSES)
    others = [0] * len(CLASSES)
    eos = 0
    for it in spec.interactions:
        effects[EFFECTS.index(it.effect)] += 1
        actors[CLASSES.index(cls_of[it.actor])] += 1
        if it.other == EOS:
            eos += 1
        else:
            others[CLASSES.index(cls_of[it.other])] += 1
    out += effects + actors + others + [eos]

    if schema.include_score:
        scores = [it.score for it in spec.interactions]
        out += [
            sum(s for s in scores if s > 0),
            -sum(s for s in scores if s < 0),
            sum(1 for s in scores if s),
        ]

    if schema.include_termination:
        terms = spec.terminations
        out += [sum(1 for t in terms if t.kind is k) for k in TerminationKind]
        for k in range(schema.termination_slots):
            if k < len(terms):
                t = terms[k]
                cid = cls_of[t.sprite].class_id if t.sprite else 0
                out += [cid, t.limit]
            else:
                out += [0, 0]
        wins = sum(1 for t in terms if t.win)
        out += [wins, len(terms) - wins, min((t.limit for t in terms), default=0)]

    out += [width, height]
    mapping = spec.mapping
    cell_ids = {
        # the top-most (last listed) sprite decides a tile's class
        ch: cls_of[names[-1]].class_id
        for ch, names in mapping.items()
    }
    cells = [cell_ids.get(ch, 0) if ch != BLANK else 0 for row in level.rows for ch in row]
    out += cells
    out += [0] * (schema.max_cells - len(cells))

    values = np.asarray(out, dtype=float)
    assert len(values) == schema.total_length
    return FeatureVector(values, schema)


def vectorize_many(games, schema: FeatureSchema | None = None) -> np.ndarray:
    schema = schema or schema_default()
    return np.stack([vectorize(g, schema).values for g in games])
