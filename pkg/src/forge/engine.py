"""Deterministic discrete-time simulator for mini-VGDL games.

One call to :func:`step` is one move. Each tick runs four phases in order:
the avatar acts, NPCs/missiles/spawners update, interactions resolve in
description order, and terminations are checked in description order.
Randomness (RandomNPC moves, Chaser tie-breaks) comes from a counter-based
stream carried inside the state, so a state fully determines its future
under a fixed action sequence. Semantics are documented in ``docs/engine.md``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Protocol, Sequence

from .seeding import MASK64
from .vgdl import (
    BLANK,
    EOS,
    Effect,
    Game,
    Orientation,
    SpriteClass,
    TerminationKind,
)


class Action(IntEnum):
    NIL = 0
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4
    USE = 5


ACTION_TOKENS = {a.name.capitalize(): a for a in Action}
ACTION_TOKENS["Nil"] = Action.NIL


class Outcome(str, Enum):
    ONGOING = "Ongoing"
    WIN = "Win"
    LOSS = "Loss"
    # playout only: stopped by the move cap, not by the game
    CAPPED = "LossByCap"


# direction index: Up, Down, Left, Right
DX = (0, 0, -1, 1)
DY = (-1, 1, 0, 0)
_ORIENT_INDEX = {Orientation.UP: 0, Orientation.DOWN: 1, Orientation.LEFT: 2, Orientation.RIGHT: 3}

DEFAULT_SPAWN_COOLDOWN = 4
DEFAULT_SHOOT_COOLDOWN = 2
MIN_INSTANCE_CAP = 64
# live sprites allowed per level cell before creations are dropped
INSTANCES_PER_CELL = 1
# dead instances stay in place (keeping indices stable) until they outnumber the living
COMPACT_MIN_DEAD = 32

_ORIENTED = frozenset({SpriteClass.MISSILE, SpriteClass.SHOOT_AVATAR, SpriteClass.SPAWN_POINT})

_MOVERS = frozenset(
    {SpriteClass.MISSILE, SpriteClass.RANDOM_NPC, SpriteClass.CHASER, SpriteClass.FLEEING}
)


@dataclass(frozen=True)
class CompiledGame:
    """Index-based view of a game used by the hot simulation loop."""

    game: Game
    names: tuple[str, ...]
    classes: tuple[SpriteClass, ...]
    speed_int: tuple[int | None, ...]
    # fractional speeds as (numerator, denominator); budgets count 1/denominator steps
    speed_frac: tuple[tuple[int, int], ...]
    cooldown: tuple[int, ...]
    limit: tuple[int | None, ...]
    orient: tuple[int, ...]
    has_orient: tuple[bool, ...]
    spawn: tuple[int, ...]
    avatar: int
    interactions: tuple[tuple[int, int, Effect, int, int], ...]
    terminations: tuple[tuple[TerminationKind, int, int, bool], ...]
    char_kinds: dict
    width: int
    height: int
    has_passive: bool
    passive_kinds: tuple[int, ...]
    instance_cap: int
    # kinds whose facing can influence the future (see GameState.key)
    orient_used: tuple[bool, ...]
    # (col, row, avatar col, avatar row, chase) -> best directions; filled lazily
    seek_cache: dict = field(default_factory=dict, compare=False, repr=False)


@lru_cache(maxsize=256)
def compile_game(game: Game) -> CompiledGame:
    spec = game.spec
    index = {s.name: i for i, s in enumerate(spec.sprites)}
    speed_int, speed_frac, cooldown, orient, spawn = [], [], [], [], []
    for s in spec.sprites:
        sp = Fraction(1) if s.speed is None else Fraction(s.speed)
        speed_frac.append((sp.numerator, sp.denominator))
        speed_int.append(int(sp) if sp.denominator == 1 else None)
        if s.cooldown is not None:
            cd = s.cooldown
        elif s.cls is SpriteClass.SPAWN_POINT:
            cd = DEFAULT_SPAWN_COOLDOWN
        elif s.cls is SpriteClass.SHOOT_AVATAR:
            cd = DEFAULT_SHOOT_COOLDOWN
        else:
            cd = 0
        cooldown.append(cd)
        orient.append(_ORIENT_INDEX[s.orientation] if s.orientation else 3)
        spawn.append(index[s.spawn_target] if s.spawn_target else -1)
    interactions = tuple(
        (
            index[it.actor],
            -1 if it.other == EOS else index[it.other],
            it.effect,
            index[it.target] if it.target else -1,
            it.score,
        )
        for it in spec.interactions
    )
    terminations = tuple(
        (t.kind, index[t.sprite] if t.sprite else -1, t.limit, t.win)
        for t in spec.terminations
    )
    char_kinds = {ch: tuple(index[n] for n in names) for ch, names in spec.level_mapping}
    # facing is read by missiles, shooters and spawners, and handed on by transform/spawn-behind
    orient_used = [s.cls in _ORIENTED for s in spec.sprites]
    for a, _, effect, _, _ in interactions:
        if effect in (Effect.TRANSFORM_TO, Effect.SPAWN_BEHIND):
            orient_used[a] = True
    width, height = game.level.size
    avatar = index[spec.avatar.name]
    return CompiledGame(
        game=game,
        names=tuple(s.name for s in spec.sprites),
        classes=tuple(s.cls for s in spec.sprites),
        speed_int=tuple(speed_int),
        speed_frac=tuple(speed_frac),
        cooldown=tuple(cooldown),
        limit=tuple(s.limit for s in spec.sprites),
        orient=tuple(orient),
        has_orient=tuple(s.orientation is not None for s in spec.sprites),
        spawn=tuple(spawn),
        avatar=avatar,
        interactions=interactions,
        terminations=terminations,
        char_kinds=char_kinds,
        width=width,
        height=height,
        has_passive=any(s.cls is SpriteClass.PASSIVE for s in spec.sprites),
        passive_kinds=tuple(i for i, s in enumerate(spec.sprites) if s.cls is SpriteClass.PASSIVE),
        instance_cap=max(MIN_INSTANCE_CAP, INSTANCES_PER_CELL * width * height),
        orient_used=tuple(orient_used),
    )


class Instance:
    """One sprite on the board. Treated as immutable once a step returns."""

    __slots__ = (
        "id", "kind", "col", "row", "alive", "cooldown", "orient",
        "budget", "spawned", "resources", "pcol", "prow", "eos", "tok", "stamp",
    )

    def __init__(self, id, kind, col, row, orient, cooldown=0):
        self.id = id
        self.kind = kind
        self.col = col
        self.row = row
        self.alive = True
        self.cooldown = cooldown
        self.orient = orient
        self.budget = 0
        self.spawned = 0
        self.resources: dict | None = None
        self.pcol = col
        self.prow = row
        self.eos = False
        # owner token and tick of the last write; pcol, prow and eos describe that tick
        self.tok = None
        self.stamp = -1

    def copy(self, tok, stamp) -> "Instance":
        new = Instance.__new__(Instance)
        new.id = self.id
        new.kind = self.kind
        new.col = new.pcol = self.col
        new.row = new.prow = self.row
        new.alive = self.alive
        new.cooldown = self.cooldown
        new.orient = self.orient
        new.budget = self.budget
        new.spawned = self.spawned
        new.resources = dict(self.resources) if self.resources else None
        new.eos = False
        new.tok = tok
        new.stamp = stamp
        return new

    def key(self) -> tuple:
        res = tuple(sorted(self.resources.items())) if self.resources else ()
        return (
            self.id, self.kind, self.col, self.row, self.alive,
            self.cooldown, self.orient, self.budget, self.spawned, res,
        )

    @property
    def position(self) -> tuple[int, int]:
        return self.col, self.row


class GameState:
    """Complete simulation snapshot. ``step`` never mutates its input."""

    __slots__ = (
        "cg", "instances", "score", "tick", "seed", "draws", "outcome", "next_id",
        "ndead", "occ", "pending",
    )

    def __init__(self, cg: CompiledGame, instances, score, tick, seed, draws, outcome, next_id, ndead=0):
        # ``instances`` may hold up to ``ndead`` dead entries; only live ones count
        self.occ = None
        self.pending = None
        self.ndead = ndead
        self.cg = cg
        self.instances: list[Instance] = instances
        self.score = score
        self.tick = tick
        self.seed = seed
        self.draws = draws
        self.outcome = outcome
        self.next_id = next_id

    @property
    def game(self) -> Game:
        return self.cg.game

    def occupancy(self) -> "_Occupancy":
        if self.occ is None:
            if self.pending is not None:
                parent, died, new, base = self.pending
                self.occ = parent.updated(self.cg, self.instances, died, new, base)
                self.pending = None
            else:
                self.occ = _Occupancy.build(self.cg, self.instances)
        return self.occ

    def live_instances(self) -> list[Instance]:
        return [i for i in self.instances if i.alive]

    @property
    def is_terminal(self) -> bool:
        return self.outcome is not Outcome.ONGOING

    def avatar(self) -> Instance | None:
        av = self.cg.avatar
        for inst in self.instances:
            if inst.kind == av and inst.alive:
                return inst
        return None

    def count(self, name: str) -> int:
        kind = self.cg.names.index(name)
        return sum(1 for i in self.instances if i.kind == kind and i.alive)

    def snapshot(self) -> tuple:
        return (
            self.score, self.tick, self.seed, self.draws, self.outcome, self.next_id,
            tuple(i.key() for i in self.instances if i.alive),
        )

    def key(self) -> tuple:
        """Like ``snapshot`` but blind to facings nothing will ever read.

        Two states with equal keys have identical futures under any action
        sequence, so a planner may treat them as one.
        """
        used = self.cg.orient_used
        return (
            self.score, self.tick, self.draws, self.outcome, self.next_id,
            tuple(
                (i.id, i.kind, i.col, i.row, i.cooldown, i.orient if used[i.kind] else -1,
                 i.budget, i.spawned, tuple(sorted(i.resources.items())) if i.resources else ())
                for i in self.instances if i.alive
            ),
        )

    def __eq__(self, other):
        if not isinstance(other, GameState):
            return NotImplemented
        return self.cg.game == other.cg.game and self.snapshot() == other.snapshot()

    def __hash__(self):
        return hash(self.snapshot())

    def __repr__(self):
        return (
            f"GameState(tick={self.tick}, score={self.score}, "
            f"outcome={self.outcome.value}, instances={len(self.instances) - self.ndead})"
        )


def init_state(game: Game, seed: int) -> GameState:
    cg = compile_game(game)
    instances = []
    next_id = 0
    for r, row in enumerate(game.level.rows):
        for c, ch in enumerate(row):
            if ch == BLANK:
                continue
            for kind in cg.char_kinds[ch]:
                instances.append(Instance(next_id, kind, c, r, cg.orient[kind]))
                next_id += 1
    return GameState(cg, instances, 0, 0, seed & MASK64, 0, Outcome.ONGOING, next_id)


# ---------------------------------------------------------------------------
# stepping

# never move on their own and are never pushed
_STATIC = frozenset(
    {SpriteClass.IMMOVABLE, SpriteClass.PORTAL, SpriteClass.RESOURCE, SpriteClass.SPAWN_POINT}
)


class _Occupancy:
    """Indexes over a state's live instances, shared between states until changed.

    ``cells`` (keyed by column, row and kind) and ``static_by_kind`` cover
    static sprites only; ``dyn_by_kind``
    covers everything else. All index lists are ascending, which is creation
    order. ``counts`` holds live instances per kind. ``static_pairs`` caches
    co-located static pairs per rule and lives as long as ``cells`` does.
    """

    __slots__ = ("cells", "static_by_kind", "dyn_by_kind", "active", "counts", "static_pairs")

    @classmethod
    def build(cls, cg: CompiledGame, instances: list[Instance]) -> "_Occupancy":
        occ = cls()
        occ.cells = {}
        occ.static_by_kind = {}
        occ.dyn_by_kind = {}
        occ.active = []
        occ.static_pairs = {}
        occ.counts = {}
        for i, inst in enumerate(instances):
            if inst.alive:
                occ._add(cg, i, inst)
        return occ

    def _add(self, cg: CompiledGame, i: int, inst: Instance) -> None:
        kind = inst.kind
        cls = cg.classes[kind]
        if cls in _STATIC:
            self.cells.setdefault((inst.col, inst.row, kind), []).append(i)
            self.static_by_kind.setdefault(kind, []).append(i)
        else:
            self.dyn_by_kind.setdefault(kind, []).append(i)
        if cls in _MOVERS or cls is SpriteClass.SPAWN_POINT:
            self.active.append(i)
        self.counts[kind] = self.counts.get(kind, 0) + 1

    def updated(self, cg: CompiledGame, instances: list[Instance], died, new, base: int) -> "_Occupancy":
        """A new index after the indices in ``died`` were killed and those in
        ``new`` created; ``base`` is the first index created this tick."""
        occ = _Occupancy()
        occ.counts = dict(self.counts)
        cells = self.cells
        static_by_kind = self.static_by_kind
        dyn_by_kind = self.dyn_by_kind
        copied_cells: set = set()
        copied_kinds: set = set()
        dyn_kinds: set = set()
        active_changed = False
        classes = cg.classes
        for i in died:
            inst = instances[i]
            kind = inst.kind
            if i >= base:
                continue  # created and killed within the same tick
            occ.counts[kind] -= 1
            cls = classes[kind]
            if cls in _STATIC:
                if cells is self.cells:
                    cells = dict(cells)
                    static_by_kind = dict(static_by_kind)
                cell = (inst.col, inst.row, kind)
                if cell not in copied_cells:
                    copied_cells.add(cell)
                    cells[cell] = list(cells[cell])
                cells[cell].remove(i)
                if kind not in copied_kinds:
                    copied_kinds.add(kind)
                    static_by_kind[kind] = list(static_by_kind[kind])
                static_by_kind[kind].remove(i)
            else:
                dyn_kinds.add(kind)
            if cls in _MOVERS or cls is SpriteClass.SPAWN_POINT:
                active_changed = True
        if dyn_kinds:
            dyn_by_kind = dict(dyn_by_kind)
            for kind in dyn_kinds:
                live = [j for j in dyn_by_kind[kind] if instances[j].alive]
                if live:
                    dyn_by_kind[kind] = live
                else:
                    del dyn_by_kind[kind]
        active = [j for j in self.active if instances[j].alive] if active_changed else self.active
        for i in new:
            inst = instances[i]
            if not inst.alive:
                continue
            kind = inst.kind
            cls = classes[kind]
            occ.counts[kind] = occ.counts.get(kind, 0) + 1
            if cls in _STATIC:
                if cells is self.cells:
                    cells = dict(cells)
                    static_by_kind = dict(static_by_kind)
                cell = (inst.col, inst.row, kind)
                if cell not in copied_cells:
                    copied_cells.add(cell)
                    cells[cell] = list(cells.get(cell, ()))
                cells[cell].append(i)
                if kind not in copied_kinds:
                    copied_kinds.add(kind)
                    static_by_kind[kind] = list(static_by_kind.get(kind, ()))
                static_by_kind[kind].append(i)
            else:
                if dyn_by_kind is self.dyn_by_kind:
                    dyn_by_kind = dict(dyn_by_kind)
                if kind not in dyn_kinds:
                    # lists of kinds in dyn_kinds are already private copies
                    dyn_kinds.add(kind)
                    dyn_by_kind[kind] = list(dyn_by_kind.get(kind, ()))
                elif kind not in dyn_by_kind:
                    dyn_by_kind[kind] = []
                dyn_by_kind[kind].append(i)
            if cls in _MOVERS or cls is SpriteClass.SPAWN_POINT:
                if active is self.active:
                    active = list(active)
                active.append(i)
        for kind in [k for k, n in occ.counts.items() if n == 0]:
            del occ.counts[kind]
        for cell in copied_cells:
            if not cells[cell]:
                del cells[cell]
        for kind in copied_kinds:
            if not static_by_kind[kind]:
                del static_by_kind[kind]
        occ.cells = cells
        occ.static_by_kind = static_by_kind
        occ.dyn_by_kind = dyn_by_kind
        occ.active = active
        occ.static_pairs = self.static_pairs if cells is self.cells else {}
        return occ


class _Tick:
    """Mutable working copy for one step, with copy-on-write instances."""

    __slots__ = (
        "s", "cg", "tok", "stamp", "log", "occ", "new", "died", "base", "version",
        "_cell_maps", "_live",
    )

    def __init__(self, state: GameState, log, scratch=None):
        self.cg = state.cg
        self.tok = object() if scratch is None else scratch
        self.stamp = state.tick
        self.s = GameState(
            state.cg, list(state.instances), state.score, state.tick,
            state.seed, state.draws, state.outcome, state.next_id, state.ndead,
        )
        self.occ = state.occupancy()
        self.log = log
        self.new: list[int] = []
        self.died: list[int] = []
        self.base = len(state.instances)
        # bumped whenever a position changes or a sprite appears
        self.version = 0
        self._cell_maps: dict = {}
        self._live: dict = {}

    def own(self, i: int) -> Instance:
        inst = self.s.instances[i]
        if inst.tok is not self.tok:
            inst = inst.copy(self.tok, self.stamp)
            self.s.instances[i] = inst
        elif inst.stamp != self.stamp:
            # already private to this scratch owner; only the per-tick fields reset
            inst.pcol, inst.prow, inst.eos, inst.stamp = inst.col, inst.row, False, self.stamp
        return inst

    def fresh(self, inst: Instance) -> bool:
        """True if ``inst`` was written during this tick."""
        return inst.tok is self.tok and inst.stamp == self.stamp

    def rand(self, n: int) -> int:
        s = self.s
        # splitmix64 of the (seed, draw counter) pair, inlined for speed
        x = (s.seed + s.draws * 0xD1B54A32D192ED03 + 0x9E3779B97F4A7C15) & MASK64
        s.draws += 1
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
        return (x ^ (x >> 31)) % n

    def n_moves(self, i: int) -> int:
        kind = self.s.instances[i].kind
        sp = self.cg.speed_int[kind]
        if sp is not None:
            return sp
        inst = self.own(i)
        num, den = self.cg.speed_frac[kind]
        n, inst.budget = divmod(inst.budget + num, den)
        return n

    def move(self, i: int, d: int) -> bool:
        inst = self.own(i)
        nc, nr = inst.col + DX[d], inst.row + DY[d]
        if not (0 <= nc < self.cg.width and 0 <= nr < self.cg.height):
            inst.eos = True
            return False
        inst.col, inst.row = nc, nr
        self.version += 1
        return True

    def create(self, kind: int, col: int, row: int, orient: int | None = None) -> int | None:
        """Add an instance; a declared orientation on ``kind`` wins over ``orient``."""
        s = self.s
        if len(s.instances) - s.ndead >= self.cg.instance_cap:
            return None
        if self.cg.has_orient[kind]:
            orient = None
        inst = Instance(
            s.next_id, kind, col, row,
            self.cg.orient[kind] if orient is None else orient,
            self.cg.cooldown[kind],
        )
        inst.tok = self.tok
        inst.stamp = self.stamp
        s.next_id += 1
        s.instances.append(inst)
        j = len(s.instances) - 1
        self.new.append(j)
        self.version += 1
        return j

    def kill(self, i: int) -> None:
        inst = self.own(i)
        if inst.alive:
            inst.alive = False
            self.died.append(i)
            self.s.ndead += 1

    def live_of_kind(self, kind: int) -> Sequence[int]:
        """Live non-static instances of ``kind`` plus anything of ``kind`` created this tick.

        The returned list is shared; callers must not modify it.
        """
        if not self.died and not self.new:
            # the tick-start index lists only hold live instances
            return self.occ.dyn_by_kind.get(kind, ())
        # liveness changes only through kill and create, which grow these lists
        key = (kind, len(self.died), len(self.new))
        out = self._live.get(key)
        if out is None:
            insts = self.s.instances
            out = [j for j in self.occ.dyn_by_kind.get(kind, ()) if insts[j].alive]
            for j in self.new:
                if insts[j].kind == kind and insts[j].alive:
                    out.append(j)
            self._live[key] = out
        return out

    def cell_map(self, kind: int) -> dict:
        """Cell -> indices for ``live_of_kind(kind)``, cached until the board changes."""
        key = (kind, self.version)
        m = self._cell_maps.get(key)
        if m is None:
            m = {}
            insts = self.s.instances
            for j in self.live_of_kind(kind):
                x = insts[j]
                m.setdefault((x.col, x.row), []).append(j)
            self._cell_maps[key] = m
        return m

    def avatar_index(self) -> int:
        av = self.cg.avatar
        insts = self.s.instances
        for i in self.occ.dyn_by_kind.get(av, ()):
            if insts[i].alive:
                return i
        for i in self.new:
            if insts[i].kind == av and insts[i].alive:
                return i
        return -1

    def at(self, col: int, row: int, kind: int) -> bool:
        """True if a live instance of ``kind`` occupies the cell."""
        insts = self.s.instances
        for j in self.occ.cells.get((col, row, kind), ()):
            if insts[j].alive:
                return True
        for j in self.live_of_kind(kind):
            x = insts[j]
            if x.col == col and x.row == row:
                return True
        return False


def step(
    state: GameState, action: Action | int, log: list | None = None, scratch: object | None = None,
) -> GameState:
    """Advance one tick. Terminal states are returned unchanged.

    If ``log`` is a list, one tuple per fired interaction and termination is
    appended: ``("interaction", tick, index, actor_id, other_id, score)`` or
    ``("termination", tick, index, outcome)``.

    ``scratch`` is for throwaway chains such as rollouts. Steps passing the
    same ``scratch`` object may update sprites of earlier states from that
    chain in place, so only the newest state of the chain stays valid. States
    reached without it are never touched.
    """
    if state.outcome is not Outcome.ONGOING:
        return state
    t = _Tick(state, log, scratch)
    _avatar_phase(t, Action(action))
    _npc_phase(t)
    _collision_phase(t)
    t.s.tick += 1
    _termination_phase(t)
    s = t.s
    if t.died or t.new:
        if s.ndead > COMPACT_MIN_DEAD and 2 * s.ndead > len(s.instances):
            s.instances = [x for x in s.instances if x.alive]
            s.ndead = 0
        else:
            # resolved on first use; most rollout leaves are never stepped
            s.pending = (t.occ, t.died, t.new, t.base)
    else:
        s.occ = t.occ
    return s


def _avatar_phase(t: _Tick, action: Action) -> None:
    cg = t.cg
    i = t.avatar_index()
    if i < 0:
        return
    inst = t.s.instances[i]
    shooter = cg.classes[inst.kind] is SpriteClass.SHOOT_AVATAR
    fired = False
    if Action.UP <= action <= Action.RIGHT:
        d = action - 1
        t.own(i).orient = d
        for _ in range(t.n_moves(i)):
            if t.move(i, d) and cg.has_passive:
                _push(t, i, d)
    elif action == Action.USE and shooter:
        inst = t.s.instances[i]
        target = cg.spawn[inst.kind]
        if inst.cooldown == 0 and target >= 0:
            fired = True
            d = inst.orient
            nc, nr = inst.col + DX[d], inst.row + DY[d]
            if 0 <= nc < cg.width and 0 <= nr < cg.height:
                j = t.create(target, nc, nr, d)
                if j is not None:
                    # shots always travel the way the avatar faces
                    t.s.instances[j].orient = d
            t.own(i).cooldown = cg.cooldown[inst.kind]
    if shooter and not fired and t.s.instances[i].cooldown > 0:
        t.own(i).cooldown -= 1


def _push(t: _Tick, pusher: int, d: int) -> None:
    insts = t.s.instances
    p = insts[pusher]
    for kind in t.cg.passive_kinds:
        for j in t.occ.dyn_by_kind.get(kind, ()):
            other = insts[j]
            if other.alive and other.col == p.col and other.row == p.row:
                t.move(j, d)


def _npc_phase(t: _Tick) -> None:
    # hot loop: copy-on-write, movement and direction choice are inlined here
    cg = t.cg
    classes = cg.classes
    cooldowns = cg.cooldown
    speed_int = cg.speed_int
    width, height = cg.width, cg.height
    insts = t.s.instances
    tok = t.tok
    stamp = t.stamp
    seek = cg.seek_cache
    avatar = None
    moved = 0
    for i in t.occ.active:
        inst = insts[i]
        if not inst.alive:
            continue
        if inst.tok is not tok:
            inst = inst.copy(tok, stamp)
            insts[i] = inst
        elif inst.stamp != stamp:
            inst.pcol, inst.prow, inst.eos, inst.stamp = inst.col, inst.row, False, stamp
        if inst.cooldown > 0:
            inst.cooldown -= 1
            continue
        kind = inst.kind
        if cooldowns[kind]:
            inst.cooldown = cooldowns[kind]
        cls = classes[kind]
        if cls is SpriteClass.SPAWN_POINT:
            _spawn_point(t, i)
            continue
        n = speed_int[kind]
        if n is None:
            n = t.n_moves(i)
        if cls is SpriteClass.MISSILE:
            d = inst.orient
            for _ in range(n):
                nc, nr = inst.col + DX[d], inst.row + DY[d]
                if 0 <= nc < width and 0 <= nr < height:
                    inst.col, inst.row = nc, nr
                    moved += 1
                else:
                    inst.eos = True
            continue
        if avatar is None:
            a = t.avatar_index()
            avatar = insts[a].position if a >= 0 else False
        chase = cls is SpriteClass.CHASER
        for _ in range(n):
            if cls is SpriteClass.RANDOM_NPC or not avatar:
                d = t.rand(4)
            else:
                key = (inst.col, inst.row, avatar[0], avatar[1], chase)
                best = seek.get(key)
                if best is None:
                    best = seek[key] = _seek_dirs(inst.col, inst.row, avatar, chase, width, height)
                if len(best) == 1:
                    d = best[0]
                else:
                    d = t.rand(len(best)) if best else t.rand(4)
                    if best:
                        d = best[d]
            inst.orient = d
            nc, nr = inst.col + DX[d], inst.row + DY[d]
            if 0 <= nc < width and 0 <= nr < height:
                inst.col, inst.row = nc, nr
                moved += 1
            else:
                inst.eos = True
    t.version += moved


def _seek_dirs(col: int, row: int, avatar, chase: bool, width: int, height: int) -> tuple[int, ...]:
    """On-board directions with the best Manhattan distance to (chase) or from the avatar.

    Empty only when no step stays on the board; the caller then draws any direction.
    """
    ac, ar = avatar
    best: list[int] = []
    best_score = None
    for d in range(4):
        nc, nr = col + DX[d], row + DY[d]
        if not (0 <= nc < width and 0 <= nr < height):
            continue
        dist = abs(nc - ac) + abs(nr - ar)
        score = dist if chase else -dist
        if best_score is None or score < best_score:
            best, best_score = [d], score
        elif score == best_score:
            best.append(d)
    return tuple(best)


def _spawn_point(t: _Tick, i: int) -> None:
    cg = t.cg
    inst = t.s.instances[i]
    target = cg.spawn[inst.kind]
    if target < 0:
        return
    limit = cg.limit[inst.kind]
    if limit is not None and inst.spawned >= limit:
        return
    if t.at(inst.col, inst.row, target):
        return
    if t.create(target, inst.col, inst.row, inst.orient) is not None:
        t.own(i).spawned += 1


def _collision_phase(t: _Tick) -> None:
    """Apply interactions in description order to co-located pairs.

    Each interaction is matched against the board as it stands when that
    interaction's turn comes, so earlier effects (kills, step-backs) are
    visible to later ones. A pair fires at most once per interaction.
    """
    if not t.cg.interactions:
        return
    occ = t.occ
    static_cells = occ.cells
    static_kinds = occ.static_by_kind
    for idx, (a_kind, b_kind, effect, target, score) in enumerate(t.cg.interactions):
        insts = t.s.instances
        a_dyn = t.live_of_kind(a_kind)
        a_static = static_kinds.get(a_kind, ())
        if not a_dyn and not a_static:
            continue
        if b_kind < 0:
            for ai in a_dyn:
                a = insts[ai]
                if a.alive and a.eos and t.fresh(a):
                    _apply(t, idx, effect, target, score, ai, -1)
            continue
        b_static = b_kind in static_kinds
        b_live = t.live_of_kind(b_kind)
        if not b_static and not b_live:
            continue
        pairs: list[tuple[int, int]] = []
        if len(a_dyn) <= 2:
            # a direct scan beats building a cell map for one or two actors
            for ai in a_dyn:
                a = insts[ai]
                col, row = a.col, a.row
                if b_static:
                    for bj in static_cells.get((col, row, b_kind), ()):
                        pairs.append((ai, bj))
                for bj in b_live:
                    b = insts[bj]
                    if b.col == col and b.row == row and bj != ai:
                        pairs.append((ai, bj))
        else:
            b_cells = t.cell_map(b_kind)
            for ai in a_dyn:
                a = insts[ai]
                if b_static:
                    for bj in static_cells.get((a.col, a.row, b_kind), ()):
                        pairs.append((ai, bj))
                for bj in b_cells.get((a.col, a.row), ()):
                    if bj != ai:
                        pairs.append((ai, bj))
        if a_static:
            for bj in b_live:
                b = insts[bj]
                for ai in static_cells.get((b.col, b.row, a_kind), ()):
                    pairs.append((ai, bj))
            if b_static:
                pairs.extend(_static_pairs(occ, insts, a_kind, b_kind))
        for ai, bj in pairs:
            a, b = insts[ai], insts[bj]
            if a.alive and b.alive and a.col == b.col and a.row == b.row:
                _apply(t, idx, effect, target, score, ai, bj)


def _static_pairs(occ: _Occupancy, insts, a_kind: int, b_kind: int) -> list[tuple[int, int]]:
    """Co-located (a, b) pairs among static sprites present at the start of the tick."""
    key = (a_kind, b_kind)
    pairs = occ.static_pairs.get(key)
    if pairs is None:
        pairs = []
        cells = occ.cells
        for ai in occ.static_by_kind[a_kind]:
            a = insts[ai]
            for bj in cells.get((a.col, a.row, b_kind), ()):
                if bj != ai:
                    pairs.append((ai, bj))
        occ.static_pairs[key] = pairs
    return pairs


def _apply(t: _Tick, idx, effect, target, score, ai, bi) -> None:
    s = t.s
    a = s.instances[ai]
    other_id = s.instances[bi].id if bi >= 0 else -1
    if effect is Effect.KILL_SPRITE:
        t.kill(ai)
    elif effect is Effect.KILL_BOTH:
        t.kill(ai)
        if bi >= 0:
            t.kill(bi)
    elif effect is Effect.STEP_BACK:
        if t.fresh(a):
            a.col, a.row = a.pcol, a.prow
            t.version += 1
    elif effect is Effect.TRANSFORM_TO:
        col, row, orient = a.col, a.row, a.orient
        t.kill(ai)
        t.create(target, col, row, orient)
    elif effect is Effect.COLLECT_RESOURCE:
        kind = a.kind
        t.kill(ai)
        if bi >= 0:
            holder = t.own(bi)
            res = holder.resources or {}
            cap = t.cg.limit[kind]
            n = res.get(kind, 0) + 1
            res[kind] = n if cap is None else min(n, cap)
            holder.resources = res
    elif effect is Effect.SPAWN_BEHIND:
        col, row = (a.pcol, a.prow) if t.fresh(a) else (a.col, a.row)
        t.create(target, col, row, a.orient)
    s.score += score
    if t.log is not None:
        t.log.append(("interaction", s.tick, idx, a.id, other_id, score))


def _termination_phase(t: _Tick) -> None:
    s = t.s
    counts: dict[int, int] | None = None
    for idx, (kind, sprite, limit, win) in enumerate(t.cg.terminations):
        if kind is TerminationKind.TIMEOUT:
            hit = s.tick >= limit
        else:
            if counts is None:
                counts = _live_counts(t)
            hit = counts.get(sprite, 0) <= limit
        if hit:
            s.outcome = Outcome.WIN if win else Outcome.LOSS
            if t.log is not None:
                t.log.append(("termination", s.tick, idx, s.outcome.value))
            return
    if t.avatar_index() < 0:
        s.outcome = Outcome.LOSS
        if t.log is not None:
            t.log.append(("termination", s.tick, -1, s.outcome.value))


def _live_counts(t: _Tick) -> dict[int, int]:
    counts = dict(t.occ.counts)
    insts = t.s.instances
    for i in t.died:
        if i < t.base:
            counts[insts[i].kind] -= 1
    for i in t.new:
        if insts[i].alive:
            k = insts[i].kind
            counts[k] = counts.get(k, 0) + 1
    return counts

# ---------------------------------------------------------------------------
# playouts


class Agent(Protocol):
    def __call__(self, state: GameState) -> Action: ...


@dataclass(frozen=True)
class PlayoutResult:
    outcome: Outcome
    score: int
    moves: int

    @property
    def completed(self) -> bool:
        return self.outcome in (Outcome.WIN, Outcome.LOSS)


def playout(
    game: Game,
    agent: Callable[[GameState], Action],
    seed: int,
    move_cap: int = 700,
    log: list | None = None,
    wallclock_secs: float | None = None,
) -> PlayoutResult:
    """Let ``agent`` play until the game ends or ``move_cap`` moves are made.

    ``wallclock_secs`` adds a real-time limit as well. It makes results depend
    on the machine, so it is off unless asked for.
    """
    if move_cap < 1:
        raise ValueError("move_cap must be >= 1")
    deadline = None if wallclock_secs is None else time.monotonic() + wallclock_secs
    state = init_state(game, seed)
    moves = 0
    while state.outcome is Outcome.ONGOING and moves < move_cap:
        if deadline is not None and time.monotonic() >= deadline:
            break
        state = step(state, agent(state), log)
        moves += 1
    outcome = state.outcome if state.outcome is not Outcome.ONGOING else Outcome.CAPPED
    return PlayoutResult(outcome, state.score, moves)


def legal_actions(state: GameState) -> tuple[Action, ...]:
    cls = state.cg.classes[state.cg.avatar]
    if cls is SpriteClass.SHOOT_AVATAR:
        return tuple(Action)
    return tuple(a for a in Action if a is not Action.USE)
