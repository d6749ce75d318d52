import shutil

import pytest

from forge.corpus import (
    CORPUS_SIZE,
    PROVENANCE,
    UnplayableGame,
    WrongCount,
    crash_check,
    default_path,
    format_moves,
    load_corpus,
    load_witness,
    most_common_level_size,
    parse_moves,
    witness_outcome,
)
from forge.engine import Action, Outcome
from forge.vgdl import GameError, Level


def test_shipped_corpus_has_eight_games(corpus):
    assert len(corpus) == CORPUS_SIZE == 8
    assert sorted(corpus.names) == sorted(PROVENANCE)
    assert all(corpus.notes[n] for n in corpus.names)


@pytest.mark.parametrize("name", sorted(PROVENANCE))
def test_witness_replays_to_win(corpus, name):
    assert witness_outcome(corpus.get(name)) is Outcome.WIN


def test_chase_witness(corpus):
    moves = load_witness("chase")
    assert moves
    assert witness_outcome(corpus.get("chase")) is Outcome.WIN


def test_seven_pairs_is_wrong_count(tmp_path):
    src = default_path()
    for stem in sorted(p.stem for p in src.glob("*.desc"))[:7]:
        shutil.copy(src / f"{stem}.desc", tmp_path)
        shutil.copy(src / f"{stem}.lvl", tmp_path)
    with pytest.raises(WrongCount):
        load_corpus(tmp_path)


def test_missing_level_is_wrong_count(tmp_path):
    src = default_path()
    for p in src.glob("*.desc"):
        shutil.copy(p, tmp_path)
        if p.stem != "push":
            shutil.copy(p.with_suffix(".lvl"), tmp_path)
    with pytest.raises(WrongCount):
        load_corpus(tmp_path)


def test_parse_error_passes_through(tmp_path):
    src = default_path()
    for p in src.glob("*.desc"):
        shutil.copy(p, tmp_path)
        shutil.copy(p.with_suffix(".lvl"), tmp_path)
    (tmp_path / "chase.lvl").write_text("ww\nwww\n")
    with pytest.raises(GameError):
        load_corpus(tmp_path)


def test_crash_check_flags_engine_errors(corpus, monkeypatch):
    import forge.corpus as mod

    def boom(state, action):
        raise RuntimeError("engine fault")

    monkeypatch.setattr(mod, "step", boom)
    with pytest.raises(UnplayableGame):
        crash_check(corpus.get("chase"))


def test_modal_size_of_shipped_corpus(corpus):
    sizes = [g.level.size for g in corpus.games]
    assert sizes.count((12, 9)) == 3
    assert all(sizes.count(s) == 1 for s in sizes if s != (12, 9))
    assert most_common_level_size(corpus) == (12, 9)


class _G:
    def __init__(self, w, h):
        self.level = Level(tuple("." * w for _ in range(h)))


def test_modal_size_ties_prefer_area_then_width():
    assert most_common_level_size([_G(3, 4), _G(5, 2), _G(2, 7)]) == (2, 7)
    assert most_common_level_size([_G(3, 4), _G(4, 3)]) == (4, 3)
    assert most_common_level_size([_G(6, 6)]) == (6, 6)
    assert most_common_level_size([_G(2, 2), _G(2, 2), _G(9, 9)]) == (2, 2)


def test_modal_size_empty():
    with pytest.raises(ValueError):
        most_common_level_size([])


def test_moves_round_trip():
    moves = [Action.UP, Action.NIL, Action.USE, Action.RIGHT]
    assert parse_moves(format_moves(moves)) == moves
    with pytest.raises(ValueError):
        parse_moves("Up\nJump\n")
