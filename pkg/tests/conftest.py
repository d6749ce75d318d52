import random

import pytest

from forge.corpus import load_corpus
from forge.generator import GenConfig, random_game
from forge.vgdl import parse_game

MINIMAL_DESC = """\
SpriteSet
    a > MovingAvatar
    w > Immovable
InteractionSet
    a w > StepBack
TerminationSet
    Timeout limit=100 win=True
    SpriteCounter sprite=a limit=0 win=False
LevelMapping
    A > a
    W > w
"""

MINIMAL_LVL = "WWW\nWAW\nWWW\n"

# avatar three cells left of a goal it collects for a win
CORRIDOR_DESC = """\
SpriteSet
    avatar > MovingAvatar
    wall > Immovable
    goal > Portal
InteractionSet
    avatar wall > StepBack
    avatar EOS > StepBack
    goal avatar > KillSprite score=1
TerminationSet
    SpriteCounter sprite=goal limit=0 win=True
    Timeout limit=50 win=False
LevelMapping
    A > avatar
    w > wall
    g > goal
"""

CORRIDOR_LVL = "wwwwwww\nwA..gww\nwwwwwww\n"


def timeout_game(limit: int, name: str = "timeout", win: bool = True):
    desc = f"""\
SpriteSet
    avatar > MovingAvatar
InteractionSet
    avatar EOS > StepBack
TerminationSet
    Timeout limit={limit} win={win}
    SpriteCounter sprite=avatar limit=0 win={not win}
LevelMapping
    A > avatar
"""
    return parse_game(desc, "...\n.A.\n...\n", name)


def unreachable_game(name: str = "stuck"):
    """Neither termination can ever fire."""
    desc = """\
SpriteSet
    avatar > MovingAvatar
    rock > Immovable
InteractionSet
    avatar EOS > StepBack
    avatar rock > StepBack
TerminationSet
    SpriteCounter sprite=rock limit=0 win=True
    Timeout limit=100000 win=False
LevelMapping
    A > avatar
    r > rock
"""
    return parse_game(desc, "r..\n.A.\n...\n", name)


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def minimal_game():
    return parse_game(MINIMAL_DESC, MINIMAL_LVL, "minimal")


@pytest.fixture(scope="session")
def corridor_game():
    return parse_game(CORRIDOR_DESC, CORRIDOR_LVL, "corridor")


@pytest.fixture(scope="session")
def gen_config():
    return GenConfig(level_size=(12, 9))


@pytest.fixture(scope="session")
def random_games(gen_config):
    rng = random.Random(1234)
    return [random_game(gen_config, rng, name=f"r{i}") for i in range(100)]


# ---------------------------------------------------------------------------
# acceptance verdicts: one line per criterion, printed after the run

ACCEPTANCE: dict[int, str] = {}


class Verdict:
    def __init__(self, number: int):
        self.number = number
        self.line: str | None = None

    def check(self, ok: bool, detail: str) -> None:
        self.line = f"{'PASS' if ok else 'FAIL'}  criterion {self.number}: {detail}"
        assert ok, detail


@pytest.fixture
def verdict(request):
    marker = request.node.get_closest_marker("criterion")
    v = Verdict(marker.args[0])
    yield v
    ACCEPTANCE[v.number] = v.line or f"FAIL  criterion {v.number}: raised before reaching a verdict"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
