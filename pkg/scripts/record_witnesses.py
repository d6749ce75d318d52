"""Regenerate corpus/witness/<name>.moves by letting MCTS play each game.

A witness is kept only if replaying it from engine seed 0 ends in a Win.
"""

import sys

from forge.agents import make_agent
from forge.corpus import WITNESS_SEED, default_path, format_moves, load_corpus, replay
from forge.engine import Outcome, init_state, step


def record(game, agent_seed, cap=700):
    agent = make_agent("mcts", agent_seed)
    state = init_state(game, WITNESS_SEED)
    moves = []
    while not state.is_terminal and len(moves) < cap:
        a = agent(state)
        moves.append(a)
        state = step(state, a)
    return moves if state.outcome is Outcome.WIN else None


def main(names):
    corpus = load_corpus()
    out = default_path() / "witness"
    out.mkdir(exist_ok=True)
    for game in corpus.games:
        if names and game.name not in names:
            continue
        for agent_seed in range(20):
            moves = record(game, agent_seed)
            if moves and replay(game, moves).outcome is Outcome.WIN:
                (out / f"{game.name}.moves").write_text(format_moves(moves), encoding="utf-8")
                print(f"{game.name}: {len(moves)} moves (agent seed {agent_seed})")
                break
        else:
            print(f"{game.name}: no winning sequence found", file=sys.stderr)


if __name__ == "__main__":
    main(sys.argv[1:])
