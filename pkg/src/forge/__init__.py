"""Learned-fitness game generation: a small VGDL-style dialect, an engine,
a from-scratch random forest fitness, hill-climb search with adversarial
retraining, and MCTS/random evaluation agents."""

from .vgdl import Game, GameSpec, Level, load_game, parse_game, save_game, serialize_game

__version__ = "0.1.0"

__all__ = ["Game", "GameSpec", "Level", "load_game", "parse_game", "save_game", "serialize_game"]
