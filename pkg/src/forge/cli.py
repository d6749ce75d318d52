"""Command-line entry point: ``forge <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import forest as rf
from .agents import MctsParams, evaluate_batch, make_agent
from .corpus import default_path, load_corpus, most_common_level_size
from .engine import playout
from .experiment import RENDERERS, VARIANTS, ExperimentConfig, render_md, report, run_experiment
from .features import schema_default, vectorize, vectorize_many
from .generator import GenConfig
from .search import BudgetExhausted, ForestFitness, SearchConfig, generate_batch, random_batch
from .seeding import derive_seed
from .vgdl import GameError, load_game, save_game


def _schema(name: str):
    return schema_default(include_termination=VARIANTS[name])


def resolve_game(ref: str):
    """``corpus/<name>`` names a shipped game; anything else is a path stem."""
    if ref.startswith("corpus/"):
        return load_game(default_path() / ref.split("/", 1)[1])
    return load_game(ref)


def _games_in(directory) -> list:
    stems = sorted(p.with_suffix("") for p in Path(directory).glob("*.desc"))
    if not stems:
        raise FileNotFoundError(f"no .desc files in {directory}")
    return [load_game(s) for s in stems]


def _gen_config(args, corpus=None) -> GenConfig:
    if getattr(args, "size", None):
        w, h = (int(v) for v in args.size.lower().split("x"))
        return GenConfig(level_size=(w, h))
    return GenConfig(level_size=most_common_level_size(corpus or load_corpus()))


def cmd_gen(args) -> int:
    games = random_batch(_gen_config(args), derive_seed(args.seed, "gen"), args.count, "gen")
    for j, g in enumerate(games):
        save_game(g, Path(args.out) / f"game{j}")
    print(f"wrote {len(games)} games to {args.out}")
    return 0


def cmd_train(args) -> int:
    corpus = load_corpus()
    schema = _schema(args.schema)
    if args.generated:
        generated = _games_in(args.generated)
    else:
        generated = random_batch(_gen_config(args, corpus), derive_seed(args.seed, "init"), len(corpus))
    data = rf.Dataset.from_arrays(
        vectorize_many(corpus.games, schema), vectorize_many(generated, schema), schema.hash
    )
    forest = rf.fit(data, rf.ForestParams(n_trees=args.trees, seed=args.seed))
    rf.save(forest, args.out)
    print(f"trained {args.trees} trees on {len(corpus)} human + {len(generated)} generated games -> {args.out}")
    return 0


def cmd_search(args) -> int:
    schema = _schema(args.schema)
    forest = rf.load(args.model, schema)
    config = SearchConfig(threshold=args.threshold, batch_size=args.count, seed=args.seed)
    try:
        batch = generate_batch(
            ForestFitness(forest, schema), config, _gen_config(args), seed=derive_seed(args.seed, "search")
        )
    except BudgetExhausted as exc:
        print(f"search failed: {exc}", file=sys.stderr)
        return 1
    for j, g in enumerate(batch.games):
        save_game(g, Path(args.out) / f"game{j}")
    finals = ", ".join(f"{t[-1]:.2f}" for t in batch.traces)
    print(f"wrote {len(batch.games)} games to {args.out} (final fitness {finals}; {batch.restarts} restarts)")
    return 0


def cmd_vectorize(args) -> int:
    schema = _schema(args.schema)
    if args.index_map:
        print(schema.describe())
        return 0
    if not args.game:
        print("vectorize: a game is required unless --index-map is given", file=sys.stderr)
        return 2
    print(vectorize(resolve_game(args.game), schema).to_csv())
    return 0


def cmd_play(args) -> int:
    game = resolve_game(args.game)
    agent = make_agent(args.agent, args.seed, MctsParams(iterations_per_move=args.iterations_per_move))
    res = playout(game, agent, args.seed, args.move_cap, wallclock_secs=args.wallclock_secs)
    print(f"game={game.name} agent={args.agent} seed={args.seed} "
          f"outcome={res.outcome.value} score={res.score} moves={res.moves}")
    return 0


def cmd_evaluate(args) -> int:
    if args.games.startswith("corpus"):
        games = load_corpus().games
    else:
        games = _games_in(args.games)
    rep = evaluate_batch(games, tuple(args.seeds), move_cap=args.move_cap, label=args.label,
                         wallclock_secs=args.wallclock_secs)
    sys.stdout.write(RENDERERS[args.format]([rep]))
    return 0


def cmd_report(args) -> int:
    sys.stdout.write(report(args.run_dir, args.format))
    return 0


def cmd_run(args) -> int:
    if args.config:
        config = ExperimentConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    else:
        config = ExperimentConfig()
    data = config.to_dict()
    if args.variant:
        data["variants"] = [args.variant]
    for flag, key in (("iterations", "n_iterations"), ("seed", "seed"), ("out", "out"),
                      ("move_cap", "move_cap"), ("wallclock_secs", "wallclock_secs")):
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if args.threshold is not None:
        data["search"]["threshold"] = args.threshold
    if args.trees is not None:
        data["forest"]["n_trees"] = args.trees
    config = ExperimentConfig.from_dict(data)
    say = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    result = run_experiment(config, progress=say)
    sys.stdout.write(render_md(result.rows))
    if not result.complete:
        print(f"experiment incomplete: {result.message}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forge", description="Learned-fitness game generation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def schema_flag(sp):
        sp.add_argument("--schema", choices=sorted(VARIANTS), default="term",
                        help="feature schema: with (term) or without (noterm) termination features")

    g = sub.add_parser("gen", help="write random games")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=8)
    g.add_argument("--size", help="level size WxH (default: corpus's most common size)")
    g.set_defaults(fn=cmd_gen)

    t = sub.add_parser("train", help="fit a forest on the corpus versus generated games")
    t.add_argument("--out", required=True, help="model file to write")
    t.add_argument("--generated", help="directory of generated games (default: fresh random games)")
    t.add_argument("--trees", type=int, default=100)
    t.add_argument("--seed", type=int, default=0)
    schema_flag(t)
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("search", help="hill-climb a batch of games under a trained forest")
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--threshold", type=float, default=0.95)
    s.add_argument("--count", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", help="level size WxH (default: corpus's most common size)")
    schema_flag(s)
    s.set_defaults(fn=cmd_search)

    v = sub.add_parser("vectorize", help="print a game's feature vector as CSV")
    v.add_argument("game", nargs="?", help="corpus/<name> or a path stem")
    v.add_argument("--index-map", action="store_true", help="print index -> feature name instead")
    schema_flag(v)
    v.set_defaults(fn=cmd_vectorize)

    pl = sub.add_parser("play", help="play one game with one agent")
    pl.add_argument("--game", required=True, help="corpus/<name> or a path stem")
    pl.add_argument("--agent", choices=("mcts", "random"), default="mcts")
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--move-cap", type=int, default=700)
    pl.add_argument("--iterations-per-move", type=int, default=100)
    pl.add_argument("--wallclock-secs", type=float, default=None)
    pl.set_defaults(fn=cmd_play)

    e = sub.add_parser("evaluate", help="play a directory of games with both agents")
    e.add_argument("games", help="directory of .desc/.lvl pairs, or 'corpus'")
    e.add_argument("--seeds", type=int, nargs="+", default=[0])
    e.add_argument("--move-cap", type=int, default=700)
    e.add_argument("--label", default="batch")
    e.add_argument("--format", choices=sorted(RENDERERS), default="md")
    e.add_argument("--wallclock-secs", type=float, default=None)
    e.set_defaults(fn=cmd_evaluate)

    r = sub.add_parser("report", help="re-render tables from an experiment directory")
    r.add_argument("run_dir")
    r.add_argument("--format", choices=sorted(RENDERERS), default="md")
    r.set_defaults(fn=cmd_report)

    x = sub.add_parser("run", help="run the full experiment")
    x.add_argument("--config", help="JSON experiment config; flags override it")
    x.add_argument("--variant", choices=sorted(VARIANTS), help="run one variant (default: both)")
    x.add_argument("--iterations", type=int)
    x.add_argument("--seed", type=int)
    x.add_argument("--out")
    x.add_argument("--threshold", type=float)
    x.add_argument("--trees", type=int)
    x.add_argument("--move-cap", type=int)
    x.add_argument("--wallclock-secs", type=float)
    x.add_argument("--quiet", action="store_true")
    x.set_defaults(fn=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (GameError, FileNotFoundError, ValueError) as exc:
        print(f"forge {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
