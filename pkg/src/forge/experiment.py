"""End-to-end experiment: adversarial loop per variant, then evaluation tables.

Everything a table shows is recomputable from ``playouts.csv`` in the output
directory, and nothing written depends on wall-clock time.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import forest as rf
from .agents import AGENTS, AgentMetrics, IterationReport, MctsParams, PlayoutRecord, evaluate_many
from .corpus import Corpus, load_corpus
from .features import schema_default
from .generator import GenConfig
from .search import BudgetExhausted, SearchConfig, adversarial_loop
from .seeding import derive_seed

VARIANTS = {"noterm": False, "term": True}
ROW_PREFIX = {"noterm": "no-term.", "term": "term."}
METRIC_HEADERS = ("Games Completed", "Avg Score", "Max Score", "Avg Num Moves")


@dataclass
class ExperimentConfig:
    variants: tuple[str, ...] = ("noterm", "term")
    n_iterations: int = 5
    seed: int = 0
    out: str = "runs/demo"
    move_cap: int = 700
    eval_seeds: tuple[int, ...] = (0,)
    wallclock_secs: float | None = None
    corpus_path: str | None = None
    generator: GenConfig = field(default_factory=GenConfig)
    forest: rf.ForestParams = field(default_factory=rf.ForestParams)
    search: SearchConfig = field(default_factory=SearchConfig)
    mcts: MctsParams = field(default_factory=MctsParams)

    def __post_init__(self):
        self.variants = tuple(self.variants)
        self.eval_seeds = tuple(self.eval_seeds)
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown or not self.variants:
            raise ValueError(f"variants must be drawn from {sorted(VARIANTS)}, got {self.variants}")
        if self.n_iterations < 1 or self.move_cap < 1 or not self.eval_seeds:
            raise ValueError("n_iterations, move_cap and eval_seeds must be positive/non-empty")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, with_out: bool = True) -> str:
        data = self.to_dict()
        if not with_out:
            del data["out"]
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        nested = {
            "generator": GenConfig,
            "forest": rf.ForestParams,
            "search": SearchConfig,
            "mcts": MctsParams,
        }
        for key, typ in nested.items():
            if key in data and isinstance(data[key], dict):
                sub = {k: tuple(v) if isinstance(v, list) else v for k, v in data[key].items()}
                data[key] = typ(**sub)
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class ExperimentReport:
    rows: list[IterationReport]
    complete: bool
    message: str = ""

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.rows]


# ---------------------------------------------------------------------------
# tables


def _pm(mean: float, std: float) -> str:
    return f"{mean:.2f} ± {std:.2f}"


def _cells(m: AgentMetrics) -> list[str]:
    return [
        str(m.games_completed),
        _pm(m.avg_score, m.std_score),
        f"{m.max_score:g}",
        _pm(m.avg_moves, m.std_moves),
    ]


def table_rows(rows: Sequence[IterationReport]) -> tuple[list[str], list[list[str]]]:
    header = ["Row"] + [f"{a} {h}" for a in AGENTS for h in METRIC_HEADERS]
    body = [[r.label] + _cells(r.mcts) + _cells(r.random) for r in rows]
    return header, body


def render_csv(rows: Sequence[IterationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["row"]
        + [
            f"{a.lower()}_{k}"
            for a in AGENTS
            for k in ("games_completed", "avg_score", "std_score", "max_score", "avg_moves", "std_moves")
        ]
    )
    for r in rows:
        line = [r.label]
        for m in (r.mcts, r.random):
            line += [m.games_completed, repr(m.avg_score), repr(m.std_score), repr(float(m.max_score)),
                     repr(m.avg_moves), repr(m.std_moves)]
        w.writerow(line)
    return buf.getvalue()


def render_md(rows: Sequence[IterationReport]) -> str:
    header, body = table_rows(rows)
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in body]
    return "\n".join(lines) + "\n"


def render_json(rows: Sequence[IterationReport]) -> str:
    return json.dumps([r.to_dict() for r in rows], indent=2, sort_keys=True) + "\n"


RENDERERS = {"csv": render_csv, "md": render_md, "json": render_json}


# ---------------------------------------------------------------------------
# playout log


PLAYOUT_FIELDS = ("row", "agent", "game_index", "game_name", "seed", "outcome", "score", "moves")


def write_playouts(rows: Sequence[IterationReport], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLAYOUT_FIELDS)
    for r in rows:
        for p in r.records:
            w.writerow([r.label, p.agent, p.game_index, p.game_name, p.seed, p.outcome, p.score, p.moves])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_playouts(path) -> list[IterationReport]:
    """Rebuild per-row reports from a playout log, keeping row order."""
    grouped: dict[str, list[PlayoutRecord]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            grouped.setdefault(rec["row"], []).append(
                PlayoutRecord(
                    rec["agent"], int(rec["game_index"]), rec["game_name"], int(rec["seed"]),
                    rec["outcome"], int(rec["score"]), int(rec["moves"]),
                )
            )
    return [IterationReport.from_records(label, recs) for label, recs in grouped.items()]


def report(out_dir, fmt: str = "md") -> str:
    """Re-render the combined table from ``out_dir/playouts.csv``."""
    if fmt not in RENDERERS:
        raise ValueError(f"unknown format {fmt!r}; choose from {sorted(RENDERERS)}")
    path = Path(out_dir) / "playouts.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; is {out_dir} an experiment directory?")
    return RENDERERS[fmt](read_playouts(path))


# ---------------------------------------------------------------------------
# driver


def _write_outputs(out: Path, rows: list[IterationReport], status: dict) -> None:
    write_playouts(rows, out / "playouts.csv")
    for fmt, render in RENDERERS.items():
        (out / f"report.{fmt}").write_text(render(rows), encoding="utf-8")
    (out / "status.json").write_text(json.dumps(status, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_experiment(
    config: ExperimentConfig,
    corpus: Corpus | None = None,
    workers: int | None = None,
    progress: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Run every configured variant and write the archive plus combined tables.

    A variant whose search exhausts its restart budget stops early. Its
    finished iterations are still archived and evaluated, and the report is
    flagged incomplete.
    """
    say = progress or (lambda msg: None)
    corpus = corpus or load_corpus(config.corpus_path)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    # the archive does not name its own location, so runs compare byte for byte anywhere
    (out / "config.json").write_text(config.to_json(with_out=False), encoding="utf-8")

    batches = [("Human", corpus.games)]
    complete = True
    message = ""
    for variant in config.variants:
        schema = schema_default(include_termination=VARIANTS[variant])
        say(f"variant {variant}: schema length {schema.total_length}")
        try:
            archive = adversarial_loop(
                corpus, config.generator, config.forest, config.search, config.n_iterations,
                schema=schema, seed=derive_seed(config.seed, "variant", variant), workers=workers,
                progress=lambda msg, v=variant: say(f"[{v}] {msg}"),
            )
        except BudgetExhausted as exc:
            archive = exc.archive
            complete = False
            message += f"{variant}: {exc}\n"
            say(f"variant {variant} stopped early: {exc}")
        archive.save(out / variant)
        for i, batch in enumerate(archive.batches, 1):
            batches.append((f"{ROW_PREFIX[variant]} {i}", batch))

    # one pool for every row, so a slow game never idles the other workers
    say(f"evaluating {len(batches)} rows")
    rows = evaluate_many(
        batches, config.eval_seeds, config.mcts, config.move_cap, workers, config.wallclock_secs
    )
    for rep in rows:
        say(f"{rep.label}: MCTS completed {rep.mcts.games_completed}, "
            f"Random completed {rep.random.games_completed}")

    status = {
        "complete": complete,
        "message": message.strip(),
        "rows": [r.label for r in rows],
    }
    _write_outputs(out, rows, status)
    return ExperimentReport(rows, complete, message.strip())
