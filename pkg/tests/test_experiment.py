import json
from dataclasses import replace

import pytest

from forge.agents import MctsParams
from forge.experiment import (
    METRIC_HEADERS,
    ExperimentConfig,
    read_playouts,
    render_csv,
    render_md,
    report,
    run_experiment,
)
from forge.forest import ForestParams
from forge.search import SearchConfig

FAST_MCTS = MctsParams(iterations_per_move=8, rollout_depth=5)


def _config(out, n=1, **kw):
    base = ExperimentConfig(
        n_iterations=n, out=str(out), move_cap=40, search=SearchConfig(threshold=0.0),
        forest=ForestParams(n_trees=10), mcts=FAST_MCTS,
    )
    return replace(base, **kw)


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    return out, run_experiment(_config(out), workers=1)


def test_config_round_trip(tmp_path):
    cfg = _config(tmp_path, 3, eval_seeds=(0, 4))
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


def test_config_rejects_unknown_variant(tmp_path):
    with pytest.raises(ValueError):
        _config(tmp_path, variants=("sometimes",))


def test_smoke_run_writes_everything(smoke):
    out, result = smoke
    assert result.complete
    assert result.labels == ["Human", "no-term. 1", "term. 1"]
    for name in ("config.json", "playouts.csv", "report.csv", "report.md", "report.json", "status.json"):
        assert (out / name).exists()
    for variant in ("noterm", "term"):
        for i in (0, 1):
            assert (out / variant / f"iter{i}" / "model.rf").exists()
    assert json.loads((out / "status.json").read_text())["complete"] is True


def test_tables_rebuild_from_playouts(smoke):
    out, result = smoke
    rows = read_playouts(out / "playouts.csv")
    assert render_md(rows) == (out / "report.md").read_text()
    assert render_csv(rows) == (out / "report.csv").read_text()
    assert report(out, "md") == (out / "report.md").read_text()


def test_markdown_shape(smoke):
    out, _ = smoke
    lines = report(out, "md").strip().splitlines()
    header = [c.strip() for c in lines[0].strip("|").split("|")]
    assert header[0] == "Row"
    assert len(header) == 1 + 2 * len(METRIC_HEADERS) == 9
    assert [h.split(" ", 1)[1] for h in header[1:5]] == list(METRIC_HEADERS)
    assert len(lines) == 2 + 3


def test_report_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        report(tmp_path)
    with pytest.raises(ValueError):
        report(tmp_path, "xml")


def test_same_seed_gives_identical_files(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(_config(a), workers=1)
    run_experiment(replace(_config(b)), workers=1)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert "config.json" in map(str, files)
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_five_iterations_both_variants_table_shape(tmp_path):
    result = run_experiment(_config(tmp_path, 5), workers=1)
    assert result.complete
    assert len(result.rows) == 11
    assert result.labels[0] == "Human"
    assert result.labels[1:6] == [f"no-term. {i}" for i in range(1, 6)]
    assert result.labels[6:] == [f"term. {i}" for i in range(1, 6)]


def test_single_variant(tmp_path):
    result = run_experiment(_config(tmp_path, variants=("term",)), workers=1)
    assert result.labels == ["Human", "term. 1"]


def test_budget_exhaustion_marks_incomplete(tmp_path):
    cfg = _config(tmp_path, 2, variants=("noterm",),
                  search=SearchConfig(threshold=1.0, max_steps=1, neighbors_per_step=1, max_restarts=0))
    result = run_experiment(cfg, workers=1)
    assert not result.complete
    assert result.labels == ["Human"]
    assert json.loads((tmp_path / "status.json").read_text())["complete"] is False
