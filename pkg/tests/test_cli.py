import csv
import hashlib
import itertools
import time

import numpy as np
import pytest
import yaml

from defectlab import cli, pipeline
from defectlab.config import OUT_ENV, RunConfig, load_config, parse_config
from defectlab.dataset import read_csv
from defectlab.errors import ConfigError
from defectlab.report import ScoreRow, format_scores, num
from defectlab.stats import kruskal_wallis, mann_whitney

FAST_MODELS = [{"kind": "NB"}, {"kind": "DT"}, {"kind": "RF", "n_trees": 20}]


def write_config(path, bank_repo, bank_issues, **extra):
    raw = {"projects": [{"name": "bank", "path": str(bank_repo[0]), "issues": str(bank_issues)}], "models": FAST_MODELS}
    raw.update(extra)
    path.write_text(yaml.safe_dump(raw))
    return path


def tree_digest(root, skip=()):
    out = {}
    for p in sorted(root.rglob("*")):
        rel = p.relative_to(root)
        if p.is_file() and not any(part in skip for part in rel.parts):
            out[str(rel)] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="module")
def pipeline_run(bank_repo, bank_issues, tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    config = write_config(root / "run.yaml", bank_repo, bank_issues)
    runs = []
    for name in ("first", "second"):
        assert cli.main(["pipeline", "--config", str(config), "--out", str(root / name)]) == 0
        runs.append(root / name)
    return runs


def test_pipeline_dataset_matches_golden(pipeline_run, fixtures_dir):
    raw = pipeline_run[0] / "bank" / "dataset" / "dataset_raw.csv"
    assert raw.read_bytes() == (fixtures_dir / "golden_dataset.csv").read_bytes()
    assert len(read_csv(pipeline_run[0] / "bank" / "dataset" / "dataset.csv")) == 12


def test_pipeline_layout(pipeline_run):
    run = pipeline_run[0]
    expected = [
        "bank/mine/windows.csv",
        "bank/mine/fix_commits.csv",
        "bank/mine/release-0/labels.csv",
        "bank/mine/release-2/provenance.csv",
        "bank/metrics/release-1/metrics.csv",
        "bank/dataset/dataset.csv",
        "bank/importance/vif.csv",
        "bank/importance/importance.csv",
        "bank/importance/screening.csv",
        "report/score_summary.csv",
        "report/significance.csv",
        "report/vif.csv",
        "report/rank_summary.csv",
        "report/report.md",
        "report/figures/scores_f_minority.svg",
        "report/figures/scores_auc_weighted.svg",
    ]
    expected += [f"bank/evaluate/{s}/scores.csv" for s in ("LOC", "CK", "OTHER", "CK+OTHER")]
    missing = [p for p in expected if not (run / p).is_file()]
    assert not missing


def test_pipeline_byte_identical(pipeline_run):
    first, second = (tree_digest(r) for r in pipeline_run)
    assert first == second


def test_evaluate_loc_suite_uses_only_loc(pipeline_run, tmp_path, monkeypatch):
    seen = []
    real = pipeline.cross_validate

    def spy(data, spec, k, seed, features=None):
        seen.append(tuple(data.feature_names) if features is None else tuple(features))
        return real(data, spec, k, seed, features)

    monkeypatch.setattr(pipeline, "cross_validate", spy)
    dataset = pipeline_run[0] / "bank" / "dataset" / "dataset.csv"
    assert cli.main(["evaluate", str(dataset), "--suite", "LOC", "--out", str(tmp_path)]) == 0
    assert seen and all(f == ("LOC",) for f in seen)
    rows = list(csv.DictReader(open(tmp_path / "bank" / "evaluate" / "LOC" / "scores.csv")))
    assert {r["suite"] for r in rows} == {"LOC"}
    assert (tmp_path / "bank" / "evaluate" / "LOC" / "scores.csv").read_bytes() == (
        pipeline_run[0] / "bank" / "evaluate" / "LOC" / "scores.csv"
    ).read_bytes()


def test_stages_rerun_from_intermediates(pipeline_run, tmp_path):
    """Deleting downstream outputs and rerunning stage by stage reproduces them."""
    import shutil

    work = tmp_path / "w"
    shutil.copytree(pipeline_run[0], work)
    shutil.rmtree(work / "bank" / "metrics")
    shutil.rmtree(work / "bank" / "dataset")
    out = ["--out", str(work)]
    assert cli.main(["metrics", "bank", *out]) == 0
    assert cli.main(["dataset", "bank", *out]) == 0
    assert tree_digest(work / "bank" / "dataset") == tree_digest(pipeline_run[0] / "bank" / "dataset")


# -- report over hand-built scores ----------------------------------------------------


def hand_scores(tmp_path):
    rng = np.random.default_rng(17)
    for project, shift in (("alpha", 0.0), ("beta", 0.1)):
        rows = []
        for suite in ("LOC", "CK"):
            for m, model in enumerate(("NB", "DT", "RF")):
                for fold in range(10):
                    f = float(np.clip(0.3 + 0.2 * m + shift + rng.normal(0, 0.05), 0, 1))
                    a = float(np.clip(0.5 + 0.1 * m + rng.normal(0, 0.05), 0, 1))
                    rows.append(ScoreRow(project, suite, model, fold, f, f, f, a))
        target = tmp_path / project / "evaluate"
        for suite in ("LOC", "CK"):
            (target / suite).mkdir(parents=True)
            (target / suite / "scores.csv").write_text(format_scores(r for r in rows if r.suite == suite))


def test_report_significance_equals_direct_calls(tmp_path):
    hand_scores(tmp_path)
    before = tree_digest(tmp_path)
    assert cli.main(["report", str(tmp_path)]) == 0
    assert tree_digest(tmp_path, skip={"report"}) == before

    pooled = {}
    for path in sorted(tmp_path.glob("*/evaluate/*/scores.csv")):
        for rec in csv.DictReader(open(path)):
            for metric in ("f_minority", "auc_weighted"):
                pooled.setdefault((rec["suite"], metric, rec["model"]), []).append(float(rec[metric]))

    table = list(csv.DictReader(open(tmp_path / "report" / "significance.csv")))
    assert len(table) == 2 * 2 * 4
    for row in table:
        key = (row["suite"], row["metric"])
        models = row["groups"].split(" vs ")
        groups = [pooled[(*key, m)] for m in models]
        direct = mann_whitney(*groups) if row["test"] == "mann-whitney" else kruskal_wallis(groups)
        assert (row["statistic"], row["p_value"], row["significant"]) == (
            num(direct.statistic), num(direct.p_value), str(int(direct.significant))
        )
    pairs = {r["groups"] for r in table if r["test"] == "mann-whitney"}
    assert pairs == {f"{a} vs {b}" for a, b in itertools.combinations(("NB", "DT", "RF"), 2)}
    assert (tmp_path / "report" / "figures" / "scores_auc_weighted.svg").read_text().startswith("<svg")


def test_report_needs_scores(tmp_path):
    assert cli.main(["report", str(tmp_path)]) == 2


# -- exit codes and config -----------------------------------------------------------


def test_usage_errors_exit_1(capsys):
    assert cli.main([]) == 1
    assert cli.main(["evaluate", "x.csv", "--suite", "NOPE"]) == 1
    assert cli.main(["report", "--config", "/nonexistent/run.yaml"]) == 1


def test_missing_dataset_exits_2(tmp_path):
    assert cli.main(["evaluate", str(tmp_path / "absent.csv"), "--suite", "LOC", "--out", str(tmp_path)]) == 2


def test_malformed_dataset_exits_2(tmp_path):
    (tmp_path / "d.csv").write_text("not,a,dataset\n")
    assert cli.main(["importance", str(tmp_path / "d.csv"), "--out", str(tmp_path)]) == 2


def test_internal_error_exits_3(tmp_path, monkeypatch):
    def boom(*_a, **_k):
        raise RuntimeError("unexpected")

    monkeypatch.setattr(pipeline, "run_report", boom)
    assert cli.main(["report", str(tmp_path)]) == 3


def test_bad_config_values_exit_1(tmp_path):
    for body in ("k: 1\n", "vif: {investigate: 12, severe: 10}\n", "colour: blue\n", "[1, 2]\n", "suites: [XYZ]\n"):
        (tmp_path / "c.yaml").write_text(body)
        assert cli.main(["report", str(tmp_path), "--config", str(tmp_path / "c.yaml")]) == 1, body


def test_pipeline_without_projects_exit_1(tmp_path):
    (tmp_path / "c.yaml").write_text("seed: 3\n")
    assert cli.main(["pipeline", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path)]) == 1


def test_metrics_source_tree_mode(corpus_dir, tmp_path, fixtures_dir):
    target = tmp_path / "m.csv"
    assert cli.main(["metrics", str(corpus_dir), "-o", str(target)]) == 0
    assert target.read_text() == (fixtures_dir / "golden_metrics.csv").read_text()


def test_output_root_precedence(monkeypatch, tmp_path):
    config = parse_config({"output": "from-config"}, tmp_path)
    monkeypatch.delenv(OUT_ENV, raising=False)
    assert config.output_root() == tmp_path / "from-config"
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "from-env"))
    assert config.output_root() == tmp_path / "from-env"
    assert config.output_root(tmp_path / "flag") == tmp_path / "flag"
    assert RunConfig().output_root() == tmp_path / "from-env"


def test_env_var_redirects_stage_output(pipeline_run, tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "envout"))
    dataset = pipeline_run[0] / "bank" / "dataset" / "dataset.csv"
    assert cli.main(["evaluate", str(dataset), "--suite", "LOC"]) == 0
    assert (tmp_path / "envout" / "bank" / "evaluate" / "LOC" / "scores.csv").is_file()


def test_config_defaults_and_overrides(tmp_path):
    (tmp_path / "c.yaml").write_text(
        "projects: [{name: p, path: repo}]\nk: 5\nrepeats: 3\ninterval_months: 3\n"
        "models: [NB, {kind: RF, name: forest, n_trees: 7}]\nimportance_model: forest\nvif: {investigate: 3}\n"
    )
    config = load_config(tmp_path / "c.yaml")
    assert (config.k, config.repeats, config.interval_months, config.vif_investigate, config.vif_severe) == (5, 3, 3, 3.0, 10.0)
    assert config.projects[0].path == tmp_path / "repo"
    assert config.model("forest").n_trees == 7
    defaults = RunConfig()
    assert (defaults.k, defaults.repeats, defaults.interval_months, defaults.vif_investigate, defaults.vif_severe) == (10, 10, 6, 2.5, 10.0)
    with pytest.raises(ConfigError):
        parse_config({"models": [{"kind": "RF", "trees": 3}]})


def test_parallel_pipeline_matches_serial(bank_repo, bank_issues, tmp_path, pipeline_run):
    config = write_config(tmp_path / "run.yaml", bank_repo, bank_issues)
    start = time.perf_counter()
    assert cli.main(["pipeline", "--config", str(config), "--out", str(tmp_path / "par"), "--jobs", "2"]) == 0
    assert time.perf_counter() - start < 60
    assert tree_digest(tmp_path / "par") == tree_digest(pipeline_run[0])
