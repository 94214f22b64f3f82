"""Acceptance criteria 1-10.

Every test prints exactly one ``CRITERION n: PASS|FAIL ...`` line (also
repeated in the pytest terminal summary) and then asserts the verdict.
Run with ``pytest -s tests/test_acceptance.py`` to see the lines inline.
"""

import csv
import hashlib
import itertools
import math
import time

import numpy as np
import pytest
import yaml

from conftest import VERDICTS
from constructions import blobs, loc_separable, planted, shuffled, xor
from defectlab import cli
from defectlab.dataset import SUITES
from defectlab.javamodel import build_project_model, load_snapshot
from defectlab.learn import ModelSpec, cross_validate, fit, permutation_importance
from defectlab.metrics import compute_all, format_metrics_csv
from defectlab.stats import IMPORTANCE_CANDIDATES, VifReport, kruskal_wallis, mann_whitney, screen_features, vif_flag, vif_table
from defectlab.synthetic import synthetic_benchmark
from oracles import brute_vif, exact_mann_whitney_p, kruskal_h_no_ties


def verdict(number, ok, detail):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    VERDICTS.append(line)
    assert ok, line


def digest(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.rglob("*")) if p.is_file()}


def mean_of(reports, metric):
    return float(np.mean([r.value(metric) for r in reports]))


# -- 1 ------------------------------------------------------------------------------


def test_criterion_1_golden_metrics(corpus_dir, fixtures_dir):
    start = time.perf_counter()
    entities, _ = load_snapshot(corpus_dir)
    table = format_metrics_csv(compute_all(build_project_model(entities)))
    elapsed = time.perf_counter() - start
    golden = (fixtures_dir / "golden_metrics.csv").read_text()
    classes = len(golden.splitlines()) - 1
    verdict(1, table == golden and classes >= 20 and elapsed < 5,
            f"golden match={table == golden}, classes={classes}, runtime={elapsed:.2f}s (<5s)")


# -- 2 ------------------------------------------------------------------------------


def test_criterion_2_conservation(corpus_dir, bank_repo, tmp_path):
    snapshots = {"corpus": corpus_dir}
    root, tags = bank_repo
    import subprocess

    for tag in sorted(tags):
        dest = tmp_path / tag
        dest.mkdir()
        archive = subprocess.run(["git", "-C", str(root), "archive", tags[tag]], check=True, capture_output=True).stdout
        subprocess.run(["tar", "-x", "-C", str(dest)], input=archive, check=True)
        snapshots[tag] = dest
    failures = []
    for name, path in snapshots.items():
        model = build_project_model(load_snapshot(path)[0])
        v = compute_all(model)
        if not (sum(x.NOC for x in v) == len(model.inherits) and sum(x.CBO for x in v) == sum(x.CBOI for x in v) == len(model.uses)):
            failures.append(name)
    verdict(2, not failures, f"{len(snapshots)} snapshots checked, violations={failures}")


# -- 3 ------------------------------------------------------------------------------


def test_criterion_3_fixture_pipeline(bank_repo, bank_issues, manifest, tmp_path):
    root, tags = bank_repo
    config = tmp_path / "run.yaml"
    config.write_text(yaml.safe_dump({"projects": [{"name": "bank", "path": str(root), "issues": str(bank_issues)}], "seed": 0}))
    start = time.perf_counter()
    codes = [cli.main(["pipeline", "--config", str(config), "--out", str(tmp_path / run)]) for run in ("a", "b")]
    elapsed = (time.perf_counter() - start) / 2
    mine = tmp_path / "a" / "bank" / "mine"

    windows = [tuple(r.values()) for r in csv.DictReader(open(mine / "windows.csv"))]
    want_windows = [(str(w["release"]), tags[w["snapshot"]], w["start"], w["end"]) for w in manifest["windows"]]
    fixes = {r["commit"]: int(r["release"]) for r in csv.DictReader(open(mine / "fix_commits.csv"))}
    want_fixes = {tags[t]: w for t, w in manifest["fix_commits"].items()}
    labels = {
        str(i): {r["fqn"]: int(r["defective"]) for r in csv.DictReader(open(mine / f"release-{i}" / "labels.csv"))}
        for i in range(len(windows))
    }
    identical = digest(tmp_path / "a") == digest(tmp_path / "b")
    checks = {
        "exit": codes == [0, 0],
        "windows": windows == want_windows,
        "fixes": fixes == want_fixes,
        "labels": labels == manifest["labels"],
        "byte-identical": identical,
        "runtime": elapsed < 30,
    }
    verdict(3, all(checks.values()), f"{checks}, runtime per run={elapsed:.2f}s (<30s)")


# -- 4 ------------------------------------------------------------------------------


def test_criterion_4_vif_oracle():
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(40, 4))
        X[:, 3] = X[:, 0] + X[:, 1] + rng.normal(scale=0.3, size=40)
        got = vif_table(X, "abcd").vif
        worst = max(worst, max(abs(got[n] - ref) for n, ref in zip("abcd", brute_vif(X))))
    x = np.random.default_rng(1).normal(size=20)
    dup = vif_table(np.column_stack([x, x, np.arange(20.0)]), "abc").vif
    ortho = vif_table(np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]] * 3, dtype=float), "ab").vif
    severe = {f: 1.0 for f in IMPORTANCE_CANDIDATES} | {"CBO": 10.0}
    mild = {f: 1.0 for f in IMPORTANCE_CANDIDATES} | {"CBO": 2.5}

    def screening(vifs):
        return screen_features(VifReport(vifs, {k: vif_flag(v) for k, v in vifs.items()}))

    checks = {
        "brute-force<=1e-6": worst <= 1e-6,
        "duplicate->inf": math.isinf(dup["a"]) and math.isinf(dup["b"]),
        "orthogonal->1": all(abs(v - 1) <= 1e-6 for v in ortho.values()),
        "10->excluded": screening(severe).project_excluded,
        "2.5->investigate": screening(mild).investigate == ("CBO",) and not screening(mild).project_excluded,
    }
    verdict(4, all(checks.values()), f"{checks}, max |VIF - oracle|={worst:.2e}")


# -- 5 ------------------------------------------------------------------------------


def test_criterion_5_statistical_tests():
    instance_gap = abs(mann_whitney([1, 2, 3, 4, 5], [3, 4, 5, 6, 7]).p_value - exact_mann_whitney_p([1, 2, 3, 4, 5], [3, 4, 5, 6, 7]))
    # seeded battery: two draws for every group-size pair with n <= 8 per group
    rng = np.random.default_rng(2024)
    worst, worst_case, failing_sizes = 0.0, None, set()
    for n1, n2 in itertools.product(range(1, 9), repeat=2):
        for _ in range(2):
            a = rng.normal(size=n1).round(2)
            b = rng.normal(rng.uniform(0, 2), size=n2).round(2)
            gap = abs(mann_whitney(a, b).p_value - exact_mann_whitney_p(a, b))
            if gap > 0.02:
                failing_sizes.add((n1, n2))
            if gap > worst:
                worst, worst_case = gap, (n1, n2)
    h = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]]).statistic
    same = mann_whitney([3, 1, 2], [1, 2, 3]).p_value
    constant = mann_whitney([4, 4], [4, 4, 4]).p_value
    kw_constant = kruskal_wallis([[2, 2], [2, 2]]).p_value
    checks = {
        "worked instance": instance_gap <= 0.02,
        "battery n<=8": bool(worst <= 0.02),
        "H=7.2": abs(h - 7.2) <= 1e-9 and abs(h - kruskal_h_no_ties([[1, 2, 3], [4, 5, 6], [7, 8, 9]])) <= 1e-9,
        "degenerate p~1": min(same, constant, kw_constant) >= 1 - 1e-9,
    }
    verdict(
        5,
        all(checks.values()),
        f"{checks}; worked-instance gap={instance_gap:.4f}; battery worst gap={worst:.4f} at sizes {worst_case}, "
        f"{len(failing_sizes)}/64 size pairs exceed 0.02",
    )


# -- 6 ------------------------------------------------------------------------------


def test_criterion_6_classifier_sanity():
    data = loc_separable()
    f_dt = mean_of(cross_validate(data, ModelSpec("DT"), 10, 0), "f_minority")
    f_rf = mean_of(cross_validate(data, ModelSpec("RF"), 10, 0), "f_minority")
    Xb, yb = blobs()
    nb_blobs = float(np.mean(fit(ModelSpec("NB"), Xb, yb).predict(Xb) == yb))
    Xx, yx = xor()
    nb_xor = float(np.mean(fit(ModelSpec("NB"), Xx, yx).predict(Xx) == yx))
    X, y = loc_separable(seed=4)
    y = y ^ (np.random.default_rng(4).random(len(y)) < 0.1)
    probe = np.random.default_rng(8).normal(size=(500, X.shape[1])) * X.std(axis=0) + X.mean(axis=0)
    tree = fit(ModelSpec("DT"), X, y)
    forest = fit(ModelSpec("RF", n_trees=1, max_features=X.shape[1], bootstrap=False), X, y)
    same = np.array_equal(tree.predict_proba(probe), forest.predict_proba(probe)) and np.array_equal(tree.predict(X), forest.predict(X))
    ok = f_dt >= 0.95 and f_rf >= 0.95 and nb_blobs >= 0.9 and nb_xor <= 0.75 and same
    verdict(6, ok, f"DT F={f_dt:.3f}, RF F={f_rf:.3f} (>=0.95); NB blobs acc={nb_blobs:.3f} (>=0.9); "
                   f"NB XOR acc={nb_xor:.3f} (<=0.75); RF(1 tree, all features, no bootstrap)==DT: {same}")


# -- 7 ------------------------------------------------------------------------------


def test_criterion_7_null_signal():
    data = shuffled(5, 200)
    aucs = {kind: mean_of(cross_validate(data, ModelSpec(kind, seed=5), 10, 5), "auc_weighted") for kind in ("NB", "DT", "RF")}
    ok = all(0.35 <= v <= 0.65 for v in aucs.values())
    verdict(7, ok, "mean AUC " + ", ".join(f"{k}={v:.3f}" for k, v in aucs.items()) + " (within [0.35, 0.65])")


# -- 8 ------------------------------------------------------------------------------


def test_criterion_8_importance():
    spec = ModelSpec("RF")
    names = ["signal", "n1", "n2", "n3"]
    first = sum(permutation_importance(planted(s), ModelSpec("RF", seed=s), names, seed=s).rank_of("signal") == 1 for s in range(20))

    X, y = planted(13, noise_columns=2)
    constant = permutation_importance((np.column_stack([X, np.full(len(y), 3.0)]), y), spec, ["signal", "n1", "n2", "k"]).importance_of("k")

    single = permutation_importance((X, y), spec, ["signal", "n1", "n2"]).importance_of("signal")
    dup = permutation_importance((np.column_stack([X[:, :1], X]), y), spec, ["copy1", "copy2", "n1", "n2"])
    copies = (dup.importance_of("copy1"), dup.importance_of("copy2"))
    ok = first >= 18 and constant == 0.0 and all(c < single for c in copies)
    verdict(8, ok, f"signal ranked 1 in {first}/20 seeds (>=18); constant importance={constant!r}; "
                   f"copies {copies[0]:.3f}, {copies[1]:.3f} vs single {single:.3f}")


# -- 9 and 10 -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def benchmark_scores():
    projects = synthetic_benchmark()
    out = {}
    for suite in ("CK+OTHER", "LOC"):
        for kind in ("NB", "DT", "RF"):
            reports = [r for p in projects for r in cross_validate(p, ModelSpec(kind), 10, 0, SUITES[suite])]
            out[suite, kind] = reports
    return out


def test_criterion_9_model_trend(benchmark_scores):
    f = {kind: [r.f_minority for r in benchmark_scores["CK+OTHER", kind]] for kind in ("NB", "DT", "RF")}
    kw = kruskal_wallis(list(f.values()))
    med = {k: float(np.median(v)) for k, v in f.items()}
    ok = kw.significant and med["DT"] > med["NB"] and med["RF"] > med["NB"]
    verdict(9, ok, f"Kruskal-Wallis H={kw.statistic:.2f}, p={kw.p_value:.2e}; median F "
                   + ", ".join(f"{k}={v:.3f}" for k, v in med.items()))


def test_criterion_10_suite_trend(benchmark_scores):
    med = {(s, k): float(np.median([r.auc_weighted for r in benchmark_scores[s, k]])) for s in ("CK+OTHER", "LOC") for k in ("DT", "RF")}
    ok = all(med["CK+OTHER", k] > med["LOC", k] for k in ("DT", "RF"))
    verdict(10, ok, "median AUC " + ", ".join(f"{k}: CK+OTHER={med['CK+OTHER', k]:.3f} vs LOC={med['LOC', k]:.3f}" for k in ("DT", "RF")))
