"""Acceptance criteria 1-11.  Each test records one PASS/FAIL line, printed
in the terminal summary (and immediately, when run with ``-s``)."""
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from homecare_ensemble.cohort import (
    InformationLevel, MonthChunk, aggregate_windows, build_feature_schema, ingest_csv,
)
from homecare_ensemble.ensemble import Level0Pool, TrainedModel, Tuner, predict_ensemble, train_level1
from homecare_ensemble.evaluation import LRParams, auc, stratified_folds
from homecare_ensemble.learners import (
    lambda_grid, logreg_gradient, logreg_objective, train_logreg,
)
from homecare_ensemble.learners.forest import best_split
from homecare_ensemble.runner import ExperimentConfig, run_experiment
from homecare_ensemble.synthgen import SyntheticConfig, write_cohort

from conftest import ACCEPTANCE_LINES

SEEDS = range(5)
# every 11th point of the 100-value grid (10 values spanning 1e-4..1e4),
# re-tuned every 12 months; keeps five full runs inside the time budget
ACCEPTANCE_LAMBDAS = [float(l) for l in lambda_grid()[::11]]
TUNE_EVERY = 12


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


# -- 1 ---------------------------------------------------------------------

def _pair_count_auc(s, l):
    pos, neg = s[l == 1], s[l != 1]
    diff = pos[:, None] - neg[None, :]
    return ((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (len(pos) * len(neg))


def test_criterion_01_auc_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst, cases = 0.0, 0
    while cases < 200:
        n = int(rng.integers(2, 201))
        s = rng.integers(0, max(2, n // 3), size=n) / 7.0     # coarse grid: many ties
        l = np.where(rng.random(n) < rng.uniform(0.1, 0.9), 1, -1)
        if not 0 < (l == 1).sum() < n:
            continue
        worst = max(worst, abs(auc(s, l) - _pair_count_auc(s, l)))
        cases += 1
    elapsed = time.perf_counter() - start
    record(1, worst <= 1e-12 and elapsed < 5,
           f"AUC vs pair counting, 200 sets: max |diff| = {worst:.1e}, {elapsed:.2f}s")


# -- 2 ---------------------------------------------------------------------

def test_criterion_02_gradient_check():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 10))
    y = np.where(rng.random(50) < 0.5, 1.0, -1.0)
    start = time.perf_counter()
    worst, eps = 0.0, 1e-6
    for _ in range(20):
        p = rng.normal(size=11)
        lam = float(10 ** rng.uniform(-4, 4))
        g = logreg_gradient(p, X, y, lam)
        fd = np.array([(logreg_objective(p + eps * e, X, y, lam)
                        - logreg_objective(p - eps * e, X, y, lam)) / (2 * eps)
                       for e in np.eye(11)])
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    elapsed = time.perf_counter() - start
    record(2, worst <= 1e-4 and elapsed < 5,
           f"gradient vs central differences, 20 points: max rel err = {worst:.1e}, "
           f"{elapsed:.2f}s")


# -- 3 ---------------------------------------------------------------------

def test_criterion_03_regularization_path():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 6))
    y = np.where(X @ rng.normal(size=6) + rng.normal(size=200) > 0, 1, -1)
    norms = [float(np.linalg.norm(train_logreg(X, y, lam).weights)) for lam in (1e-4, 1.0, 1e4)]
    g = lambda_grid()
    ratio = g[1:] / g[:-1]
    grid_ok = (len(g) == 100 and abs(g[0] - 1e-4) <= 1e-9 * 1e-4
               and abs(g[-1] - 1e4) <= 1e-9 * 1e4 and np.ptp(ratio) <= 1e-9)
    ok = norms[0] > norms[1] > norms[2] and grid_ok
    record(3, ok, f"|w| at 1e-4, 1, 1e4 = {norms[0]:.4g} > {norms[1]:.4g} > {norms[2]:.3g}; "
                  f"grid of {len(g)} points, ratio spread {np.ptp(ratio):.1e}")


# -- 4 ---------------------------------------------------------------------

def _exhaustive_root(X, y):
    n, best = len(y), None
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = (a + b) / 2
            score = 0.0
            for side in (X[:, j] <= thr, X[:, j] > thr):
                p = np.mean(y[side] == 1)
                score += side.sum() / n * (1 - p * p - (1 - p) ** 2)
            if best is None or score < best[2] - 1e-12:
                best = (j, thr, score)
    return best


def test_criterion_04_tree_split_oracle():
    rng = np.random.default_rng(4)
    matches = 0
    for _ in range(50):
        n, d = int(rng.integers(2, 31)), int(rng.integers(1, 4))
        X = np.round(rng.normal(size=(n, d)), 1)
        y = np.where(rng.random(n) < 0.5, 1, -1)
        got = best_split(X, y == 1, np.arange(d), 1)
        want = _exhaustive_root(X, y)
        same = (got is None and want is None) or (
            got is not None and want is not None and got[:2] == want[:2])
        matches += same
    record(4, matches == 50, f"root split equals exhaustive Gini search on {matches}/50 datasets")


# -- 5 ---------------------------------------------------------------------

def test_criterion_05_stratification():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(6, 400))
        labels = np.where(rng.random(n) < rng.uniform(0.05, 0.95), 1, -1)
        labels[:3], labels[3:6] = 1, -1
        f = stratified_folds(labels, 3, seed=int(rng.integers(2**31)))
        ideal = (labels == 1).sum() / 3
        counts = [(labels[f.fold_index == i] == 1).sum() for i in range(3)]
        worst = max(worst, max(abs(c - ideal) for c in counts))
    record(5, worst <= 1, f"max |fold positives - ideal| over 100 label vectors = {worst:.3f}")


# -- 6 ---------------------------------------------------------------------

class _Scorer:
    def __init__(self, j=None, const=None):
        self.j, self.const = j, const

    def predict_proba(self, X):
        return np.full(len(X), self.const) if self.const is not None else X[:, self.j]


def test_criterion_06_stacking_identity():
    schema = build_feature_schema(["2100"])
    rng = np.random.default_rng(6)
    j_master = schema.index("hc_sick")
    j_level = schema.masks[InformationLevel.IL4].index(j_master)

    def chunk(t, n):
        y = np.where(rng.random(n) < 0.3, 1, -1).astype(np.int8)
        y[:2], y[2:4] = 1, -1
        X = rng.random((n, schema.dim))
        X[:, j_master] = y == 1
        return MonthChunk(t, np.arange(n).astype(str), X, y, np.ones(n, bool), np.zeros(n))

    tuner = Tuner(lr_grid=[LRParams(float(l)) for l in (1e-4, 1.0, 1e4)])
    results = []
    for scorers in ([_Scorer(j=j_level)], [_Scorer(const=0.5), _Scorer(const=0.5)]):
        pool = Level0Pool(InformationLevel.IL4)
        for k, s in enumerate(scorers):
            pool.add(k, TrainedModel(s, "LR", InformationLevel.IL4), "last_month")
        ens = train_level1(pool, chunk(0, 150), "LR", schema, tuner)
        test = chunk(3, 200)
        results.append(auc(predict_ensemble(ens, test.features, schema), test.labels))
    ok = abs(results[0] - 1.0) <= 1e-9 and abs(results[1] - 0.5) <= 1e-9
    record(6, ok, f"perfect scorer -> AUC {results[0]:.12f}; constant scorers -> "
                  f"AUC {results[1]:.12f}")


# -- 7-10: shared synthetic runs --------------------------------------------

@pytest.fixture(scope="module")
def synthetic_runs(tmp_path_factory):
    start = time.perf_counter()
    runs = []
    for seed in SEEDS:
        d = tmp_path_factory.mktemp(f"seed{seed}")
        csv_path = d / "cohort.csv"
        synth = SyntheticConfig.from_dict({"n_citizens": 5000, "start_month": "2013-04",
                                           "end_month": "2017-03", "seed": seed})
        write_cohort(synth, csv_path)
        cfg = ExperimentConfig.from_dict({
            "input_csv": str(csv_path), "output_dir": str(d / "out"), "seed": seed,
            "info_levels": ["IL1", "IL2b", "IL4"],
            "methods": ["baseline_3m", "baseline_12m", "LR_all"],
            "lr_lambdas": ACCEPTANCE_LAMBDAS, "tune_every": TUNE_EVERY,
        })
        report = run_experiment(cfg)
        chunks = aggregate_windows(ingest_csv(csv_path), schema=report.schema)
        runs.append((report, chunks))
    return runs, time.perf_counter() - start


def _seed_mean(runs, method, level):
    return float(np.mean([r.averages[(method, level)] for r, _ in runs]))


def test_criterion_07_method_ordering(synthetic_runs):
    runs, elapsed = synthetic_runs
    lr, b3, b12 = (_seed_mean(runs, m, "IL4") for m in ("LR_all", "baseline_3m", "baseline_12m"))
    ok = lr > b3 > b12 and lr - b3 >= 0.03 and b3 - b12 >= 0.02 and elapsed < 600
    record(7, ok, f"5 seeds, IL4: LR_all {lr:.4f} > 3m {b3:.4f} > 12m {b12:.4f} "
                  f"(margins {lr - b3:.4f}, {b3 - b12:.4f}); {elapsed:.0f}s")


def test_criterion_08_information_levels(synthetic_runs):
    runs, _ = synthetic_runs
    il1, il2b, il4 = (_seed_mean(runs, "LR_all", l) for l in ("IL1", "IL2b", "IL4"))
    ok = il1 < il2b and abs(il2b - il4) <= 0.02
    record(8, ok, f"LR_all: IL1 {il1:.4f} < IL2b {il2b:.4f}; |IL2b - IL4| = "
                  f"{abs(il2b - il4):.4f}")


def test_criterion_09_top_weight(synthetic_runs):
    runs, _ = synthetic_runs
    tops = []
    for report, _ in runs:
        model = report.runs[("LR_all", "IL4")].final_model.estimator
        names = report.schema.level_names("IL4")
        tops.append(names[int(np.argmax(np.abs(model.weights)))])
    hits = tops.count("n_large_increases")
    record(9, hits >= 4, f"top |weight| is n_large_increases in {hits}/5 seeds ({tops})")


def test_criterion_10_class_balance(synthetic_runs):
    runs, _ = synthetic_runs
    pooled, per_chunk = [], []
    for _, chunks in runs:
        pooled.append(sum(c.n_pos for c in chunks) / sum(c.n_defined for c in chunks))
        per_chunk.append(float(np.mean([c.n_pos / c.n_defined for c in chunks if c.n_defined])))
    ok = all(abs(r - 0.12) <= 0.03 for r in pooled + per_chunk)
    record(10, ok, f"positive rate per seed {[round(r, 4) for r in pooled]}; mean per-chunk "
                   f"{[round(r, 4) for r in per_chunk]}")


# -- 11 --------------------------------------------------------------------

def test_criterion_11_determinism(tmp_path):
    csv_path = tmp_path / "cohort.csv"
    write_cohort(SyntheticConfig.from_dict({"n_citizens": 300, "start_month": "2013-04",
                                            "end_month": "2014-09", "seed": 9}), csv_path)
    config = {"schema_version": 1, "input_csv": str(csv_path), "seed": 9,
              "info_levels": ["IL2a", "IL4"],
              "methods": ["baseline_3m", "baseline_12m", "LR_all", "RF_last", "RF+LR/from_2",
                          "LR+RF/from_1_and_2"],
              "lr_lambdas": [1e-2, 1.0, 1e2],
              "rf_grid": {"n_trees": [100], "feature_fraction": [0.3, 0.6], "min_samples": [16]},
              "test_span": {"first": None, "last": "2014-02"}}
    (tmp_path / "exp.json").write_text(json.dumps(config))
    outputs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        proc = subprocess.run([sys.executable, "-m", "homecare_ensemble.cli", "run", "--config",
                               str(tmp_path / "exp.json"), "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append([(out / f).read_bytes() for f in ("monthly.csv", "averages.csv")])
    same = outputs[0] == outputs[1]
    n_rows = outputs[0][0].count(b"\n") - 1
    record(11, same, f"two CLI runs: monthly.csv ({n_rows} rows) and averages.csv "
                     f"{'byte-identical' if same else 'differ'}")
