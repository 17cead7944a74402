"""Release acceptance checks, one test per criterion.

Each test prints ``CRITERION n: PASS|FAIL ...`` and the lines are repeated in
the pytest terminal summary. Criteria 5 and 6 train the full model and its
variants on generated cohorts and take several minutes.
"""

import json
import math
import time
from dataclasses import replace

import numpy as np

from umeml import numkit as nk
from umeml.cli import main
from umeml.datakit import GeneratorConfig, generate, read_feature_file, write_feature_file
from umeml.encoders import PathologyEncoderParams, encode_pathology
from umeml.harness import run_cv, train_fold
from umeml.losses import SurvivalTarget, nll_survival
from umeml.metrics import read_points_csv, trapezoid_area
from umeml.model import ABLATIONS
from umeml.oracles import metric_oracles, model_grad_suite, modularity_oracle

from conftest import TINY_FLAGS, TINY_RUN


def test_criterion_1_gradient_suite(criterion):
    start = time.perf_counter()
    reports = nk.op_suite(seeds=(0, 1, 2, 3, 4), h=1e-5, tol=1e-4)
    reports += model_grad_suite(seeds=(0, 1, 2, 3, 4), h=1e-5, tol=1e-4)
    elapsed = time.perf_counter() - start
    worst = max(reports, key=lambda r: r.max_rel_err)
    failed = [r.op_name for r in reports if not r.passed]
    ok = not failed and elapsed < 120.0
    criterion(1, ok, f"{len(reports)} checks, worst {worst.op_name} rel_err={worst.max_rel_err:.2e}, {elapsed:.0f}s, failed={failed}")
    assert not failed, [r.line() for r in reports if not r.passed]
    assert elapsed < 120.0


def test_criterion_2_modularity_oracle(criterion):
    reports = modularity_oracle(n_graphs=20, tol=1e-9)
    ok = all(r.passed for r in reports)
    criterion(2, ok, "; ".join(f"{r.name} err={r.max_abs_err:.1e}" for r in reports))
    assert ok, [r.line() for r in reports]


def test_criterion_3_permutation_invariance(criterion):
    worst = 0.0
    for model_seed in range(5):
        rng = np.random.default_rng(model_seed)
        params = PathologyEncoderParams.init(32, 16, 2, 2, rng)
        patches = rng.normal(size=(int(rng.integers(32, 65)), 32))
        tokens, protos = encode_pathology(nk.constant(patches), params)
        for _ in range(10):
            perm = rng.permutation(patches.shape[0])
            t2, p2 = encode_pathology(nk.constant(patches[perm]), params)
            worst = max(worst, np.max(np.abs(t2.data - tokens.data)), np.max(np.abs(p2.data - protos.data)))
    ok = worst <= 1e-12
    criterion(3, ok, f"max abs diff {worst:.2e} over 5 models x 10 permutations")
    assert ok


def test_criterion_4_metric_oracles(criterion):
    reports = metric_oracles(n_auc=50, n_cindex=50, n_td=20)
    ok = all(r.passed for r in reports)
    criterion(4, ok, "; ".join(f"{r.name} err={r.max_abs_err:.1e}" for r in reports))
    assert ok, [r.line() for r in reports]


def test_criterion_5_synthetic_end_to_end(criterion, default_cv):
    start = time.perf_counter()
    acc = {v: default_cv(0, v)[0]["metrics"]["Acc"]["mean"] for v in ("full", "path_only", "gene_only")}
    elapsed = time.perf_counter() - start
    epochs = default_cv(0, "full")[0]["config_echo"]["epochs"]
    ok = (
        acc["full"] >= 0.90
        and acc["full"] >= acc["path_only"] + 0.05
        and acc["full"] >= acc["gene_only"] + 0.05
        and epochs <= 10
        and elapsed < 600.0
    )
    detail = ", ".join(f"{k} Acc={v:.3f}" for k, v in acc.items())
    criterion(5, ok, f"{detail}; {epochs} epochs, {elapsed:.0f}s")
    assert acc["full"] >= 0.90
    assert acc["full"] - acc["path_only"] >= 0.05 and acc["full"] - acc["gene_only"] >= 0.05
    assert elapsed < 600.0


def test_criterion_6_ablation_direction(criterion, default_cv):
    seeds = range(5)
    means = {v: float(np.mean([default_cv(s, v)[0]["metrics"]["Acc"]["mean"] for s in seeds])) for v in ABLATIONS}
    ok = all(means["full"] >= means[v] - 0.02 for v in ABLATIONS)
    criterion(6, ok, ", ".join(f"{k} Acc={v:.3f}" for k, v in means.items()) + " (5 dataset seeds)")
    for v in ABLATIONS:
        assert means["full"] >= means[v] - 0.02, (v, means)


def test_criterion_7_survival_spot_values(criterion):
    event = nll_survival(nk.constant([[0.0]]), SurvivalTarget(1.0, 0, 0)).item()
    censored = nll_survival(nk.constant([[0.0]]), SurvivalTarget(1.0, 1, 0)).item()
    err = max(abs(event - 0.693147), abs(censored - 0.693147))
    exact = max(abs(event - math.log(2)), abs(censored - math.log(2)))
    ok = exact <= 1e-9 and err <= 1e-6
    criterion(7, ok, f"event={event:.12f} censored={censored:.12f} |x-ln2|={exact:.1e}")
    assert ok


def test_criterion_8_format_and_determinism(criterion, tmp_path, tiny_dataset):
    rng = np.random.default_rng(8)
    trips = 0
    for i in range(20):
        m = rng.normal(scale=10 ** rng.uniform(-3, 3), size=(int(rng.integers(1, 9)), int(rng.integers(1, 9))))
        m = m.astype(np.float32)
        path = tmp_path / f"m{i}.umfb"
        write_feature_file(path, m)
        back = read_feature_file(path)
        trips += back.astype(np.float32).tobytes() == m.tobytes()
        write_feature_file(tmp_path / "again.umfb", back)
        trips += (tmp_path / "again.umfb").read_bytes() == path.read_bytes()
    round_trip_ok = trips == 40

    cfg = GeneratorConfig(n_samples=30, seed=11)
    generate(cfg, tmp_path / "g1")
    generate(cfg, tmp_path / "g2")

    def tree(root):
        return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}

    data_ok = tree(tmp_path / "g1") == tree(tmp_path / "g2")

    a, b = train_fold(tiny_dataset, TINY_RUN, 3), train_fold(tiny_dataset, TINY_RUN, 3)
    traj_ok = a.train_loss == b.train_loss and [r.scores for r in a.records] == [r.scores for r in b.records]

    run_cv(tiny_dataset, replace(TINY_RUN, out_dir=str(tmp_path / "s1")))
    run_cv(tiny_dataset, replace(TINY_RUN, out_dir=str(tmp_path / "s2")))
    summary_ok = (tmp_path / "s1" / "summary.json").read_bytes() == (tmp_path / "s2" / "summary.json").read_bytes()

    ok = round_trip_ok and data_ok and traj_ok and summary_ok
    criterion(8, ok, f"round_trip={round_trip_ok} dataset={data_ok} trajectory={traj_ok} summary={summary_ok}")
    assert ok


def test_criterion_9_internal_consistency(criterion, default_cv, tiny_dataset, tmp_path):
    worst = 0.0
    n_files = 0
    for seed, variant in [(0, "full"), (0, "path_only"), (0, "gene_only")]:
        summary, _, out = default_cv(seed, variant)
        for roc in sorted(out.glob("roc_class*.csv")):
            c = roc.stem.removeprefix("roc_class")
            worst = max(worst, abs(trapezoid_area(read_points_csv(roc)) - summary["pooled_metrics"][f"AUC_class{c}"]))
            n_files += 1
    roc_ok = n_files >= 9 and worst <= 1e-9

    base = ["train", "--data", str(tiny_dataset.root), *TINY_FLAGS]
    assert main(base + ["--out", str(tmp_path / "nomod"), "--variant", "no_modularity"]) == 0
    assert main(base + ["--out", str(tmp_path / "g0"), "--gamma", "0"]) == 0
    s_a = json.loads((tmp_path / "nomod" / "summary.json").read_text())
    s_b = json.loads((tmp_path / "g0" / "summary.json").read_text())
    # the two runs differ only in the variant label they report
    labels = (s_a.pop("variant"), s_b.pop("variant"), s_a["config_echo"].pop("variant"), s_b["config_echo"].pop("variant"))
    same = s_a == s_b and labels == ("no_modularity", "full", "no_modularity", "full")

    ok = roc_ok and same
    criterion(9, ok, f"{n_files} ROC files, max |area-AUC|={worst:.1e}; gamma0 == no_modularity: {same}")
    assert roc_ok and same
