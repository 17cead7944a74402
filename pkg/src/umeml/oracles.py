"""Brute-force reference implementations and the verification suites built on them.

Every oracle here enumerates pairs or partitions directly, sharing no code
with the vectorized implementations it checks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numkit as nk
from .assignment import AssignmentBundle, modularity_loss, modularity_weight
from .datakit import kfold_split
from .losses import SurvivalTarget, cross_entropy, nll_survival, total_loss
from .metrics import EvalRecord, concordance_index, roc_auc, time_dependent_auc
from .model import ModelShape, build_model
from .numkit import GradReport


@dataclass
class OracleReport:
    name: str
    max_abs_err: float
    tol: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28s} max_abs_err={self.max_abs_err:.3e} (tol {self.tol:.0e})"


# ---- brute-force metrics -------------------------------------------------


def brute_binary_auc(scores: Sequence[float], positive: Sequence[bool]) -> float:
    wins = 0.0
    pairs = 0
    for s_i, p_i in zip(scores, positive):
        if not p_i:
            continue
        for s_j, p_j in zip(scores, positive):
            if p_j:
                continue
            pairs += 1
            if s_i > s_j:
                wins += 1.0
            elif s_i == s_j:
                wins += 0.5
    return wins / pairs


def brute_roc_auc(records: Sequence[EvalRecord]) -> float:
    n_classes = len(records[0].scores)
    aucs = []
    for c in range(n_classes):
        positive = [r.label == c for r in records]
        if all(positive) or not any(positive):
            continue
        aucs.append(brute_binary_auc([r.scores[c] for r in records], positive))
    return sum(aucs) / len(aucs)


def brute_concordance(records: Sequence[EvalRecord]) -> float:
    num = 0.0
    den = 0
    for a in records:
        if a.censor != 0:
            continue
        for b in records:
            if a.time < b.time:
                den += 1
                if a.risk > b.risk:
                    num += 1.0
                elif a.risk == b.risk:
                    num += 0.5
    return num / den


def brute_td_auc(records: Sequence[EvalRecord], eval_times: Sequence[float]) -> list[tuple[float, float]]:
    out = []
    for t in eval_times:
        cases = [r for r in records if r.censor == 0 and r.time <= t]
        controls = [r for r in records if r.time > t]
        if not cases or not controls:
            continue
        wins = 0.0
        for a in cases:
            for b in controls:
                wins += 1.0 if a.risk > b.risk else 0.5 if a.risk == b.risk else 0.0
        out.append((float(t), wins / (len(cases) * len(controls))))
    return out


def newman_sum(w: np.ndarray, communities: Sequence[int]) -> float:
    """Sum of ``W_ij`` over ordered pairs in the same community (diagonal included)."""
    total = 0.0
    for i, j in itertools.product(range(len(communities)), repeat=2):
        if communities[i] == communities[j]:
            total += w[i, j]
    return total


def linear_probe_accuracy(features: np.ndarray, labels: np.ndarray, ids: Sequence[str], ridge: float = 1.0) -> float:
    """5-fold ridge-regression probe on one-hot targets (standardized features, bias column).

    Uses the same fold assignment as training, so it measures how much class
    signal a linear readout of ``features`` can reach on this dataset.
    """
    index = {sid: i for i, sid in enumerate(ids)}
    n_classes = int(labels.max()) + 1
    accs = []
    for fold in range(5):
        train_ids, test_ids = kfold_split(ids, 5, fold)
        tr = [index[i] for i in train_ids]
        te = [index[i] for i in test_ids]
        mu = features[tr].mean(axis=0)
        sd = features[tr].std(axis=0) + 1e-9
        a = np.c_[(features[tr] - mu) / sd, np.ones(len(tr))]
        b = np.c_[(features[te] - mu) / sd, np.ones(len(te))]
        w = np.linalg.solve(a.T @ a + ridge * np.eye(a.shape[1]), a.T @ np.eye(n_classes)[labels[tr]])
        accs.append(float(np.mean((b @ w).argmax(axis=1) == labels[te])))
    return float(np.mean(accs))


# ---- random instances ----------------------------------------------------


def random_classification_records(rng: np.random.Generator, n: int, n_classes: int) -> list[EvalRecord]:
    # coarse rounding plants score ties
    labels = rng.integers(n_classes, size=n)
    labels[:n_classes] = np.arange(n_classes)
    scores = np.round(rng.random((n, n_classes)), 1)
    return [EvalRecord(f"r{i}", tuple(map(float, scores[i])), label=int(labels[i])) for i in range(n)]


def random_survival_records(rng: np.random.Generator, n: int) -> list[EvalRecord]:
    time = np.round(rng.exponential(5.0, size=n), 0) + 1.0
    censor = (rng.random(n) < 0.3).astype(int)
    censor[0] = 0
    time[0] = time.min() - 0.5 if time.min() > 1.0 else 0.5
    risk = np.round(rng.normal(size=n), 1)
    return [EvalRecord(f"r{i}", (float(risk[i]),), time=float(time[i]), censor=int(censor[i])) for i in range(n)]


def random_weighted_graph(rng: np.random.Generator, m: int) -> np.ndarray:
    a = rng.random((m, m)) * (rng.random((m, m)) < 0.8)
    a = np.triu(a, 1)
    a = a + a.T
    if a.sum() == 0.0:
        a[0, 1] = a[1, 0] = 1.0
    return a


# ---- suites --------------------------------------------------------------


def _worst(name: str, errors: Sequence[float], tol: float, exact: bool = False) -> OracleReport:
    worst = max(errors) if errors else 0.0
    passed = worst == 0.0 if exact else worst <= tol
    return OracleReport(name, float(worst), tol, bool(passed))


def modularity_oracle(n_graphs: int = 20, seed: int = 0, tol: float = 1e-9) -> list[OracleReport]:
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(n_graphs):
        m = int(rng.integers(2, 7))
        k = int(rng.integers(1, m + 1))
        a_np = random_weighted_graph(rng, m)
        communities = rng.integers(k, size=m)
        s = np.zeros((k, m))
        s[communities, np.arange(m)] = 1.0
        a = nk.constant(a_np)
        degree = nk.constant(a_np.sum(axis=1, keepdims=True))
        mass = nk.constant(np.array([[a_np.sum()]]))
        w = modularity_weight(a, degree, mass)
        bundle = AssignmentBundle(nk.constant(s), None, a, w, degree, mass)
        got = -mass.item() * modularity_loss(bundle, alpha=1.0, beta=0.0).item()
        errors.append(abs(got - newman_sum(w.data, communities)))

    path = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    a = nk.constant(path)
    degree = nk.constant(path.sum(axis=1, keepdims=True))
    mass = nk.constant(np.array([[path.sum()]]))
    s_p = nk.constant(np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    bundle = AssignmentBundle(s_p, None, a, modularity_weight(a, degree, mass), degree, mass)
    hand = abs(modularity_loss(bundle, alpha=1.0, beta=0.0).item() - 0.125)
    return [_worst("modularity_vs_newman", errors, tol), _worst("modularity_3path", [hand], 0.0, exact=True)]


def metric_oracles(seed: int = 0, n_auc: int = 50, n_cindex: int = 50, n_td: int = 20) -> list[OracleReport]:
    """Exact-equality checks of the vectorized metrics against pair enumeration."""
    rng = np.random.default_rng(seed)
    auc_err, c_err, td_err = [], [], []
    for _ in range(n_auc):
        recs = random_classification_records(rng, int(rng.integers(4, 51)), int(rng.integers(2, 5)))
        auc_err.append(abs(roc_auc(recs) - brute_roc_auc(recs)))
    for _ in range(n_cindex):
        recs = random_survival_records(rng, int(rng.integers(3, 51)))
        c_err.append(abs(concordance_index(recs) - brute_concordance(recs)))
    for _ in range(n_td):
        recs = random_survival_records(rng, int(rng.integers(5, 51)))
        times = np.quantile([r.time for r in recs], np.linspace(0.1, 0.9, 5))
        got, want = time_dependent_auc(recs, times), brute_td_auc(recs, times)
        if [t for t, _ in got] != [t for t, _ in want]:
            td_err.append(np.inf)
            continue
        td_err.extend(abs(g - w) for (_, g), (_, w) in zip(got, want))
    return [
        _worst("roc_auc_vs_pairs", auc_err, 0.0, exact=True),
        _worst("concordance_vs_pairs", c_err, 0.0, exact=True),
        _worst("td_auc_vs_pairs", td_err, 0.0, exact=True),
    ]


GRAD_SHAPE = ModelShape(
    d=8, d_g=4, n_prototypes=3, n_groups=2, n_registers=1,
    n_cross=1, n_path_self=1, n_gene_self=1, n_decoder=1,
    n_grade=3, n_class=3, n_bins=4,
)


def model_grad_suite(
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    tasks: Sequence[str] = ("grading", "classification", "survival"),
    n_patches: int = 6,
    gamma: float = 0.5,
    h: float = 1e-5,
    tol: float = 1e-4,
    shape: ModelShape = GRAD_SHAPE,
) -> list[GradReport]:
    """Finite-difference check of the whole training loss (objective + gamma * modularity), per task."""
    reports = []
    for task in tasks:
        worst = 0.0
        for seed in seeds:
            rng = np.random.default_rng(1000 + seed)
            model = build_model(shape, "full", seed)
            patches = nk.constant(rng.normal(size=(n_patches, shape.d)))
            genes = nk.constant(rng.normal(size=(shape.n_groups, shape.d_g)))
            label = int(rng.integers(shape.n_grade))
            target = SurvivalTarget(1.0 + rng.random(), int(rng.integers(2)), int(rng.integers(shape.n_bins)))

            def loss(model=model, patches=patches, genes=genes, label=label, target=target):
                logits, bundle = model.forward(patches, genes, task, with_bundle=True)
                obj = nll_survival(logits, target) if task == "survival" else cross_entropy(logits, label)
                return total_loss(obj, model.modularity(bundle, 1.0, 1.0), gamma)

            report = nk.grad_check(loss, model.parameters(), h=h, tol=tol, op_name=task)
            worst = max(worst, report.max_rel_err)
        reports.append(GradReport(f"umeml_loss[{task}]", worst, tol, bool(worst < tol)))
    return reports


def run_all(seed: int = 0) -> list[OracleReport]:
    return modularity_oracle(seed=seed) + metric_oracles(seed=seed)
