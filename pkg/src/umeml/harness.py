"""Per-sample SGD training, k-fold evaluation, ablations and baselines."""

from __future__ import annotations

import csv
import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import softmax

from . import numkit as nk
from .datakit import Dataset, SampleRecord, kfold_split
from .losses import cross_entropy, nll_survival, survival_risk, total_loss
from .metrics import (
    EvalRecord,
    UndefinedMetricError,
    accuracy,
    concordance_index,
    per_class_auc,
    roc_points,
    time_dependent_auc,
    write_points_csv,
)
from .model import ABLATIONS, BASELINES, VARIANTS, ModelShape, UmemlModel, build_model

log = logging.getLogger(__name__)

TASKS = ("grading", "classification", "survival")
# diagnosis (grading, classification) vs prognosis (survival) schedules
TASK_DEFAULTS = {
    "grading": {"lr": 1e-3, "epochs": 10},
    "classification": {"lr": 1e-3, "epochs": 10},
    "survival": {"lr": 2e-4, "epochs": 5},
}


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class RunConfig:
    task: str = "grading"
    variant: str = "full"
    n_prototypes: int = 16
    n_groups: int = 6
    n_registers: int = 4
    n_cross: int = 2
    n_path_self: int = 2
    n_gene_self: int = 2
    n_decoder: int = 2
    heads: int = 1
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.1
    lr: float | None = None
    weight_decay: float = 1e-5
    momentum: float = 0.0
    epochs: int | None = None
    folds: int = 5
    split_seed: int = 0
    seed_offset: int = 0
    n_bins: int = 4
    uncensored_weight: float = 0.0
    keep_self_loops: bool = False
    out_dir: str | None = None

    def resolved(self) -> "RunConfig":
        """Fill task-dependent defaults and apply what the variant implies."""
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        cfg = replace(self)
        if cfg.lr is None:
            cfg.lr = TASK_DEFAULTS[cfg.task]["lr"]
        if cfg.epochs is None:
            cfg.epochs = TASK_DEFAULTS[cfg.task]["epochs"]
        if cfg.variant == "no_modularity" or cfg.variant in BASELINES:
            cfg.gamma = 0.0
        if cfg.variant == "no_registers":
            cfg.n_registers = 0
        if cfg.lr < 0 or cfg.epochs < 0:
            raise ValueError("lr and epochs must be non-negative")
        for name in ("n_prototypes", "n_groups", "folds", "n_bins", "heads"):
            if getattr(cfg, name) < 1:
                raise ValueError(f"{name} must be positive")
        return cfg

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("out_dir")
        return out

    def shape(self, dataset: Dataset) -> ModelShape:
        first = dataset.samples[0]
        if first.gene_groups.shape[0] != self.n_groups:
            raise ValueError(
                f"dataset has {first.gene_groups.shape[0]} gene groups, config expects {self.n_groups}"
            )
        return ModelShape(
            d=first.patch_features.shape[1],
            d_g=first.gene_groups.shape[1],
            n_prototypes=self.n_prototypes,
            n_groups=self.n_groups,
            n_registers=self.n_registers,
            n_cross=self.n_cross,
            n_path_self=self.n_path_self,
            n_gene_self=self.n_gene_self,
            n_decoder=self.n_decoder,
            heads=self.heads,
            n_grade=dataset.n_classes,
            n_class=dataset.n_classes,
            n_bins=self.n_bins,
        )


@dataclass
class FoldResult:
    fold: int
    seed: int
    task: str
    metrics: dict[str, float]
    records: list[EvalRecord]
    train_loss: list[float] = field(default_factory=list)
    final_epoch: bool = True

    def recompute(self) -> dict[str, float]:
        return compute_metrics(self.task, self.records)


def compute_metrics(task: str, records: Sequence[EvalRecord]) -> dict[str, float]:
    if task == "survival":
        return {"C-index": concordance_index(records)}
    per_class = per_class_auc(records)
    if not per_class:
        raise UndefinedMetricError("AUC undefined: single-class input")
    out = {"Acc": accuracy(records), "AUC": sum(per_class.values()) / len(per_class)}
    for c, v in per_class.items():
        out[f"AUC_class{c}"] = v
    return out


def survival_edges(samples: Sequence[SampleRecord], n_bins: int) -> np.ndarray:
    """Interior bin edges: quantiles of uncensored times (all times if none are uncensored)."""
    times = np.array([s.surv_time for s in samples if s.censor == 0])
    if times.size == 0:
        times = np.array([s.surv_time for s in samples])
    return np.quantile(times, np.arange(1, n_bins) / n_bins)


class _Prepared:
    """Constant tensors and targets for one sample, built once per fold."""

    __slots__ = ("sample", "patches", "genes", "label", "target")

    def __init__(self, sample: SampleRecord, task: str, edges: np.ndarray | None):
        self.sample = sample
        self.patches = nk.constant(sample.patch_features)
        self.genes = nk.constant(sample.gene_groups)
        self.label = sample.label(task) if task != "survival" else None
        self.target = sample.survival_target(edges) if task == "survival" else None


def sample_losses(model: UmemlModel, item: _Prepared, cfg: RunConfig):
    """(total, objective, modularity) for one sample; must run inside a Tape."""
    logits, bundle = model.forward(
        item.patches, item.genes, cfg.task, with_bundle=cfg.gamma != 0.0, keep_self_loops=cfg.keep_self_loops
    )
    if cfg.task == "survival":
        objective = nll_survival(logits, item.target, cfg.uncensored_weight)
    else:
        objective = cross_entropy(logits, item.label)
    modularity = model.modularity(bundle, cfg.alpha, cfg.beta)
    return total_loss(objective, modularity, cfg.gamma), objective, modularity


class SGD:
    """Plain SGD with decoupled-in-gradient weight decay over one flat buffer.

    Each parameter's ``data`` is rebound to a view of the buffer so the
    update ``theta -= lr * (grad + weight_decay * theta)`` is one vector op.
    """

    def __init__(self, params: Sequence[nk.Tensor], lr: float, weight_decay: float = 0.0, momentum: float = 0.0):
        self.params = list(params)
        self.lr, self.weight_decay, self.momentum = lr, weight_decay, momentum
        self.flat = np.concatenate([p.data.ravel() for p in self.params]) if self.params else np.zeros(0)
        offset = 0
        for p in self.params:
            n = p.data.size
            p.data = self.flat[offset : offset + n].reshape(p.data.shape)
            offset += n
        self.velocity: np.ndarray | None = None

    def step(self, grads: dict) -> None:
        g = np.concatenate([grads[p].ravel() for p in self.params])
        if self.weight_decay:
            g += self.weight_decay * self.flat
        if self.momentum:
            if self.velocity is not None:
                g += self.momentum * self.velocity
            self.velocity = g
        self.flat -= self.lr * g


def predict(model: UmemlModel, item: _Prepared, cfg: RunConfig) -> EvalRecord:
    logits, _ = model.forward(item.patches, item.genes, cfg.task)
    s = item.sample
    if cfg.task == "survival":
        return EvalRecord(s.id, (survival_risk(logits.data),), time=s.surv_time, censor=s.censor)
    probs = softmax(logits.data[0])
    return EvalRecord(s.id, tuple(float(x) for x in probs), label=item.label)


def train_fold(dataset: Dataset, config: RunConfig, fold: int) -> FoldResult:
    """Train on all folds but ``fold`` with seed ``fold + seed_offset``, evaluate on ``fold``."""
    cfg = config.resolved()
    train_ids, test_ids = kfold_split(dataset.ids, cfg.folds, fold, cfg.split_seed)
    train = [dataset.by_id[i] for i in train_ids]
    test = [dataset.by_id[i] for i in test_ids]
    seed = fold + cfg.seed_offset
    model = build_model(cfg.shape(dataset), cfg.variant, seed)
    params = model.parameters()
    order_rng = np.random.default_rng(seed)

    edges = survival_edges(train, cfg.n_bins) if cfg.task == "survival" else None
    train_items = [_Prepared(s, cfg.task, edges) for s in train]
    opt = SGD(params, cfg.lr, cfg.weight_decay, cfg.momentum)
    history = []
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in order_rng.permutation(len(train_items)):
            item = train_items[idx]
            with nk.Tape() as tape:
                loss, objective, modularity = sample_losses(model, item, cfg)
            value = loss.item()
            if not np.isfinite(value):
                term = "objective" if not np.isfinite(objective.item()) else "modularity"
                raise NonFiniteLossError(
                    f"non-finite {term} loss (total={value}) at epoch {epoch}, sample {item.sample.id}, fold {fold}"
                )
            grads = nk.backward(tape, loss, params)
            opt.step(grads)
            total += value
        history.append(total / max(len(train_items), 1))
        log.info("fold %d epoch %d mean train loss %.6f", fold, epoch + 1, history[-1])

    records = [predict(model, _Prepared(s, cfg.task, edges), cfg) for s in test]
    return FoldResult(fold, seed, cfg.task, compute_metrics(cfg.task, records), records, history)


def _summarize(values: list[float]) -> dict:
    return {
        "mean": float(np.mean(values)),
        "sd": float(statistics.stdev(values)) if len(values) > 1 else 0.0,
        "per_fold": [float(v) for v in values],
    }


def _pooled_curves(task: str, records: list[EvalRecord], n_classes: int):
    """Pooled out-of-fold curves: {name: points} and the matching pooled metrics."""
    curves: dict[str, list] = {}
    pooled: dict[str, float] = {}
    if task == "survival":
        times = np.array([r.time for r in records])
        eval_times = np.quantile(times, np.linspace(0.1, 0.9, 9))
        curves["td_auc"] = time_dependent_auc(records, eval_times)
        pooled["C-index"] = concordance_index(records)
    else:
        pooled.update(compute_metrics(task, records))
        for c in range(n_classes):
            if f"AUC_class{c}" in pooled:
                curves[f"roc_class{c}"] = roc_points(records, c)
    return curves, pooled


def write_curves(task: str, records: list[EvalRecord], n_classes: int, out_dir: str | Path) -> dict[str, float]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves, pooled = _pooled_curves(task, records, n_classes)
    for name, points in curves.items():
        header = ("time", "auc") if name == "td_auc" else ("fpr", "tpr")
        write_points_csv(out / f"{name}.csv", header, points)
    return pooled


def write_records_csv(path: str | Path, records: Sequence[EvalRecord]) -> None:
    n_scores = len(records[0].scores) if records else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "label", "time", "censor"] + [f"score_{i}" for i in range(n_scores)])
        for r in records:
            w.writerow(
                [r.sample_id, "" if r.label is None else r.label, "" if r.time is None else repr(r.time),
                 "" if r.censor is None else r.censor] + [repr(float(s)) for s in r.scores]
            )


def read_records_csv(path: str | Path) -> list[EvalRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            scores = tuple(float(row[k]) for k in row if k.startswith("score_"))
            out.append(
                EvalRecord(
                    row["sample_id"],
                    scores,
                    label=int(row["label"]) if row["label"] else None,
                    time=float(row["time"]) if row["time"] else None,
                    censor=int(row["censor"]) if row["censor"] else None,
                )
            )
    return out


def _fold_worker(args):
    dataset, config, fold = args
    return train_fold(dataset, config, fold)


def run_folds(dataset: Dataset, config: RunConfig, parallel: bool = False) -> list[FoldResult]:
    cfg = config.resolved()
    jobs = [(dataset, cfg, f) for f in range(cfg.folds)]
    if parallel:
        with ProcessPoolExecutor() as pool:
            return list(pool.map(_fold_worker, jobs))
    return [_fold_worker(j) for j in jobs]


def cross_validate(dataset: Dataset, config: RunConfig, parallel: bool = False) -> tuple[dict, list[FoldResult]]:
    """Cross-validate one variant; writes outputs when ``config.out_dir`` is set.

    Summary schema: ``{task, variant, metrics: {name: {mean, sd, per_fold}},
    pooled_metrics, config_echo}``.
    """
    cfg = config.resolved()
    results = run_folds(dataset, cfg, parallel)
    # per-class AUCs can be undefined on a small fold; those folds are left out of that entry
    names = list(dict.fromkeys(n for r in results for n in r.metrics))
    summary = {
        "task": cfg.task,
        "variant": cfg.variant,
        "metrics": {n: _summarize([r.metrics[n] for r in results if n in r.metrics]) for n in names},
        "config_echo": cfg.echo(),
    }
    pooled_records = [rec for r in results for rec in r.records]
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in results:
            write_records_csv(out / f"fold_{r.fold}.csv", r.records)
        summary["pooled_metrics"] = write_curves(cfg.task, pooled_records, dataset.n_classes, out)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (out / "train_loss.json").write_text(
            json.dumps({str(r.fold): r.train_loss for r in results}, indent=2) + "\n"
        )
    else:
        summary["pooled_metrics"] = _pooled_curves(cfg.task, pooled_records, dataset.n_classes)[1]
    return summary, results


def run_cv(dataset: Dataset, config: RunConfig, parallel: bool = False) -> dict:
    return cross_validate(dataset, config, parallel)[0]


def run_variants(dataset: Dataset, config: RunConfig, variants: Sequence[str], parallel: bool = False) -> dict[str, dict]:
    """Run ``run_cv`` once per variant; each gets a subdirectory of ``out_dir``."""
    out: dict[str, dict] = {}
    for v in variants:
        sub = str(Path(config.out_dir) / v) if config.out_dir else None
        out[v] = run_cv(dataset, replace(config, variant=v, out_dir=sub), parallel)
    if config.out_dir:
        write_table(out, Path(config.out_dir))
    return out


def run_ablation(dataset: Dataset, config: RunConfig, parallel: bool = False) -> dict[str, dict]:
    return run_variants(dataset, config, ABLATIONS, parallel)


def run_baseline(dataset: Dataset, config: RunConfig, parallel: bool = False) -> dict:
    if config.variant not in BASELINES:
        raise ValueError(f"baseline variant must be one of {BASELINES}, got {config.variant!r}")
    return run_cv(dataset, config, parallel)


def format_table(summaries: dict[str, dict]) -> str:
    names = [n for n in next(iter(summaries.values()))["metrics"] if not n.startswith("AUC_class")]
    lines = ["variant," + ",".join(names)]
    for v, s in summaries.items():
        cells = [f"{s['metrics'][n]['mean']:.4f}+-{s['metrics'][n]['sd']:.4f}" for n in names]
        lines.append(v + "," + ",".join(cells))
    return "\n".join(lines) + "\n"


def write_table(summaries: dict[str, dict], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.csv").write_text(format_table(summaries))
    (out / "table.json").write_text(
        json.dumps(summaries, indent=2, sort_keys=True) + "\n"
    )
