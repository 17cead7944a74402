"""``umeml`` command-line entry point.

Exit codes: 0 success, 1 runtime failure (including failed checks), 2 usage error.
The ``UMEML_SEED`` environment variable sets the default seed offset for
training commands and the default seed for ``gen-data``; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .datakit import GeneratorConfig, generate, load_dataset
from .harness import TASKS, RunConfig, format_table, read_records_csv, run_ablation, run_cv, run_variants, write_curves
from .model import BASELINES, VARIANTS

log = logging.getLogger("umeml")


def _env_seed() -> int:
    raw = os.environ.get("UMEML_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"umeml: UMEML_SEED must be an integer, got {raw!r}")


def _add_run_flags(p: argparse.ArgumentParser, variant: bool = True) -> None:
    d = RunConfig()
    p.add_argument("--data", required=True, type=Path, help="dataset directory (manifest.jsonl + features/)")
    p.add_argument("--task", choices=TASKS, default=d.task, help="prediction task")
    if variant:
        p.add_argument("--variant", choices=VARIANTS, default=d.variant, help="model variant")
    p.add_argument("--alpha", type=float, default=d.alpha, help="weight of the pathology modularity term")
    p.add_argument("--beta", type=float, default=d.beta, help="weight of the genomic modularity term")
    p.add_argument("--gamma", type=float, default=d.gamma, help="weight of the modularity loss in the total loss")
    p.add_argument("--prototypes", type=int, default=d.n_prototypes, help="number of pathology prototypes K")
    p.add_argument("--gene-groups", type=int, default=d.n_groups, help="number of gene groups N")
    p.add_argument("--registers", type=int, default=d.n_registers, help="number of register tokens I")
    p.add_argument("--cross-layers", type=int, default=d.n_cross, help="prototype cross-attention layers")
    p.add_argument("--path-self-layers", type=int, default=d.n_path_self, help="pathology self-attention layers")
    p.add_argument("--gene-self-layers", type=int, default=d.n_gene_self, help="genomic self-attention layers")
    p.add_argument("--decoder-layers", type=int, default=d.n_decoder, help="unified decoder layers")
    p.add_argument("--heads", type=int, default=d.heads, help="attention heads")
    p.add_argument("--lr", type=float, default=None, help="learning rate (task default: 1e-3 diagnosis, 2e-4 survival)")
    p.add_argument("--epochs", type=int, default=None, help="epochs (task default: 10 diagnosis, 5 survival)")
    p.add_argument("--weight-decay", type=float, default=d.weight_decay, help="L2 weight decay")
    p.add_argument("--momentum", type=float, default=d.momentum, help="SGD momentum (0 = plain SGD)")
    p.add_argument("--folds", type=int, default=d.folds, help="cross-validation folds")
    p.add_argument("--split-seed", type=int, default=d.split_seed, help="seed of the fold shuffle")
    p.add_argument("--seed", type=int, default=None, help="seed offset added to each fold index (default: $UMEML_SEED or 0)")
    p.add_argument("--bins", type=int, default=d.n_bins, help="survival time bins")
    p.add_argument("--uncensored-weight", type=float, default=d.uncensored_weight, help="down-weighting of censored samples in the survival loss")
    p.add_argument("--keep-self-loops", action="store_true", help="keep the diagonal of the patch affinity graph")
    p.add_argument("--parallel-folds", action="store_true", help="train folds in worker processes")
    p.add_argument("--out", type=Path, default=None, help="output directory for summaries, fold CSVs and curves")


def _run_config(args: argparse.Namespace, variant: str | None = None) -> RunConfig:
    return RunConfig(
        task=args.task,
        variant=variant or args.variant,
        n_prototypes=args.prototypes,
        n_groups=args.gene_groups,
        n_registers=args.registers,
        n_cross=args.cross_layers,
        n_path_self=args.path_self_layers,
        n_gene_self=args.gene_self_layers,
        n_decoder=args.decoder_layers,
        heads=args.heads,
        alpha=args.alpha,
        beta=args.beta,
        gamma=args.gamma,
        lr=args.lr,
        weight_decay=args.weight_decay,
        momentum=args.momentum,
        epochs=args.epochs,
        folds=args.folds,
        split_seed=args.split_seed,
        seed_offset=_env_seed() if args.seed is None else args.seed,
        n_bins=args.bins,
        uncensored_weight=args.uncensored_weight,
        keep_self_loops=args.keep_self_loops,
        out_dir=str(args.out) if args.out else None,
    )


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="umeml", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch training loss")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = GeneratorConfig()
    p = sub.add_parser("gen-data", help="write a synthetic cohort", formatter_class=fmt)
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--samples", type=int, default=g.n_samples, help="number of samples")
    p.add_argument("--classes", type=int, default=g.n_classes, help="number of latent classes")
    p.add_argument("--seed", type=int, default=None, help="generator seed (default: $UMEML_SEED or 0)")
    p.add_argument("--d", type=int, default=g.d, help="patch feature width")
    p.add_argument("--d-g", type=int, default=g.d_g, help="gene group width")
    p.add_argument("--gene-groups", type=int, default=g.n_groups, help="number of gene groups")
    p.add_argument("--min-patches", type=int, default=g.m_min, help="smallest patch bag")
    p.add_argument("--max-patches", type=int, default=g.m_max, help="largest patch bag")
    p.add_argument("--signal-p", type=float, default=g.signal_p, help="pathology class-center scale")
    p.add_argument("--signal-g", type=float, default=g.signal_g, help="genomic class-center scale")
    p.add_argument("--overlap-p", type=float, default=g.overlap_p, help="pathology confusion of the last class pair")
    p.add_argument("--overlap-g", type=float, default=g.overlap_g, help="genomic confusion of the first class pair")
    p.add_argument("--signal-fraction", type=float, default=g.signal_fraction, help="expected share of signal patches per bag")
    p.add_argument("--noise", type=float, default=g.noise, help="isotropic noise scale")
    p.add_argument("--censor-rate", type=float, default=g.censor_rate, help="probability a survival record is censored")

    p = sub.add_parser("train", help="cross-validate one model variant", formatter_class=fmt)
    _add_run_flags(p)
    p = sub.add_parser("ablate", help="full model and its three ablations", formatter_class=fmt)
    _add_run_flags(p, variant=False)
    p = sub.add_parser("baselines", help="concat / add / unimodal baselines", formatter_class=fmt)
    _add_run_flags(p, variant=False)
    p.add_argument("--variants", nargs="+", choices=BASELINES, default=list(BASELINES), help="baselines to run")

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite", formatter_class=fmt)
    p.add_argument("--seeds", type=int, default=5, help="number of random seeds per case")
    p.add_argument("--h", type=float, default=1e-5, help="central-difference step")
    p.add_argument("--tol", type=float, default=1e-4, help="max relative error")
    p.add_argument("--ops-only", action="store_true", help="skip the full-model loss check")

    p = sub.add_parser("oracle-check", help="brute-force modularity / AUC / C-index equivalence", formatter_class=fmt)
    p.add_argument("--seed", type=int, default=0, help="seed of the random instances")

    p = sub.add_parser("curves", help="ROC / time-dependent AUC point files from fold CSVs", formatter_class=fmt)
    p.add_argument("--results", required=True, type=Path, help="directory holding fold_*.csv and summary.json")
    p.add_argument("--out", required=True, type=Path, help="directory for the point files")
    return parser


def _cmd_gen_data(args) -> int:
    cfg = GeneratorConfig(
        n_samples=args.samples,
        n_classes=args.classes,
        d=args.d,
        d_g=args.d_g,
        m_min=args.min_patches,
        m_max=args.max_patches,
        n_groups=args.gene_groups,
        signal_p=args.signal_p,
        signal_g=args.signal_g,
        overlap_p=args.overlap_p,
        overlap_g=args.overlap_g,
        signal_fraction=args.signal_fraction,
        noise=args.noise,
        censor_rate=args.censor_rate,
        seed=_env_seed() if args.seed is None else args.seed,
    )
    ds = generate(cfg, args.out)
    print(f"wrote {len(ds)} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    summary = run_cv(load_dataset(args.data), _run_config(args), args.parallel_folds)
    print(format_table({summary["variant"]: summary}), end="")
    if not args.out:
        print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_variants(args, variants) -> int:
    cfg = _run_config(args, variant=variants[0])
    ds = load_dataset(args.data)
    table = run_ablation(ds, cfg, args.parallel_folds) if args.command == "ablate" else run_variants(
        ds, cfg, variants, args.parallel_folds
    )
    print(format_table(table), end="")
    return 0


def _cmd_gradcheck(args) -> int:
    from .numkit import op_suite
    from .oracles import model_grad_suite

    seeds = tuple(range(args.seeds))
    reports = op_suite(seeds, h=args.h, tol=args.tol)
    if not args.ops_only:
        reports += model_grad_suite(seeds, h=args.h, tol=args.tol)
    for r in reports:
        print(r.line())
    failed = [r.op_name for r in reports if not r.passed]
    if failed:
        print(f"gradcheck FAILED: {', '.join(failed)}")
        return 1
    print(f"gradcheck passed ({len(reports)} checks)")
    return 0


def _cmd_oracle_check(args) -> int:
    from .oracles import run_all

    reports = run_all(args.seed)
    for r in reports:
        print(r.line())
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"oracle-check FAILED: {', '.join(failed)}")
        return 1
    print(f"oracle-check passed ({len(reports)} checks)")
    return 0


def _cmd_curves(args) -> int:
    folds = sorted(args.results.glob("fold_*.csv"))
    if not folds:
        raise FileNotFoundError(f"no fold_*.csv files in {args.results}")
    summary_path = args.results / "summary.json"
    if not summary_path.is_file():
        raise FileNotFoundError(f"{summary_path} is missing")
    task = json.loads(summary_path.read_text())["task"]
    records = [rec for f in folds for rec in read_records_csv(f)]
    n_classes = len(records[0].scores) if task != "survival" else 0
    pooled = write_curves(task, records, n_classes, args.out)
    for name, value in sorted(pooled.items()):
        print(f"{name}={value:.12f}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "ablate": lambda a: _cmd_variants(a, ["full"]),
    "baselines": lambda a: _cmd_variants(a, a.variants),
    "gradcheck": _cmd_gradcheck,
    "oracle-check": _cmd_oracle_check,
    "curves": _cmd_curves,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, ArithmeticError) as exc:
        print(f"umeml {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
