"""Full model and its ablation / baseline variants, wired from the building blocks."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import numkit as nk
from .assignment import AssignmentBundle, build_bundle, modularity_loss
from .encoders import GenomicEncoderParams, PathologyEncoderParams, encode_genomic, encode_pathology
from .fusion import (
    BiFusionParams,
    FusionParams,
    TaskHeads,
    bi_fusion,
    concat_with_registers,
    decode_unified,
    pool_and_head,
)
from .numkit import Tensor

VARIANTS = ("full", "no_modularity", "no_registers", "bifusion", "concat", "add", "path_only", "gene_only")
ABLATIONS = ("full", "no_modularity", "bifusion", "no_registers")
BASELINES = ("concat", "add", "path_only", "gene_only")
# variants that carry the alignment (modularity) term at all
_ALIGNED = ("full", "no_modularity", "no_registers", "bifusion")


@dataclass
class ModelShape:
    d: int = 32
    d_g: int = 64
    n_prototypes: int = 16
    n_groups: int = 6
    n_registers: int = 4
    n_cross: int = 2
    n_path_self: int = 2
    n_gene_self: int = 2
    n_decoder: int = 2
    heads: int = 1
    n_grade: int = 3
    n_class: int = 3
    n_bins: int = 4


@dataclass
class UmemlParams:
    pathology: PathologyEncoderParams | None
    genomic: GenomicEncoderParams | None
    fusion: FusionParams | None
    bifusion: BiFusionParams | None
    heads: TaskHeads


def iter_params(obj) -> Iterator[Tensor]:
    """Every trainable tensor reachable from ``obj``, in a fixed order."""
    if isinstance(obj, Tensor):
        if obj.requires_grad:
            yield obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from iter_params(getattr(obj, f.name))
    elif isinstance(obj, (list, tuple)):
        for item in obj:
            yield from iter_params(item)


def init_params(shape: ModelShape, variant: str, rng: np.random.Generator) -> UmemlParams:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    d = shape.d
    use_path = variant != "gene_only"
    use_gene = variant != "path_only"
    path = PathologyEncoderParams.init(d, shape.n_prototypes, shape.n_cross, shape.n_path_self, rng) if use_path else None
    gene = GenomicEncoderParams.init(d, shape.d_g, shape.n_groups, shape.n_gene_self, rng) if use_gene else None
    fusion = bif = None
    if variant in ("full", "no_modularity", "no_registers"):
        n_reg = 0 if variant == "no_registers" else shape.n_registers
        fusion = FusionParams.init(d, n_reg, shape.n_decoder, rng)
    elif variant == "bifusion":
        bif = BiFusionParams.init(d, rng)
    head_in = 2 * d if variant in ("full", "no_modularity", "no_registers", "bifusion", "concat") else d
    heads = TaskHeads.init(head_in, shape.n_grade, shape.n_class, shape.n_bins, rng)
    return UmemlParams(path, gene, fusion, bif, heads)


@dataclass
class UmemlModel:
    params: UmemlParams
    variant: str
    heads: int = 1

    def parameters(self) -> list[Tensor]:
        return list(iter_params(self.params))

    @property
    def uses_alignment(self) -> bool:
        return self.variant in _ALIGNED

    def forward(
        self,
        patches: Tensor,
        genes: Tensor,
        task: str,
        with_bundle: bool = False,
        keep_self_loops: bool = False,
    ) -> tuple[Tensor, AssignmentBundle | None]:
        """Task logits for one sample, plus the assignment bundle when requested."""
        p = self.params
        path_tokens = path_protos = gene_tokens = gene_protos = None
        if p.pathology is not None:
            path_tokens, path_protos = encode_pathology(patches, p.pathology, self.heads)
        if p.genomic is not None:
            gene_tokens, gene_protos = encode_genomic(genes, p.genomic, self.heads)

        head = p.heads.for_task(task)
        if p.fusion is not None:
            u = concat_with_registers(path_tokens, gene_tokens, p.fusion.registers)
            decoded = decode_unified(u, p.fusion.decoder_layers, self.heads)
            logits = pool_and_head(decoded, task, p.heads, path_tokens.rows + p.fusion.n_registers)
        elif p.bifusion is not None:
            logits = bi_fusion(path_tokens, gene_tokens, p.bifusion, self.heads) @ head
        elif self.variant == "concat":
            logits = nk.concat_cols([nk.row(path_tokens, 0), nk.row(gene_tokens, 0)]) @ head
        elif self.variant == "add":
            logits = (nk.row(path_tokens, 0) + nk.row(gene_tokens, 0)) @ head
        elif self.variant == "path_only":
            logits = nk.row(path_tokens, 0) @ head
        else:
            logits = nk.row(gene_tokens, 0) @ head

        bundle = None
        if with_bundle and self.uses_alignment:
            bundle = build_bundle(path_protos, gene_protos, patches, keep_self_loops)
        return logits, bundle

    def modularity(self, bundle: AssignmentBundle | None, alpha: float, beta: float) -> Tensor:
        if bundle is None:
            return nk.zeros(1, 1)
        return modularity_loss(bundle, alpha, beta)


def build_model(shape: ModelShape, variant: str, seed: int) -> UmemlModel:
    rng = np.random.default_rng(seed)
    return UmemlModel(init_params(shape, variant, rng), variant, shape.heads)
