"""Register tokens, the unified multimodal decoder, task heads, and the Bi-fusion replacement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numkit as nk
from .attention import CrossAttentionParams, SelfAttentionBlockParams, cross_attend, init_uniform, self_attention_block
from .numkit import DimensionError, Tensor

TASKS = ("grading", "classification", "survival")


@dataclass
class TaskHeads:
    """Linear heads (no bias) from the pooled vector to task logits."""

    grading: Tensor
    classification: Tensor
    survival: Tensor

    @classmethod
    def init(cls, in_dim: int, n_grade: int, n_class: int, n_bins: int, rng: np.random.Generator):
        return cls(
            grading=init_uniform(rng, in_dim, (in_dim, n_grade), "head_grading"),
            classification=init_uniform(rng, in_dim, (in_dim, n_class), "head_class"),
            survival=init_uniform(rng, in_dim, (in_dim, n_bins), "head_survival"),
        )

    def for_task(self, task: str) -> Tensor:
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
        return getattr(self, task)


@dataclass
class FusionParams:
    registers: Tensor | None  # I x d, None when I = 0
    decoder_layers: list[SelfAttentionBlockParams] = field(default_factory=list)

    @classmethod
    def init(cls, d: int, n_registers: int, n_layers: int, rng: np.random.Generator):
        registers = None
        if n_registers > 0:
            registers = nk.parameter(rng.normal(0.0, 1.0 / math.sqrt(d), (n_registers, d)), "registers")
        return cls(registers, [SelfAttentionBlockParams.init(d, rng) for _ in range(n_layers)])

    @property
    def n_registers(self) -> int:
        return 0 if self.registers is None else self.registers.rows


@dataclass
class BiFusionParams:
    path_from_gene: CrossAttentionParams
    gene_from_path: CrossAttentionParams

    @classmethod
    def init(cls, d: int, rng: np.random.Generator) -> "BiFusionParams":
        return cls(CrossAttentionParams.init(d, rng), CrossAttentionParams.init(d, rng))


def concat_with_registers(path_tokens: Tensor, gene_tokens: Tensor, registers: Tensor | None) -> Tensor:
    """Stack ``[pathology tokens; registers; genomic tokens]`` in that order."""
    parts = [path_tokens] + ([registers] if registers is not None else []) + [gene_tokens]
    if len({p.cols for p in parts}) != 1:
        raise DimensionError(f"concat_with_registers: widths disagree, {[p.shape for p in parts]}")
    return nk.concat_rows(parts)


def decode_unified(u: Tensor, decoder_layers: list[SelfAttentionBlockParams], heads: int = 1) -> Tensor:
    for block in decoder_layers:
        u = self_attention_block(u, block, heads)
    return u


def pool_and_head(decoded: Tensor, task: str, heads: TaskHeads, gene_cls_row: int) -> Tensor:
    """Concatenate the decoded pathology (row 0) and genomic class tokens, apply the task head.

    ``gene_cls_row`` is ``K + 1 + I``; register rows never reach the head.
    """
    pooled = nk.concat_cols([nk.row(decoded, 0), nk.row(decoded, gene_cls_row)])
    return pooled @ heads.for_task(task)


def bi_fusion(path_tokens: Tensor, gene_tokens: Tensor, params: BiFusionParams, heads: int = 1) -> Tensor:
    """Two-way cross-attention; returns the ``1 x 2d`` pair of updated class tokens."""
    if path_tokens.cols != gene_tokens.cols:
        raise DimensionError(f"bi_fusion: widths disagree, {path_tokens.shape} vs {gene_tokens.shape}")
    path_out = cross_attend(path_tokens, gene_tokens, params.path_from_gene, heads)
    gene_out = cross_attend(gene_tokens, path_tokens, params.gene_from_path, heads)
    return nk.concat_cols([nk.row(path_out, 0), nk.row(gene_out, 0)])
