"""Pathology (prototype-query) and genomic (gene-group) encoders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numkit as nk
from .attention import (
    CrossAttentionParams,
    SelfAttentionBlockParams,
    cross_attend,
    self_attention_block,
)
from .numkit import DimensionError, Tensor


@dataclass
class PathologyEncoderParams:
    init_prototypes: Tensor
    cls_token: Tensor
    cross_layers: list[CrossAttentionParams] = field(default_factory=list)
    self_layers: list[SelfAttentionBlockParams] = field(default_factory=list)

    @classmethod
    def init(cls, d: int, n_prototypes: int, n_cross: int, n_self: int, rng: np.random.Generator):
        if n_prototypes < 1:
            raise ValueError("need at least one prototype")
        return cls(
            init_prototypes=nk.parameter(rng.normal(0.0, 1.0 / math.sqrt(d), (n_prototypes, d)), "init_prototypes"),
            cls_token=nk.parameter(rng.normal(0.0, 1.0 / math.sqrt(d), (1, d)), "path_cls"),
            cross_layers=[CrossAttentionParams.init(d, rng) for _ in range(n_cross)],
            self_layers=[SelfAttentionBlockParams.init(d, rng) for _ in range(n_self)],
        )


@dataclass
class GroupMLPs:
    """N independent two-layer perceptrons (relu hidden), stored stacked.

    Block ``n`` of ``w1`` (rows ``n*d_in:(n+1)*d_in``) and row ``n`` of
    ``b1`` belong to group ``n``; likewise for the second layer.
    """

    w1: Tensor  # (N * d_g) x d
    b1: Tensor  # N x d
    w2: Tensor  # (N * d) x d
    b2: Tensor  # N x d

    @classmethod
    def init(cls, n_groups: int, d_in: int, d: int, rng: np.random.Generator) -> "GroupMLPs":
        w1 = np.concatenate([rng.uniform(-1, 1, (d_in, d)) / math.sqrt(d_in) for _ in range(n_groups)])
        w2 = np.concatenate([rng.uniform(-1, 1, (d, d)) / math.sqrt(d) for _ in range(n_groups)])
        return cls(
            w1=nk.parameter(w1, "mlp_w1"),
            b1=nk.parameter(np.zeros((n_groups, d)), "mlp_b1"),
            w2=nk.parameter(w2, "mlp_w2"),
            b2=nk.parameter(np.zeros((n_groups, d)), "mlp_b2"),
        )

    def __len__(self) -> int:
        return self.b1.rows

    def __call__(self, x: Tensor) -> Tensor:
        return nk.grouped_linear(nk.relu(nk.grouped_linear(x, self.w1, self.b1)), self.w2, self.b2)


@dataclass
class GenomicEncoderParams:
    group_mlps: GroupMLPs
    gene_cls_token: Tensor
    self_layers: list[SelfAttentionBlockParams] = field(default_factory=list)

    @classmethod
    def init(cls, d: int, d_g: int, n_groups: int, n_self: int, rng: np.random.Generator):
        if n_groups < 1:
            raise ValueError("need at least one gene group")
        return cls(
            group_mlps=GroupMLPs.init(n_groups, d_g, d, rng),
            gene_cls_token=nk.parameter(rng.normal(0.0, 1.0 / math.sqrt(d), (1, d)), "gene_cls"),
            self_layers=[SelfAttentionBlockParams.init(d, rng) for _ in range(n_self)],
        )


def encode_pathology(patches: Tensor, params: PathologyEncoderParams, heads: int = 1) -> tuple[Tensor, Tensor]:
    """Compress a patch bag into prototypes, then run self-attention over ``[cls; prototypes]``.

    Returns ``(tokens, prototypes)``: tokens is ``(K+1) x d`` with the class
    token at row 0; prototypes is the ``K x d`` output of the cross-attention
    rounds (what the assignment matrices are computed from).
    """
    if patches.rows < 1:
        raise DimensionError("encode_pathology: empty patch bag")
    protos = params.init_prototypes
    for layer in params.cross_layers:
        protos = cross_attend(protos, patches, layer, heads)
    tokens = nk.concat_rows([params.cls_token, protos])
    for block in params.self_layers:
        tokens = self_attention_block(tokens, block, heads)
    return tokens, protos


def encode_genomic(groups: Tensor, params: GenomicEncoderParams, heads: int = 1) -> tuple[Tensor, Tensor]:
    """Embed each gene group with its own MLP, prepend the gene class token, self-attend.

    Returns ``(tokens, prototypes)`` where prototypes are the embedded groups
    before self-attention (``N x d``).
    """
    n = len(params.group_mlps)
    if groups.rows != n:
        raise DimensionError(f"encode_genomic: got {groups.rows} gene groups, encoder has {n}")
    protos = params.group_mlps(groups)
    tokens = nk.concat_rows([params.gene_cls_token, protos])
    for block in params.self_layers:
        tokens = self_attention_block(tokens, block, heads)
    return tokens, protos
