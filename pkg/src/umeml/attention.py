"""Residual prototype cross-attention and pre-norm self-attention blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .numkit import DimensionError, Tensor


def init_uniform(rng: np.random.Generator, fan_in: int, shape, name: str) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return nk.parameter(rng.uniform(-bound, bound, size=shape), name=name)


@dataclass
class CrossAttentionParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor

    @classmethod
    def init(cls, d: int, rng: np.random.Generator) -> "CrossAttentionParams":
        return cls(*(init_uniform(rng, d, (d, d), n) for n in ("w_q", "w_k", "w_v")))

    @property
    def width(self) -> int:
        return self.w_q.rows


@dataclass
class SelfAttentionBlockParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    ffn_w1: Tensor
    ffn_w2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    @classmethod
    def init(cls, d: int, rng: np.random.Generator) -> "SelfAttentionBlockParams":
        proj = [init_uniform(rng, d, (d, d), n) for n in ("w_q", "w_k", "w_v", "w_o")]
        return cls(
            *proj,
            ffn_w1=init_uniform(rng, d, (d, 4 * d), "ffn_w1"),
            ffn_w2=init_uniform(rng, 4 * d, (4 * d, d), "ffn_w2"),
            ln1_gain=nk.parameter(np.ones((1, d)), "ln1_gain"),
            ln1_bias=nk.parameter(np.zeros((1, d)), "ln1_bias"),
            ln2_gain=nk.parameter(np.ones((1, d)), "ln2_gain"),
            ln2_bias=nk.parameter(np.zeros((1, d)), "ln2_bias"),
        )

    @property
    def width(self) -> int:
        return self.w_q.rows


def _attend(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    # q: T x d, k/v: S x d; columns split evenly across heads
    d = q.cols
    if heads == 1:
        scores = nk.scale(q @ k.T, 1.0 / math.sqrt(d))
        return nk.softmax_rows(scores) @ v
    if d % heads:
        raise DimensionError(f"width {d} not divisible by {heads} heads")
    dh = d // heads
    outs = []
    for h in range(heads):
        lo, hi = h * dh, (h + 1) * dh
        qh = nk.submatrix(q, 0, q.rows, lo, hi)
        kh = nk.submatrix(k, 0, k.rows, lo, hi)
        vh = nk.submatrix(v, 0, v.rows, lo, hi)
        scores = nk.scale(qh @ kh.T, 1.0 / math.sqrt(dh))
        outs.append(nk.softmax_rows(scores) @ vh)
    return nk.concat_cols(outs)


def cross_attend(c_prev: Tensor, p: Tensor, params: CrossAttentionParams, heads: int = 1) -> Tensor:
    """One prototype update: ``C = C_prev + softmax(C_prev Wq (P Wk)^T / sqrt(d)) (P Wv)``.

    Prototypes are the queries, patch instances the keys and values. The
    result does not depend on the order of the rows of ``p``.
    """
    d = params.width
    if c_prev.cols != d or p.cols != d:
        raise DimensionError(
            f"cross_attend: prototypes {c_prev.shape}, instances {p.shape}, projections {d}x{d}"
        )
    if c_prev.rows < 1 or p.rows < 1:
        raise DimensionError("cross_attend needs at least one prototype and one instance")
    update = _attend(c_prev @ params.w_q, p @ params.w_k, p @ params.w_v, heads)
    return c_prev + update


def self_attention_block(x: Tensor, params: SelfAttentionBlockParams, heads: int = 1) -> Tensor:
    """Pre-norm transformer block without positional information.

    ``y = x + Attn(LN(x)) Wo``; ``out = y + relu(LN(y) W1) W2``.
    """
    if x.cols != params.width:
        raise DimensionError(f"self_attention_block: input {x.shape}, block width {params.width}")
    h = nk.layer_norm_rows(x, params.ln1_gain, params.ln1_bias)
    attn = _attend(h @ params.w_q, h @ params.w_k, h @ params.w_v, heads)
    y = x + attn @ params.w_o
    h2 = nk.layer_norm_rows(y, params.ln2_gain, params.ln2_bias)
    return y + nk.relu(h2 @ params.ffn_w1) @ params.ffn_w2
