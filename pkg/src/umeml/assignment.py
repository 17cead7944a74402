"""Prototype assignment matrices, patch affinity graph and the modularity loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .numkit import DimensionError, Tensor


class DegenerateGraphError(ValueError):
    """Affinity graph needs at least two vertices."""


class EmptyGraphError(ValueError):
    """Every edge weight is zero, so the null model is undefined."""


@dataclass
class AssignmentBundle:
    s_p: Tensor  # K x M
    s_g: Tensor | None  # N x M
    affinity: Tensor  # M x M
    weight_w: Tensor | None  # M x M; None when the graph is empty
    degree: Tensor  # M x 1
    edge_mass: Tensor  # 1 x 1, equals 2e

    @property
    def edge_mass_2e(self) -> float:
        return self.edge_mass.item()


def assign(prototypes: Tensor, instances: Tensor) -> Tensor:
    """Soft assignment ``max(0, cos(prototype_k, instance_m))``, ``K x M``."""
    if prototypes.cols != instances.cols:
        raise DimensionError(f"assign: prototypes {prototypes.shape} vs instances {instances.shape}")
    return nk.relu(nk.cosine_rows(prototypes, instances))


def affinity_graph(instances: Tensor, keep_self_loops: bool = False) -> tuple[Tensor, Tensor, Tensor]:
    """Clipped-cosine affinity among instances, with degrees and total edge mass 2e.

    The diagonal is zeroed unless ``keep_self_loops``. ``2e`` is the sum of
    all entries of ``A`` (each undirected edge counted from both ends).
    """
    m = instances.rows
    if m < 2:
        raise DegenerateGraphError(f"affinity graph needs >= 2 instances, got {m}")
    a = nk.relu(nk.cosine_rows(instances, instances))
    if not keep_self_loops:
        a = nk.mul(a, nk.constant(1.0 - np.eye(m)))
    degree = nk.transpose(nk.sum_rows(a))
    return a, degree, nk.sum_all(a)


def modularity_weight(a: Tensor, degree: Tensor, edge_mass: Tensor) -> Tensor:
    """``W = A - d d^T / 2e``."""
    if edge_mass.item() <= 0.0:
        raise EmptyGraphError("edge mass 2e is zero")
    return a - nk.div(degree @ degree.T, edge_mass)


def build_bundle(
    path_prototypes: Tensor,
    gene_prototypes: Tensor | None,
    instances: Tensor,
    keep_self_loops: bool = False,
) -> AssignmentBundle:
    a, degree, edge_mass = affinity_graph(instances, keep_self_loops)
    w = modularity_weight(a, degree, edge_mass) if edge_mass.item() > 0.0 else None
    s_g = assign(gene_prototypes, instances) if gene_prototypes is not None else None
    return AssignmentBundle(assign(path_prototypes, instances), s_g, a, w, degree, edge_mass)


def _trace_w_sts(w: Tensor, s: Tensor) -> Tensor:
    # Tr(W S^T S) = Tr(S W S^T) = sum((S W) * S)
    return nk.sum_all(nk.mul(s @ w, s))


def modularity_loss(bundle: AssignmentBundle, alpha: float = 1.0, beta: float = 1.0) -> Tensor:
    """``-(alpha Tr(W Sp^T Sp) + beta Tr(W Sg^T Sg)) / 2e``; exactly 0 for an empty graph."""
    if bundle.weight_w is None or bundle.edge_mass_2e == 0.0:
        return nk.zeros(1, 1)
    total = nk.scale(_trace_w_sts(bundle.weight_w, bundle.s_p), alpha)
    if bundle.s_g is not None and beta != 0.0:
        total = total + nk.scale(_trace_w_sts(bundle.weight_w, bundle.s_g), beta)
    return -nk.div(total, bundle.edge_mass)
