"""Task objectives and the total loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import numkit as nk
from .numkit import Tensor


@dataclass(frozen=True)
class SurvivalTarget:
    time: float  # months
    censor: int  # 1 = censored
    bin: int

    def __post_init__(self):
        if not self.time > 0:
            raise ValueError(f"survival time must be positive, got {self.time}")
        if self.censor not in (0, 1):
            raise ValueError(f"censor must be 0 or 1, got {self.censor}")


def discretize(time: float, edges: np.ndarray) -> int:
    """Bin index of ``time`` given interior edges ``[q1, ..., q_{n-1}]``; bins are left-closed."""
    return int(np.searchsorted(edges, time, side="right"))


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    if not 0 <= label < logits.cols:
        raise ValueError(f"label {label} out of range for {logits.cols} classes")
    return -nk.submatrix(nk.log_softmax_rows(logits), 0, 1, label, label + 1)


def nll_survival(hazard_logits: Tensor, target: SurvivalTarget, uncensored_weight: float = 0.0) -> Tensor:
    """Discrete-hazard negative log-likelihood for one sample.

    With ``h_k = sigmoid(logit_k)`` and ``S_k = prod_{j<=k} (1 - h_j)``:
    censored samples pay ``-log S_bin``, events pay ``-log S_{bin-1} - log h_bin``.
    ``log S`` is accumulated as a sum of per-bin ``log(1 - h_j)``, each log
    argument clamped at 1e-12. ``uncensored_weight`` (alpha) scales censored
    samples by ``1 - alpha`` while event samples keep full weight; 0 gives the
    plain likelihood.
    """
    n_bins = hazard_logits.cols
    b = target.bin
    if not 0 <= b < n_bins:
        raise ValueError(f"bin {b} out of range for {n_bins} bins")
    log_surv = nk.log(nk.sigmoid(-hazard_logits))  # log(1 - h_j)
    if target.censor:
        loss = -nk.sum_all(nk.submatrix(log_surv, 0, 1, 0, b + 1))
        return nk.scale(loss, 1.0 - uncensored_weight) if uncensored_weight else loss
    log_h = nk.log(nk.sigmoid(nk.submatrix(hazard_logits, 0, 1, b, b + 1)))
    loss = -log_h
    if b > 0:
        loss = loss - nk.sum_all(nk.submatrix(log_surv, 0, 1, 0, b))
    return loss


def total_loss(objective: Tensor, modularity: Tensor, gamma: float) -> Tensor:
    """``objective + gamma * modularity``; gamma = 0 returns ``objective`` itself."""
    if gamma == 0.0:
        return objective
    return objective + nk.scale(modularity, gamma)


def survival_curve(hazard_logits: np.ndarray) -> np.ndarray:
    h = expit(np.asarray(hazard_logits, dtype=np.float64).reshape(-1))
    return np.cumprod(1.0 - h)


def survival_risk(hazard_logits: np.ndarray) -> float:
    """Risk score ``-sum_k S_k`` from hazard logits (higher means earlier event)."""
    return float(-survival_curve(hazard_logits).sum())
