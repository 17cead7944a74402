"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import core as nk
from .core import Tape, Tensor


@dataclass
class GradReport:
    op_name: str
    max_rel_err: float
    tol: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.op_name:<28s} max_rel_err={self.max_rel_err:.3e} (tol {self.tol:.0e})"


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-5,
    op_name: str = "f",
) -> GradReport:
    """Compare tape gradients of the scalar ``f()`` against central differences.

    ``f`` must rebuild its graph from ``params`` on each call. The error per
    coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-7, 1e-3]")
    with Tape() as tape:
        loss = f()
    analytic = nk.backward(tape, loss, params)

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        ga = analytic[p].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f().item()
            flat[i] = orig - h
            down = f().item()
            flat[i] = orig
            num = (up - down) / (2.0 * h)
            err = abs(ga[i] - num) / max(1.0, abs(num))
            if not np.isfinite(err):
                err = np.inf
            worst = max(worst, err)
    return GradReport(op_name, float(worst), tol, bool(worst < tol))


def _away_from_zero(rng: np.random.Generator, shape, margin: float = 0.05) -> np.ndarray:
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin + x, x)


def _op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    """One scalar test function per differentiable op, with its parameters."""

    def P(*shape, positive=False, nudge=False):
        if positive:
            return nk.parameter(rng.uniform(0.5, 2.0, size=shape))
        if nudge:
            return nk.parameter(_away_from_zero(rng, shape))
        return nk.parameter(rng.normal(size=shape))

    # random fixed projection so every output coordinate gets a distinct weight
    def probe(t: Tensor) -> Tensor:
        w = nk.constant(np.sin(np.arange(t.data.size).reshape(t.shape) + 1.0))
        return nk.sum_all(nk.mul(t, w))

    cases: dict[str, tuple[Callable[[], Tensor], list[Tensor]]] = {}

    a, b = P(3, 4), P(4, 2)
    cases["matmul"] = (lambda a=a, b=b: probe(nk.matmul(a, b)), [a, b])
    a, b = P(3, 4), P(1, 4)
    cases["add"] = (lambda a=a, b=b: probe(nk.add(a, b)), [a, b])
    a, b = P(3, 4), P(3, 1)
    cases["sub"] = (lambda a=a, b=b: probe(nk.sub(a, b)), [a, b])
    a, b = P(3, 4), P(1, 4)
    cases["mul"] = (lambda a=a, b=b: probe(nk.mul(a, b)), [a, b])
    a, b = P(3, 4), P(1, 1, positive=True)
    cases["div"] = (lambda a=a, b=b: probe(nk.div(a, b)), [a, b])
    a = P(2, 3)
    cases["scale"] = (lambda a=a: probe(nk.scale(a, -1.7)), [a])
    a = P(2, 3)
    cases["transpose"] = (lambda a=a: probe(nk.transpose(a)), [a])
    a, b = P(2, 3), P(1, 3)
    cases["concat_rows"] = (lambda a=a, b=b: probe(nk.concat_rows([a, b, a])), [a, b])
    a, b = P(2, 3), P(2, 1)
    cases["concat_cols"] = (lambda a=a, b=b: probe(nk.concat_cols([a, b])), [a, b])
    a = P(4, 3)
    cases["submatrix"] = (lambda a=a: probe(nk.submatrix(a, 1, 3, 0, 2)), [a])
    a = P(3, 3)
    cases["sum_all"] = (lambda a=a: nk.sum_all(nk.mul(a, a)), [a])
    a = P(3, 2)
    cases["sum_rows"] = (lambda a=a: probe(nk.sum_rows(a)), [a])
    a = P(3, 2)
    cases["mean_rows"] = (lambda a=a: probe(nk.mean_rows(a)), [a])
    a = P(3, 4, nudge=True)
    cases["relu"] = (lambda a=a: probe(nk.relu(a)), [a])
    a = P(3, 4)
    cases["sigmoid"] = (lambda a=a: probe(nk.sigmoid(a)), [a])
    a = P(2, 3)
    cases["exp"] = (lambda a=a: probe(nk.exp(a)), [a])
    a = P(3, 4, positive=True)
    cases["log"] = (lambda a=a: probe(nk.log(a)), [a])
    a = P(3, 4)
    cases["softmax_rows"] = (lambda a=a: probe(nk.softmax_rows(a)), [a])
    a = P(3, 4)
    cases["log_softmax_rows"] = (lambda a=a: probe(nk.log_softmax_rows(a)), [a])
    a, b = P(3, 4), P(5, 4)
    cases["cosine_rows"] = (lambda a=a, b=b: probe(nk.cosine_rows(a, b)), [a, b])
    x, gn, bs = P(3, 5), P(1, 5), P(1, 5)
    cases["layer_norm_rows"] = (lambda x=x, gn=gn, bs=bs: probe(nk.layer_norm_rows(x, gn, bs)), [x, gn, bs])
    x, w, bb = P(3, 4), P(12, 2), P(3, 2)
    cases["grouped_linear"] = (lambda x=x, w=w, bb=bb: probe(nk.grouped_linear(x, w, bb)), [x, w, bb])
    return cases


def op_suite(seeds: Sequence[int] = (0, 1, 2, 3, 4), h: float = 1e-5, tol: float = 1e-5) -> list[GradReport]:
    """Check every registered op on several seeds; one report per op (worst seed)."""
    worst: dict[str, float] = {}
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for name, (f, params) in _op_cases(rng).items():
            rep = grad_check(f, params, h=h, tol=tol, op_name=name)
            worst[name] = max(worst.get(name, 0.0), rep.max_rel_err)
    missing = set(nk.BACKWARD_RULES) - set(worst)
    if missing:
        raise RuntimeError(f"ops without a gradient case: {sorted(missing)}")
    return [GradReport(name, err, tol, err < tol) for name, err in worst.items()]
