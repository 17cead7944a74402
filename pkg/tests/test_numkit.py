import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from umeml import numkit as nk
from umeml.cli import main
from umeml.numkit import BACKWARD_RULES, ContractError, DimensionError, Tape

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_matmul_examples():
    a = nk.constant([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal((nk.eye(2) @ a).data, a.data)
    assert (nk.constant([[1.0, 2.0]]) @ nk.constant([[3.0], [4.0]])).item() == 11.0
    out = nk.zeros(2, 3) @ nk.constant(np.arange(6.0).reshape(3, 2))
    assert np.array_equal(out.data, np.zeros((2, 2)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        nk.zeros(2, 3) @ nk.zeros(2, 3)


def test_add_and_concat_shape_errors():
    with pytest.raises(DimensionError):
        nk.zeros(2, 3) + nk.zeros(3, 2)
    with pytest.raises(DimensionError):
        nk.concat_rows([nk.zeros(2, 3), nk.zeros(2, 4)])


def test_softmax_examples():
    assert np.allclose(nk.softmax_rows(nk.constant([[0.0, 0.0]])).data, [[0.5, 0.5]])
    assert np.allclose(nk.softmax_rows(nk.constant([[1.0, 2.0]])).data, [[0.268941, 0.731059]], atol=1e-6)
    x = np.array([[0.3, -1.2, 2.0]])
    assert np.allclose(nk.softmax_rows(nk.constant(x + 7.5)).data, nk.softmax_rows(nk.constant(x)).data, atol=1e-15)


def test_softmax_rejects_non_finite():
    with pytest.raises(ContractError):
        nk.softmax_rows(nk.constant([[0.0, np.nan]]))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite))
def test_softmax_rows_sum_to_one(x):
    s = nk.softmax_rows(nk.constant(x)).data
    assert np.all(np.abs(s.sum(axis=1) - 1.0) <= 1e-12)


def test_cosine_examples():
    v = nk.constant([[0.3, -2.0, 1.0]])
    assert nk.cosine_rows(v, v).item() == pytest.approx(1.0, abs=1e-15)
    assert nk.cosine_rows(nk.constant([[1.0, 0.0]]), nk.constant([[0.0, 3.0]])).item() == 0.0
    assert nk.cosine_rows(nk.constant([[1.0, 1.0]]), nk.constant([[1.0, 0.0]])).item() == pytest.approx(0.707107, abs=1e-6)


def test_cosine_zero_row_is_clamped():
    out = nk.cosine_rows(nk.zeros(1, 3), nk.constant([[1.0, 2.0, 3.0]]))
    assert np.isfinite(out.data).all() and out.item() == 0.0


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, (3, 4), elements=finite),
    arrays(np.float64, (5, 4), elements=finite),
)
def test_cosine_range(a, b):
    c = nk.cosine_rows(nk.constant(a), nk.constant(b)).data
    assert c.shape == (3, 5)
    assert np.all(c >= -1 - 1e-12) and np.all(c <= 1 + 1e-12)


def test_elementwise_examples():
    assert np.array_equal(nk.relu(nk.constant([[-1.0, 2.0]])).data, [[0.0, 2.0]])
    assert nk.sigmoid(nk.constant(0.0)).item() == 0.5
    a, b = nk.constant(np.ones((2, 4))), nk.constant(2 * np.ones((3, 4)))
    out = nk.concat_rows([a, b]).data
    assert out.shape == (5, 4) and np.all(out[:2] == 1) and np.all(out[2:] == 2)


def test_backward_sum_and_square():
    p = nk.parameter(np.array([[1.0, -2.0], [0.5, 3.0]]))
    with Tape() as tape:
        loss = nk.sum_all(p)
    assert np.array_equal(nk.backward(tape, loss, [p])[p], np.ones((2, 2)))
    with Tape() as tape:
        loss = nk.sum_all(p * p)
    assert np.array_equal(nk.backward(tape, loss, [p])[p], 2 * p.data)


def test_backward_rejects_non_scalar_loss():
    p = nk.parameter(np.ones((2, 2)))
    with Tape() as tape:
        out = p * p
    with pytest.raises(ContractError):
        nk.backward(tape, out, [p])


def test_unused_parameter_gets_zero_gradient():
    p, q = nk.parameter(np.ones((1, 2))), nk.parameter(np.ones((3, 3)))
    with Tape() as tape:
        loss = nk.sum_all(p)
    grads = nk.backward(tape, loss, [p, q])
    assert np.array_equal(grads[q], np.zeros((3, 3)))


def test_no_tape_records_nothing():
    p = nk.parameter(np.ones((2, 2)))
    out = p @ p
    assert out.node_id is None


def test_backward_is_deterministic(rng):
    w = nk.parameter(rng.normal(size=(4, 3)))
    x = nk.constant(rng.normal(size=(5, 4)))

    def grads():
        with Tape() as tape:
            loss = nk.sum_all(nk.softmax_rows(nk.cosine_rows(x @ w, x @ w)))
        return nk.backward(tape, loss, [w])[w]

    assert grads().tobytes() == grads().tobytes()


def test_grad_check_quadratic_and_cross_entropy(rng):
    a = rng.normal(size=(4, 4))
    x = nk.parameter(rng.normal(size=(4, 1)))
    quad = nk.grad_check(lambda: x.T @ nk.constant(a) @ x, [x])
    assert quad.max_rel_err < 1e-8

    logits = nk.parameter(rng.normal(size=(1, 3)))
    ce = nk.grad_check(lambda: -nk.submatrix(nk.log_softmax_rows(logits), 0, 1, 1, 2), [logits])
    assert ce.max_rel_err < 1e-6


def test_grad_check_rejects_bad_step():
    x = nk.parameter(np.ones((1, 1)))
    with pytest.raises(ValueError):
        nk.grad_check(lambda: nk.sum_all(x), [x], h=1e-2)


def test_every_registered_op_passes_grad_check():
    reports = nk.op_suite(seeds=(0, 1, 2, 3, 4), tol=1e-5)
    assert {r.op_name for r in reports} == set(BACKWARD_RULES)
    bad = [r.line() for r in reports if not r.passed]
    assert not bad, bad


def test_report_line_lists_max_error():
    line = nk.op_suite(seeds=(0,))[0].line()
    assert line.startswith("PASS") and "max_rel_err=" in line


def test_mutated_backward_rule_is_caught(monkeypatch, capsys):
    original = BACKWARD_RULES["relu"]

    def flipped(g, node):
        return tuple(None if x is None else -x for x in original(g, node))

    monkeypatch.setitem(BACKWARD_RULES, "relu", flipped)
    reports = {r.op_name: r for r in nk.op_suite(seeds=(0,))}
    assert not reports["relu"].passed
    assert all(r.passed for name, r in reports.items() if name != "relu")

    assert main(["gradcheck", "--ops-only", "--seeds", "1"]) == 1
    out = capsys.readouterr().out
    assert "FAIL  relu" in out and "gradcheck FAILED: relu" in out
