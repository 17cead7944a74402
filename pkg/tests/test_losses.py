import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from umeml import numkit as nk
from umeml.losses import (
    SurvivalTarget,
    cross_entropy,
    discretize,
    nll_survival,
    survival_curve,
    survival_risk,
    total_loss,
)

logit = st.floats(-30, 30, allow_nan=False)


def test_cross_entropy_examples():
    assert cross_entropy(nk.constant([[0.0, 0.0]]), 0).item() == pytest.approx(math.log(2), abs=1e-15)
    assert cross_entropy(nk.constant([[10.0, -10.0]]), 0).item() == pytest.approx(2.06e-9, rel=1e-2)
    a = cross_entropy(nk.constant([[0.4, -1.0, 2.0]]), 2).item()
    b = cross_entropy(nk.constant([[100.4, 99.0, 102.0]]), 2).item()
    assert a == pytest.approx(b, abs=1e-12)


def test_cross_entropy_label_range():
    with pytest.raises(ValueError):
        cross_entropy(nk.constant([[0.0, 0.0]]), 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(logit, min_size=2, max_size=5), st.data())
def test_cross_entropy_non_negative(values, data):
    label = data.draw(st.integers(0, len(values) - 1))
    assert cross_entropy(nk.constant([values]), label).item() >= 0.0


def test_survival_single_bin_values():
    event = nll_survival(nk.constant([[0.0]]), SurvivalTarget(1.0, 0, 0)).item()
    censored = nll_survival(nk.constant([[0.0]]), SurvivalTarget(1.0, 1, 0)).item()
    assert abs(event - 0.693147) < 1e-6 and abs(event - math.log(2)) < 1e-9
    assert abs(censored - math.log(2)) < 1e-9


def test_survival_certain_event_limit():
    assert nll_survival(nk.constant([[40.0]]), SurvivalTarget(1.0, 0, 0)).item() < 1e-15


def test_survival_hand_multibin():
    logits = np.array([[0.2, -0.5, 1.0]])
    h = 1 / (1 + np.exp(-logits[0]))
    event = nll_survival(nk.constant(logits), SurvivalTarget(2.0, 0, 2)).item()
    assert event == pytest.approx(-np.log(1 - h[0]) - np.log(1 - h[1]) - np.log(h[2]), abs=1e-12)
    cens = nll_survival(nk.constant(logits), SurvivalTarget(2.0, 1, 1)).item()
    assert cens == pytest.approx(-np.log(1 - h[0]) - np.log(1 - h[1]), abs=1e-12)


def test_censored_weighting():
    logits = nk.constant([[0.3, -0.1]])
    plain = nll_survival(logits, SurvivalTarget(1.0, 1, 1)).item()
    assert nll_survival(logits, SurvivalTarget(1.0, 1, 1), 0.25).item() == pytest.approx(0.75 * plain)
    ev = nll_survival(logits, SurvivalTarget(1.0, 0, 1)).item()
    assert nll_survival(logits, SurvivalTarget(1.0, 0, 1), 0.25).item() == ev


@settings(max_examples=60, deadline=None)
@given(st.lists(logit, min_size=1, max_size=5), st.data())
def test_survival_non_negative(values, data):
    b = data.draw(st.integers(0, len(values) - 1))
    c = data.draw(st.integers(0, 1))
    assert nll_survival(nk.constant([values]), SurvivalTarget(1.0, c, b)).item() >= 0.0


def test_survival_target_validation():
    with pytest.raises(ValueError):
        SurvivalTarget(0.0, 0, 0)
    with pytest.raises(ValueError):
        SurvivalTarget(1.0, 2, 0)
    with pytest.raises(ValueError):
        nll_survival(nk.constant([[0.0, 0.0]]), SurvivalTarget(1.0, 0, 2))


@pytest.mark.parametrize("censor,bin_", [(0, 0), (0, 3), (1, 0), (1, 2)])
def test_survival_gradient(rng, censor, bin_):
    logits = nk.parameter(rng.normal(size=(1, 4)))
    report = nk.grad_check(lambda: nll_survival(logits, SurvivalTarget(1.5, censor, bin_)), [logits], tol=1e-4)
    assert report.passed, report.line()


def test_total_loss():
    obj = nk.constant([[1.0]])
    assert total_loss(obj, nk.constant([[0.125]]), 0.0) is obj
    assert total_loss(obj, nk.constant([[0.125]]), 0.1).item() == pytest.approx(1.0125, abs=1e-15)


def test_total_loss_gradient_linearity(rng):
    p = nk.parameter(rng.normal(size=(1, 3)))
    m = nk.parameter(rng.normal(size=(2, 2)))

    def grads(gamma, which):
        with nk.Tape() as tape:
            obj = cross_entropy(p, 1)
            mod = nk.sum_all(nk.mul(m, m)) + nk.sum_all(p)
            loss = {"obj": obj, "mod": mod, "tot": total_loss(obj, mod, gamma)}[which]
        g = nk.backward(tape, loss, [p, m])
        return g[p], g[m]

    gamma = 0.37
    for tot, o, md in zip(grads(gamma, "tot"), grads(gamma, "obj"), grads(gamma, "mod")):
        assert np.allclose(tot, o + gamma * md, atol=1e-15)


def test_discretize_left_closed_bins():
    edges = np.array([1.0, 2.0, 3.0])
    assert [discretize(t, edges) for t in (0.5, 1.0, 1.5, 3.0, 9.0)] == [0, 1, 1, 3, 3]


def test_survival_risk_orders_hazards():
    low, high = np.array([[-3.0, -3.0]]), np.array([[2.0, 2.0]])
    assert survival_risk(high) > survival_risk(low)
    s = survival_curve(high)
    assert np.all(np.diff(s) <= 0)
