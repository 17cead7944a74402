import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from umeml.metrics import (
    EvalRecord,
    UndefinedMetricError,
    accuracy,
    binary_auc,
    concordance_index,
    per_class_auc,
    read_points_csv,
    roc_auc,
    roc_points,
    time_dependent_auc,
    trapezoid_area,
    write_points_csv,
)
from umeml.oracles import (
    brute_concordance,
    brute_roc_auc,
    brute_td_auc,
    metric_oracles,
    random_classification_records,
    random_survival_records,
)


def _cls(scores, labels):
    return [EvalRecord(str(i), tuple(s), label=l) for i, (s, l) in enumerate(zip(scores, labels))]


def _surv(risks, times, censors):
    return [EvalRecord(str(i), (r,), time=t, censor=c) for i, (r, t, c) in enumerate(zip(risks, times, censors))]


def test_accuracy_examples():
    assert accuracy(_cls([[0.9, 0.1], [0.2, 0.8]], [0, 1])) == 1.0
    assert accuracy(_cls([[0.1, 0.9], [0.8, 0.2]], [0, 1])) == 0.0
    assert accuracy(_cls([[1, 0], [0, 1], [1, 0], [1, 0]], [0, 1, 0, 1])) == 0.75
    with pytest.raises(UndefinedMetricError):
        accuracy([])


def test_auc_examples():
    assert binary_auc(np.array([0.1, 0.9]), np.array([False, True])) == 1.0
    assert binary_auc(np.full(6, 0.3), np.array([0, 1, 0, 1, 1, 0], bool)) == 0.5
    with pytest.raises(UndefinedMetricError), pytest.warns(RuntimeWarning, match="skipped"):
        roc_auc(_cls([[0.2, 0.8], [0.4, 0.6]], [1, 1]))


def test_auc_matches_pairs_on_random_cases(rng):
    for _ in range(20):
        recs = random_classification_records(rng, 20, 3)
        assert roc_auc(recs) == brute_roc_auc(recs)


def test_auc_monotone_invariance(rng):
    recs = random_classification_records(rng, 30, 3)
    warped = [EvalRecord(r.sample_id, tuple(np.exp(3 * np.array(r.scores)) - 7), label=r.label) for r in recs]
    assert roc_auc(recs) == roc_auc(warped)


def test_cindex_examples():
    assert concordance_index(_surv([3, 2, 1], [1, 2, 3], [0, 0, 0])) == 1.0
    assert concordance_index(_surv([1, 2, 3], [1, 2, 3], [0, 0, 0])) == 0.0
    assert concordance_index(_surv([5, 1], [1, 2], [0, 1])) == 1.0
    with pytest.raises(UndefinedMetricError):
        concordance_index(_surv([1, 2], [1, 2], [1, 1]))


def test_cindex_equal_times_not_comparable():
    assert concordance_index(_surv([1, 2, 0], [1, 1, 5], [0, 0, 0])) == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 30), st.integers(0, 10_000))
def test_cindex_negation_sums_to_one(n, seed):
    rng = np.random.default_rng(seed)
    risk = rng.permutation(n).astype(float)  # no tied risks
    time = rng.permutation(n) + 1.0
    censor = (rng.random(n) < 0.3).astype(int)
    censor[np.argmin(time)] = 0
    a = concordance_index(_surv(risk, time, censor))
    b = concordance_index(_surv(-risk, time, censor))
    assert a + b == pytest.approx(1.0, abs=1e-12)


def test_cindex_and_td_auc_match_pairs(rng):
    for _ in range(10):
        recs = random_survival_records(rng, 30)
        assert concordance_index(recs) == brute_concordance(recs)
        times = np.quantile([r.time for r in recs], [0.2, 0.5, 0.8])
        assert time_dependent_auc(recs, times) == brute_td_auc(recs, times)


def test_td_auc_examples():
    assert time_dependent_auc(_surv([2.0, 1.0], [1.0, 5.0], [0, 0]), [2.0]) == [(2.0, 1.0)]
    assert time_dependent_auc(_surv([1.0, 1.0], [1.0, 5.0], [0, 0]), [2.0]) == [(2.0, 0.5)]
    # no case before t -> dropped
    assert time_dependent_auc(_surv([1.0, 1.0], [3.0, 5.0], [0, 0]), [2.0]) == []


def test_roc_points_examples(rng):
    recs = _cls([[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9]], [0, 0, 1, 1])
    pts = roc_points(recs, 0)
    assert (0.0, 1.0) in pts and pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)

    recs = random_classification_records(rng, 40, 3)
    per_class = per_class_auc(recs)
    for c, auc in per_class.items():
        assert abs(trapezoid_area(roc_points(recs, c)) - auc) <= 1e-12
        flipped = [EvalRecord(r.sample_id, tuple(-np.array(r.scores)), label=r.label) for r in recs]
        assert abs(trapezoid_area(roc_points(flipped, c)) - (1 - auc)) <= 1e-12


def test_points_csv_round_trip(tmp_path):
    pts = [(0.0, 0.0), (0.25, 0.6666666666666666), (1.0, 1.0)]
    path = tmp_path / "roc.csv"
    write_points_csv(path, ("fpr", "tpr"), pts)
    assert path.read_text().splitlines()[0] == "fpr,tpr"
    back = read_points_csv(path)
    assert max(abs(a - b) for p, q in zip(pts, back) for a, b in zip(p, q)) < 1e-12


def test_metric_oracle_suite():
    reports = metric_oracles()
    assert all(r.passed for r in reports), [r.line() for r in reports]
