import numpy as np
import pytest
from hypothesis import given, strategies as st

from neigad.metrics import (
    BATCH_HEADER,
    EvalReport,
    MetricError,
    evaluate,
    fit_loglog_slope,
    minmax,
    overhead_report,
    roc_auc,
    roc_auc_bruteforce,
    scaling_probe,
    score_gap,
)


def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert roc_auc([0.5] * 4, [1, 0, 1, 0]) == 0.5
    assert roc_auc([3, 2, 1, 0], [1, 0, 1, 0]) == 0.75


def test_auc_single_class():
    with pytest.raises(MetricError, match="single class"):
        roc_auc([1, 2, 3], [0, 0, 0])
    with pytest.raises(MetricError):
        roc_auc([1, 2], [0, 2])
    with pytest.raises(MetricError):
        roc_auc([1, 2, 3], [0, 1])


labelled = st.integers(2, 40).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 5), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda l: 0 < sum(l) < len(l)),
    )
)


@given(labelled)
def test_auc_matches_pairwise_count(data):
    scores, labels = data
    assert roc_auc(scores, labels) == roc_auc_bruteforce(scores, labels)


@given(labelled)
def test_auc_monotone_invariance(data):
    scores, labels = data
    s = np.asarray(scores, dtype=float)
    assert roc_auc(s, labels) == roc_auc(np.exp(s) + 3.0, labels)


@given(labelled)
def test_auc_complement(data):
    scores, labels = data
    flipped = 1 - np.asarray(labels)
    assert roc_auc(scores, labels) + roc_auc(scores, flipped) == pytest.approx(1.0, abs=1e-15)


def test_score_gap():
    assert score_gap([4, 2, 2], [1, 0, 0]) == (4.0, 2.0, 2.0)
    rng = np.random.default_rng(0)
    s = rng.random(50)
    labels = np.arange(50) % 3 == 0
    a = [s[i] for i in range(50) if labels[i]]
    n = [s[i] for i in range(50) if not labels[i]]
    mean_a, mean_n, gap = score_gap(s, labels.astype(int))
    assert mean_a == pytest.approx(sum(a) / len(a), rel=1e-14)
    assert gap == pytest.approx(sum(a) / len(a) - sum(n) / len(n), rel=1e-12)


def test_minmax():
    assert np.array_equal(minmax([2.0, 4.0, 3.0]), [0.0, 1.0, 0.5])
    assert not minmax([1.0, 1.0]).any()


def _report(train, eigen=None):
    return EvalReport(0.5, 0.0, 0.0, 0.0, train, eigen, 0)


def test_overhead_examples():
    assert overhead_report(_report(2.0), _report(2.0)).relative == 0.0
    assert overhead_report(_report(1.0), _report(1.0, 0.03)).relative == pytest.approx(0.03, rel=1e-12)
    with pytest.raises(MetricError):
        overhead_report(_report(0.0), _report(1.0))


def test_evaluate_report_fields():
    rep = evaluate([0.1, 0.9, 0.5], [0, 1, 0], train_seconds=1.5, seed=4, method="dominant")
    d = rep.to_dict()
    assert "eigen_seconds" not in d and d["roc_auc"] == 1.0
    assert rep.normalized_gap == pytest.approx(1.0 - 0.5 * (0.0 + 0.5), rel=1e-14)
    assert len(rep.csv_row()) == len(BATCH_HEADER)
    assert evaluate([0, 1], [0, 1], eigen_seconds=0.2).to_dict()["eigen_seconds"] == 0.2


def test_slope_exact():
    sizes = [1000, 2000, 4000, 8000]
    assert fit_loglog_slope(sizes, [1e-3 * s for s in sizes]) == pytest.approx(1.0, abs=1e-12)
    assert fit_loglog_slope(sizes, [1e-9 * s * s for s in sizes]) == pytest.approx(2.0, abs=1e-12)


def test_scaling_probe_parameter_errors():
    with pytest.raises(MetricError):
        scaling_probe([100, 200])
    with pytest.raises(MetricError):
        scaling_probe([100, 200, 400], seeds=[0])


def test_scaling_probe_small():
    res = scaling_probe([400, 800, 1600], t=4, avg_degree=8, blocks=4)
    assert len(res.median_seconds) == 3 and np.isfinite(res.slope)


def test_pin_allocator_is_idempotent():
    from neigad.alloc import pin_allocator

    first = pin_allocator()
    assert pin_allocator() == first
