import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eegwave.errors import InputError
from eegwave.metrics import (ConfusionMatrix, UndefinedMetricWarning, accuracy, auc_ovr_macro, binary_auc,
                             build_report, confusion_matrix, emit_report, parse_report, precision_recall_f1)
from eegwave.reference import WAVENET_CONFUSION


def brute_auc(scores, pos):
    """Pairwise oracle: fraction of (pos, neg) pairs ordered correctly, ties 0.5."""
    p = [s for s, y in zip(scores, pos) if y]
    n = [s for s, y in zip(scores, pos) if not y]
    tot = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a, b in itertools.product(p, n))
    return tot / (len(p) * len(n))


def test_confusion_basics():
    cm = confusion_matrix([0, 1, 2, 3], [0, 1, 2, 3], 4)
    np.testing.assert_array_equal(cm.counts, np.eye(4))
    cm = confusion_matrix([0, 1], [1, 0], 2)
    np.testing.assert_array_equal(cm.counts, [[0, 1], [1, 0]])
    with pytest.raises(InputError):
        confusion_matrix([0, 1], [0], 2)


def test_published_matrix_row_sums():
    assert WAVENET_CONFUSION.sum(axis=1).tolist() == [3563, 3800, 11086, 2447]


def test_wavenet_table_per_class_values():
    per, macro = precision_recall_f1(ConfusionMatrix(WAVENET_CONFUSION))
    phys = per[2]
    assert phys.precision == pytest.approx(10866 / 11509)
    assert phys.precision == pytest.approx(0.9441, abs=5e-5)
    assert phys.recall == pytest.approx(0.9802, abs=5e-5)
    assert phys.f1 == pytest.approx(0.9618, abs=5e-5)
    assert per[0].precision == pytest.approx(0.9972, abs=5e-5)
    assert per[0].recall == pytest.approx(0.9994, abs=5e-5)
    assert per[3].precision == pytest.approx(0.9067, abs=5e-5)
    # recomputed from the matrix by hand: mean of the four F1 values
    f1s = []
    for i in range(4):
        p = WAVENET_CONFUSION[i, i] / WAVENET_CONFUSION[:, i].sum()
        r = WAVENET_CONFUSION[i, i] / WAVENET_CONFUSION[i].sum()
        f1s.append(2 * p * r / (p + r))
    assert macro.f1 == pytest.approx(np.mean(f1s), abs=1e-12)
    assert macro.f1 == pytest.approx(0.9473, abs=5e-5)


def test_empty_class_warns_and_zeros():
    cm = ConfusionMatrix(np.array([[3, 0, 0], [0, 2, 0], [0, 0, 0]]), ("a", "b", "c"))
    with pytest.warns(UndefinedMetricWarning):
        per, _ = precision_recall_f1(cm)
    assert (per[2].precision, per[2].recall, per[2].f1) == (0, 0, 0)


def test_accuracy():
    assert accuracy(ConfusionMatrix(WAVENET_CONFUSION)) == pytest.approx(19965 / 20896)
    assert accuracy(ConfusionMatrix(np.diag([3, 4]), ("a", "b"))) == 1.0
    assert accuracy(ConfusionMatrix(np.array([[0, 2], [5, 0]]), ("a", "b"))) == 0.0
    with pytest.raises(InputError):
        accuracy(ConfusionMatrix(np.zeros((2, 2)), ("a", "b")))


def test_auc_examples():
    assert binary_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    assert binary_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert binary_auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    with pytest.raises(InputError):
        auc_ovr_macro(np.full((3, 2), 0.5), [1, 1, 1])


def test_auc_ovr_excludes_absent_classes():
    probs = np.array([[0.7, 0.2, 0.1], [0.2, 0.7, 0.1], [0.6, 0.3, 0.1]])
    value, excluded = auc_ovr_macro(probs, [0, 1, 0], return_excluded=True)
    assert excluded == [2]
    assert value == pytest.approx(1.0)


@settings(max_examples=60)
@given(arrays(np.int64, 12, elements=st.integers(0, 20)), arrays(np.bool_, 12))
def test_auc_matches_pairwise_oracle_and_is_rank_invariant(scores, pos):
    scores = scores / 20.0  # coarse grid so ties are common and transforms stay strict
    if pos.all() or not pos.any():
        return
    auc = binary_auc(scores, pos)
    assert auc == pytest.approx(brute_auc(scores, pos))
    assert binary_auc(np.exp(3 * scores) - 7, pos) == pytest.approx(auc)


@given(arrays(np.int64, (4, 4), elements=st.integers(0, 50)))
def test_metrics_bounded(counts):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndefinedMetricWarning)
        per, macro = precision_recall_f1(ConfusionMatrix(counts))
    for m in per + [macro]:
        assert 0 <= m.precision <= 1 and 0 <= m.recall <= 1 and 0 <= m.f1 <= 1
    for m in per:
        if m.precision + m.recall:
            assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60), st.permutations(range(4)))
def test_confusion_total_and_relabel(pairs, perm):
    t, p = map(np.array, zip(*pairs))
    cm = confusion_matrix(t, p, 4)
    assert cm.total == len(pairs)
    perm = np.array(perm)
    cm2 = confusion_matrix(perm[t], perm[p], 4)
    np.testing.assert_array_equal(cm2.counts[np.ix_(perm, perm)], cm.counts)


def test_report_emission():
    report = build_report(ConfusionMatrix(WAVENET_CONFUSION))
    table = emit_report(report)
    assert table == emit_report(report)
    for name in ("Noise", "Artifacts", "Physiological", "Pathological", "Macro avg."):
        assert f"\n{name}\n" in "\n" + table
    assert "0.96" in table  # physiological F1
    text = emit_report(report, "structured")
    assert "\n" not in text
    assert parse_report(text) == report


def test_round_half_even():
    from eegwave.metrics import round_half_even
    assert round_half_even(0.125) == "0.12"
    assert round_half_even(0.135) == "0.14"
    assert round_half_even(0.9441) == "0.94"
