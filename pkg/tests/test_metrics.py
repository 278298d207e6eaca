import numpy as np
import pytest

from fedalign.data import Dataset, synthetic_label_space
from fedalign.errors import ConfigError
from fedalign.metrics import evaluate, report_from_binary
from fedalign.model import MULTI_LABEL, SINGLE_LABEL, GlobalModel
from fedalign.numeric import MlpParams


def onehot_model(n_classes, task=SINGLE_LABEL):
    enc = MlpParams([np.eye(n_classes)], [np.zeros(n_classes)], "identity")
    return GlobalModel(enc, np.eye(n_classes), task)


def onehot_dataset(truth, n_classes, pred_classes):
    feats = np.zeros((len(truth), n_classes))
    feats[np.arange(len(truth)), pred_classes] = 1.0
    labels = np.zeros((len(truth), n_classes), dtype=np.int8)
    labels[np.arange(len(truth)), truth] = 1
    return Dataset(feats, labels, synthetic_label_space(n_classes), SINGLE_LABEL)


def test_perfect_predictions():
    truth = [0, 1, 2, 0]
    data = onehot_dataset(truth, 3, truth)
    report = evaluate(onehot_model(3), data)
    assert report.macro_f1 == 1.0
    assert report.macro_accuracy == 1.0


def test_all_negative_class_scores_zero_f1():
    pred = np.zeros((4, 2), dtype=bool)
    pred[:, 0] = True
    truth = np.zeros((4, 2), dtype=bool)
    truth[:2, 1] = True
    truth[2:, 0] = True
    report = report_from_binary(pred, truth)
    assert report.f1[1] == 0.0
    assert report.recall[1] == 0.0


def test_three_class_six_sample_hand_confusion_matrix():
    truth = [0, 0, 1, 1, 2, 2]
    preds = [0, 1, 1, 2, 2, 2]
    report = evaluate(onehot_model(3), onehot_dataset(truth, 3, preds))
    assert report.precision == pytest.approx([1.0, 0.5, 2 / 3])
    assert report.recall == pytest.approx([0.5, 0.5, 1.0])
    assert report.f1 == pytest.approx([2 / 3, 0.5, 0.8])
    assert report.accuracy == pytest.approx([5 / 6, 4 / 6, 5 / 6])
    assert report.macro_f1 == pytest.approx((2 / 3 + 0.5 + 0.8) / 3)
    assert report.macro_accuracy == pytest.approx((5 + 4 + 5) / 18)


def test_macro_f1_invariant_to_class_reordering(rng):
    pred = rng.random((50, 6)) < 0.4
    truth = rng.random((50, 6)) < 0.3
    base = report_from_binary(pred, truth)
    perm = rng.permutation(6)
    permuted = report_from_binary(pred[:, perm], truth[:, perm])
    assert base.macro_f1 == pytest.approx(permuted.macro_f1)
    assert base.macro_accuracy == pytest.approx(permuted.macro_accuracy)


def test_report_matches_brute_force_confusion(rng):
    for _ in range(20):
        n, c = 200, 10
        pred = rng.random((n, c)) < rng.uniform(0.1, 0.9)
        truth = rng.random((n, c)) < rng.uniform(0.1, 0.9)
        report = report_from_binary(pred, truth)
        for k in range(c):
            tp = fp = fn = tn = 0
            for i in range(n):
                if pred[i, k] and truth[i, k]:
                    tp += 1
                elif pred[i, k] and not truth[i, k]:
                    fp += 1
                elif not pred[i, k] and truth[i, k]:
                    fn += 1
                else:
                    tn += 1
            p = tp / (tp + fp) if tp + fp else 0.0
            r = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * p * r / (p + r) if p + r else 0.0
            assert report.precision[k] == pytest.approx(p)
            assert report.recall[k] == pytest.approx(r)
            assert report.f1[k] == pytest.approx(f1)
            assert report.accuracy[k] == pytest.approx((tp + tn) / n)


def test_multi_label_threshold_predictions(rng):
    enc = MlpParams([np.eye(2)], [np.zeros(2)], "identity")
    model = GlobalModel(enc, np.eye(2), MULTI_LABEL)
    feats = np.array([[1.0, -1.0], [1.0, 1.0], [-1.0, -1.0]])
    labels = np.array([[1, 0], [1, 1], [0, 0]], dtype=np.int8)
    data = Dataset(feats, labels, synthetic_label_space(2), MULTI_LABEL)
    report = evaluate(model, data)
    assert report.macro_f1 == 1.0


def test_empty_test_set_rejected():
    data = Dataset(
        np.zeros((0, 3)),
        np.zeros((0, 3), dtype=np.int8),
        synthetic_label_space(3),
        MULTI_LABEL,
    )
    with pytest.raises(ConfigError):
        evaluate(onehot_model(3, MULTI_LABEL), data)
