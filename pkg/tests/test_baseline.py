import numpy as np
import pytest
import torch

from semlink.baseline import (
    BaselineClassifier,
    classify_baseline,
    predict_labels,
    train_baseline_classifier,
)
from semlink.data import Dataset, NUM_CLASSES


@pytest.fixture(scope="module")
def clean_split(small_corpus):
    """Clean images standing in for a noiseless received corpus."""
    idx = np.arange(len(small_corpus))
    train_idx = idx[idx % 6 < 5]
    test_idx = idx[idx % 6 == 5]
    return small_corpus.subset(train_idx), small_corpus.subset(test_idx)


@pytest.fixture(scope="module")
def svm_clf(clean_split):
    train_set, _ = clean_split
    return train_baseline_classifier("svm", train_set)


@pytest.fixture(scope="module")
def nn_clf(clean_split):
    train_set, _ = clean_split
    return train_baseline_classifier("nn", train_set, seed=3)


class TestTraining:
    def test_svm_learns_clean_corpus(self, svm_clf, clean_split):
        _, test_set = clean_split
        preds = predict_labels(svm_clf, test_set)
        acc = float(np.mean(preds == test_set.labels()))
        assert acc >= 0.9

    def test_nn_learns_clean_corpus(self, nn_clf, clean_split):
        _, test_set = clean_split
        preds = predict_labels(nn_clf, test_set)
        acc = float(np.mean(preds == test_set.labels()))
        assert acc >= 0.9

    def test_svm_fits_training_set(self, svm_clf, clean_split):
        train_set, _ = clean_split
        acc = float(np.mean(predict_labels(svm_clf, train_set) == train_set.labels()))
        assert acc >= 0.95

    def test_nn_training_is_seeded(self, clean_split):
        train_set, _ = clean_split
        sub = train_set.subset(range(34))
        a = train_baseline_classifier("nn", sub, seed=7)
        b = train_baseline_classifier("nn", sub, seed=7)
        for pa, pb in zip(a.model.parameters(), b.model.parameters()):
            assert torch.equal(pa, pb)

    def test_single_class_svm_rejected(self, small_corpus):
        one_class = small_corpus.subset(range(6))
        assert len(set(one_class.labels())) == 1
        with pytest.raises(ValueError, match="two classes"):
            train_baseline_classifier("svm", one_class)

    def test_empty_and_unknown(self, small_corpus):
        with pytest.raises(ValueError, match="empty"):
            train_baseline_classifier("svm", Dataset(items=[]))
        with pytest.raises(ValueError, match="kind"):
            train_baseline_classifier("forest", small_corpus)


class TestPrediction:
    def test_svm_emits_one_hot(self, svm_clf, clean_split):
        _, test_set = clean_split
        probs = classify_baseline(svm_clf, test_set.items[0].pixels)
        assert probs.shape == (NUM_CLASSES,)
        assert set(np.unique(probs)) == {0.0, 1.0}
        assert probs.sum() == 1.0

    def test_nn_emits_distribution(self, nn_clf, clean_split):
        _, test_set = clean_split
        probs = classify_baseline(nn_clf, test_set.items[0].pixels)
        assert probs.shape == (NUM_CLASSES,)
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)
        assert probs.min() >= 0.0

    def test_single_image_agrees_with_batch(self, nn_clf, clean_split):
        _, test_set = clean_split
        batch = predict_labels(nn_clf, test_set)
        single = [
            int(np.argmax(classify_baseline(nn_clf, item.pixels)))
            for item in test_set.items
        ]
        np.testing.assert_array_equal(batch, single)

    def test_shape_validated(self, svm_clf):
        with pytest.raises(ValueError):
            classify_baseline(svm_clf, np.zeros((32, 32)))

    def test_unknown_kind_rejected(self):
        fake = BaselineClassifier(kind="forest", model=None)
        with pytest.raises(ValueError):
            classify_baseline(fake, np.zeros((34, 34)))
