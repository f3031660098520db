"""Conventional classifiers operating on received (channel-corrupted) images.

Both learn from flattened 34x34 pixels: a one-vs-rest RBF SVM and a small
fully connected softmax network. They anchor the comparison against the
task-trained semantic classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from sklearn.multiclass import OneVsRestClassifier
from sklearn.svm import SVC
from torch import nn

from .data import Dataset, IMAGE_SIZE, NUM_CLASSES

PIXELS_FLAT = IMAGE_SIZE * IMAGE_SIZE
NN_HIDDEN = 128
NN_EPOCHS = 50
NN_BATCH = 32
NN_LR = 1e-3


class _PixelNet(nn.Module):
    """1156 -> 128 -> 128 -> 17 softmax classifier."""

    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(PIXELS_FLAT, NN_HIDDEN),
            nn.ReLU(),
            nn.Linear(NN_HIDDEN, NN_HIDDEN),
            nn.ReLU(),
            nn.Linear(NN_HIDDEN, NUM_CLASSES),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.net(x), dim=1)


@dataclass
class BaselineClassifier:
    """A trained pixel-space classifier with a uniform predict interface."""

    kind: str
    model: object

    def predict_proba_one(self, pixels: np.ndarray) -> np.ndarray:
        return classify_baseline(self, pixels)


def _flatten_images(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    x = dataset.images().reshape(len(dataset), PIXELS_FLAT)
    return x, dataset.labels()


def train_baseline_classifier(
    kind: str, received_train_set: Dataset, seed: int = 0
) -> BaselineClassifier:
    """Fit a classifier on (possibly corrupted) received images.

    svm: one-vs-rest SVC with an RBF kernel, bandwidth 1/(n_features * Var(X)).
    nn: two 128-wide hidden layers, softmax output, Adam lr 0.001, 50 epochs.
    """
    if len(received_train_set) == 0:
        raise ValueError("cannot train a baseline on an empty dataset")
    x, y = _flatten_images(received_train_set)
    if kind == "svm":
        if len(np.unique(y)) < 2:
            raise ValueError("SVM training needs at least two classes")
        model = OneVsRestClassifier(SVC(kernel="rbf", gamma="scale"))
        model.fit(x, y)
        return BaselineClassifier("svm", model)
    if kind == "nn":
        torch.manual_seed(seed)
        net = _PixelNet()
        optimizer = torch.optim.Adam(net.parameters(), lr=NN_LR)
        loss_fn = nn.NLLLoss()
        xt = torch.from_numpy(x.astype(np.float32))
        yt = torch.from_numpy(y)
        order_rng = np.random.default_rng(seed)
        for _ in range(NN_EPOCHS):
            perm = order_rng.permutation(len(xt))
            for start in range(0, len(perm), NN_BATCH):
                idx = torch.from_numpy(perm[start : start + NN_BATCH])
                probs = net(xt[idx])
                loss = loss_fn(torch.log(torch.clamp(probs, min=1e-12)), yt[idx])
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
        net.eval()
        return BaselineClassifier("nn", net)
    raise ValueError(f"unknown baseline kind: {kind!r}")


def classify_baseline(classifier: BaselineClassifier, pixels: np.ndarray) -> np.ndarray:
    """One image -> 17-way probability vector.

    The SVM's hard label is wrapped as a one-hot vector so both baselines
    feed the same metrics.
    """
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"expected a {IMAGE_SIZE}x{IMAGE_SIZE} image, got {arr.shape}")
    flat = arr.reshape(1, PIXELS_FLAT)
    if classifier.kind == "svm":
        label = int(classifier.model.predict(flat)[0])
        onehot = np.zeros(NUM_CLASSES)
        onehot[label] = 1.0
        return onehot
    if classifier.kind == "nn":
        with torch.no_grad():
            probs = classifier.model(torch.from_numpy(flat.astype(np.float32)))
        return probs.squeeze(0).numpy().astype(np.float64)
    raise ValueError(f"unknown baseline kind: {classifier.kind!r}")


def predict_labels(classifier: BaselineClassifier, dataset: Dataset) -> np.ndarray:
    """Batch hard-label predictions over a dataset."""
    x, _ = _flatten_images(dataset)
    if classifier.kind == "svm":
        return classifier.model.predict(x).astype(np.int64)
    with torch.no_grad():
        probs = classifier.model(torch.from_numpy(x.astype(np.float32)))
    return probs.argmax(dim=1).numpy().astype(np.int64)
