"""Track-level decisions from segment outputs: majority vote or SVM stacking.

The stacking classifier is a one-vs-rest linear SVM over standardized
track features (the mean of a track's 1024-d segment feature taps). Each
binary machine minimizes ``||w||^2 / (2C) + mean_i max(0, 1 - y_i (w.x_i + b))``
by Pegasos-style stochastic subgradient steps of size ``1 / (lambda (t + n))``
(``lambda = 1 / C``, ``n`` samples; the offset damps the unregularized bias
early on) and returns the average of the iterates from the second half of
training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = [
    "TrackFeatures",
    "SvmModel",
    "vote_track",
    "average_features",
    "svm_objective",
    "svm_train",
    "svm_predict",
    "track_accuracy",
    "confusion_matrix",
]


@dataclass
class TrackFeatures:
    track_id: str
    mean_feature: np.ndarray
    label: int


@dataclass
class SvmModel:
    weights: np.ndarray  # (num_classes, dim)
    biases: np.ndarray   # (num_classes,)
    mean: np.ndarray     # (dim,)
    std: np.ndarray      # (dim,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if np.any(self.std <= 0):
            raise ValueError("standardization std must be positive")

    @property
    def num_classes(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1]

    def scores(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise ShapeError(f"feature dimension {x.shape[1]} != model dimension {self.dim}")
        z = (x - self.mean) / self.std
        return z @ self.weights.T + self.biases


def vote_track(segment_predictions):
    """Majority class over ``(class, softmax_vector)`` pairs.

    Ties go to the tied class with the largest summed softmax probability,
    then to the lowest class index.
    """
    if not segment_predictions:
        raise ValueError("cannot vote over zero segments")
    classes = np.array([int(c) for c, _ in segment_predictions])
    probs = np.sum([np.asarray(p, dtype=np.float64) for _, p in segment_predictions], axis=0)
    counts = np.bincount(classes, minlength=len(probs))
    tied = np.flatnonzero(counts == counts.max())
    if len(tied) == 1:
        return int(tied[0])
    # argmax returns the first, i.e. lowest, index among equal sums
    return int(tied[np.argmax(probs[tied])])


def average_features(features):
    if len(features) == 0:
        raise ValueError("cannot average zero segment features")
    arr = [np.asarray(f, dtype=np.float64) for f in features]
    dim = arr[0].shape
    if any(a.shape != dim for a in arr):
        raise ShapeError("segment features differ in dimension")
    return np.mean(arr, axis=0)


def svm_objective(w, b, z, y, C):
    margins = y * (z @ w + b)
    return float(np.dot(w, w) / (2.0 * C) + np.mean(np.maximum(0.0, 1.0 - margins)))


def _pegasos(z, y, C, epochs, rng):
    n, d = z.shape
    lam = 1.0 / C
    w = np.zeros(d)
    b = 0.0
    w_avg = np.zeros(d)
    b_avg = 0.0
    n_avg = 0
    t = n
    for epoch in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            violated = y[i] * (z[i] @ w + b) < 1.0
            w *= 1.0 - eta * lam
            if violated:
                w += eta * y[i] * z[i]
                b += eta * y[i]
            if epoch >= epochs // 2:
                n_avg += 1
                w_avg += (w - w_avg) / n_avg
                b_avg += (b - b_avg) / n_avg
    return w_avg, b_avg


def svm_train(features, C=1.0, epochs=200, seed=0, labels=None, num_classes=None):
    """Fit one-vs-rest linear SVMs.

    ``features`` is a list of :class:`TrackFeatures` or, with ``labels``
    given, a 2-d array of raw feature rows.
    """
    if labels is None:
        x = np.stack([np.asarray(f.mean_feature, dtype=np.float64) for f in features])
        y = np.array([f.label for f in features], dtype=np.int64)
    else:
        x = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError(f"{x.shape} features vs {y.shape} labels")
    present = np.unique(y)
    if len(present) < 2:
        raise ValueError("SVM stacking needs at least two classes")
    k = int(num_classes if num_classes is not None else y.max() + 1)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    z = (x - mean) / std
    weights = np.zeros((k, x.shape[1]))
    # absent classes keep a bias that can never win the argmax
    biases = np.full(k, -1e30)
    rng = np.random.default_rng(seed)
    for c in range(k):
        if c not in present:
            continue
        yc = np.where(y == c, 1.0, -1.0)
        weights[c], biases[c] = _pegasos(z, yc, C, epochs, rng)
    return SvmModel(weights, biases, mean, std)


def svm_predict(model, x):
    """Class with the highest one-vs-rest score; a 2-d ``x`` returns an array."""
    scores = model.scores(x)
    pred = np.argmax(scores, axis=1)
    return int(pred[0]) if np.ndim(x) == 1 else pred


def track_accuracy(predictions):
    """Fraction of ``(track_id, predicted, true)`` triples that are correct."""
    if not predictions:
        raise ValueError("cannot score zero tracks")
    return sum(int(p == t) for _, p, t in predictions) / len(predictions)


def confusion_matrix(true, pred, num_classes):
    """Rows are true classes, columns predicted classes."""
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    for t, p in zip(true, pred):
        out[int(t), int(p)] += 1
    return out
