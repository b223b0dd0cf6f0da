"""Accuracy and faithfulness of expressions and trained networks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Soire
from .datagen import Dataset
from .diffnet import forward_batch
from .encoding import Encoding
from .matcher import match_batch


@dataclass
class EvalReport:
    accuracy: float
    matched_positives: int
    rejected_negatives: int
    n_total: int
    network_accuracy: float | None = None
    faithfulness: float | None = None
    n_agree: int | None = None


def accuracy(r: Soire, dataset: Dataset) -> float:
    """Fraction of strings classified correctly by the expression:
    (matched positives + rejected negatives) / all."""
    if not dataset.entries:
        return 0.0
    strings = [s for s, _ in dataset.entries]
    labels = np.array([label for _, label in dataset.entries])
    return float((match_batch(r, strings) == labels).mean())


def network_accuracy(theta: Encoding, dataset: Dataset, threshold: float = 0.5) -> float:
    """Accuracy of the thresholded network output."""
    if not dataset.entries:
        return 0.0
    strings = [s for s, _ in dataset.entries]
    labels = np.array([label for _, label in dataset.entries])
    preds = forward_batch(theta, strings, mode="exact") >= threshold
    return float((preds == labels).mean())


def faithfulness(theta: Encoding, r: Soire, test_set: Dataset, threshold: float = 0.5) -> float:
    """Fraction of strings on which the network and the expression agree,
    regardless of the true labels."""
    if not test_set.entries:
        return 0.0
    strings = [s for s, _ in test_set.entries]
    net = forward_batch(theta, strings, mode="exact") >= threshold
    sym = match_batch(r, strings)
    return float((net == sym).mean())


def evaluate(r: Soire, theta: Encoding | None, test_set: Dataset,
             threshold: float = 0.5) -> EvalReport:
    """Joint evaluation of an expression and (optionally) its network."""
    strings = [s for s, _ in test_set.entries]
    labels = np.array([label for _, label in test_set.entries])
    sym = match_batch(r, strings)
    matched_pos = int((sym & labels).sum())
    rejected_neg = int((~sym & ~labels).sum())
    n = len(strings)
    acc = (matched_pos + rejected_neg) / n if n else 0.0
    report = EvalReport(acc, matched_pos, rejected_neg, n)
    if theta is not None:
        net = forward_batch(theta, strings, mode="exact") >= threshold
        report.network_accuracy = float((net == labels).mean()) if n else 0.0
        report.n_agree = int((net == sym).sum())
        report.faithfulness = report.n_agree / n if n else 0.0
    return report
