"""Evaluation metrics and uncertainty scores.

AUROC uses the Mann-Whitney rank statistic with midrank tie handling, which
equals the pairwise probability P(score_pos > score_neg) + P(tie)/2.  AUPR is
the step interpolation of the precision-recall curve (precision integrated
over recall increments).  Both return ``None`` when only one class is
present, an explicitly undefined value rather than a number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RunResult",
    "mse",
    "accuracy",
    "macro_f1",
    "auroc",
    "aupr",
    "metric_suite",
    "classification_entropy",
    "max_probability",
]


@dataclass
class RunResult:
    """Metrics and bookkeeping for a single benchmark run."""

    config: dict
    metrics: dict
    seed: int
    log_path: str | None = None

    def validate(self) -> None:
        for key, value in self.metrics.items():
            if value is None:
                continue
            if not np.isfinite(value):
                raise ValueError(f"metric {key} is not finite: {value}")
            if key in ("auroc", "aupr") and not (0.0 <= value <= 1.0):
                raise ValueError(f"metric {key} outside [0, 1]: {value}")


def mse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValueError("prediction/target length mismatch")
    return float(np.mean((p - t) ** 2))


def accuracy(predicted_labels, labels) -> float:
    p = np.asarray(predicted_labels)
    t = np.asarray(labels)
    if p.shape != t.shape:
        raise ValueError("prediction/target length mismatch")
    return float(np.mean(p == t))


def macro_f1(predicted_labels, labels) -> float:
    p = np.asarray(predicted_labels)
    t = np.asarray(labels)
    if p.shape != t.shape:
        raise ValueError("prediction/target length mismatch")
    scores = []
    for c in np.unique(t):
        tp = np.sum((p == c) & (t == c))
        fp = np.sum((p == c) & (t != c))
        fn = np.sum((p != c) & (t == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=float)
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels):
    """Area under the ROC curve by the rank-sum formulation; None if only one
    class is present."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores/labels length mismatch")
    n_pos = int(y.sum())
    n_neg = int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _midranks(s)
    rank_sum = ranks[y].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(scores, labels):
    """Area under the precision-recall curve by step interpolation; None if
    no positives are present."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores/labels length mismatch")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        return None
    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    # integrate precision over recall steps (average precision)
    drecall = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(precision * drecall))


def metric_suite(predictions, targets, scores=None, score_labels=None) -> dict:
    """Aggregate metrics for a run.

    Regression metrics come from (predictions, targets); classification
    metrics are included when targets are integer labels and predictions are
    label predictions or probability rows.  OOD-style ranking metrics are
    computed from (scores, score_labels) when given.
    """
    out: dict = {}
    p = np.asarray(predictions)
    t = np.asarray(targets)
    if p.ndim == 2 and p.shape[0] == t.shape[0] and np.issubdtype(t.dtype, np.integer):
        labels_pred = p.argmax(axis=1)
        out["accuracy"] = accuracy(labels_pred, t)
        out["macro_f1"] = macro_f1(labels_pred, t)
    elif np.issubdtype(t.dtype, np.integer) and p.shape == t.shape:
        out["accuracy"] = accuracy(p, t)
        out["macro_f1"] = macro_f1(p, t)
    else:
        out["mse"] = mse(p, t)
    if scores is not None:
        if score_labels is None:
            raise ValueError("scores given without score_labels")
        out["auroc"] = auroc(scores, score_labels)
        out["aupr"] = aupr(scores, score_labels)
    return out


def classification_entropy(prob_vector) -> float:
    """Shannon entropy -sum p log p (natural log) of a probability vector."""
    p = np.asarray(prob_vector, dtype=float)
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("input is not a probability vector")
    p = np.clip(p, 0.0, 1.0)
    nonzero = p > 0.0
    return float(-np.sum(p[nonzero] * np.log(p[nonzero])))


def max_probability(prob_vector) -> float:
    """Maximum predicted probability, the confidence companion to entropy."""
    p = np.asarray(prob_vector, dtype=float)
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("input is not a probability vector")
    return float(p.max())
