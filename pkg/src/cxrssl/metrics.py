"""Classification metrics and cross-validation aggregation.

All metrics are pure numpy functions.  AUC uses the rank (Mann-Whitney)
formulation with ties counted as one half; argmax ties resolve to the
lowest class index.  Zero-denominator precision/recall/F1 return 0 with a
degenerate flag rather than raising.  Fold aggregation reports the mean and
the population standard deviation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMetricError

METRIC_NAMES = ("accuracy", "auc", "f1", "precision", "recall")


def _check_preds(scores: np.ndarray, labels: np.ndarray):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2:
        raise ValueError(f"scores must be (N, C), got shape {scores.shape}")
    if labels.shape != (scores.shape[0],):
        raise ValueError(f"labels shape {labels.shape} does not match {scores.shape[0]} rows")
    if scores.shape[0] < 1:
        raise ValueError("empty prediction set")
    if not np.isfinite(scores).all():
        raise ValueError("non-finite scores")
    if labels.min() < 0 or labels.max() >= scores.shape[1]:
        raise ValueError("labels out of range")
    return scores, labels


def accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax (lowest index on ties) matches the label."""
    scores, labels = _check_preds(scores, labels)
    return float((scores.argmax(axis=1) == labels).mean())


def auc_binary(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability that a random positive outscores a random negative,
    ties counted 1/2.  ``scores`` are positive-class scores."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty_like(scores)
    ranks[order] = np.arange(1, len(scores) + 1, dtype=np.float64)
    # average ranks over tied score groups
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    degenerate_precision: bool = False
    degenerate_recall: bool = False
    degenerate_f1: bool = False


def precision_recall_f1(scores: np.ndarray, labels: np.ndarray, positive_class: int) -> PRF:
    scores, labels = _check_preds(scores, labels)
    pred = scores.argmax(axis=1)
    tp = int(((pred == positive_class) & (labels == positive_class)).sum())
    fp = int(((pred == positive_class) & (labels != positive_class)).sum())
    fn = int(((pred != positive_class) & (labels == positive_class)).sum())
    deg_p = (tp + fp) == 0
    deg_r = (tp + fn) == 0
    precision = 0.0 if deg_p else tp / (tp + fp)
    recall = 0.0 if deg_r else tp / (tp + fn)
    deg_f = (precision + recall) == 0
    f1 = 0.0 if deg_f else 2.0 * precision * recall / (precision + recall)
    return PRF(precision, recall, f1, deg_p, deg_r, deg_f)


@dataclass
class MetricValue:
    value: float
    std: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"metric value {self.value} outside [0, 1]")
        if self.std is not None and self.std < 0:
            raise ValueError(f"negative std {self.std}")

    def render(self, percent: bool = True, decimals: int = 2) -> str:
        scale = 100.0 if percent else 1.0
        if self.std is None:
            return f"{scale * self.value:.{decimals}f}"
        return f"{scale * self.value:.{decimals}f}±{scale * self.std:.{decimals}f}"


@dataclass
class MetricsReport:
    accuracy: MetricValue
    auc: MetricValue
    f1: MetricValue
    precision: MetricValue
    recall: MetricValue
    n: int = 0
    n_folds: int = 1
    per_class: dict = field(default_factory=dict)
    fold_reports: list = field(default_factory=list, repr=False)

    def metric(self, name: str) -> MetricValue:
        if name not in METRIC_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def to_json_dict(self) -> dict:
        out = {"n": self.n, "n_folds": self.n_folds, "per_class": self.per_class}
        for name in METRIC_NAMES:
            mv = self.metric(name)
            out[name] = {"value": mv.value, "std": mv.std}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    def to_text(self, percent_auc: bool = False) -> str:
        """Human-readable block; ACC/F1/precision/recall as percent with two
        decimals, AUC as a raw fraction unless ``percent_auc``."""
        lines = []
        for name in METRIC_NAMES:
            mv = self.metric(name)
            if name == "auc" and not percent_auc:
                lines.append(f"{name.upper():<10}{mv.render(percent=False, decimals=4)}")
            else:
                lines.append(f"{name.upper():<10}{mv.render(percent=True, decimals=2)}")
        return "\n".join(lines)


def compute_report(scores: np.ndarray, labels: np.ndarray, positive_class: int = 1,
                   class_names: list[str] | None = None) -> MetricsReport:
    """Full report for one prediction set.

    Binary tasks report AUC on the positive-class score column and PRF for
    the positive class; multi-class tasks report macro one-vs-rest AUC and
    macro PRF (a documented extension beyond the binary protocol).
    """
    scores, labels = _check_preds(scores, labels)
    n, c = scores.shape
    acc = accuracy(scores, labels)
    per_class: dict = {}
    if c == 2:
        auc = auc_binary(scores[:, positive_class], (labels == positive_class).astype(int))
        prf = precision_recall_f1(scores, labels, positive_class)
        precision, recall, f1 = prf.precision, prf.recall, prf.f1
        for k in range(c):
            kp = precision_recall_f1(scores, labels, k)
            name = class_names[k] if class_names else str(k)
            per_class[name] = {"precision": kp.precision, "recall": kp.recall, "f1": kp.f1}
    else:
        aucs, ps, rs, f1s = [], [], [], []
        for k in range(c):
            binary = (labels == k).astype(int)
            if binary.min() == binary.max():
                continue
            aucs.append(auc_binary(scores[:, k], binary))
        for k in range(c):
            kp = precision_recall_f1(scores, labels, k)
            ps.append(kp.precision)
            rs.append(kp.recall)
            f1s.append(kp.f1)
            name = class_names[k] if class_names else str(k)
            per_class[name] = {"precision": kp.precision, "recall": kp.recall, "f1": kp.f1}
        if not aucs:
            raise UndefinedMetricError("AUC undefined: single-class labels")
        auc = float(np.mean(aucs))
        precision, recall, f1 = float(np.mean(ps)), float(np.mean(rs)), float(np.mean(f1s))
    return MetricsReport(
        accuracy=MetricValue(acc), auc=MetricValue(auc), f1=MetricValue(f1),
        precision=MetricValue(precision), recall=MetricValue(recall),
        n=n, per_class=per_class,
    )


def aggregate_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Mean and population std of each metric across folds."""
    if not reports:
        raise ValueError("no fold reports to aggregate")
    values = {name: np.array([r.metric(name).value for r in reports]) for name in METRIC_NAMES}
    agg = {name: MetricValue(float(v.mean()), float(v.std())) for name, v in values.items()}
    return MetricsReport(
        accuracy=agg["accuracy"], auc=agg["auc"], f1=agg["f1"],
        precision=agg["precision"], recall=agg["recall"],
        n=sum(r.n for r in reports), n_folds=len(reports), fold_reports=list(reports),
    )


def cross_validate(run, folds) -> MetricsReport:
    """Evaluate ``run(fold_id) -> MetricsReport`` for every fold and
    aggregate; a missing fold result is an error."""
    reports = []
    for fold in range(folds.k):
        report = run(fold)
        if report is None:
            raise ValueError(f"missing result for fold {fold}")
        reports.append(report)
    return aggregate_reports(reports)


def fmt_mean_std(mean: float, std: float, percent: bool = True, decimals: int = 2) -> str:
    """Render like ``76.47±3.53``."""
    return MetricValue(mean, std).render(percent=percent, decimals=decimals)
