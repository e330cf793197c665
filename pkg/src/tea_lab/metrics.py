"""Evaluation metrics and the two-sample test used for significance markers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats


class UndefinedMetric(ValueError):
    """AUC requested for a label vector with a single class."""


def mse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise ValueError(f"mse: need equal non-empty shapes, got {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


def _check_labels(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if s.shape != y.shape or s.size == 0:
        raise ValueError("scores and labels must be non-empty and aligned")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise UndefinedMetric("AUC needs at least one positive and one negative label")
    return s, y.astype(bool), n_pos


def roc_auc(scores, labels) -> float:
    """Mann-Whitney statistic with ties counted as half."""
    s, y, n_pos = _check_labels(scores, labels)
    n_neg = y.size - n_pos
    ranks = stats.rankdata(s)  # average ranks on ties
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, labels) -> float:
    """Average precision: sum over distinct thresholds of (recall step) x precision."""
    s, y, n_pos = _check_labels(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    # last index of each run of tied scores
    ends = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp_at = tp[ends].astype(np.float64)
    precision = tp_at / (ends + 1)
    recall = tp_at / n_pos
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * precision))


def two_sample_ttest(a, b) -> tuple[float, float]:
    """Welch's unequal-variance t-test, two-sided."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, diff), 0.0
    t = diff / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = 2.0 * stats.t.sf(abs(t), df)
    return float(t), float(min(p, 1.0))


def significant(p: float, alpha: float = 0.05) -> bool:
    return p < alpha


@dataclass
class MetricReport:
    mse: float | None = None
    roc_auc: float | None = None
    pr_auc: float | None = None
    per_variable: dict[str, list] = field(default_factory=dict)
    block_mse: dict[str, float] = field(default_factory=dict)
    undefined_auc: int = 0
    recon_mse: float | None = None

    def as_dict(self) -> dict[str, float]:
        """Flat metric name -> value mapping for result tables (absent metrics omitted)."""
        out = {}
        for name in ("mse", "roc_auc", "pr_auc"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        for block, v in sorted(self.block_mse.items()):
            out[f"mse_{block}"] = v
        if self.recon_mse is not None:
            out["recon_mse"] = self.recon_mse
        return out


def evaluate(predictions, targets, binary_columns=(), blocks: dict[str, list[int]] | None = None) -> MetricReport:
    """Score row-major predictions; AUCs are averaged over binary columns
    with both classes present, MSE over continuous columns."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"evaluate: shape mismatch {p.shape} vs {t.shape}")
    binary = sorted(set(int(i) for i in binary_columns))
    continuous = [i for i in range(p.shape[1]) if i not in set(binary)]
    rep = MetricReport()
    if continuous:
        per_var = np.mean((p[:, continuous] - t[:, continuous]) ** 2, axis=0)
        rep.mse = float(per_var.mean())
        rep.per_variable["mse"] = per_var.tolist()
    if binary:
        rocs, prcs = [], []
        for j in binary:
            try:
                rocs.append(roc_auc(p[:, j], t[:, j]))
                prcs.append(pr_auc(p[:, j], t[:, j]))
            except UndefinedMetric:
                rep.undefined_auc += 1
        if rocs:
            rep.roc_auc = float(np.mean(rocs))
            rep.pr_auc = float(np.mean(prcs))
        rep.per_variable["roc_auc"] = rocs
        rep.per_variable["pr_auc"] = prcs
    for name, cols in (blocks or {}).items():
        rep.block_mse[name] = float(np.mean((p[:, cols] - t[:, cols]) ** 2))
    return rep
