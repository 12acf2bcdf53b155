"""Label-quality and detector metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .pseudo_label import NEG, POS, PointLabels


@dataclass
class LabelReport:
    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0
    per_sequence: dict = field(default_factory=dict)

    @property
    def tpr(self) -> Optional[float]:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def tnr(self) -> Optional[float]:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else None

    def __iadd__(self, other: "LabelReport"):
        self.tp += other.tp
        self.fn += other.fn
        self.tn += other.tn
        self.fp += other.fp
        return self

    def to_dict(self) -> dict:
        d = {"tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp,
             "tpr": self.tpr, "tnr": self.tnr}
        if self.per_sequence:
            d["per_sequence"] = {k: v.to_dict() for k, v in self.per_sequence.items()}
        return d


def label_counts(pseudo: PointLabels, gt: PointLabels, count_ignored: bool = True) -> LabelReport:
    if pseudo.n_points != gt.n_points:
        raise ValueError(f"point count mismatch: {pseudo.n_points} vs {gt.n_points}")
    p, g = pseudo.cls, gt.cls
    is_pos = p == POS
    # an unlabelled pseudo point misses a positive and does not hurt a negative
    not_pos = p != POS if count_ignored else p == NEG
    return LabelReport(
        tp=int(np.sum((g == POS) & is_pos)),
        fn=int(np.sum((g == POS) & not_pos)),
        tn=int(np.sum((g == NEG) & not_pos)),
        fp=int(np.sum((g == NEG) & is_pos)),
    )


def label_tpr_tnr(pseudo, gt, count_ignored: bool = True, sequence_names=None) -> LabelReport:
    """TPR/TNR of pseudo targets against gt targets.

    Accepts single :class:`PointLabels` or aligned lists of them. With
    ``sequence_names`` (one name per frame) a per-sequence breakdown is kept.
    """
    if isinstance(pseudo, PointLabels):
        pseudo, gt = [pseudo], [gt]
    if len(pseudo) != len(gt):
        raise ValueError("frame count mismatch")
    total = LabelReport()
    for i, (a, b) in enumerate(zip(pseudo, gt)):
        rep = label_counts(a, b, count_ignored)
        total += rep
        if sequence_names is not None:
            total.per_sequence.setdefault(sequence_names[i], LabelReport())
            total.per_sequence[sequence_names[i]] += rep
    return total


@dataclass
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray
    confidence: np.ndarray
    tp: np.ndarray
    ap: float
    n_gt: int

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "confidence", "tp", "precision", "recall"])
            for k in range(len(self.tp)):
                w.writerow([k + 1, repr(float(self.confidence[k])), int(self.tp[k]),
                            repr(float(self.precision[k])), repr(float(self.recall[k]))])


def match_detections(detections: Sequence, gts: Sequence, radius: float):
    """Greedy matching in confidence order.

    ``detections[f]`` is an ``(M, 3)`` array of ``x, y, confidence`` for
    frame ``f``; ``gts[f]`` an ``(G, 2)`` array. Returns the pooled
    confidences and TP flags in evaluation order, plus the GT count.
    """
    if len(detections) != len(gts):
        raise ValueError("detections and ground truth cover different frame counts")
    pool = []
    for f, det in enumerate(detections):
        det = np.asarray(det, dtype=float).reshape(-1, 3)
        for i in range(len(det)):
            pool.append((-det[i, 2], f, i))
    pool.sort()
    gts = [np.asarray(g, dtype=float).reshape(-1, 2) for g in gts]
    taken = [np.zeros(len(g), dtype=bool) for g in gts]
    conf = np.empty(len(pool))
    tp = np.zeros(len(pool), dtype=bool)
    for k, (negc, f, i) in enumerate(pool):
        conf[k] = -negc
        g = gts[f]
        if len(g) == 0:
            continue
        x, y = np.asarray(detections[f], dtype=float).reshape(-1, 3)[i, :2]
        d = np.hypot(g[:, 0] - x, g[:, 1] - y)
        d[taken[f]] = np.inf
        j = int(np.argmin(d))
        if d[j] <= radius:
            taken[f][j] = True
            tp[k] = True
    return conf, tp, sum(len(g) for g in gts)


def _step_sum(hits: np.ndarray, ranks: np.ndarray, n_gt: int) -> float:
    """``sum_k (R_k - R_{k-1}) P_k`` evaluated exactly and rounded once.

    Recall only moves at true positives, each time by ``1 / n_gt``, so the
    sum is ``sum(hits / ranks) / n_gt``. Accumulating it as an integer
    over a common denominator makes the result independent of summation
    order; very long lists fall back to compensated float summation.
    """
    if len(ranks) == 0:
        return 0.0
    if len(ranks) > 20000:
        return math.fsum((hits / ranks).tolist()) / n_gt
    denom = math.lcm(*ranks.tolist())
    num = sum(int(h) * (denom // int(r)) for h, r in zip(hits, ranks))
    return num / (denom * n_gt)


def average_precision(detections: Sequence, gts: Sequence, radius: float = 0.5) -> PRCurve:
    conf, tp, n_gt = match_detections(detections, gts, radius)
    if n_gt == 0:
        empty = np.zeros(0)
        return PRCurve(empty, empty, empty, np.zeros(0, dtype=bool), 0.0, 0)
    ctp = np.cumsum(tp)
    rank = np.arange(1, len(tp) + 1)
    precision = ctp / rank
    recall = ctp / n_gt
    ap = _step_sum(ctp[tp], rank[tp], n_gt)
    return PRCurve(recall, precision, conf, tp, ap, n_gt)


def distance_histogram(centers, bin_width: float = 1.0, max_dist: float = 30.0) -> np.ndarray:
    """Counts of centre distances per ``[k, k+1)`` bin plus a final overflow bin."""
    n_bins = int(round(max_dist / bin_width))
    counts = np.zeros(n_bins + 1, dtype=int)
    c = np.asarray(centers, dtype=float).reshape(-1, 2)
    if len(c) == 0:
        return counts
    d = np.hypot(c[:, 0], c[:, 1])
    idx = np.minimum(np.floor(d / bin_width).astype(int), n_bins)
    np.add.at(counts, idx, 1)
    return counts


def total_variation(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.sum() == 0 or b.sum() == 0:
        return 0.0 if a.sum() == b.sum() else 1.0
    return 0.5 * float(np.abs(a / a.sum() - b / b.sum()).sum())


def write_histogram_csv(path, series: dict, bin_width: float = 1.0) -> None:
    names = list(series)
    n = len(next(iter(series.values())))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_start", "bin_end"] + names)
        for k in range(n):
            end = "inf" if k == n - 1 else repr((k + 1) * bin_width)
            w.writerow([repr(k * bin_width), end] + [int(series[s][k]) for s in names])


def histogram_svg(series: dict, bin_width: float = 1.0, width: int = 640, height: int = 320) -> str:
    """Grouped bar chart of normalised histograms as a standalone SVG."""
    colours = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"]
    names = list(series)
    n = len(next(iter(series.values())))
    norm = {}
    for s in names:
        v = np.asarray(series[s], dtype=float)
        norm[s] = v / v.sum() if v.sum() else v
    top = max(max(v.max() for v in norm.values()), 1e-9)
    pad, plot_w, plot_h = 40, width - 60, height - 70
    slot = plot_w / n
    bar = slot / (len(names) + 1)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for si, s in enumerate(names):
        for k in range(n):
            h = plot_h * norm[s][k] / top
            x = pad + k * slot + si * bar
            parts.append(f'<rect x="{x:.2f}" y="{pad + plot_h - h:.2f}" width="{bar:.2f}" '
                         f'height="{h:.2f}" fill="{colours[si % len(colours)]}"/>')
        parts.append(f'<text x="{pad + 10}" y="{20 + 14 * si}" font-size="12" '
                     f'fill="{colours[si % len(colours)]}">{s}</text>')
    parts.append(f'<line x1="{pad}" y1="{pad + plot_h}" x2="{pad + plot_w}" y2="{pad + plot_h}" stroke="black"/>')
    for k in range(0, n, 5):
        parts.append(f'<text x="{pad + k * slot:.2f}" y="{pad + plot_h + 15}" font-size="10">{k * bin_width:g}</text>')
    parts.append(f'<text x="{pad + plot_w / 2:.0f}" y="{height - 8}" font-size="12">distance [m]</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
