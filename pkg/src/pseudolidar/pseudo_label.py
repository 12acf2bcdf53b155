"""Pseudo-label generation from image-space person boxes.

Per frame: select confident, slim, non-overlapping boxes; localise one
person per box from the LiDAR points in the bottom half of its frustum
(range-space 2-means followed by flat-kernel mean shift); then turn the
estimated centres into per-point classification and regression targets.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .scan_geometry import (CameraCalib, DetBox, Scan, box_mask, polar_to_cartesian,
                            project_points)

POS, NEG, IGNORE = 1, 0, -1
_SYMBOL = {POS: "P", NEG: "N", IGNORE: "I"}
_VALUE = {v: k for k, v in _SYMBOL.items()}


@dataclass(frozen=True)
class FilterParams:
    t_score: float = 0.75
    t_aspect: float = 0.45
    t_overlap: float = 0.4

    def __post_init__(self):
        for name in ("t_score", "t_aspect", "t_overlap"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")


@dataclass(frozen=True)
class LabelParams:
    r_pos: float = 0.4
    r_reg: float = 0.8
    min_support: int = 5
    r_kernel: float = 0.5
    widen: float = 0.1
    min_frustum_points: int = 5
    # points the camera cannot see are left unlabelled unless this is set
    outside_image_negative: bool = False

    def __post_init__(self):
        if not 0.0 < self.r_pos <= self.r_reg:
            raise ValueError("need 0 < r_pos <= r_reg")
        if self.min_support < 1:
            raise ValueError("min_support must be >= 1")
        if not self.r_kernel > 0:
            raise ValueError("r_kernel must be positive")
        if self.widen < 0:
            raise ValueError("widen must be non-negative")


@dataclass
class PointLabels:
    """Per-point targets for one scan.

    ``cls`` holds POS / NEG / IGNORE, ``reg`` the offset ``center - point``
    in the LiDAR frame (NaN rows have no regression target) and
    ``centers`` the person centres the targets were built from.
    """

    frame_id: int
    cls: np.ndarray
    reg: np.ndarray
    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        self.cls = np.asarray(self.cls, dtype=np.int8)
        self.reg = np.asarray(self.reg, dtype=float).reshape(-1, 2)
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        if self.reg.shape[0] != self.cls.shape[0]:
            raise ValueError("cls and reg length differ")

    @property
    def n_points(self) -> int:
        return self.cls.shape[0]

    @property
    def has_reg(self) -> np.ndarray:
        return ~np.isnan(self.reg[:, 0])

    def copy(self) -> "PointLabels":
        return PointLabels(self.frame_id, self.cls.copy(), self.reg.copy(), self.centers.copy())

    def to_dict(self) -> dict:
        idx = np.flatnonzero(self.has_reg)
        return {
            "frame_id": int(self.frame_id),
            "centers": self.centers.tolist(),
            "cls": encode_rle(self.cls),
            "reg": {str(int(i)): self.reg[i].tolist() for i in idx},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PointLabels":
        labels = decode_rle(d["cls"])
        reg = np.full((len(labels), 2), np.nan)
        for k, v in d["reg"].items():
            reg[int(k)] = v
        return cls(int(d["frame_id"]), labels, reg, np.asarray(d["centers"], dtype=float).reshape(-1, 2))


def encode_rle(cls: np.ndarray) -> str:
    """Run-length encode labels as ``<count><symbol>`` runs, e.g. ``"12N3P"``."""
    out = []
    cls = np.asarray(cls)
    if cls.size == 0:
        return ""
    change = np.flatnonzero(np.diff(cls)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [cls.size]])
    for s, e in zip(starts, ends):
        out.append(f"{e - s}{_SYMBOL[int(cls[s])]}")
    return "".join(out)


def decode_rle(text: str) -> np.ndarray:
    runs = re.findall(r"(\d+)([PNI])", text)
    if "".join(n + s for n, s in runs) != text:
        raise ValueError("malformed run-length label string")
    parts = [np.full(int(n), _VALUE[s], dtype=np.int8) for n, s in runs]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int8)


def write_labels_json(path, labels: Sequence[PointLabels]) -> None:
    with open(path, "w") as fh:
        json.dump([lab.to_dict() for lab in labels], fh, sort_keys=True)
        fh.write("\n")


def read_labels_json(path) -> list[PointLabels]:
    with open(path) as fh:
        return [PointLabels.from_dict(d) for d in json.load(fh)]


# --------------------------------------------------------------------------
# box selection


def _intersection_area(a: DetBox, b: DetBox) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    return w * h if w > 0 and h > 0 else 0.0


def overlap_ratio(box: DetBox, others: Sequence[DetBox]) -> float:
    """Largest intersection with another box, relative to ``box``'s own area."""
    best = 0.0
    for o in others:
        if o is box:
            continue
        best = max(best, _intersection_area(box, o) / box.area)
    return best


def filter_boxes(boxes: Sequence[DetBox], params: FilterParams = FilterParams(),
                 use_overlap: bool = True) -> tuple[list[DetBox], list[DetBox]]:
    kept, discarded = [], []
    for b in boxes:
        ok = b.score >= params.t_score and b.width / b.height <= params.t_aspect
        if ok and use_overlap:
            ok = overlap_ratio(b, boxes) <= params.t_overlap
        (kept if ok else discarded).append(b)
    return kept, discarded


# --------------------------------------------------------------------------
# localisation


def kmeans_range_split(ranges) -> tuple[np.ndarray, np.ndarray]:
    """Two-cluster 1-D k-means on ranges, solved exactly.

    Optimal 1-D clusters are contiguous in sorted order, so every split of
    the sorted values is scored and the lowest within-cluster squared error
    wins. Ties go to the split with the larger close cluster.
    """
    r = np.asarray(ranges, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("need at least one range")
    order = np.argsort(r, kind="stable")
    s = r[order]
    n = s.size
    if s[0] == s[-1]:
        return np.sort(order), np.zeros(0, dtype=int)
    c = s - s.mean()
    k = np.arange(1, n)
    csum = np.cumsum(c)[:-1]
    csq = np.cumsum(c * c)[:-1]
    tot, totsq = c.sum(), (c * c).sum()
    sse = (csq - csum ** 2 / k) + ((totsq - csq) - (tot - csum) ** 2 / (n - k))
    sse = np.where(s[1:] > s[:-1], sse, np.inf)
    best = sse.min()
    # largest split index within float noise of the optimum
    cand = np.flatnonzero(sse <= best + 1e-12 * max(1.0, totsq))
    split = int(cand[-1]) + 1
    return np.sort(order[:split]), np.sort(order[split:])


class MeanShiftResult(NamedTuple):
    center: np.ndarray
    iterations: int
    last_shift: float


def mean_shift(points, init, r_kernel: float = 0.5, tol: float = 1e-6,
               max_iter: int = 100) -> MeanShiftResult:
    """Flat-kernel mean shift from ``init``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("mean shift needs at least one point")
    c = np.asarray(init, dtype=float).copy()
    shift = np.inf
    for it in range(1, max_iter + 1):
        inside = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) <= r_kernel
        if not inside.any():
            return MeanShiftResult(c, it, 0.0)
        new = pts[inside].mean(axis=0)
        shift = float(np.hypot(*(new - c)))
        c = new
        if shift < tol:
            return MeanShiftResult(c, it, shift)
    return MeanShiftResult(c, max_iter, shift)


def mean_shift_refine(points, init, r_kernel: float = 0.5) -> np.ndarray:
    return mean_shift(points, init, r_kernel).center


def localize_person(xy, ranges, params: LabelParams = LabelParams()) -> Optional[np.ndarray]:
    """Estimate one person centre from the points of a box frustum."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if len(xy) < max(1, params.min_frustum_points):
        return None
    close, _ = kmeans_range_split(ranges)
    init = xy[close].mean(axis=0)
    return mean_shift_refine(xy, init, params.r_kernel)


# --------------------------------------------------------------------------
# targets


def _nearest_center(xy: np.ndarray, centers: np.ndarray):
    """Distance to and index of the nearest centre (ties: lower index)."""
    if len(centers) == 0:
        return np.full(len(xy), np.inf), np.full(len(xy), -1)
    d = np.hypot(xy[:, None, 0] - centers[None, :, 0], xy[:, None, 1] - centers[None, :, 1])
    j = np.argmin(d, axis=1)
    return d[np.arange(len(xy)), j], j


def targets_from_centers(xy: np.ndarray, valid: np.ndarray, centers: np.ndarray,
                         params: LabelParams, negative: Optional[np.ndarray] = None):
    """POS within ``r_pos`` of a centre, regression offsets within ``r_reg``.

    Points that are not POS become NEG where ``negative`` is set (all
    valid points when it is None) and IGNORE otherwise.
    """
    n = len(xy)
    cls = np.full(n, IGNORE, dtype=np.int8)
    reg = np.full((n, 2), np.nan)
    neg = valid if negative is None else (negative & valid)
    cls[neg] = NEG
    dist, j = _nearest_center(xy, centers)
    pos = valid & (dist < params.r_pos)
    cls[pos] = POS
    has_reg = valid & (dist < params.r_reg)
    reg[has_reg] = centers[j[has_reg]] - xy[has_reg]
    return cls, reg


def labels_from_centers(scan: Scan, centers, params: LabelParams = LabelParams(),
                        region: Optional[np.ndarray] = None) -> PointLabels:
    """Annotation-style targets for known person centres.

    ``region`` restricts labelling to a subset of beams; the rest is IGNORE.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    xy = polar_to_cartesian(scan)
    valid = scan.valid if region is None else (scan.valid & region)
    cls, reg = targets_from_centers(xy, valid, centers, params)
    return PointLabels(scan.frame_id, cls, reg, centers)


def camera_region(scan: Scan, calib: CameraCalib) -> np.ndarray:
    """Beams with a return that lands inside the image."""
    _, ok = project_points(polar_to_cartesian(scan), calib)
    return ok & scan.valid


def generate_labels(scan: Scan, boxes: Sequence[DetBox], calib: CameraCalib,
                    fp: FilterParams = FilterParams(),
                    lp: LabelParams = LabelParams()) -> PointLabels:
    xy = polar_to_cartesian(scan)
    valid = scan.valid
    uv, in_image = project_points(xy, calib)
    in_image &= valid

    kept, _ = filter_boxes(boxes, fp)
    centers = []
    for b in kept:
        m = box_mask(uv, in_image, b, bottom_half=True)
        c = localize_person(xy[m], scan.ranges[m], lp)
        if c is not None:
            centers.append(c)
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)

    # every original box counts for the negative mask, discarded ones too
    in_any = np.zeros(len(xy), dtype=bool)
    for b in boxes:
        in_any |= box_mask(uv, in_image, b.widened(lp.widen))
    negative = ~in_any & (in_image | lp.outside_image_negative)

    if len(centers):
        dist, j = _nearest_center(xy, centers)
        pos = valid & (dist < lp.r_pos)
        support = np.bincount(j[pos], minlength=len(centers))
        keep = support >= lp.min_support
        dropped_pos = pos & ~keep[np.maximum(j, 0)]
        centers = centers[keep]
    else:
        dropped_pos = np.zeros(len(xy), dtype=bool)

    cls, reg = targets_from_centers(xy, valid, centers, lp, negative)
    # positives of discarded centres are demoted, not turned into negatives
    cls[dropped_pos & (cls != POS)] = IGNORE
    return PointLabels(scan.frame_id, cls, reg, centers)


class CleanMode(enum.Enum):
    REMOVE_FP = "remove-fp"
    REMOVE_FN = "remove-fn"
    BOTH = "both"
    BOTH_CORRECT_REG = "both-correct-reg"


def clean_labels(labels: PointLabels, gt: PointLabels, mode: CleanMode) -> PointLabels:
    """Fix pseudo-labels with ground truth.

    False positives (pseudo POS, gt NEG) take the gt value; false
    negatives (gt POS labelled anything else) become POS. The regression
    correction replaces the pseudo offsets and centres with the gt ones.
    """
    if labels.n_points != gt.n_points:
        raise ValueError(f"point count mismatch: {labels.n_points} vs {gt.n_points}")
    if labels.frame_id != gt.frame_id:
        raise ValueError(f"frame mismatch: {labels.frame_id} vs {gt.frame_id}")
    mode = CleanMode(mode)
    out = labels.copy()
    if mode in (CleanMode.REMOVE_FP, CleanMode.BOTH, CleanMode.BOTH_CORRECT_REG):
        fp = (labels.cls == POS) & (gt.cls == NEG)
        out.cls[fp] = gt.cls[fp]
    if mode in (CleanMode.REMOVE_FN, CleanMode.BOTH, CleanMode.BOTH_CORRECT_REG):
        fn = (labels.cls != POS) & (gt.cls == POS)
        out.cls[fn] = POS
    if mode is CleanMode.BOTH_CORRECT_REG:
        out.reg = gt.reg.copy()
        out.centers = gt.centers.copy()
    return out
