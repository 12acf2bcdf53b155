"""Glue between datasets, label generation and the detector.

Both the command line and the acceptance tests build training sets
through these helpers, so in-memory simulation and on-disk datasets go
down the same path.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .dataset import SequenceData
from .detector import MLP, RobustLossParams, TrainConfig, evaluate_ap, finetune_online, train
from .evaluate import LabelReport, label_tpr_tnr
from .pseudo_label import (IGNORE, NEG, POS, CleanMode, FilterParams, LabelParams, PointLabels,
                           camera_region, clean_labels, generate_labels, labels_from_centers)
from .scan_geometry import CameraCalib, DetBox, Scan, project_points
from .synth_world import SynthConfig, simulate_sequence, source_domain_config


@dataclass
class Frame:
    scan: Scan
    boxes: list[DetBox]
    calib: Optional[CameraCalib]
    annotations: np.ndarray
    sequence: str = ""


def frames_from_sequence(seq: SequenceData) -> list[Frame]:
    return [Frame(s, seq.boxes(s.frame_id), seq.calib, seq.gt_centers(s.frame_id), seq.name)
            for s in seq.scans]


def simulated_frames(cfg: SynthConfig, seed: int, indices: Sequence[int], stride: int = 1) -> list[list[Frame]]:
    """Simulate sequences in memory, one frame list per sequence."""
    out = []
    for i in indices:
        _, calib, frames = simulate_sequence(cfg, seed, i)
        out.append([Frame(f["scan"], f["boxes"], calib, f["visible"], f"seq_{i:03d}")
                    for f in frames[::stride]])
    return out


def gt_labels(frame: Frame, lp: LabelParams = LabelParams(), camera_only: bool = False) -> PointLabels:
    """Targets from annotated centres; ``camera_only`` ignores points the camera cannot see."""
    region = camera_region(frame.scan, frame.calib) if camera_only else None
    return labels_from_centers(frame.scan, frame.annotations, lp, region)


def pseudo_labels(frame: Frame, fp: FilterParams = FilterParams(), lp: LabelParams = LabelParams()) -> PointLabels:
    if frame.calib is None:
        raise ValueError(f"{frame.sequence}: pseudo-labelling needs a calibration")
    return generate_labels(frame.scan, frame.boxes, frame.calib, fp, lp)


def flip_labels(labels: PointLabels, rate: float, rng: np.random.Generator) -> PointLabels:
    """Swap POS and NEG on a random ``rate`` fraction of labelled points."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("flip rate must be in [0, 1]")
    out = labels.copy()
    idx = np.flatnonzero(out.cls != IGNORE)
    hit = idx[rng.random(len(idx)) < rate]
    out.cls[hit] = np.where(out.cls[hit] == POS, NEG, POS)
    return out


@dataclass(frozen=True)
class Supervision:
    """How training targets are produced for each frame."""
    kind: str = "pseudo"                 # "gt" or "pseudo"
    clean: Optional[CleanMode] = None
    flip_rate: float = 0.0
    seed: int = 0
    fp: FilterParams = field(default_factory=FilterParams)
    lp: LabelParams = field(default_factory=LabelParams)

    def __post_init__(self):
        if self.kind not in ("gt", "pseudo"):
            raise ValueError(f"unknown supervision '{self.kind}'")
        if self.clean is not None and self.kind != "pseudo":
            raise ValueError("cleaning applies to pseudo supervision only")


def training_pairs(frames: Sequence[Frame], sup: Supervision,
                   precomputed: Optional[Sequence[PointLabels]] = None) -> list[tuple[Scan, PointLabels]]:
    """``(scan, labels)`` pairs; ``precomputed`` overrides generated pseudo labels."""
    rng = np.random.default_rng([sup.seed, 7])
    pairs = []
    for k, f in enumerate(frames):
        if sup.kind == "gt":
            lab = gt_labels(f, sup.lp)
        else:
            lab = precomputed[k] if precomputed is not None else pseudo_labels(f, sup.fp, sup.lp)
            if sup.clean is not None:
                lab = clean_labels(lab, gt_labels(f, sup.lp, camera_only=True), sup.clean)
        if sup.flip_rate > 0:
            lab = flip_labels(lab, sup.flip_rate, rng)
        pairs.append((f.scan, lab))
    return pairs


def label_quality(frames: Sequence[Frame], fp: FilterParams = FilterParams(), lp: LabelParams = LabelParams(),
                  count_ignored: bool = True, labels: Optional[Sequence[PointLabels]] = None) -> LabelReport:
    """Pseudo-label TPR/TNR against annotation targets inside the camera view."""
    pseudo = list(labels) if labels is not None else [pseudo_labels(f, fp, lp) for f in frames]
    gt = [gt_labels(f, lp, camera_only=True) for f in frames]
    return label_tpr_tnr(pseudo, gt, count_ignored, [f.sequence for f in frames])


def in_camera_view(centers, calib: Optional[CameraCalib]) -> np.ndarray:
    """Mask of centres that project into the image at scan height."""
    c = np.asarray(centers, dtype=float).reshape(-1, 2)
    if calib is None or len(c) == 0:
        return np.zeros(len(c), dtype=bool)
    return project_points(c, calib)[1]


def eval_set(frames: Sequence[Frame]):
    return [f.scan for f in frames], [f.annotations for f in frames]


def fit(frames: Sequence[Frame], sup: Supervision, cfg: TrainConfig, loss: RobustLossParams = RobustLossParams(),
        model: Optional[MLP] = None) -> MLP:
    model = model or MLP(seed=cfg.seed)
    train(model, training_pairs(frames, sup), cfg, loss)
    return model


# --------------------------------------------------------------------------
# desk-scale experiment set-up shared by the acceptance suite


@dataclass(frozen=True)
class DeskScale:
    """Reduced dataset and schedule that keep every experiment under a minute."""
    frames_per_sequence: int = 40
    test_stride: int = 4
    epochs: int = 10
    batch_size: int = 2

    def synth(self, base: Optional[SynthConfig] = None) -> SynthConfig:
        return replace(base or SynthConfig(), frames_per_sequence=self.frames_per_sequence)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, seed=seed)


@dataclass
class DeskData:
    train: list[list[Frame]]
    test: list[Frame]
    source: list[list[Frame]]

    @property
    def train_frames(self) -> list[Frame]:
        return [f for seq in self.train for f in seq]


def desk_data(seed: int, desk: DeskScale = DeskScale(), base: Optional[SynthConfig] = None,
              with_source: bool = True) -> DeskData:
    cfg = desk.synth(base)
    train_seqs = simulated_frames(cfg, seed, range(cfg.n_train))
    test_seqs = simulated_frames(cfg, seed, range(cfg.n_train, cfg.n_sequences), desk.test_stride)
    source = []
    if with_source:
        # a different world seed so source and target scenes share nothing
        source = simulated_frames(source_domain_config(cfg), seed + 1000, range(cfg.n_train))
    return DeskData(train_seqs, [f for s in test_seqs for f in s], source)


def desk_ap(model: MLP, data: DeskData) -> dict:
    return evaluate_ap(model, *eval_set(data.test))


def desk_finetune(model: MLP, data: DeskData, scope: str, track_every: int, seed: int,
                  sup: Supervision = Supervision()) -> list[dict]:
    seqs = [training_pairs(seq, sup) for seq in data.train]
    return finetune_online(model, seqs, *eval_set(data.test), shuffle_scope=scope,
                           track_every=track_every, seed=seed)
