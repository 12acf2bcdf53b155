"""Reading sequence directories written by the simulator (or converted real data)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .scan_geometry import CameraCalib, DetBox, Scan, read_calib_json, read_detections_json, read_scans_csv


@dataclass
class SequenceData:
    name: str
    scans: list[Scan]
    calib: Optional[CameraCalib] = None
    detections: dict[int, list[DetBox]] = field(default_factory=dict)
    annotations: dict[int, np.ndarray] = field(default_factory=dict)

    def boxes(self, frame_id: int) -> list[DetBox]:
        return self.detections.get(frame_id, [])

    def gt_centers(self, frame_id: int) -> np.ndarray:
        return self.annotations.get(frame_id, np.zeros((0, 2)))


def read_annotations_json(path) -> dict[int, np.ndarray]:
    with open(path) as fh:
        doc = json.load(fh)
    return {int(d["frame_id"]): np.asarray(d["centers"], dtype=float).reshape(-1, 2) for d in doc}


def load_sequence(path, need_calib: bool = True, need_detections: bool = True) -> SequenceData:
    path = Path(path)
    scans_file = path / "scans.csv"
    if not scans_file.exists():
        raise FileNotFoundError(f"{scans_file}: missing scan file")
    seq = SequenceData(path.name, read_scans_csv(scans_file))
    calib_file = path / "calib.json"
    if calib_file.exists():
        seq.calib = read_calib_json(calib_file)
    elif need_calib:
        raise FileNotFoundError(f"{calib_file}: missing calibration")
    det_file = path / "detections.json"
    if det_file.exists():
        seq.detections = read_detections_json(det_file)
    elif need_detections:
        raise FileNotFoundError(f"{det_file}: missing detections")
    anno_file = path / "annotations.json"
    if anno_file.exists():
        seq.annotations = read_annotations_json(anno_file)
    return seq


def read_split(root) -> dict[str, list[str]]:
    root = Path(root)
    split_file = root / "split.json"
    if not split_file.exists():
        raise FileNotFoundError(f"{split_file}: missing split file")
    with open(split_file) as fh:
        return json.load(fh)


def load_split(root, split: str, **kwargs) -> list[SequenceData]:
    root = Path(root)
    names = read_split(root)
    if split == "all":
        wanted = names["train"] + names["test"]
    elif split in names:
        wanted = names[split]
    else:
        raise ValueError(f"unknown split '{split}'")
    return [load_sequence(root / n, **kwargs) for n in wanted]
