"""Scan representation, camera projection and box frustum extraction.

Frame conventions
-----------------
LiDAR / robot frame: x forward, y left, z up, origin on the floor below the
sensor. Scan points live in the plane z = ``h_lidar``.

Camera frame: z forward along the optical axis, x right, y down.

Image frame: origin top-left, u to the right, v downwards, pixels.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

DEFAULT_N_BEAMS = 1091


class Point2D(NamedTuple):
    x: float
    y: float


@dataclass
class Scan:
    """One LiDAR revolution on a fixed angular grid.

    Beams that returned nothing carry ``range == max_range``.
    """

    frame_id: int
    ranges: np.ndarray
    angle_min: float
    angle_increment: float
    max_range: float
    timestamp: float = 0.0

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        n = self.ranges.shape[0] if self.ranges.ndim == 1 else 0
        if n < 1:
            raise ValueError("scan needs at least one beam")
        if not self.angle_increment > 0:
            raise ValueError("angle_increment must be positive")
        if (n - 1) * self.angle_increment > 2 * math.pi + 1e-9:
            raise ValueError("scan spans more than a full turn")
        if not np.all(np.isfinite(self.ranges)):
            raise ValueError("ranges must be finite")
        if np.any(self.ranges <= 0) or np.any(self.ranges > self.max_range):
            raise ValueError("ranges must lie in (0, max_range]")

    @property
    def n_points(self) -> int:
        return self.ranges.shape[0]

    @property
    def angles(self) -> np.ndarray:
        return self.angle_min + self.angle_increment * np.arange(self.n_points)

    @property
    def valid(self) -> np.ndarray:
        """Mask of beams with a real return."""
        return self.ranges < self.max_range

    def with_ranges(self, ranges) -> "Scan":
        return Scan(self.frame_id, ranges, self.angle_min, self.angle_increment,
                    self.max_range, self.timestamp)


def polar_to_cartesian(scan: Scan) -> np.ndarray:
    """Return an ``(N, 2)`` array of beam endpoints, sentinel beams included."""
    phi = scan.angles
    return np.stack([scan.ranges * np.cos(phi), scan.ranges * np.sin(phi)], axis=1)


def cartesian_to_polar(xy) -> tuple[np.ndarray, np.ndarray]:
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    return np.hypot(xy[:, 0], xy[:, 1]), np.arctan2(xy[:, 1], xy[:, 0])


# --------------------------------------------------------------------------
# camera


def _check_rotation(rot: np.ndarray) -> None:
    if rot.shape != (3, 3):
        raise ValueError("rotation must be 3x3")
    if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-6):
        raise ValueError("rotation is not orthonormal")
    if not abs(np.linalg.det(rot) - 1.0) < 1e-6:
        raise ValueError("rotation must have det +1")


# LiDAR x -> camera z, LiDAR y -> camera -x, LiDAR z -> camera -y
FORWARD_ROTATION = np.array([[0.0, -1.0, 0.0],
                             [0.0, 0.0, -1.0],
                             [1.0, 0.0, 0.0]])


@dataclass
class CameraCalib:
    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int
    rotation: np.ndarray = field(default_factory=lambda: FORWARD_ROTATION.copy())
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    h_lidar: float = 0.4

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.image_width > 0 and self.image_height > 0):
            raise ValueError("image dimensions must be positive")
        _check_rotation(self.rotation)

    @classmethod
    def forward_facing(cls, fx=600.0, fy=600.0, cx=640.0, cy=360.0,
                       image_width=1280, image_height=720, cam_height=1.0,
                       h_lidar=0.4, yaw=0.0, pitch=0.0) -> "CameraCalib":
        """Camera above the LiDAR origin looking along +x.

        ``yaw`` turns the camera left about the vertical axis, ``pitch``
        tilts the optical axis downwards; both in radians.
        """
        cyaw, syaw = math.cos(yaw), math.sin(yaw)
        rz = np.array([[cyaw, -syaw, 0.0], [syaw, cyaw, 0.0], [0.0, 0.0, 1.0]])
        cp, sp = math.cos(pitch), math.sin(pitch)
        ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
        # camera-to-lidar rotation: yaw, then pitch about the camera's left/right axis
        cam_to_lidar = rz @ ry @ FORWARD_ROTATION.T
        rot = cam_to_lidar.T
        centre = np.array([0.0, 0.0, cam_height])
        return cls(fx, fy, cx, cy, image_width, image_height, rot, -rot @ centre, h_lidar)

    @property
    def extrinsic(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    @property
    def camera_center(self) -> np.ndarray:
        """Camera position in the LiDAR frame."""
        return -self.rotation.T @ self.translation

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "image_width": self.image_width, "image_height": self.image_height,
            "extrinsic": self.extrinsic.tolist(), "h_lidar": self.h_lidar,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraCalib":
        ext = np.asarray(d["extrinsic"], dtype=float)
        if ext.shape != (4, 4):
            raise ValueError("extrinsic must be a 4x4 matrix")
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["image_width"]), int(d["image_height"]),
                   ext[:3, :3], ext[:3, 3], float(d["h_lidar"]))


def to_camera_frame(xy, calib: CameraCalib, height: Optional[float] = None) -> np.ndarray:
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    z = calib.h_lidar if height is None else height
    pts = np.column_stack([xy, np.full(len(xy), z)])
    return pts @ calib.rotation.T + calib.translation


def project_points(xy, calib: CameraCalib, height: Optional[float] = None):
    """Vectorised pinhole projection.

    Returns ``(uv, ok)`` where ``ok`` marks points in front of the camera
    that land inside the image rectangle. ``uv`` is NaN elsewhere.
    """
    cam = to_camera_frame(xy, calib, height)
    zc = cam[:, 2]
    front = zc > 0
    uv = np.full((len(cam), 2), np.nan)
    # the where() keeps warnings out for points behind the camera
    safe_z = np.where(front, zc, 1.0)
    uv[front, 0] = (calib.fx * cam[:, 0] / safe_z + calib.cx)[front]
    uv[front, 1] = (calib.fy * cam[:, 1] / safe_z + calib.cy)[front]
    with np.errstate(invalid="ignore"):
        inside = (front
                  & (uv[:, 0] >= 0) & (uv[:, 0] <= calib.image_width)
                  & (uv[:, 1] >= 0) & (uv[:, 1] <= calib.image_height))
    uv[~inside] = np.nan
    return uv, inside


def project_point(p, calib: CameraCalib) -> Optional[tuple[float, float]]:
    uv, ok = project_points([p], calib)
    if not ok[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1])


# --------------------------------------------------------------------------
# boxes and frustums


@dataclass(frozen=True)
class DetBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def widened(self, factor: float) -> "DetBox":
        half = 0.5 * (1.0 + factor) * self.width
        mid = 0.5 * (self.x_min + self.x_max)
        return DetBox(mid - half, self.y_min, mid + half, self.y_max, self.score)

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "y_min": self.y_min, "x_max": self.x_max,
                "y_max": self.y_max, "score": self.score}


def box_mask(uv: np.ndarray, ok: np.ndarray, box: DetBox, bottom_half: bool = False) -> np.ndarray:
    """Closed-interval membership of projected points in ``box``."""
    top = 0.5 * (box.y_min + box.y_max) if bottom_half else box.y_min
    with np.errstate(invalid="ignore"):
        return (ok & (uv[:, 0] >= box.x_min) & (uv[:, 0] <= box.x_max)
                & (uv[:, 1] >= top) & (uv[:, 1] <= box.y_max))


def _scan_projection(scan: Scan, calib: CameraCalib):
    uv, ok = project_points(polar_to_cartesian(scan), calib)
    return uv, ok & scan.valid


def points_in_box_bottom(scan: Scan, box: DetBox, calib: CameraCalib) -> np.ndarray:
    """Indices of returns that project into the bottom half of ``box``."""
    uv, ok = _scan_projection(scan, calib)
    return np.flatnonzero(box_mask(uv, ok, box, bottom_half=True))


def points_in_box_full(scan: Scan, box: DetBox, calib: CameraCalib, widen: float = 0.0) -> np.ndarray:
    """Indices of returns inside the whole box, its width scaled by ``1 + widen``."""
    uv, ok = _scan_projection(scan, calib)
    return np.flatnonzero(box_mask(uv, ok, box.widened(widen)))


# --------------------------------------------------------------------------
# file formats


def _fmt(x: float) -> str:
    return repr(float(x))


def write_scans_csv(path, scans: Sequence[Scan]) -> None:
    if not scans:
        raise ValueError("no scans to write")
    ref = scans[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"angle_min={_fmt(ref.angle_min)}",
                    f"angle_increment={_fmt(ref.angle_increment)}",
                    f"max_range={_fmt(ref.max_range)}",
                    f"n_points={ref.n_points}"])
        for s in scans:
            if s.n_points != ref.n_points:
                raise ValueError("all scans in a file share one angular grid")
            w.writerow([s.frame_id, _fmt(s.timestamp)] + [_fmt(r) for r in s.ranges])


def read_scans_csv(path) -> list[Scan]:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty scan file")
    try:
        header = dict(cell.split("=", 1) for cell in rows[0])
        angle_min = float(header["angle_min"])
        inc = float(header["angle_increment"])
        max_range = float(header["max_range"])
        n = int(header["n_points"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}:1: bad scan header ({exc})") from exc
    scans = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != n + 2:
            raise ValueError(f"{path}:{lineno}: expected {n + 2} columns, got {len(row)}")
        ranges = np.array([float(v) for v in row[2:]])
        scans.append(Scan(int(row[0]), ranges, angle_min, inc, max_range, float(row[1])))
    return scans


def write_calib_json(path, calib: CameraCalib) -> None:
    with open(path, "w") as fh:
        json.dump(calib.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_calib_json(path) -> CameraCalib:
    with open(path) as fh:
        return CameraCalib.from_dict(json.load(fh))


def write_detections_json(path, frames: Iterable[tuple[int, Sequence[DetBox]]]) -> None:
    doc = [{"frame_id": int(fid), "boxes": [b.to_dict() for b in boxes]} for fid, boxes in frames]
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def read_detections_json(path) -> dict[int, list[DetBox]]:
    with open(path) as fh:
        doc = json.load(fh)
    out = {}
    for entry in doc:
        out[int(entry["frame_id"])] = [
            DetBox(b["x_min"], b["y_min"], b["x_max"], b["y_max"], b["score"]) for b in entry["boxes"]
        ]
    return out
