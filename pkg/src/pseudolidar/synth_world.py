"""Deterministic 2D scene simulator.

Scenes are rooms with walls, pillars and walking persons (two leg circles
each). The simulator ray-casts LiDAR scans, renders noisy camera person
boxes and records the ground truth every experiment is scored against.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .scan_geometry import (CameraCalib, DetBox, Scan, polar_to_cartesian, to_camera_frame,
                            write_calib_json, write_detections_json, write_scans_csv)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DetectorNoise:
    score_mean_decay: float = 0.012
    score_sigma: float = 0.05
    dropout_base: float = 0.02
    dropout_per_meter: float = 0.003
    fp_rate: float = 0.3
    # chance per frame that a visible pillar is mistaken for a person
    pillar_fp_prob: float = 0.0
    box_jitter_sigma: float = 4.0
    calib_yaw_sigma: float = 0.01
    calib_pitch_sigma: float = 0.005


@dataclass(frozen=True)
class CameraConfig:
    fx: float = 600.0
    fy: float = 600.0
    cx: float = 640.0
    cy: float = 360.0
    image_width: int = 1280
    image_height: int = 720
    mount_height: float = 1.0
    pitch: float = 0.0


@dataclass(frozen=True)
class SensorConfig:
    n_beams: int = 1091
    fov: float = 2 * math.pi
    max_range: float = 30.0
    range_noise_sigma: float = 0.01
    h_lidar: float = 0.4
    camera: CameraConfig = field(default_factory=CameraConfig)
    noise: DetectorNoise = field(default_factory=DetectorNoise)

    def __post_init__(self):
        if self.n_beams < 2:
            raise ValueError("n_beams must be >= 2")
        if not 0 < self.fov <= 2 * math.pi:
            raise ValueError("fov must be in (0, 2*pi]")
        if self.range_noise_sigma < 0 or self.noise.box_jitter_sigma < 0 or self.noise.score_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")

    @property
    def angle_increment(self) -> float:
        if self.fov >= 2 * math.pi - 1e-12:
            return self.fov / self.n_beams
        return self.fov / (self.n_beams - 1)

    @property
    def angle_min(self) -> float:
        return -0.5 * self.fov

    def calib(self, yaw: float = 0.0, pitch_error: float = 0.0) -> CameraCalib:
        c = self.camera
        return CameraCalib.forward_facing(c.fx, c.fy, c.cx, c.cy, c.image_width, c.image_height,
                                          c.mount_height, self.h_lidar, yaw, c.pitch + pitch_error)


@dataclass(frozen=True)
class SceneConfig:
    room_min: float = 10.0
    room_max: float = 26.0
    persons_min: int = 0
    persons_max: int = 6
    pillars_min: int = 0
    pillars_max: int = 10
    pillar_radius_min: float = 0.15
    pillar_radius_max: float = 0.4
    inner_walls_max: int = 3
    waypoints: int = 4
    person_speed: float = 1.1
    robot_speed: float = 0.3
    robot_yaw_rate: float = 0.1
    leg_radius: float = 0.07
    leg_separation: float = 0.30
    person_height: float = 1.7
    person_width: float = 0.5
    # torso cross-section that blocks the camera's view of persons behind
    torso_radius: float = 0.15


@dataclass(frozen=True)
class SynthConfig:
    n_train: int = 17
    n_test: int = 10
    frames_per_sequence: int = 200
    frame_dt: float = 0.1
    sensor: SensorConfig = field(default_factory=SensorConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)

    @property
    def n_sequences(self) -> int:
        return self.n_train + self.n_test


def source_domain_config(base: Optional[SynthConfig] = None) -> SynthConfig:
    """A different LiDAR (coarser, noisier) standing in for another dataset."""
    base = base or SynthConfig()
    sensor = replace(base.sensor, n_beams=450, range_noise_sigma=0.03)
    return replace(base, sensor=sensor)


def zero_noise_config(base: Optional[SynthConfig] = None) -> SynthConfig:
    """Perfect boxes and calibration; range noise untouched."""
    base = base or SynthConfig()
    noise = DetectorNoise(**{f.name: 0.0 for f in fields(DetectorNoise)})
    return replace(base, sensor=replace(base.sensor, noise=noise))


PRESETS = {"default": lambda: SynthConfig(), "source": source_domain_config,
           "zero-noise": zero_noise_config}


class ConfigError(ValueError):
    pass


def _build(cls, table: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"{where}: unknown key '{key}'")
        sub = {"camera": CameraConfig, "noise": DetectorNoise, "sensor": SensorConfig,
               "scene": SceneConfig}.get(key)
        if sub is not None and isinstance(value, dict):
            kwargs[key] = _build(sub, value, f"{where}.{key}")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(doc: dict) -> SynthConfig:
    doc = dict(doc)
    preset = doc.pop("preset", "default")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset '{preset}'")
    base = asdict(PRESETS[preset]())
    for section, table in doc.items():
        if isinstance(table, dict) and isinstance(base.get(section), dict):
            for k, v in table.items():
                if isinstance(v, dict) and isinstance(base[section].get(k), dict):
                    base[section][k].update(v)
                else:
                    base[section][k] = v
        else:
            base[section] = table
    return _build(SynthConfig, base, "config")


def load_config(path) -> SynthConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"{path}: {exc.strerror}") from exc
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # the decoder message carries "(at line L, column C)"
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_to_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)


# --------------------------------------------------------------------------
# scene


@dataclass
class Person:
    waypoints: np.ndarray
    speed: float
    phase: float
    leg_radius: float = 0.07
    leg_separation: float = 0.30
    height: float = 1.7
    width: float = 0.5
    torso_radius: float = 0.15

    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def state(self, t: float):
        """Centre and heading at time ``t`` walking the closed waypoint loop."""
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        pts = self.waypoints
        seg = np.roll(pts, -1, axis=0) - pts
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        ends = np.cumsum(lengths)
        s = (self.phase + self.speed * t) % ends[-1]
        i = min(int(np.searchsorted(ends, s, side="right")), len(pts) - 1)
        s0 = s - (ends[i] - lengths[i])
        out = (pts[i] + seg[i] * (s0 / lengths[i]), math.atan2(seg[i, 1], seg[i, 0]))
        if len(self._cache) > 4:
            self._cache.clear()
        self._cache[t] = out
        return out

    def legs(self, t: float) -> np.ndarray:
        centre, heading = self.state(t)
        perp = np.array([-math.sin(heading), math.cos(heading)])
        half = 0.5 * self.leg_separation
        return np.stack([centre + half * perp, centre - half * perp])


@dataclass
class Scene:
    walls: np.ndarray                  # (W, 4) segments x0, y0, x1, y1
    pillars: np.ndarray                # (P, 3) circles x, y, radius
    persons: list[Person]
    robot_start: np.ndarray            # x, y, theta
    robot_velocity: np.ndarray         # vx, vy, yaw rate

    def robot_pose(self, t: float) -> np.ndarray:
        return self.robot_start + self.robot_velocity * t

    def object_table(self) -> list[dict]:
        table = [{"id": i, "kind": "wall"} for i in range(len(self.walls))]
        base = len(table)
        table += [{"id": base + i, "kind": "pillar"} for i in range(len(self.pillars))]
        base = len(table)
        for p in range(len(self.persons)):
            for leg in range(2):
                table.append({"id": base + 2 * p + leg, "kind": "leg", "person": p})
        return table

    @property
    def first_leg_id(self) -> int:
        return len(self.walls) + len(self.pillars)


def _free_point(rng, half_w, half_h, pillars, margin=0.5):
    for _ in range(1000):
        p = rng.uniform([-half_w + margin, -half_h + margin], [half_w - margin, half_h - margin])
        if all(math.hypot(p[0] - x, p[1] - y) > r + 0.4 for x, y, r in pillars):
            return p
    return np.zeros(2)


def random_scene(cfg: SynthConfig, rng: np.random.Generator) -> Scene:
    sc = cfg.scene
    w, h = rng.uniform(sc.room_min, sc.room_max, size=2)
    hw, hh = 0.5 * w, 0.5 * h
    walls = [[-hw, -hh, hw, -hh], [hw, -hh, hw, hh], [hw, hh, -hw, hh], [-hw, hh, -hw, -hh]]
    for _ in range(int(rng.integers(0, sc.inner_walls_max + 1))):
        a = rng.uniform([-hw, -hh], [hw, hh])
        ang = rng.uniform(0, math.pi)
        length = rng.uniform(1.0, 4.0)
        b = a + length * np.array([math.cos(ang), math.sin(ang)])
        walls.append([a[0], a[1], b[0], b[1]])
    pillars = []
    for _ in range(int(rng.integers(sc.pillars_min, sc.pillars_max + 1))):
        c = rng.uniform([-hw + 0.5, -hh + 0.5], [hw - 0.5, hh - 0.5])
        if math.hypot(*c) < 1.0:
            continue
        pillars.append([c[0], c[1], rng.uniform(sc.pillar_radius_min, sc.pillar_radius_max)])
    persons = []
    for _ in range(int(rng.integers(sc.persons_min, sc.persons_max + 1))):
        wps = np.array([_free_point(rng, hw, hh, pillars) for _ in range(sc.waypoints)])
        seg = np.roll(wps, -1, axis=0) - wps
        if np.any(np.hypot(seg[:, 0], seg[:, 1]) < 1e-3):
            continue
        persons.append(Person(wps, sc.person_speed * rng.uniform(0.6, 1.3),
                              rng.uniform(0, 100.0), sc.leg_radius, sc.leg_separation,
                              sc.person_height, sc.person_width, sc.torso_radius))
    start = np.array([*rng.uniform([-0.2 * hw, -0.2 * hh], [0.2 * hw, 0.2 * hh]),
                      rng.uniform(-math.pi, math.pi)])
    ang = rng.uniform(-math.pi, math.pi)
    vel = np.array([sc.robot_speed * math.cos(ang), sc.robot_speed * math.sin(ang),
                    rng.uniform(-sc.robot_yaw_rate, sc.robot_yaw_rate)])
    # keep the robot inside the room for the whole sequence
    duration = cfg.frames_per_sequence * cfg.frame_dt
    travel = np.abs(vel[:2]) * duration
    limit = np.array([hw, hh]) - 1.0
    vel[:2] *= min(1.0, float(np.min((limit - np.abs(start[:2])) / np.maximum(travel, 1e-9))))
    return Scene(np.asarray(walls, dtype=float).reshape(-1, 4),
                 np.asarray(pillars, dtype=float).reshape(-1, 3), persons, start, vel)


# --------------------------------------------------------------------------
# ray casting


def ray_segment_distances(origin, dirs, segs) -> np.ndarray:
    """Distance along each ray to each segment, ``inf`` when missed."""
    if len(segs) == 0:
        return np.full((len(dirs), 0), np.inf)
    a = segs[:, :2] - origin
    e = segs[:, 2:] - segs[:, :2]
    dx, dy = dirs[:, 0:1], dirs[:, 1:2]
    denom = dx * e[None, :, 1] - dy * e[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (a[None, :, 0] * e[None, :, 1] - a[None, :, 1] * e[None, :, 0]) / denom
        s = (a[None, :, 0] * dy - a[None, :, 1] * dx) / denom
    hit = (np.abs(denom) > 1e-12) & (t > 1e-9) & (s >= 0) & (s <= 1)
    return np.where(hit, t, np.inf)


def ray_circle_distances(origin, dirs, circles) -> np.ndarray:
    """Distance along each ray to the near side of each circle."""
    if len(circles) == 0:
        return np.full((len(dirs), 0), np.inf)
    oc = circles[:, :2] - origin
    proj = dirs @ oc.T
    c2 = (oc ** 2).sum(axis=1) - circles[:, 2] ** 2
    disc = proj ** 2 - c2[None, :]
    with np.errstate(invalid="ignore"):
        t = proj - np.sqrt(disc)
    hit = (disc >= 0) & (t > 1e-9) & (c2[None, :] > 0)
    return np.where(hit, t, np.inf)


def _world_circles(scene: Scene, t: float) -> np.ndarray:
    rows = [scene.pillars]
    for p in scene.persons:
        legs = p.legs(t)
        rows.append(np.column_stack([legs, np.full(2, p.leg_radius)]))
    return np.vstack(rows) if rows else np.zeros((0, 3))


def raycast_scan(scene: Scene, pose, sensor: SensorConfig, rng: Optional[np.random.Generator],
                 frame_id: int = 0, t: float = 0.0, timestamp: Optional[float] = None):
    """Simulate one revolution from ``pose``; returns ``(scan, owner)``.

    ``owner[k]`` is the object id hit by beam ``k`` (see
    :meth:`Scene.object_table`) or -1.
    """
    x, y, th = pose
    origin = np.array([x, y], dtype=float)
    phi = sensor.angle_min + sensor.angle_increment * np.arange(sensor.n_beams)
    dirs = np.stack([np.cos(phi + th), np.sin(phi + th)], axis=1)
    d_seg = ray_segment_distances(origin, dirs, scene.walls)
    d_circ = ray_circle_distances(origin, dirs, _world_circles(scene, t))
    d = np.hstack([d_seg, d_circ])
    if d.shape[1] == 0:
        best = np.full(sensor.n_beams, np.inf)
        owner = np.full(sensor.n_beams, -1)
    else:
        owner = np.argmin(d, axis=1)
        best = d[np.arange(sensor.n_beams), owner]
    miss = ~np.isfinite(best) | (best >= sensor.max_range)
    owner = np.where(miss, -1, owner)
    ranges = np.where(miss, sensor.max_range, best)
    if rng is not None and sensor.range_noise_sigma > 0:
        noisy = ranges + rng.normal(0.0, sensor.range_noise_sigma, size=ranges.shape)
        ranges = np.where(miss, ranges, np.clip(noisy, 1e-3, sensor.max_range))
    scan = Scan(frame_id, ranges, sensor.angle_min, sensor.angle_increment, sensor.max_range,
                t if timestamp is None else timestamp)
    return scan, owner


# --------------------------------------------------------------------------
# camera detections


def world_to_robot(xy, pose) -> np.ndarray:
    x, y, th = pose
    d = np.asarray(xy, dtype=float).reshape(-1, 2) - [x, y]
    c, s = math.cos(th), math.sin(th)
    return np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]], axis=1)


def person_centers(scene: Scene, pose, t: float) -> np.ndarray:
    if not scene.persons:
        return np.zeros((0, 2))
    return world_to_robot(np.array([p.state(t)[0] for p in scene.persons]), pose)


def _line_of_sight_blocked(scene: Scene, pose, t: float, k: int) -> bool:
    """Is anything between the sensor and person ``k``'s torso centre?"""
    origin = np.asarray(pose[:2], dtype=float)
    target = scene.persons[k].state(t)[0]
    vec = target - origin
    dist = float(np.hypot(*vec))
    if dist < 1e-9:
        return False
    direction = (vec / dist)[None, :]
    if np.any(ray_segment_distances(origin, direction, scene.walls) < dist):
        return True
    if np.any(ray_circle_distances(origin, direction, scene.pillars) < dist):
        return True
    bodies = [np.r_[p.state(t)[0], p.torso_radius] for j, p in enumerate(scene.persons) if j != k]
    if bodies:
        if np.any(ray_circle_distances(origin, direction, np.array(bodies)) < dist):
            return True
    return False


def true_box(center_xy, person: Person, calib: CameraCalib, min_visible: float = 0.0) -> Optional[DetBox]:
    """Image box of an upright person, clipped to the image.

    None when the person is behind the camera or less than ``min_visible``
    of the box width survives clipping.
    """
    cam = to_camera_frame([center_xy], calib, height=0.0)[0]
    top = to_camera_frame([center_xy], calib, height=person.height)[0]
    if cam[2] <= 0 or top[2] <= 0:
        return None
    # lateral extent along the camera x axis keeps all corners at one depth
    u0 = calib.fx * (cam[0] - 0.5 * person.width) / cam[2] + calib.cx
    u1 = calib.fx * (cam[0] + 0.5 * person.width) / cam[2] + calib.cx
    v_bottom = calib.fy * cam[1] / cam[2] + calib.cy
    v_top = calib.fy * top[1] / top[2] + calib.cy
    x0, x1 = max(u0, 0.0), min(u1, float(calib.image_width))
    y0, y1 = max(v_top, 0.0), min(v_bottom, float(calib.image_height))
    if x1 - x0 < 1.0 or y1 - y0 < 1.0 or (x1 - x0) < min_visible * (u1 - u0):
        return None
    return DetBox(x0, y0, x1, y1, 1.0)


# persons cut by the image border are still detected while this much of
# their box width is inside the image
MIN_VISIBLE_WIDTH = 0.4


def visible_people(scene: Scene, pose, sensor: SensorConfig, t: float, calib: CameraCalib):
    """(person index, true box) for persons the camera sees.

    A person is seen when enough of the box lies inside the image and the
    line of sight to the torso centre is free.
    """
    centers = person_centers(scene, pose, t)
    out = []
    for k, person in enumerate(scene.persons):
        box = true_box(centers[k], person, calib, MIN_VISIBLE_WIDTH)
        if box is None or _line_of_sight_blocked(scene, pose, t, k):
            continue
        out.append((k, box))
    return out


def _pillar_boxes(scene: Scene, pose, calib: CameraCalib):
    """Person-sized boxes standing on each pillar the camera can see."""
    out = []
    if len(scene.pillars) == 0:
        return out
    origin = np.asarray(pose[:2], dtype=float)
    local = world_to_robot(scene.pillars[:, :2], pose)
    for k, (x, y, r) in enumerate(scene.pillars):
        proxy = Person(np.zeros((1, 2)), 0.0, 0.0, width=max(0.5, 2.0 * r))
        box = true_box(local[k], proxy, calib, MIN_VISIBLE_WIDTH)
        if box is None:
            continue
        vec = np.array([x, y]) - origin
        dist = float(np.hypot(*vec))
        direction = (vec / dist)[None, :]
        others = np.delete(scene.pillars, k, axis=0)
        front = dist - r
        if np.any(ray_segment_distances(origin, direction, scene.walls) < front):
            continue
        if len(others) and np.any(ray_circle_distances(origin, direction, others) < front):
            continue
        out.append((box, dist))
    return out


def render_detections(scene: Scene, pose, sensor: SensorConfig, rng: np.random.Generator,
                      t: float = 0.0, calib: Optional[CameraCalib] = None) -> list[DetBox]:
    calib = calib or sensor.calib()
    noise = sensor.noise
    centers = person_centers(scene, pose, t)
    W, H = float(calib.image_width), float(calib.image_height)
    boxes = []
    for k, box in visible_people(scene, pose, sensor, t, calib):
        dist = float(np.hypot(*centers[k]))
        jitter = rng.normal(0.0, noise.box_jitter_sigma, size=4) if noise.box_jitter_sigma > 0 else np.zeros(4)
        score = 1.0 - noise.score_mean_decay * dist
        if noise.score_sigma > 0:
            score += rng.normal(0.0, noise.score_sigma)
        p_drop = noise.dropout_base + noise.dropout_per_meter * dist
        if p_drop > 0 and rng.random() < p_drop:
            continue
        x0 = min(max(box.x_min + jitter[0], 0.0), W)
        y0 = min(max(box.y_min + jitter[1], 0.0), H)
        x1 = min(max(box.x_max + jitter[2], 0.0), W)
        y1 = min(max(box.y_max + jitter[3], 0.0), H)
        if x1 - x0 < 1.0 or y1 - y0 < 1.0:
            continue
        boxes.append(DetBox(x0, y0, x1, y1, float(np.clip(score, 0.0, 1.0))))
    if noise.pillar_fp_prob > 0:
        for box, dist in _pillar_boxes(scene, pose, calib):
            if rng.random() >= noise.pillar_fp_prob:
                continue
            score = 1.0 - noise.score_mean_decay * dist
            if noise.score_sigma > 0:
                score += rng.normal(0.0, noise.score_sigma)
            boxes.append(replace(box, score=float(np.clip(score, 0.0, 1.0))))
    n_fp = int(rng.poisson(noise.fp_rate)) if noise.fp_rate > 0 else 0
    for _ in range(n_fp):
        h = rng.uniform(60.0, 0.6 * H)
        w = h * rng.uniform(0.25, 0.45)
        x0 = rng.uniform(0.0, W - w)
        y0 = rng.uniform(0.0, H - h)
        boxes.append(DetBox(x0, y0, x0 + w, y0 + h, float(rng.uniform(0.3, 1.0))))
    return boxes


def gt_annotations(scan: Scan, centers, radius: float = 0.5, min_points: int = 5) -> np.ndarray:
    """Person centres with at least ``min_points`` returns within ``radius``."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    if len(centers) == 0:
        return centers
    xy = polar_to_cartesian(scan)[scan.valid]
    d = np.hypot(xy[:, None, 0] - centers[None, :, 0], xy[:, None, 1] - centers[None, :, 1])
    keep = (d <= radius).sum(axis=0) >= min_points
    return centers[keep]


# --------------------------------------------------------------------------
# sequences


def frame_rng(seed: int, seq_index: int, frame_id: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(seq_index), int(frame_id)])


def simulate_frame(scene: Scene, cfg: SynthConfig, true_calib: CameraCalib, seed: int,
                   seq_index: int, frame_id: int) -> dict:
    t = frame_id * cfg.frame_dt
    pose = scene.robot_pose(t)
    rng = frame_rng(seed, seq_index, frame_id)
    scan, owner = raycast_scan(scene, pose, cfg.sensor, rng, frame_id, t)
    boxes = render_detections(scene, pose, cfg.sensor, rng, t, true_calib)
    centers = person_centers(scene, pose, t)
    visible = gt_annotations(scan, centers)
    true_boxes = [b for _, b in visible_people(scene, pose, cfg.sensor, t, true_calib)]
    return {"scan": scan, "owner": owner, "boxes": boxes, "centers": centers,
            "visible": visible, "true_boxes": true_boxes, "pose": pose}


def encode_runs(values) -> str:
    """Compact ``value*count`` runs, comma separated."""
    v = np.asarray(values)
    if v.size == 0:
        return ""
    change = np.flatnonzero(np.diff(v)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [v.size]])
    return ",".join(f"{int(v[a])}*{b - a}" for a, b in zip(starts, ends))


def decode_runs(text: str) -> np.ndarray:
    if not text:
        return np.zeros(0, dtype=int)
    parts = [tuple(map(int, run.split("*"))) for run in text.split(",")]
    return np.concatenate([np.full(n, val, dtype=int) for val, n in parts])


def _as_list(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _dump(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def simulate_sequence(cfg: SynthConfig, seed: int, seq_index: int = 0):
    """Simulate a sequence in memory.

    Returns ``(scene, reported_calib, frames)`` where ``frames`` are the
    dicts of :func:`simulate_frame`. ``reported_calib`` is the calibration
    handed to the pipeline, perturbed by the configured calibration error.
    """
    scene_rng = np.random.default_rng([int(seed), int(seq_index), 2 ** 31 - 1])
    scene = random_scene(cfg, scene_rng)
    true_calib = cfg.sensor.calib()
    n = cfg.sensor.noise
    yaw_err = scene_rng.normal(0.0, n.calib_yaw_sigma) if n.calib_yaw_sigma > 0 else 0.0
    pitch_err = scene_rng.normal(0.0, n.calib_pitch_sigma) if n.calib_pitch_sigma > 0 else 0.0
    reported_calib = cfg.sensor.calib(yaw_err, pitch_err)
    frames = [simulate_frame(scene, cfg, true_calib, seed, seq_index, fid)
              for fid in range(cfg.frames_per_sequence)]
    return scene, reported_calib, frames


def generate_sequence(cfg: SynthConfig, seed: int, out_dir, seq_index: int = 0) -> Path:
    """Simulate one sequence and write it to ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: cannot create sequence directory ({exc.strerror})") from exc
    scene, reported_calib, frames = simulate_sequence(cfg, seed, seq_index)
    scans, dets, annos, owners = [], [], [], []
    for fid, fr in enumerate(frames):
        scans.append(fr["scan"])
        dets.append((fid, fr["boxes"]))
        annos.append({"frame_id": fid, "centers": _as_list(fr["visible"]),
                      "all_centers": _as_list(fr["centers"]),
                      "boxes": [b.to_dict() for b in fr["true_boxes"]],
                      "pose": _as_list(fr["pose"])})
        owners.append({"frame_id": fid, "owner": encode_runs(fr["owner"])})
    try:
        write_scans_csv(out / "scans.csv", scans)
        write_detections_json(out / "detections.json", dets)
        write_calib_json(out / "calib.json", reported_calib)
        _dump(out / "annotations.json", annos)
        _dump(out / "ownership.json", {"objects": scene.object_table(), "frames": owners})
    except OSError as exc:
        raise OSError(f"{out}: write failed ({exc})") from exc
    return out


def sequence_name(i: int) -> str:
    return f"seq_{i:03d}"


def generate_dataset(cfg: SynthConfig, seed: int, out_dir) -> dict:
    """All train and test sequences plus ``split.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [sequence_name(i) for i in range(cfg.n_sequences)]
    for i, name in enumerate(names):
        generate_sequence(cfg, seed, out / name, i)
    split = {"train": names[:cfg.n_train], "test": names[cfg.n_train:]}
    _dump(out / "split.json", split)
    return split
