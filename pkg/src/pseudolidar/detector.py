"""Per-point person detector on range windows.

Every beam gets a window of neighbouring range deltas; a small fully
connected network predicts a person-point probability and an offset from
the point to the person centre in the beam frame (along-beam,
cross-beam). Votes from confident points are grouped into detections.

Training supports plain cross-entropy, the partially Huberized variant
(base loss linearised below ``1/tau``) and mixup with the two-stage
update ``l1 = l_reg + (1 - w) l_cls`` then ``l2 = w l_mixup``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .pseudo_label import IGNORE, POS, PointLabels
from .scan_geometry import Scan, polar_to_cartesian

log = logging.getLogger(__name__)

WINDOW = 17
DELTA_SCALE = 1.5


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


# --------------------------------------------------------------------------
# features


def window_features(ranges, window: int = WINDOW) -> np.ndarray:
    """``clamp((r_j - r_i) / 1.5, -1, 1)`` over a wrap-around window per beam."""
    if window % 2 != 1:
        raise ValueError("window length must be odd")
    r = np.asarray(ranges, dtype=float)
    half = window // 2
    idx = (np.arange(len(r))[:, None] + np.arange(-half, half + 1)[None, :]) % len(r)
    return np.clip((r[idx] - r[:, None]) / DELTA_SCALE, -1.0, 1.0)


def beam_rotation(phi) -> np.ndarray:
    """``(N, 2, 2)`` rotations taking beam-frame vectors to the LiDAR frame."""
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def to_beam_frame(vec, phi) -> np.ndarray:
    """LiDAR-frame offsets to (along-beam, cross-beam) components."""
    vec = np.asarray(vec, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([c * vec[:, 0] + s * vec[:, 1], -s * vec[:, 0] + c * vec[:, 1]], axis=1)


def from_beam_frame(off, phi) -> np.ndarray:
    off = np.asarray(off, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([c * off[:, 0] - s * off[:, 1], s * off[:, 0] + c * off[:, 1]], axis=1)


# --------------------------------------------------------------------------
# network


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class MLP:
    """``[W -> 64 -> 64 -> 3]`` with ReLU; outputs logit and 2-d offset."""

    def __init__(self, sizes=(WINDOW, 64, 64, 3), seed: Optional[int] = 0, zero: bool = False):
        self.sizes = tuple(int(s) for s in sizes)
        rng = np.random.default_rng(seed)
        self.params = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if zero:
                w = np.zeros((fan_in, fan_out))
            else:
                w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            self.params += [w, np.zeros(fan_out)]
        self.opt = AdamState()
        self.provenance: dict = {}

    @property
    def window(self) -> int:
        return self.sizes[0]

    def copy(self) -> "MLP":
        other = MLP.__new__(MLP)
        other.sizes = self.sizes
        other.params = [p.copy() for p in self.params]
        other.opt = AdamState(**{**asdict(self.opt), "m": [a.copy() for a in self.opt.m],
                                 "v": [a.copy() for a in self.opt.v]})
        other.provenance = dict(self.provenance)
        return other

    def reset_optimizer(self, lr: Optional[float] = None) -> None:
        self.opt = AdamState(lr=self.opt.lr if lr is None else lr)

    def forward(self, x, keep: bool = False):
        """Raw outputs ``(logit, offset)``; with ``keep`` also the activations."""
        acts = [np.asarray(x, dtype=float)]
        n_layers = len(self.params) // 2
        h = acts[0]
        for k in range(n_layers):
            h = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < n_layers - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        out = acts[-1]
        if keep:
            return out[:, 0], out[:, 1:3], acts
        return out[:, 0], out[:, 1:3]

    def backward(self, acts, d_out) -> list:
        grads = [None] * len(self.params)
        n_layers = len(self.params) // 2
        g = d_out
        for k in reversed(range(n_layers)):
            grads[2 * k] = acts[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k > 0:
                g = (g @ self.params[2 * k].T) * (acts[k] > 0)
        return grads

    def adam_step(self, grads, lr: Optional[float] = None) -> None:
        o = self.opt
        if not o.m:
            o.m = [np.zeros_like(p) for p in self.params]
            o.v = [np.zeros_like(p) for p in self.params]
        o.t += 1
        step = o.lr if lr is None else lr
        b1t = 1.0 - o.beta1 ** o.t
        b2t = 1.0 - o.beta2 ** o.t
        for p, g, m, v in zip(self.params, grads, o.m, o.v):
            m *= o.beta1
            m += (1.0 - o.beta1) * g
            v *= o.beta2
            v += (1.0 - o.beta2) * g * g
            p -= step * (m / b1t) / (np.sqrt(v / b2t) + o.eps)

    # persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        layers = []
        for k in range(len(self.params) // 2):
            w, b = self.params[2 * k], self.params[2 * k + 1]
            layers.append({"shape": list(w.shape), "weight": w.ravel().tolist(), "bias": b.tolist()})
        o = self.opt
        return {"sizes": list(self.sizes), "layers": layers,
                "optimizer": {"name": "adam", "lr": o.lr, "beta1": o.beta1, "beta2": o.beta2,
                              "eps": o.eps, "t": o.t},
                "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> "MLP":
        m = cls(d["sizes"], zero=True)
        for k, layer in enumerate(d["layers"]):
            shape = tuple(layer["shape"])
            if shape != m.params[2 * k].shape:
                raise ValueError(f"layer {k}: shape {shape} does not match sizes {m.sizes}")
            m.params[2 * k] = np.asarray(layer["weight"], dtype=float).reshape(shape)
            m.params[2 * k + 1] = np.asarray(layer["bias"], dtype=float)
        o = d.get("optimizer", {})
        m.opt = AdamState(lr=o.get("lr", 1e-3), beta1=o.get("beta1", 0.9), beta2=o.get("beta2", 0.999),
                          eps=o.get("eps", 1e-8))
        m.provenance = d.get("provenance", {})
        return m

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "MLP":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def forward(model: MLP, features):
    """Probability and beam-frame offset per feature row."""
    z, off = model.forward(np.atleast_2d(features))
    return sigmoid(z), off


# --------------------------------------------------------------------------
# losses


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0) | ~(p < 1.0)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    return p


def loss_ce(p, y):
    """Binary cross-entropy, soft targets allowed."""
    p = _check_prob(p)
    y = np.asarray(y, dtype=float)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def true_class_prob(p, y):
    y = np.asarray(y, dtype=float)
    return y * p + (1.0 - y) * (1.0 - p)


def partial_huber_base(py, tau: float):
    """Base loss on the true-class probability, linear below ``1/tau``."""
    py = np.asarray(py, dtype=float)
    lin = py <= 1.0 / tau
    with np.errstate(divide="ignore"):
        return np.where(lin, -tau * py + math.log(tau) + 1.0, -np.log(np.where(lin, 1.0, py)))


def partial_huber_base_grad(py, tau: float):
    py = np.asarray(py, dtype=float)
    lin = py <= 1.0 / tau
    return np.where(lin, -tau, -1.0 / np.where(lin, 1.0, py))


def loss_partial_huber(p, y, tau: float = 5.0):
    p = _check_prob(p)
    if not tau > 1:
        raise ValueError("tau must exceed 1")
    return partial_huber_base(true_class_prob(p, y), tau)


def ce_logits(z, y):
    """Per-sample cross-entropy and its derivative w.r.t. the logit."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    # softplus(z) - y z, written to stay finite for large |z|
    loss = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))) - y * z
    return loss, sigmoid(z) - y


def partial_huber_logits(z, y, tau: float):
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    p = sigmoid(z)
    py = true_class_prob(p, y)
    lin = py <= 1.0 / tau
    # -log(py) from the logit, exact when y is 0 or 1; soft targets go via py
    hard = (y == 0.0) | (y == 1.0)
    zy = np.where(y >= 0.5, z, -z)
    log_branch = np.where(hard, np.maximum(-zy, 0.0) + np.log1p(np.exp(-np.abs(zy))),
                          -np.log(np.maximum(py, 1e-300)))
    loss = np.where(lin, -tau * py + math.log(tau) + 1.0, log_branch)
    dl_dpy = partial_huber_base_grad(py, tau)
    return loss, dl_dpy * (2.0 * y - 1.0) * p * (1.0 - p)


@dataclass(frozen=True)
class RobustLossParams:
    tau: float = 5.0
    mixup_alpha: float = 0.2
    mixup_weight: float = 0.7
    use_partial_huber: bool = False
    use_mixup: bool = False

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError("tau must exceed 1")
        if not self.mixup_alpha > 0:
            raise ValueError("mixup_alpha must be positive")
        if not 0.0 <= self.mixup_weight <= 1.0:
            raise ValueError("mixup_weight must be in [0, 1]")

    def cls_loss(self, z, y):
        if self.use_partial_huber:
            return partial_huber_logits(z, y, self.tau)
        return ce_logits(z, y)


def mixup_pairs(x, y, alpha: float, rng: np.random.Generator, lam: Optional[float] = None):
    """Convex combinations of each sample with a uniformly drawn partner."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ValueError("mixup needs at least two samples")
    if lam is None:
        lam = float(rng.beta(alpha, alpha))
    partner = rng.integers(0, len(x), size=len(x))
    return lam * x + (1.0 - lam) * x[partner], lam * y + (1.0 - lam) * y[partner], lam


# --------------------------------------------------------------------------
# batches and updates


@dataclass
class Batch:
    x: np.ndarray        # (M, W) features of labelled points
    y: np.ndarray        # (M,) classification targets in [0, 1]
    reg: np.ndarray      # (M, 2) beam-frame offset targets, NaN where absent

    @property
    def has_reg(self) -> np.ndarray:
        return ~np.isnan(self.reg[:, 0])

    def __len__(self) -> int:
        return len(self.y)


def frame_samples(scan: Scan, labels: PointLabels, window: int = WINDOW) -> Batch:
    if labels.n_points != scan.n_points:
        raise ValueError(f"frame {scan.frame_id}: labels cover {labels.n_points} points, scan has {scan.n_points}")
    keep = labels.cls != IGNORE
    feats = window_features(scan.ranges, window)[keep]
    reg = np.full((int(keep.sum()), 2), np.nan)
    has = labels.has_reg[keep]
    reg[has] = to_beam_frame(labels.reg[keep][has], scan.angles[keep][has])
    return Batch(feats, (labels.cls[keep] == POS).astype(float), reg)


def concat_batches(parts: Sequence[Batch], window: int = WINDOW) -> Batch:
    if not parts:
        return Batch(np.zeros((0, window)), np.zeros(0), np.zeros((0, 2)))
    return Batch(np.vstack([b.x for b in parts]), np.concatenate([b.y for b in parts]),
                 np.vstack([b.reg for b in parts]))


def _objective(model: MLP, batch: Batch, params: RobustLossParams, cls_weight: float, reg_weight: float):
    """Weighted loss and parameter gradients on one batch."""
    z, off, acts = model.forward(batch.x, keep=True)
    n = len(batch)
    d_out = np.zeros((n, 3))
    l_cls, dz = params.cls_loss(z, batch.y)
    cls_val = float(l_cls.mean())
    d_out[:, 0] = cls_weight * dz / n
    reg_val = 0.0
    has = batch.has_reg
    if reg_weight and has.any():
        diff = off[has] - batch.reg[has]
        reg_val = float((diff ** 2).sum(axis=1).mean())
        d_out[has, 1:3] = reg_weight * 2.0 * diff / has.sum()
    total = cls_weight * cls_val + reg_weight * reg_val
    if not math.isfinite(total):
        raise NumericalError(f"non-finite loss (cls={cls_val}, reg={reg_val})")
    return total, cls_val, reg_val, model.backward(acts, d_out)


def train_step(model: MLP, batch: Batch, params: RobustLossParams = RobustLossParams(),
               rng: Optional[np.random.Generator] = None, lr: Optional[float] = None) -> dict:
    """One training iteration; updates ``model`` in place.

    Without mixup: one Adam update on ``l_reg + l_cls``. With mixup: an
    update on ``l_reg + (1 - w) l_cls`` followed by one on ``w l_mixup``
    computed on a mixed copy of the same classification samples.
    """
    report = {"l_cls": 0.0, "l_reg": 0.0, "l_mixup": 0.0, "updates": 0}
    if len(batch) == 0:
        return report
    w = params.mixup_weight if params.use_mixup else 0.0
    total, l_cls, l_reg, grads = _objective(model, batch, params, 1.0 - w, 1.0)
    model.adam_step(grads, lr)
    report.update(l_cls=l_cls, l_reg=l_reg, updates=1)
    if params.use_mixup and w > 0 and len(batch) >= 2:
        rng = rng if rng is not None else np.random.default_rng(0)
        xm, ym, _ = mixup_pairs(batch.x, batch.y, params.mixup_alpha, rng)
        mixed = Batch(xm, ym, np.full((len(ym), 2), np.nan))
        _, l_mix, _, grads = _objective(model, mixed, params, w, 0.0)
        model.adam_step(grads, lr)
        report.update(l_mixup=l_mix, updates=2)
    return report


def batch_loss(model: MLP, batch: Batch, params: RobustLossParams = RobustLossParams()) -> float:
    return _objective(model, batch, params, 1.0, 1.0)[0]


# --------------------------------------------------------------------------
# inference


def predict(model: MLP, scan: Scan):
    """Per-beam probability and absolute predicted centre."""
    p, off = forward(model, window_features(scan.ranges, model.window))
    centers = polar_to_cartesian(scan) + from_beam_frame(off, scan.angles)
    return p, centers


def vote_and_group(p, centers, valid=None, vote_threshold: float = 0.3,
                   group_radius: float = 0.5) -> np.ndarray:
    """Greedy grouping of votes into ``(M, 3)`` detections ``x, y, conf``.

    The highest-probability free vote seeds a group and absorbs every free
    vote within ``group_radius`` of it. Ties are broken by position so the
    result does not depend on the input order.
    """
    p = np.asarray(p, dtype=float)
    c = np.asarray(centers, dtype=float).reshape(-1, 2)
    m = p >= vote_threshold
    if valid is not None:
        m &= np.asarray(valid, dtype=bool)
    p, c = p[m], c[m]
    if len(p) == 0:
        return np.zeros((0, 3))
    order = np.lexsort((c[:, 1], c[:, 0], -p))
    p, c = p[order], c[order]
    free = np.ones(len(p), dtype=bool)
    dets = []
    for i in range(len(p)):
        if not free[i]:
            continue
        near = free & (np.hypot(c[:, 0] - c[i, 0], c[:, 1] - c[i, 1]) <= group_radius)
        free &= ~near
        wts = p[near]
        pos = (wts[:, None] * c[near]).sum(axis=0) / wts.sum()
        dets.append((pos[0], pos[1], p[i]))
    return np.asarray(dets)


@dataclass(frozen=True)
class VoteParams:
    vote_threshold: float = 0.3
    group_radius: float = 0.5


def detect(model: MLP, scan: Scan, vp: VoteParams = VoteParams()) -> np.ndarray:
    p, centers = predict(model, scan)
    return vote_and_group(p, centers, scan.valid, vp.vote_threshold, vp.group_radius)


# --------------------------------------------------------------------------
# training drivers


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 8
    batch_size: int = 8
    lr: float = 1e-3
    lr_final: float = 1e-6
    decay_start: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not (self.lr > 0 and self.lr_final > 0):
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.decay_start < 1.0:
            raise ValueError("decay_start must be in [0, 1)")


def lr_at(cfg: TrainConfig, step: int, total: int) -> float:
    """Constant, then exponential decay reaching ``lr_final`` on the last update."""
    start = int(cfg.decay_start * total)
    if total <= 1 or step < start:
        return cfg.lr
    frac = (step - start) / max(total - 1 - start, 1)
    return cfg.lr * (cfg.lr_final / cfg.lr) ** min(frac, 1.0)


def config_hash(*objs) -> str:
    text = json.dumps([asdict(o) if hasattr(o, "__dataclass_fields__") else o for o in objs],
                      sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def make_batches(frames: Sequence, batch_size: int, rng: np.random.Generator) -> list[list]:
    order = rng.permutation(len(frames))
    return [[frames[i] for i in order[k:k + batch_size]] for k in range(0, len(order), batch_size)]


def train(model: MLP, frames: Sequence[tuple[Scan, PointLabels]], cfg: TrainConfig = TrainConfig(),
          params: RobustLossParams = RobustLossParams(), progress=None) -> list[dict]:
    """Offline training over ``(scan, labels)`` frames; returns per-epoch reports."""
    rng = np.random.default_rng(cfg.seed)
    samples = [frame_samples(s, lab, model.window) for s, lab in frames]
    n_batches = math.ceil(len(samples) / cfg.batch_size)
    total = cfg.epochs * n_batches
    step = 0
    history = []
    for epoch in range(cfg.epochs):
        acc = {"l_cls": 0.0, "l_reg": 0.0, "l_mixup": 0.0}
        for group in make_batches(samples, cfg.batch_size, rng):
            rep = train_step(model, concat_batches(group, model.window), params, rng,
                             lr_at(cfg, step, total))
            step += 1
            for k in acc:
                acc[k] += rep[k] / n_batches
        acc["epoch"] = epoch
        history.append(acc)
        log.info("epoch %d cls %.4f reg %.4f mixup %.4f", epoch, acc["l_cls"], acc["l_reg"], acc["l_mixup"])
        if progress:
            progress(acc)
    model.provenance = {"seed": cfg.seed, "config_hash": config_hash(cfg, params),
                        "train": asdict(cfg), "loss": asdict(params), "frames": len(frames)}
    return history


def detect_frames(model: MLP, scans: Sequence[Scan], vp: VoteParams = VoteParams()) -> list[np.ndarray]:
    return [detect(model, s, vp) for s in scans]


def evaluate_ap(model: MLP, scans: Sequence[Scan], gts: Sequence, vp: VoteParams = VoteParams()) -> dict:
    from .evaluate import average_precision
    dets = detect_frames(model, scans, vp)
    return {"ap_0.3": average_precision(dets, gts, 0.3).ap, "ap_0.5": average_precision(dets, gts, 0.5).ap}


def finetune_online(model: MLP, sequences: Sequence[Sequence[tuple[Scan, PointLabels]]],
                    test_scans: Sequence[Scan], test_gts: Sequence, shuffle_scope: str = "global",
                    track_every: int = 10, lr: float = 5e-5, batch_size: int = 8, seed: int = 0,
                    params: Optional[RobustLossParams] = None,
                    vp: VoteParams = VoteParams()) -> list[dict]:
    """One epoch of fine-tuning, tracking test AP along the way.

    ``sequence`` scope shuffles frames only inside each sequence and feeds
    sequences in their given order; ``global`` shuffles across all frames.
    Returns the trajectory as ``{"step", "ap_0.3", "ap_0.5"}`` rows,
    including the initial and the final model.
    """
    scope = shuffle_scope.lower()
    if scope not in ("sequence", "global"):
        raise ValueError("shuffle_scope must be 'sequence' or 'global'")
    params = params or RobustLossParams(use_partial_huber=True)
    rng = np.random.default_rng(seed)
    per_seq = [[frame_samples(s, lab, model.window) for s, lab in seq] for seq in sequences]
    if scope == "global":
        pooled = [b for seq in per_seq for b in seq]
        batches = make_batches(pooled, batch_size, rng)
    else:
        batches = [grp for seq in per_seq for grp in make_batches(seq, batch_size, rng)]
    model.reset_optimizer(lr)

    def record(step):
        row = {"step": step, **evaluate_ap(model, test_scans, test_gts, vp)}
        trajectory.append(row)

    trajectory = []
    record(0)
    for k, group in enumerate(batches, start=1):
        train_step(model, concat_batches(group, model.window), params, rng, lr)
        if k % track_every == 0 and k != len(batches):
            record(k)
    record(len(batches))
    return trajectory
