"""Command line front end: ``pseudolidar <command> [options]``.

Every command writes its outputs plus ``manifest.json`` into ``--out``.
A ``.partial`` marker sits in the output directory while a command runs
and is removed only on success. Exit codes: 0 success, 1 validation,
2 I/O, 3 numerical failure.
"""

from __future__ import annotations

import os

# pin BLAS to one thread so results never depend on the machine
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import load_split
from .detector import MLP, NumericalError, RobustLossParams, TrainConfig, VoteParams, detect, finetune_online, train
from .evaluate import average_precision, distance_histogram, histogram_svg, total_variation, write_histogram_csv
from .experiments import (Frame, Supervision, frames_from_sequence, gt_labels, in_camera_view, label_quality,
                          training_pairs)
from .pseudo_label import CleanMode, FilterParams, LabelParams, PointLabels, clean_labels, generate_labels
from .synth_world import PRESETS, ConfigError, config_to_dict, generate_dataset, load_config

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("pseudolidar")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(ValueError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# small helpers


def unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1]")
    return v


def probability(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return v


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def digest(obj) -> str:
    return hashlib.sha256(canonical(obj).encode()).hexdigest()[:16]


def tree_hash(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in ("manifest.json", ".partial"):
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()[:16]


def write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_toml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"{path}: {exc.strerror}") from exc
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def from_table(cls, table: dict, where: str, **overrides):
    """Build a dataclass from a config table, then apply non-None CLI overrides."""
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key '{unknown[0]}'")
    kwargs = dict(table)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


class Run:
    """Output directory bookkeeping shared by all commands."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.start = time.time()
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.config: dict = {}
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            (self.out / ".partial").write_text("incomplete\n")
        except OSError as exc:
            raise OSError(f"{self.out}: cannot create output directory ({exc.strerror})") from exc

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def manifest(self, timing: bool = True) -> dict:
        doc = {"command": self.args.command, "config_hash": digest(self.config), "seed": self.args.seed,
               "inputs": self.inputs, "outputs": sorted(set(self.outputs)), "version": __version__}
        if timing:
            doc["duration_s"] = round(time.time() - self.start, 3)
        return doc

    def finish(self) -> None:
        write_json(self.out / "manifest.json", self.manifest())
        (self.out / ".partial").unlink()


def load_frames(data: str, split: str, run: Run, **kwargs) -> dict[str, list[Frame]]:
    run.inputs.append(f"{data}:{split}")
    seqs = load_split(data, split, **kwargs)
    return {s.name: frames_from_sequence(s) for s in seqs}


def settings(args) -> dict:
    return read_toml(args.config) if getattr(args, "config", None) else {}


def filter_and_label_params(args, cfg: dict):
    fp = from_table(FilterParams, cfg.get("filter", {}), "filter",
                    t_score=args.t_score, t_aspect=args.t_aspect, t_overlap=args.t_overlap)
    lp = from_table(LabelParams, cfg.get("labels", {}), "labels", r_pos=args.r_pos, r_reg=args.r_reg)
    return fp, lp


def write_labels(path: Path, labels: dict[str, list[PointLabels]], meta: dict) -> None:
    doc = {"meta": meta, "sequences": {k: [lab.to_dict() for lab in v] for k, v in labels.items()}}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def read_labels(path) -> dict[str, list[PointLabels]]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise FileNotFoundError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return {k: [PointLabels.from_dict(d) for d in v] for k, v in doc["sequences"].items()}


def aligned_labels(frames: dict[str, list[Frame]], labels: dict[str, list[PointLabels]], path) -> list[PointLabels]:
    out = []
    for name, seq in frames.items():
        if name not in labels:
            raise ValueError(f"{path}: no labels for sequence {name}")
        if len(labels[name]) != len(seq):
            raise ValueError(f"{path}: {name} has {len(labels[name])} label frames, dataset has {len(seq)}")
        out.extend(labels[name])
    return out


def pmap(fn, items, threads: int):
    """Order-preserving map, threaded when asked."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def load_model(path, run: Run) -> MLP:
    run.inputs.append(str(path))
    try:
        return MLP.load(path)
    except OSError as exc:
        raise FileNotFoundError(f"{path}: {exc.strerror}") from exc
    except (KeyError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: not a model file ({exc})") from exc


def check_model_dims(model: MLP, frames) -> None:
    if model.sizes[0] < 3 or model.sizes[0] % 2 == 0 or model.sizes[-1] != 3:
        raise ValueError(f"model layout {model.sizes} does not fit a scan window detector")
    for f in frames:
        if f.scan.n_points < model.sizes[0]:
            raise ValueError(f"scan with {f.scan.n_points} points is shorter than the model window {model.sizes[0]}")


# --------------------------------------------------------------------------
# commands


def cmd_synth(args, run: Run) -> None:
    if args.config:
        run.inputs.append(args.config)
        cfg = load_config(args.config)
    else:
        cfg = PRESETS[args.preset]()
    overrides = {k: v for k, v in (("frames_per_sequence", args.frames), ("n_train", args.n_train),
                                   ("n_test", args.n_test)) if v is not None}
    cfg = replace(cfg, **overrides)
    run.config = config_to_dict(cfg)
    split = generate_dataset(cfg, args.seed, run.out)
    write_json(run.path("synth_config.json"), run.config)
    run.outputs += ["split.json"] + split["train"] + split["test"]
    h = tree_hash(run.out)
    print(f"wrote {len(split['train'])} train and {len(split['test'])} test sequences, dataset hash {h}")


def cmd_pseudo(args, run: Run) -> None:
    cfg = settings(args)
    fp, lp = filter_and_label_params(args, cfg)
    run.config = {"filter": asdict(fp), "labels": asdict(lp), "split": args.split}
    frames = load_frames(args.data, args.split, run)
    labels = {}
    for name, seq in frames.items():
        labels[name] = pmap(lambda f: generate_labels(f.scan, f.boxes, f.calib, fp, lp), seq, args.threads)
        n_c = sum(len(lab.centers) for lab in labels[name])
        n_a = sum(len(f.annotations) for f in seq)
        n_v = sum(int(in_camera_view(f.annotations, f.calib).sum()) for f in seq)
        print(f"{name}: {n_c} centers ({n_v} annotated in camera view, {n_a} in full scan)")
    write_labels(run.path("labels.json"), labels, {"data": args.data, **run.manifest(timing=False)})
    total = sum(len(lab.centers) for v in labels.values() for lab in v)
    print(f"total: {total} centers over {sum(len(v) for v in labels.values())} frames")


def cmd_labels_eval(args, run: Run) -> None:
    lp = from_table(LabelParams, settings(args).get("labels", {}), "labels")
    run.config = {"labels": asdict(lp), "count_ignored": not args.exclude_ignored, "split": args.split}
    frames = load_frames(args.data, args.split, run, need_detections=False)
    run.inputs.append(args.labels)
    pseudo = aligned_labels(frames, read_labels(args.labels), args.labels)
    flat = [f for seq in frames.values() for f in seq]
    rep = label_quality(flat, lp=lp, count_ignored=not args.exclude_ignored, labels=pseudo)
    write_json(run.path("label_report.json"), {"manifest": run.manifest(timing=False), **rep.to_dict()})
    fmt = lambda v: "n/a" if v is None else f"{v:.4f}"
    print(f"TPR {fmt(rep.tpr)}  TNR {fmt(rep.tnr)}")


def cmd_labels_clean(args, run: Run) -> None:
    lp = from_table(LabelParams, settings(args).get("labels", {}), "labels")
    mode = CleanMode(args.clean)
    run.config = {"labels": asdict(lp), "clean": mode.value, "split": args.split}
    frames = load_frames(args.data, args.split, run, need_detections=False)
    run.inputs.append(args.labels)
    labels = read_labels(args.labels)
    aligned_labels(frames, labels, args.labels)
    cleaned = {name: [clean_labels(lab, gt_labels(f, lp, camera_only=True), mode)
                      for lab, f in zip(labels[name], seq)] for name, seq in frames.items()}
    write_labels(run.path("labels.json"), cleaned, {"data": args.data, **run.manifest(timing=False)})
    print(f"cleaned {sum(len(v) for v in cleaned.values())} frames with {mode.value}")


def cmd_hist(args, run: Run) -> None:
    run.config = {"bin_width": args.bin_width, "max_dist": args.max_dist, "split": args.split}
    frames = load_frames(args.data, args.split, run, need_detections=False)
    run.inputs.append(args.labels)
    pseudo = aligned_labels(frames, read_labels(args.labels), args.labels)
    flat = [f for seq in frames.values() for f in seq]
    p_c = np.concatenate([lab.centers for lab in pseudo] + [np.zeros((0, 2))])
    a_c = np.concatenate([f.annotations for f in flat] + [np.zeros((0, 2))])
    series = {"pseudo": distance_histogram(p_c, args.bin_width, args.max_dist),
              "annotation": distance_histogram(a_c, args.bin_width, args.max_dist)}
    tv = total_variation(series["pseudo"], series["annotation"])
    write_histogram_csv(run.path("histogram.csv"), series, args.bin_width)
    run.path("histogram.svg").write_text(histogram_svg(series, args.bin_width))
    write_json(run.path("histogram.json"), {"manifest": run.manifest(timing=False), "total_variation": tv,
                                            **{k: v.tolist() for k, v in series.items()}})
    print(f"{len(p_c)} pseudo and {len(a_c)} annotated centers, total variation {tv:.4f}")


def loss_params(args, cfg: dict) -> RobustLossParams:
    loss = None if args.loss is None else args.loss == "phuber"
    return from_table(RobustLossParams, cfg.get("loss", {}), "loss", tau=args.tau, use_partial_huber=loss,
                      use_mixup=True if args.mixup else None)


def load_supervision(args, cfg: dict, run: Run, frames: dict[str, list[Frame]]):
    fp, lp = filter_and_label_params(args, cfg)
    clean = CleanMode(args.clean) if args.clean else None
    sup = Supervision(args.supervision, clean, args.flip_rate, args.seed, fp, lp)
    precomputed = None
    if args.labels:
        if args.supervision != "pseudo":
            raise UsageError("--labels only applies to --supervision pseudo")
        run.inputs.append(args.labels)
        precomputed = aligned_labels(frames, read_labels(args.labels), args.labels)
    return sup, precomputed


def supervision_dict(sup: Supervision) -> dict:
    d = asdict(sup)
    d["clean"] = sup.clean.value if sup.clean else None
    return d


def cmd_train(args, run: Run) -> None:
    cfg = settings(args)
    tc = from_table(TrainConfig, cfg.get("train", {}), "train", epochs=args.epochs, batch_size=args.batch_size,
                    lr=args.lr, seed=args.seed)
    params = loss_params(args, cfg)
    frames = load_frames(args.data, args.split, run, need_detections=args.supervision == "pseudo" and not args.labels)
    sup, precomputed = load_supervision(args, cfg, run, frames)
    flat = [f for seq in frames.values() for f in seq]
    model = load_model(args.init, run) if args.init else MLP(seed=args.seed)
    check_model_dims(model, flat)
    run.config = {"train": asdict(tc), "loss": asdict(params), "supervision": supervision_dict(sup),
                  "split": args.split, "init": args.init}
    pairs = training_pairs(flat, sup, precomputed)
    history = train(model, pairs, tc, params)
    model.provenance["supervision"] = supervision_dict(sup)
    model.save(run.path("model.json"))
    write_json(run.path("train_log.json"), {"manifest": run.manifest(timing=False), "epochs": history})
    last = history[-1] if history else {}
    print(f"trained {tc.epochs} epochs on {len(pairs)} frames, final cls loss {last.get('l_cls', float('nan')):.4f}")


def eval_frames(args, run: Run) -> list[Frame]:
    frames = load_frames(args.data, args.eval_split, run, need_calib=False, need_detections=False)
    return [f for seq in frames.values() for f in seq][::args.eval_stride]


def cmd_finetune(args, run: Run) -> None:
    cfg = settings(args)
    params = loss_params(args, cfg)
    if args.loss is None and "loss" not in cfg:
        params = replace(params, use_partial_huber=True)
    vp = from_table(VoteParams, cfg.get("vote", {}), "vote")
    model = load_model(args.model, run)
    frames = load_frames(args.data, args.split, run, need_detections=args.supervision == "pseudo" and not args.labels)
    check_model_dims(model, [f for s in frames.values() for f in s])
    sup, precomputed = load_supervision(args, cfg, run, frames)
    test = eval_frames(args, run)
    run.config = {"loss": asdict(params), "vote": asdict(vp), "supervision": supervision_dict(sup),
                  "scope": args.shuffle,
                  "lr": args.lr, "batch_size": args.batch_size, "track_every": args.track_every,
                  "split": args.split, "eval_split": args.eval_split, "eval_stride": args.eval_stride}
    flat = [f for s in frames.values() for f in s]
    pairs = training_pairs(flat, sup, precomputed)
    seqs, k = [], 0
    for seq in frames.values():
        seqs.append(pairs[k:k + len(seq)])
        k += len(seq)
    traj = finetune_online(model, seqs, [f.scan for f in test], [f.annotations for f in test], args.shuffle,
                           args.track_every, args.lr, args.batch_size, args.seed, params, vp)
    model.provenance.update({"finetune": run.config})
    model.save(run.path("model.json"))
    with open(run.path("trajectory.csv"), "w") as fh:
        fh.write("step,ap_0.3,ap_0.5\n")
        for row in traj:
            fh.write(f"{row['step']},{row['ap_0.3']!r},{row['ap_0.5']!r}\n")
    ap5 = [r["ap_0.5"] for r in traj]
    write_json(run.path("trajectory.json"), {"manifest": run.manifest(timing=False), "trajectory": traj,
                                             "std_ap_0.5": float(np.std(ap5))})
    print(f"{traj[-1]['step']} updates, AP0.5 {ap5[0]:.4f} -> {ap5[-1]:.4f}")


def cmd_eval(args, run: Run) -> None:
    vp = from_table(VoteParams, settings(args).get("vote", {}), "vote")
    if args.zero_model:
        model = MLP(zero=True)
    elif args.model:
        model = load_model(args.model, run)
    else:
        raise UsageError("eval needs --model or --zero-model")
    test = eval_frames(args, run)
    check_model_dims(model, test)
    run.config = {"vote": asdict(vp), "eval_split": args.eval_split, "eval_stride": args.eval_stride,
                  "model": args.model, "zero_model": args.zero_model}
    dets = pmap(lambda f: detect(model, f.scan, vp), test, args.threads)
    gts = [f.annotations for f in test]
    report = {"manifest": run.manifest(timing=False), "frames": len(test), "n_gt": int(sum(len(g) for g in gts))}
    for r in (0.3, 0.5):
        curve = average_precision(dets, gts, r)
        curve.write_csv(run.path(f"pr_{r}.csv"))
        report[f"ap_{r}"] = curve.ap
    write_json(run.path("eval_report.json"), report)
    print(f"AP0.3 {report['ap_0.3']:.4f}  AP0.5 {report['ap_0.5']:.4f}  over {len(test)} frames")


# --------------------------------------------------------------------------
# argument parsing


def add_label_flags(p) -> None:
    p.add_argument("--t-score", type=unit_interval, help="detection confidence threshold, in (0, 1]")
    p.add_argument("--t-aspect", type=unit_interval, help="box width/height threshold, in (0, 1]")
    p.add_argument("--t-overlap", type=unit_interval, help="overlap rejection threshold, in (0, 1]")
    p.add_argument("--r-pos", type=float, help="positive radius around a centre [m]")
    p.add_argument("--r-reg", type=float, help="regression radius around a centre [m]")


def add_training_flags(p) -> None:
    p.add_argument("--supervision", choices=["gt", "pseudo"], default="pseudo")
    p.add_argument("--labels", help="precomputed pseudo-label file instead of generating labels")
    p.add_argument("--clean", choices=[m.value for m in CleanMode], help="correct pseudo-labels with annotations")
    p.add_argument("--flip-rate", type=probability, default=0.0, help="fraction of labelled points to flip")
    p.add_argument("--loss", choices=["ce", "phuber"], help="classification loss")
    p.add_argument("--tau", type=float, help="partial Huber threshold (> 1)")
    p.add_argument("--mixup", action="store_true", help="add the mixup regularisation step")
    add_label_flags(p)


def add_eval_flags(p) -> None:
    p.add_argument("--eval-split", default="test")
    p.add_argument("--eval-stride", type=positive_int, default=1, help="use every n-th test frame")


def build_parser() -> argparse.ArgumentParser:
    def global_flags(defaults: bool):
        # subcommands accept the global flags too, without resetting values given before them
        d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
        p = Parser(add_help=False)
        p.add_argument("--seed", type=int, default=d(0), help="single source of randomness")
        p.add_argument("--threads", type=positive_int, default=d(1), help="worker threads for per-frame work")
        p.add_argument("--out", default=d("."), help="output directory")
        p.add_argument("-v", "--verbose", action="store_true", default=d(False))
        return p

    common = global_flags(False)
    top = Parser(prog="pseudolidar", description="Pseudo-labels for 2D LiDAR person detection.",
                 parents=[global_flags(True)])
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("synth", parents=[common], help="simulate a dataset")
    p.add_argument("--config", help="TOML simulator config")
    p.add_argument("--preset", choices=sorted(PRESETS), default="default")
    p.add_argument("--frames", type=positive_int, help="frames per sequence")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)

    p = sub.add_parser("pseudo", parents=[common], help="generate pseudo-labels")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--config", help="TOML with [filter] and [labels] tables")
    add_label_flags(p)

    p = sub.add_parser("labels-eval", parents=[common], help="TPR/TNR of pseudo-labels")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--config")
    p.add_argument("--exclude-ignored", action="store_true", help="drop unlabelled pseudo points from the counts")

    p = sub.add_parser("labels-clean", parents=[common], help="correct pseudo-labels with annotations")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--clean", required=True, choices=[m.value for m in CleanMode])
    p.add_argument("--config")

    p = sub.add_parser("hist", parents=[common], help="distance histograms of pseudo and annotated centres")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--bin-width", type=float, default=1.0)
    p.add_argument("--max-dist", type=float, default=30.0)

    p = sub.add_parser("train", parents=[common], help="train a detector")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--config", help="TOML with [train], [loss], [filter], [labels] tables")
    p.add_argument("--init", help="start from this model instead of a fresh one")
    p.add_argument("--epochs", type=positive_int)
    p.add_argument("--batch-size", type=positive_int)
    p.add_argument("--lr", type=float)
    add_training_flags(p)

    p = sub.add_parser("finetune", parents=[common], help="online fine-tuning with an AP trajectory")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--config")
    p.add_argument("--shuffle", choices=["sequence", "global"], default="global")
    p.add_argument("--track-every", type=positive_int, default=10)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--batch-size", type=positive_int, default=8)
    add_training_flags(p)
    add_eval_flags(p)

    p = sub.add_parser("eval", parents=[common], help="detector AP on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--model")
    p.add_argument("--zero-model", action="store_true", help="evaluate an all-zero network")
    p.add_argument("--config")
    add_eval_flags(p)
    return top


COMMANDS = {"synth": cmd_synth, "pseudo": cmd_pseudo, "labels-eval": cmd_labels_eval,
            "labels-clean": cmd_labels_clean, "hist": cmd_hist, "train": cmd_train,
            "finetune": cmd_finetune, "eval": cmd_eval}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = Run(args)
        COMMANDS[args.command](args, run)
        run.finish()
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"error: numerical failure ({exc})", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        # ConfigError and UsageError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
