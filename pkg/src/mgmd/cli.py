"""Command line entry point: ``mgmd {detect,eval,synth,train-classifier,bench}``.

Exit status is 0 on success, 2 for unreadable or invalid input and
configuration, and 3 when an appearance backend fails.
"""

import argparse
import csv
import sys
from pathlib import Path

import cv2

from .appearance import CROP_SIZE, train_linear_classifier
from .config import PipelineConfig, load_config
from .exceptions import BackendError, InvalidInputError, ParseError
from .imgproc import Frame, resize_bilinear
from .io import (load_annotations, load_detections, load_sequence, save_annotations,
                 save_detections, save_sequence, write_annotated)
from .metrics import evaluate, measure_fps
from .pipeline import MotionGuidedDetector
from .synth import load_synth_config, synth_generate

EXIT_OK, EXIT_INPUT, EXIT_BACKEND = 0, 2, 3


def _config(path):
    return load_config(path) if path else PipelineConfig()


def cmd_detect(args):
    cfg = _config(args.config)
    frames = load_sequence(args.seq_dir)
    det = MotionGuidedDetector(cfg).fit()
    crops = []
    if args.export_crops:
        out_dir = Path(args.export_crops)
        out_dir.mkdir(parents=True, exist_ok=True)

        def sink(frame_index, track_id, patch):
            name = f"{frame_index:06d}_{track_id:05d}.png"
            cv2.imwrite(str(out_dir / name), patch.pixels)
            crops.append((name, frame_index, track_id))
        det.crop_sink = sink
    results = []
    try:
        for f in frames:
            r = det.push_frame(f)
            if r is not None:
                results.append(r)
        results.extend(det.flush())
    finally:
        det.close()
    save_detections(args.out, results)
    if crops:
        with open(Path(args.export_crops) / "index.csv", "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(crops)
    if args.annotate:
        by_frame = {r.frame_index: r.detections for r in results}
        for f in frames:
            write_annotated(Path(args.annotate) / f"{f.index:06d}.png", f,
                            by_frame.get(f.index, []))
    n_det = sum(len(r.detections) for r in results)
    errors = sum(r.diagnostics["backend_errors"] for r in results)
    print(f"{len(results)} frames, {n_det} detections -> {args.out}")
    if errors:
        print(f"error: {errors} appearance backend failures", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_eval(args):
    if not 0.0 < args.iou < 1.0:
        raise InvalidInputError("--iou must lie in (0, 1)")
    res = evaluate(load_detections(args.det), load_annotations(args.gt), args.iou)
    print(f"precision {res.precision:.4f}")
    print(f"recall    {res.recall:.4f}")
    print(f"f1        {res.f1:.4f}")
    print(f"ap        {res.ap:.4f}")
    print(f"tp {res.tp} fp {res.fp} fn {res.fn}")
    return EXIT_OK


def cmd_synth(args):
    clip = synth_generate(load_synth_config(args.config), seed=args.seed)
    out = Path(args.out)
    save_sequence(out, clip.frames, ext=args.ext)
    save_annotations(out / "gt.csv", clip.truth)
    save_annotations(out / "distractors.csv", clip.distractor_truth)
    print(f"{len(clip.frames)} frames, {len(clip.truth)} target boxes -> {out}")
    return EXIT_OK


def _read_labels(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2 or row[1].strip() not in ("0", "1"):
                raise ParseError(path, lineno, "expected 'filename,label' with label 0 or 1")
            rows.append((row[0].strip(), int(row[1])))
    if not rows:
        raise ParseError(path, None, "no labelled crops")
    return rows


def cmd_train(args):
    try:
        labels = _read_labels(args.labels)
    except OSError as exc:
        raise ParseError(args.labels, None, f"cannot read: {exc.strerror}") from None
    samples = []
    for name, label in labels:
        img = cv2.imread(str(Path(args.crops) / name), cv2.IMREAD_GRAYSCALE)
        if img is None:
            raise ParseError(Path(args.crops) / name, None, "unreadable crop image")
        crop = resize_bilinear(Frame(img), CROP_SIZE, CROP_SIZE)
        samples.append((crop, label))
    if len({lbl for _, lbl in samples}) < 2:
        raise InvalidInputError("training needs both positive and negative crops")
    model = train_linear_classifier(samples)
    model.save(args.out)
    crops = [c for c, _ in samples]
    y = [lbl for _, lbl in samples]
    print(f"trained on {len(samples)} crops, accuracy {model.score(crops, y):.3f}, "
          f"log-loss {model.log_loss(crops, y):.4f} -> {args.out}")
    return EXIT_OK


def cmd_bench(args):
    cfg = _config(args.config)
    frames = load_sequence(args.seq_dir)
    det = MotionGuidedDetector(cfg)
    try:
        fps = measure_fps(det, frames)
    finally:
        det.close()
    w, h = frames[0].width, frames[0].height
    print(f"{len(frames)} frames {w}x{h}: {fps:.2f} FPS")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="mgmd", description="Motion-guided small flying object detector.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="run the detector over a frame directory")
    d.add_argument("seq_dir")
    d.add_argument("--config", help="key = value pipeline config (defaults if omitted)")
    d.add_argument("--out", required=True, help="detection CSV to write")
    d.add_argument("--annotate", help="directory for frames with boxes drawn")
    d.add_argument("--export-crops", help="directory for 32x32 track crops plus index.csv")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="score a detection CSV against ground truth")
    e.add_argument("--det", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--iou", type=float, default=0.25)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="render a synthetic clip with ground truth")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--ext", choices=("pgm", "png"), default="pgm")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train-classifier", help="fit the linear crop classifier")
    t.add_argument("--crops", required=True)
    t.add_argument("--labels", required=True, help="CSV of 'filename,label'")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench", help="report pipeline throughput on a frame directory")
    b.add_argument("seq_dir")
    b.add_argument("--config")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ParseError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
