"""Detection metrics at a single IoU threshold, and throughput measurement."""

import time
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError
from .track import iou

__all__ = ["EvalResult", "evaluate", "match_frame", "average_precision", "measure_fps",
           "as_frame_map"]


@dataclass(frozen=True)
class EvalResult:
    precision: float
    recall: float
    f1: float
    ap: float
    tp: int
    fp: int
    fn: int

    def __iter__(self):
        return iter((self.precision, self.recall, self.f1, self.ap))


def as_frame_map(dets):
    """Normalise FrameResult lists or ``{frame: [Detection]}`` mappings."""
    if isinstance(dets, dict):
        return {int(k): list(v) for k, v in dets.items()}
    return {r.frame_index: list(r.detections) for r in dets}


def _order_key(frame, det):
    return (-det.confidence, frame, det.box.x, det.box.y)


def match_frame(dets, gt_boxes, iou_thr, frame=0):
    """Greedy, confidence-ordered matching within one frame.

    Returns ``[(detection, is_tp)]`` in matching order. A detection is a true
    positive when its best IoU against a still-unmatched ground-truth box is
    strictly above ``iou_thr``.
    """
    free = list(range(len(gt_boxes)))
    out = []
    for d in sorted(dets, key=lambda d: _order_key(frame, d)):
        best, best_iou = None, iou_thr
        for g in free:
            v = iou(d.box, gt_boxes[g])
            if v > best_iou:
                best, best_iou = g, v
        if best is not None:
            free.remove(best)
        out.append((d, best is not None))
    return out


def average_precision(scored, n_pos):
    """All-point interpolated AP from ``[(sort_key, is_tp)]``."""
    if n_pos == 0 or not scored:
        return 0.0
    flags = np.array([tp for _, tp in sorted(scored, key=lambda s: s[0])], dtype=float)
    tp = np.cumsum(flags)
    fp = np.cumsum(1.0 - flags)
    recall = tp / n_pos
    precision = tp / (tp + fp)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    step = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[step + 1] - mrec[step]) * mpre[step + 1]))


def evaluate(dets, gt, iou_thr=0.25, frames=None):
    """Precision, recall, F1 and AP of ``dets`` against ``gt``.

    ``dets`` is a list of FrameResult or ``{frame: [Detection]}``; ``gt`` a
    GroundTruth. ``frames`` restricts scoring to a set of frame indices
    (default: every frame that has detections or ground truth). With no
    detections precision is reported as 1; with no positives recall is 0.
    """
    if not 0.0 < iou_thr < 1.0:
        raise InvalidInputError("iou_thr must lie in (0, 1)")
    det_map = as_frame_map(dets)
    if frames is None:
        frames = set(det_map) | set(gt.frames)
    frames = sorted(set(frames))
    tp = fp = n_pos = 0
    scored = []
    for f in frames:
        gt_boxes = gt.boxes(f)
        n_pos += len(gt_boxes)
        for d, hit in match_frame(det_map.get(f, []), gt_boxes, iou_thr, f):
            scored.append((_order_key(f, d), hit))
            tp += hit
            fp += not hit
    fn = n_pos - tp
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / n_pos if n_pos else 0.0
    f1 = 2 * precision * recall / (precision + recall) if tp else 0.0
    return EvalResult(precision, recall, f1, average_precision(scored, n_pos), tp, fp, fn)


def measure_fps(pipeline, sequence):
    """Frames per second of ``pipeline`` over preloaded ``sequence``.

    Covers every push plus the final flush. The pipeline is reset first when
    it has a ``fit`` method.
    """
    frames = list(sequence)
    if len(frames) < 30:
        raise InvalidInputError("need at least 30 frames for a stable rate")
    if hasattr(pipeline, "fit"):
        pipeline.fit()
    start = time.perf_counter()
    for f in frames:
        pipeline.push_frame(f)
    pipeline.flush()
    elapsed = time.perf_counter() - start
    return len(frames) / elapsed if elapsed > 0 else float("inf")
