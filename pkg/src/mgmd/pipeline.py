"""End-to-end motion-guided detector.

Streaming contract: a frame ``t`` is processed once ``t + k`` has been
pushed, so each :meth:`MotionGuidedDetector.push_frame` call emits the
result for ``index - k`` (or nothing during warm-up). :meth:`flush` emits
the last ``k`` frames using previous-frame differencing only.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .align import find_homography, lk_track_points, sample_grid
from .appearance import (
    CROP_SIZE, Detection, Stage, classify_crop, detect_crop, make_classifier, make_detector,
)
from .config import PipelineConfig
from .exceptions import BackendError, EstimationError, InvalidInputError
from .imgproc import Frame, crop, crop_clamped, resize_bilinear
from .mfe import empty_candidates, enhance
from .track import Tracker, iou
from .trajfilter import HomographyBuffer, classify

COUNTERS = ("candidates", "tracks_alive", "tf_suppressed", "lac_rejected", "lad_rejected",
            "alignment_degraded", "fusion_degraded", "backend_errors")


@dataclass
class FrameResult:
    frame_index: int
    detections: list
    diagnostics: dict = field(default_factory=lambda: dict.fromkeys(COUNTERS, 0))
    candidates: list = field(default_factory=list)


def merge_detections(dets, iou_thr=0.5):
    """Greedy suppression: keep the most confident of any group overlapping above ``iou_thr``."""
    order = sorted(dets, key=lambda d: (-d.confidence, d.box.y, d.box.x))
    kept = []
    for d in order:
        if all(iou(d.box, k.box) <= iou_thr for k in kept):
            kept.append(d)
    return kept


def _overlaps(a, b):
    return min(a.x2, b.x2) > max(a.x, b.x) and min(a.y2, b.y2) > max(a.y, b.y)


class MotionGuidedDetector(BaseEstimator):
    """Motion feature enhancement, SORT tracking, trajectory filtering and
    local appearance refinement over a frame stream.

    Parameters
    ----------
    config : PipelineConfig, optional
        All tunables; defaults to ``PipelineConfig()``.
    classifier, detector : optional
        Backend objects overriding the ones named in ``config``. A classifier
        needs ``score_crop(crop)``; a detector needs ``detect(pixels)``.
    """

    def __init__(self, config=None, classifier=None, detector=None):
        self.config = config
        self.classifier = classifier
        self.detector = detector

    # -- sklearn surface ----------------------------------------------------

    def fit(self, X=None, y=None):
        """Validate the configuration, open backends and reset stream state."""
        self.close()
        cfg = (self.config or PipelineConfig()).validate()
        self.config_ = cfg
        self.classifier_ = self.classifier
        self.detector_ = self.detector
        self._owned = []
        if cfg.enable_lac and self.classifier_ is None:
            self.classifier_ = make_classifier(cfg)
            self._owned.append(self.classifier_)
        if cfg.enable_lad and self.detector_ is None:
            self.detector_ = make_detector(cfg)
            self._owned.append(self.detector_)
        self.tracker_ = Tracker(cfg.iou_gate, cfg.max_age, cfg.min_hits, cfg.history_size)
        self.homographies_ = HomographyBuffer(cfg.k, capacity=cfg.history_size * cfg.k + 2)
        self._frames = {}
        self._first = None
        self._last = None
        self._flushed = False
        self._grid = None
        self.crop_sink = None
        return self

    def predict(self, X):
        """Run a whole sequence of frames (or uint8 arrays) and return every FrameResult."""
        self.fit()
        out = []
        for i, f in enumerate(X):
            r = self.push_frame(f if isinstance(f, Frame) else Frame(f, i))
            if r is not None:
                out.append(r)
        out.extend(self.flush())
        return out

    def close(self):
        for b in getattr(self, "_owned", []):
            b.close()
        self._owned = []

    # -- streaming ----------------------------------------------------------

    def _ready(self):
        if not hasattr(self, "config_"):
            self.fit()

    def push_frame(self, f):
        """Ingest the next frame; return the FrameResult for ``f.index - k`` if due."""
        self._ready()
        if self._flushed:
            raise InvalidInputError("stream already flushed; call fit() to start a new one")
        if not isinstance(f, Frame):
            raise InvalidInputError("push_frame expects a Frame")
        if self._last is not None:
            if f.index <= self._last:
                raise InvalidInputError(f"frame {f.index} arrived after frame {self._last}")
            if f.index != self._last + 1:
                raise InvalidInputError(f"frame {self._last + 1} is missing before {f.index}")
            if f.shape != self._frames[self._last].shape:
                raise InvalidInputError("frame size changed mid-stream")
        else:
            self._first = f.index
        self._last = f.index
        k = self.config_.k
        self._frames[f.index] = f
        self._frames.pop(f.index - 2 * k - 1, None)
        t = f.index - k
        if t - k < self._first:
            return None
        return self._process(self._frames[t - k], self._frames[t], f)

    def flush(self):
        """Emit results for the trailing frames that have no ``t + k`` partner."""
        self._ready()
        if self._flushed or self._last is None:
            self._flushed = True
            return []
        self._flushed = True
        k = self.config_.k
        out = []
        for t in range(max(self._last - k + 1, self._first + k), self._last + 1):
            out.append(self._process(self._frames[t - k], self._frames[t], None))
        return out

    # -- stages ---------------------------------------------------------------

    def _align(self, src, dst, which):
        cfg = self.config_
        if self._grid is None or self._grid[0] != src.shape:
            self._grid = (src.shape, sample_grid(src.width, src.height, cfg.grid_cols, cfg.grid_rows))
        pts = self._grid[1]
        moved, ok = lk_track_points(src, dst, pts, levels=cfg.lk_levels, window=cfg.lk_window,
                                    max_iter=cfg.lk_max_iter, eps=cfg.lk_eps,
                                    method=cfg.lk_method)
        rng = np.random.default_rng([cfg.seed, dst.index, which])
        h, _ = find_homography(pts[ok], moved[ok], threshold=cfg.ransac_threshold,
                               confidence=cfg.ransac_confidence,
                               max_iters=cfg.ransac_max_iters, random_state=rng)
        return h

    def _process(self, prev, cur, nxt):
        cfg = self.config_
        diag = dict.fromkeys(COUNTERS, 0)
        run_cfg = cfg
        if nxt is None and cfg.fusion != "two_frame":
            run_cfg = cfg.replace(fusion="two_frame")
            diag["fusion_degraded"] = 1
        try:
            h_prev = self._align(prev, cur, 0)
        except EstimationError:
            h_prev = None
        h_next = None
        if h_prev is not None:
            self.homographies_.push(cur.index, h_prev)
            if run_cfg.fusion != "two_frame":
                try:
                    h_next = self._align(nxt, cur, 1)
                except EstimationError:
                    h_next = None
        if h_prev is None or (run_cfg.fusion != "two_frame" and h_next is None):
            cand = empty_candidates(cur)
            diag["alignment_degraded"] = 1
        else:
            cand = enhance(prev, cur, nxt if run_cfg.fusion != "two_frame" else None,
                           h_prev, h_next, run_cfg)
        diag["candidates"] = len(cand.boxes)

        self.tracker_.step(cand.boxes, cur.index)
        diag["tracks_alive"] = len(self.tracker_.tracks)

        dets = []
        for trk in sorted(self.tracker_.confirmed(), key=lambda t: t.id):
            box = trk.last_box
            stage = Stage.MOTION
            if cfg.enable_tf:
                verdict = classify(trk, self.homographies_, cfg.tau_D, cfg.metric_mode,
                                   cfg.lookback)
                if not verdict.probability:
                    diag["tf_suppressed"] += 1
                    continue
            if self.crop_sink is not None and not cfg.enable_lac:
                self._patch(cur, box, trk.id)
            if cfg.enable_lac:
                try:
                    score = self._score(cur, box, trk.id)
                except BackendError:
                    diag["backend_errors"] += 1
                    diag["lac_rejected"] += 1
                    continue
                if score < cfg.lac_threshold:
                    diag["lac_rejected"] += 1
                    continue
                stage = Stage.CLASSIFIED
            if cfg.enable_lad:
                window, offset = crop_clamped(cur, box.center, cfg.lad_crop)
                try:
                    refined = detect_crop(self.detector_, window, offset, cfg.lad_conf,
                                          (cur.width, cur.height))
                except BackendError:
                    diag["backend_errors"] += 1
                    refined = []
                if cfg.lad_overlap_only:
                    refined = [d for d in refined if _overlaps(d.box, box)]
                if not refined:
                    diag["lad_rejected"] += 1
                dets.extend(refined)
            else:
                dets.append(Detection(box, 1.0, stage))
        if cfg.enable_lad:
            dets = merge_detections(dets, cfg.lad_merge_iou)
        return FrameResult(cur.index, dets, diag, list(cand.boxes))

    def _patch(self, cur, box, track_id):
        """The 32x32 classifier input for ``box``, or None if it leaves the image."""
        region = box.clamp(cur.width, cur.height)
        if region.w < 1 or region.h < 1:
            return None
        patch = resize_bilinear(crop(cur, region), CROP_SIZE, CROP_SIZE)
        if self.crop_sink is not None:
            self.crop_sink(cur.index, track_id, patch)
        return patch

    def _score(self, cur, box, track_id):
        patch = self._patch(cur, box, track_id)
        if patch is None:
            return 0.0
        return classify_crop(self.classifier_, patch)


# Alias matching the stage names used in configuration and docs.
Pipeline = MotionGuidedDetector

__all__ = ["MotionGuidedDetector", "Pipeline", "FrameResult", "merge_detections", "COUNTERS"]
