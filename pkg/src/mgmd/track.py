"""SORT-style multi-object tracking.

Each track carries a constant-velocity Kalman filter over
``[u, v, s, r, du, dv, ds]`` (centre, area, aspect ratio and the velocities
of the first three). Association is a minimum-cost assignment on
``1 - IoU`` between predicted and detected boxes, gated at ``iou_gate``.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError
from .imgproc import BoundingBox

__all__ = ["iou", "iou_matrix", "hungarian", "KalmanParams", "Track", "Tracker", "StepResult",
           "predict"]


def iou(a, b):
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(boxes_a, boxes_b):
    out = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = iou(a, b)
    return out


def hungarian(cost):
    """Minimum-cost assignment for a rectangular cost matrix.

    Returns a list with one entry per row: the assigned column, or -1 when
    the row is left unassigned (only possible when rows outnumber columns).
    Shortest augmenting path with dual potentials, O(n^2 m).
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise InvalidInputError("cost must be a 2-D matrix")
    n_rows, n_cols = c.shape
    if n_rows == 0 or n_cols == 0:
        return [-1] * n_rows
    if not np.all(np.isfinite(c)):
        raise InvalidInputError("cost entries must be finite")
    transposed = n_rows > n_cols
    if transposed:
        c = c.T
    n, m = c.shape
    # 1-based arrays; column 0 is the virtual start.
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=np.intp)
    way = np.zeros(m + 1, dtype=np.intp)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            used_idx = np.flatnonzero(used)
            u[owner[used_idx]] += delta
            v[used_idx] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    col_of_row = [-1] * n
    for j in range(1, m + 1):
        if owner[j]:
            col_of_row[owner[j] - 1] = j - 1
    if not transposed:
        return col_of_row
    row_of_col = [-1] * n_rows
    for r, col in enumerate(col_of_row):
        row_of_col[col] = r
    return row_of_col


@dataclass(frozen=True)
class KalmanParams:
    """Noise constants; defaults are the reference SORT values."""

    measurement_var: tuple = (1.0, 1.0, 10.0, 10.0)
    initial_var: tuple = (10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4)
    process_var: tuple = (1.0, 1.0, 1.0, 1.0, 1e-2, 1e-2, 1e-4)


_F = np.eye(7)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
_H = np.eye(4, 7)


def box_to_z(box):
    cx, cy = box.center
    return np.array([cx, cy, box.w * box.h, box.w / box.h], dtype=np.float64)


def z_to_box(x):
    s = max(float(x[2]), 1.0)
    r = max(float(x[3]), 1e-6)
    w = np.sqrt(s * r)
    h = s / w
    return BoundingBox(float(x[0]) - w / 2.0, float(x[1]) - h / 2.0, float(w), float(h))


@dataclass(eq=False)
class Track:
    id: int
    x: np.ndarray
    P: np.ndarray
    history: deque
    age: int = 0
    time_since_update: int = 0
    hits: int = 1
    hit_streak: int = 1
    last_box: BoundingBox = None
    params: KalmanParams = field(default_factory=KalmanParams, repr=False)

    @classmethod
    def start(cls, track_id, box, frame_index, params=None, history_size=16):
        params = params or KalmanParams()
        x = np.zeros(7)
        x[:4] = box_to_z(box)
        P = np.diag(params.initial_var).astype(np.float64)
        hist = deque([(frame_index, box)], maxlen=history_size)
        return cls(track_id, x, P, hist, last_box=box, params=params)

    @property
    def box(self):
        """Box implied by the current state estimate."""
        return z_to_box(self.x)

    def predict(self):
        if self.x[2] + self.x[6] <= 0:
            self.x[6] = 0.0
        self.x = _F @ self.x
        if self.x[2] <= 0:
            self.x[2] = 1.0
        self.P = _F @ self.P @ _F.T + np.diag(self.params.process_var)
        self.age += 1
        if self.time_since_update > 0:
            self.hit_streak = 0
        self.time_since_update += 1
        return self.box

    def update(self, box, frame_index):
        z = box_to_z(box)
        R = np.diag(self.params.measurement_var)
        S = _H @ self.P @ _H.T + R
        K = np.linalg.solve(S, _H @ self.P).T
        self.x = self.x + K @ (z - _H @ self.x)
        ikh = np.eye(7) - K @ _H
        # Joseph form keeps P symmetric positive semi-definite.
        self.P = ikh @ self.P @ ikh.T + K @ R @ K.T
        self.P = 0.5 * (self.P + self.P.T)
        self.x[2] = max(self.x[2], 1.0)
        self.x[3] = max(self.x[3], 1e-6)
        self.time_since_update = 0
        self.hits += 1
        self.hit_streak += 1
        self.last_box = box
        if self.history and self.history[-1][0] >= frame_index:
            raise InvalidInputError("history must be strictly increasing in frame index")
        self.history.append((frame_index, box))


def predict(track):
    """Advance ``track`` one step and return its predicted box."""
    return track.predict()


@dataclass
class StepResult:
    matched: list
    new_ids: list
    dead_ids: list


class Tracker:
    """Single-writer SORT tracker. Call :meth:`step` once per frame."""

    def __init__(self, iou_gate=0.3, max_age=3, min_hits=1, history_size=16,
                 kalman=None):
        self.iou_gate = iou_gate
        self.max_age = max_age
        self.min_hits = min_hits
        self.history_size = history_size
        self.kalman = kalman or KalmanParams()
        self.tracks = []
        self._next_id = 1
        self.frame_count = 0

    def get(self, track_id):
        for t in self.tracks:
            if t.id == track_id:
                return t
        raise KeyError(track_id)

    def step(self, detections, frame_index):
        self.frame_count += 1
        predicted = [t.predict() for t in self.tracks]
        matched, unmatched = [], list(range(len(detections)))
        if predicted and detections:
            ious = iou_matrix(predicted, detections)
            assignment = hungarian(1.0 - ious)
            taken = set()
            for ti, di in enumerate(assignment):
                if di < 0 or ious[ti, di] < self.iou_gate:
                    continue
                self.tracks[ti].update(detections[di], frame_index)
                matched.append((self.tracks[ti].id, detections[di]))
                taken.add(di)
            unmatched = [d for d in unmatched if d not in taken]
        new_ids = []
        for di in unmatched:
            t = Track.start(self._next_id, detections[di], frame_index, self.kalman,
                            self.history_size)
            self._next_id += 1
            self.tracks.append(t)
            new_ids.append(t.id)
        dead = [t.id for t in self.tracks if t.time_since_update > self.max_age]
        if dead:
            self.tracks = [t for t in self.tracks if t.time_since_update <= self.max_age]
        return StepResult(matched, new_ids, dead)

    def confirmed(self):
        """Tracks observed this frame whose hit streak satisfies ``min_hits``."""
        return [t for t in self.tracks
                if t.time_since_update == 0
                and (t.hit_streak >= self.min_hits or self.frame_count <= self.min_hits)]
