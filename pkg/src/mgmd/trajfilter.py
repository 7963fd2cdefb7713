"""Trajectory classification against motion parallax.

A track counts as a genuine mover when its box from ``lookback`` stored
observations ago, re-projected into the newest observation's frame,
is far enough from the newest box relative to the pair's joint extent.
"""

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .align import Homography, compose, transform_box
from .exceptions import InvalidInputError, UnavailableError

__all__ = ["distance_metric", "HomographyBuffer", "TrajectoryVerdict", "classify",
           "composed_homography"]


def distance_metric(b_i, b_j, mode="enclosing"):
    """Centre distance over the diagonal of the boxes' joint enclosing box.

    ``mode="self_diag"`` divides by the diagonal of ``b_j`` alone instead.
    A zero denominator yields 0.
    """
    ci, cj = b_i.center, b_j.center
    rho = math.hypot(ci[0] - cj[0], ci[1] - cj[1])
    if mode == "enclosing":
        ex = max(b_i.x2, b_j.x2) - min(b_i.x, b_j.x)
        ey = max(b_i.y2, b_j.y2) - min(b_i.y, b_j.y)
        d = math.hypot(ex, ey)
    elif mode == "self_diag":
        d = math.hypot(b_j.w, b_j.h)
    else:
        raise InvalidInputError(f"unknown metric mode {mode!r}")
    return rho / d if d > 0 else 0.0


class HomographyBuffer:
    """Bounded store of per-step homographies.

    The entry at ``frame_index`` maps ``frame_index - k`` coordinates into
    ``frame_index`` coordinates. Steps may be missing (alignment failures);
    lookups spanning a missing step raise :class:`UnavailableError`.
    """

    def __init__(self, k=1, capacity=32):
        if k < 1 or capacity < 1:
            raise InvalidInputError("k and capacity must be positive")
        self.k = k
        self.capacity = capacity
        self._entries = OrderedDict()

    def push(self, frame_index, h):
        if self._entries and frame_index <= next(reversed(self._entries)):
            raise InvalidInputError("homography steps must arrive in increasing frame order")
        self._entries[frame_index] = h
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)

    def __len__(self):
        return len(self._entries)

    def __contains__(self, frame_index):
        return frame_index in self._entries

    @property
    def entries(self):
        return list(self._entries.items())


def composed_homography(buf, from_index, to_index):
    """Map ``from_index`` coordinates into ``to_index`` coordinates."""
    if to_index < from_index:
        raise InvalidInputError("composition only runs forward in time")
    if (to_index - from_index) % buf.k:
        raise UnavailableError(f"{from_index}->{to_index} is not a whole number of k={buf.k} steps")
    m = np.eye(3)
    for idx in range(from_index + buf.k, to_index + 1, buf.k):
        try:
            step = buf._entries[idx]
        except KeyError:
            raise UnavailableError(f"no homography for step into frame {idx}") from None
        m = step.m @ m
    return Homography(m)


@dataclass(frozen=True)
class TrajectoryVerdict:
    track_id: int
    probability: int
    metric_value: float


def classify(track, buf, tau_D=0.25, metric_mode="enclosing", lookback=3):
    """Hard 0/1 verdict for one track from its stored history."""
    hist = track.history
    if len(hist) < lookback + 1:
        return TrajectoryVerdict(track.id, 0, 0.0)
    old_idx, old_box = hist[-1 - lookback]
    new_idx, new_box = hist[-1]
    try:
        h = composed_homography(buf, old_idx, new_idx)
    except UnavailableError:
        return TrajectoryVerdict(track.id, 0, 0.0)
    aligned = transform_box(h, old_box)
    value = distance_metric(aligned, new_box, metric_mode)
    return TrajectoryVerdict(track.id, int(value >= tau_D), value)
