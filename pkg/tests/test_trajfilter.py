import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mgmd.align import Homography
from mgmd.exceptions import InvalidInputError, UnavailableError
from mgmd.imgproc import BoundingBox
from mgmd.track import Track
from mgmd.trajfilter import HomographyBuffer, classify, composed_homography, distance_metric

pos = st.floats(0.1, 200, allow_nan=False)
coord = st.floats(-500, 500, allow_nan=False)
boxes = st.builds(BoundingBox, coord, coord, pos, pos)


def track_from(boxes, frames=None, track_id=7):
    frames = list(range(len(boxes))) if frames is None else frames
    t = Track.start(track_id, boxes[0], frames[0])
    for f, b in zip(frames[1:], boxes[1:]):
        t.predict()
        t.update(b, f)
    return t


def buffer_of(hs, start=1, k=1):
    buf = HomographyBuffer(k=k, capacity=64)
    for i, h in enumerate(hs):
        buf.push(start + i * k, h)
    return buf


# -- metric -----------------------------------------------------------------

def test_metric_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert distance_metric(a, a) == 0.0
    assert distance_metric(a, BoundingBox(20, 0, 10, 10)) == pytest.approx(20 / math.sqrt(1000), abs=1e-12)
    assert distance_metric(a, BoundingBox(20, 0, 10, 10)) == pytest.approx(0.63246, abs=1e-5)
    assert distance_metric(BoundingBox(0, 0, 0, 0), BoundingBox(10, 0, 0, 0)) == 1.0
    assert distance_metric(BoundingBox(3, 3, 0, 0), BoundingBox(3, 3, 0, 0)) == 0.0


def test_self_diag_mode():
    a, b = BoundingBox(0, 0, 10, 10), BoundingBox(20, 0, 10, 10)
    assert distance_metric(a, b, "self_diag") == pytest.approx(20 / math.sqrt(200))
    with pytest.raises(InvalidInputError):
        distance_metric(a, b, "other")


@given(boxes, boxes)
def test_metric_bounded_and_symmetric(a, b):
    d = distance_metric(a, b)
    assert 0.0 <= d < 1.0
    assert d == pytest.approx(distance_metric(b, a), rel=1e-12, abs=1e-15)


# -- homography buffer ----------------------------------------------------

def test_composed_examples():
    buf = buffer_of([Homography.translation(2, 0)] * 3)
    assert np.array_equal(composed_homography(buf, 2, 2).m, np.eye(3))
    assert np.allclose(composed_homography(buf, 0, 3).m, Homography.translation(6, 0).m)


def test_composed_matches_matrix_product():
    rng = np.random.default_rng(0)
    hs = [Homography(np.eye(3) + rng.normal(0, 1e-3, (3, 3)) * [[1, 1, 1e3], [1, 1, 1e3], [1e-3, 1e-3, 0]])
          for _ in range(3)]
    buf = buffer_of(hs)
    want = hs[2].m @ hs[1].m @ hs[0].m
    assert np.allclose(composed_homography(buf, 0, 3).m, want / want[2, 2], atol=1e-9)


def test_composed_missing_step_and_stride():
    buf = HomographyBuffer(k=1)
    buf.push(1, Homography.identity())
    buf.push(3, Homography.identity())
    with pytest.raises(UnavailableError):
        composed_homography(buf, 0, 3)
    kbuf = buffer_of([Homography.identity()] * 3, start=2, k=2)
    assert np.array_equal(composed_homography(kbuf, 0, 6).m, np.eye(3))
    with pytest.raises(UnavailableError):
        composed_homography(kbuf, 1, 6)


def test_buffer_ordering_and_capacity():
    buf = HomographyBuffer(k=1, capacity=2)
    for i in (1, 2, 3):
        buf.push(i, Homography.identity())
    assert [i for i, _ in buf.entries] == [2, 3] and 1 not in buf
    with pytest.raises(InvalidInputError):
        buf.push(3, Homography.identity())


# -- classification -----------------------------------------------------------

def test_young_track_rejected():
    t = track_from([BoundingBox(0, 0, 10, 10), BoundingBox(10, 0, 10, 10), BoundingBox(20, 0, 10, 10)])
    v = classify(t, buffer_of([Homography.identity()] * 3), tau_D=0.0)
    assert v.probability == 0 and v.track_id == 7


def test_static_camera_mover():
    t = track_from([BoundingBox(10 * i, 0, 10, 10) for i in range(4)])
    buf = buffer_of([Homography.identity()] * 3)
    v = classify(t, buf, tau_D=0.5)
    assert v.metric_value == pytest.approx(30 / math.sqrt(1700), abs=1e-12)
    assert v.metric_value == pytest.approx(0.7276, abs=1e-4) and v.probability == 1
    assert classify(t, buf).probability == 1
    assert classify(t, buf, tau_D=0.73).probability == 0


def test_panning_background_object():
    t = track_from([BoundingBox(100 + 5 * i, 40, 10, 10) for i in range(4)])
    v = classify(t, buffer_of([Homography.translation(5, 0)] * 3), tau_D=0.25)
    assert v.metric_value == pytest.approx(0.0, abs=1e-9) and v.probability == 0


def test_missing_homography_rejects():
    t = track_from([BoundingBox(10 * i, 0, 10, 10) for i in range(4)])
    buf = HomographyBuffer()
    buf.push(1, Homography.identity())
    buf.push(3, Homography.identity())
    assert classify(t, buf, tau_D=0.1).probability == 0


def test_gap_in_history_uses_stored_indices():
    # frames 0, 1, 3, 5: lookback spans 0 -> 5 through five single steps
    t = track_from([BoundingBox(10 * i, 0, 10, 10) for i in range(4)], frames=[0, 1, 3, 5])
    buf = buffer_of([Homography.identity()] * 5)
    assert classify(t, buf, tau_D=0.5).probability == 1


def test_stride_k_lookback():
    t = track_from([BoundingBox(10 * i, 0, 10, 10) for i in range(4)], frames=[2, 4, 6, 8])
    buf = buffer_of([Homography.identity()] * 4, start=2, k=2)
    assert classify(t, buf, tau_D=0.5).probability == 1


def test_self_diag_allows_literal_cut():
    t = track_from([BoundingBox(10 * i, 0, 10, 10) for i in range(4)])
    v = classify(t, buffer_of([Homography.identity()] * 3), tau_D=1.0, metric_mode="self_diag")
    assert v.metric_value == pytest.approx(30 / math.sqrt(200)) and v.probability == 1


@given(st.floats(-300, 300), st.floats(-300, 300), st.floats(0, 8), st.floats(-4, 4))
def test_classify_translation_invariant(tx, ty, vx, pan):
    raw = [BoundingBox(50 + (vx + pan) * i, 60, 10, 8) for i in range(4)]
    moved = [b.translate(tx, ty) for b in raw]
    buf = buffer_of([Homography.translation(pan, 0)] * 3)
    a = classify(track_from(raw), buf, tau_D=0.25)
    b = classify(track_from(moved), buf, tau_D=0.25)
    assert a.metric_value == pytest.approx(b.metric_value, abs=1e-9)


@given(st.integers(1, 3))
def test_short_history_always_rejected(n):
    t = track_from([BoundingBox(40 * i, 0, 5, 5) for i in range(n)])
    assert classify(t, buffer_of([Homography.identity()] * 5), tau_D=0.0).probability == 0
