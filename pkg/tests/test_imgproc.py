import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mgmd.exceptions import InvalidInputError
from mgmd.imgproc import (
    BinaryMask, BoundingBox, Frame, abs_diff, binarize, connected_components, crop,
    crop_clamped, dilate, erode, luma, mask_and, mask_or, morph_close, morph_open,
    resize_bilinear,
)
from oracles import absdiff_loop, dilate_loop, erode_loop, label_bfs, resize_loop, truth_table

images = arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)))
masks = arrays(np.bool_, st.tuples(st.integers(1, 14), st.integers(1, 14)))


def mask_from(rows):
    return BinaryMask(np.array([[c == "#" for c in r] for r in rows]))


# -- types ------------------------------------------------------------------

def test_frame_is_read_only_copy():
    src = np.zeros((4, 5), np.uint8)
    f = Frame(src, 3)
    src[0, 0] = 9
    assert f.pixels[0, 0] == 0
    assert (f.width, f.height, f.index) == (5, 4, 3)
    with pytest.raises(ValueError):
        f.pixels[0, 0] = 1
    with pytest.raises(AttributeError):
        f.index = 2


@pytest.mark.parametrize("bad", [np.zeros((0, 3), np.uint8), np.zeros((2, 2, 3), np.uint8),
                                 np.full((2, 2), 300.0), np.full((2, 2), 1.5)])
def test_frame_rejects_bad_pixels(bad):
    with pytest.raises(InvalidInputError):
        Frame(bad)


def test_box_geometry():
    b = BoundingBox(2, 3, 4, 6)
    assert (b.x2, b.y2, b.center, b.area) == (6, 9, (4.0, 6.0), 24)
    assert b.translate(1, -1) == BoundingBox(3, 2, 4, 6)
    assert BoundingBox(-2, -2, 5, 5).clamp(10, 10) == BoundingBox(0, 0, 3, 3)
    assert BoundingBox.from_xyxy(1, 2, 4, 6) == BoundingBox(1, 2, 3, 4)


def test_luma_rec601():
    rgb = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255], [10, 20, 30]]], np.uint8)
    assert luma(rgb).tolist() == [[76, 150, 29, 18]]


# -- differencing -----------------------------------------------------------

def test_abs_diff_examples():
    a = Frame(np.full((3, 3), 10, np.uint8), 4)
    b = Frame(np.full((3, 3), 3, np.uint8), 2)
    d = abs_diff(a, b)
    assert d.index == 4 and np.all(d.pixels == 7)
    assert not abs_diff(a, a).pixels.any()


def test_abs_diff_matches_scalar_loop():
    rng = np.random.default_rng(1)
    a, b = rng.integers(0, 256, (2, 8, 8), dtype=np.uint8)
    assert np.array_equal(abs_diff(Frame(a), Frame(b)).pixels, absdiff_loop(a, b))


def test_abs_diff_shape_mismatch():
    with pytest.raises(InvalidInputError):
        abs_diff(Frame(np.zeros((2, 2), np.uint8)), Frame(np.zeros((2, 3), np.uint8)))


def test_binarize_inclusive_boundary():
    px = np.zeros((3, 3), np.uint8)
    assert binarize(Frame(px), 5).count() == 0
    px[1, 1] = 5
    assert binarize(Frame(px), 5).bits[1, 1]
    px[1, 1] = 4
    assert binarize(Frame(px), 5).count() == 0


def test_mask_logic_examples_and_oracle():
    a = BinaryMask.empty(4, 4).bits.copy()
    a[1, 2] = True
    a, b = BinaryMask(a), BinaryMask.empty(4, 4)
    assert mask_or(a, b) == a and mask_and(a, b).count() == 0
    assert mask_or(a, a) == a == mask_and(a, a)
    rng = np.random.default_rng(2)
    x, y = rng.random((2, 16, 16)) < 0.5
    assert np.array_equal(mask_or(BinaryMask(x), BinaryMask(y)).bits, truth_table(x, y, "or"))
    assert np.array_equal(mask_and(BinaryMask(x), BinaryMask(y)).bits, truth_table(x, y, "and"))
    with pytest.raises(InvalidInputError):
        mask_or(BinaryMask.empty(2, 2), BinaryMask.empty(3, 2))


@given(images, st.integers(0, 255))
def test_abs_diff_symmetric(px, seed):
    other = np.random.default_rng(seed).integers(0, 256, px.shape, dtype=np.uint8)
    assert abs_diff(Frame(px), Frame(other)) .pixels.tolist() == \
        abs_diff(Frame(other), Frame(px)).pixels.tolist()


@given(images, st.integers(0, 255), st.integers(0, 255))
def test_binarize_monotone(px, t1, t2):
    lo, hi = sorted((t1, t2))
    assert not np.any(binarize(Frame(px), hi).bits & ~binarize(Frame(px), lo).bits)


# -- morphology -------------------------------------------------------------

def test_opening_removes_isolated_pixel():
    m = np.zeros((7, 7), bool)
    m[3, 3] = True
    assert morph_open(BinaryMask(m)).count() == 0


def test_closing_fills_hole():
    m = np.zeros((9, 9), bool)
    m[2:7, 2:7] = True
    m[4, 4] = False
    out = morph_close(BinaryMask(m))
    assert out.bits[4, 4]
    assert np.array_equal(out.bits[2:7, 2:7], np.ones((5, 5), bool))


def test_opening_keeps_4x4_square():
    m = np.zeros((10, 10), bool)
    m[3:7, 3:7] = True
    assert erode(BinaryMask(m)).count() == 4
    assert morph_open(BinaryMask(m)) == BinaryMask(m)


@pytest.mark.parametrize("shape", ["rect", "cross"])
def test_erode_dilate_match_loops(shape):
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = rng.random((rng.integers(1, 12), rng.integers(1, 12))) < 0.6
        assert np.array_equal(erode(BinaryMask(m), 1, shape).bits, erode_loop(m, shape))
        assert np.array_equal(dilate(BinaryMask(m), 1, shape).bits, dilate_loop(m, shape))


def test_iterations_compose():
    m = BinaryMask(np.random.default_rng(4).random((15, 15)) < 0.7)
    assert erode(m, 2) == erode(erode(m))
    assert morph_open(m, 2) == dilate(dilate(erode(erode(m))))


def test_border_is_background():
    full = BinaryMask(np.ones((5, 5), bool))
    out = erode(full)
    assert not out.bits[0].any() and out.bits[1:4, 1:4].all()


def test_morphology_rejects_zero_iterations():
    with pytest.raises(InvalidInputError):
        morph_open(BinaryMask.empty(3, 3), 0)


@given(masks)
def test_open_close_idempotent(bits):
    m = BinaryMask(bits)
    assert morph_open(morph_open(m)) == morph_open(m)
    assert morph_close(morph_close(m)) == morph_close(m)


# -- connected components --------------------------------------------------

def test_components_examples():
    assert connected_components(BinaryMask.empty(4, 4)) == []
    diag = mask_from(["#.", ".#"])
    (c,) = connected_components(diag)
    assert c.area == 2 and c.box == BoundingBox(0, 0, 2, 2)
    assert len(connected_components(diag, connectivity=4)) == 2


def test_components_hand_drawn():
    m = mask_from([
        "##......",
        "#.......",
        "........",
        "...####.",
        "...####.",
        "...####.",
        "...####.",
        "........",
    ])
    comps = connected_components(m)
    assert [c.area for c in comps] == [3, 16]
    assert [c.box for c in comps] == [BoundingBox(0, 0, 2, 2), BoundingBox(3, 3, 4, 4)]


def test_components_match_bfs():
    rng = np.random.default_rng(5)
    for _ in range(30):
        m = rng.random((rng.integers(1, 20), rng.integers(1, 20))) < 0.4
        got = connected_components(BinaryMask(m))
        want = label_bfs(m)
        assert [(c.area, (c.box.x, c.box.y, c.box.w, c.box.h)) for c in got] == \
            [(a, b) for a, b, _ in want]


@given(masks)
def test_component_areas_and_tight_boxes(bits):
    comps = connected_components(BinaryMask(bits))
    assert sum(c.area for c in comps) == int(bits.sum())
    for area, (x, y, w, h), pix in label_bfs(bits):
        ys = [p[0] for p in pix]
        xs = [p[1] for p in pix]
        # shrinking any edge by one pixel drops a member
        assert min(xs) == x and max(xs) == x + w - 1 and min(ys) == y and max(ys) == y + h - 1


# -- crops and resizing ---------------------------------------------------

def test_crop_whole_and_fractional():
    px = np.arange(48, dtype=np.uint8).reshape(6, 8)
    f = Frame(px, 7)
    assert crop(f, BoundingBox(0, 0, 8, 6)) == f
    assert crop(f, BoundingBox(1.5, 1.2, 2, 2)).pixels.tolist() == px[1:4, 1:4].tolist()
    with pytest.raises(InvalidInputError):
        crop(f, BoundingBox(6, 0, 4, 2))


def test_crop_clamped():
    f = Frame(np.zeros((1080, 1920), np.uint8))
    win, off = crop_clamped(f, (0, 0), 320)
    assert off == (0, 0) and win.shape == (320, 320)
    win, off = crop_clamped(f, (1900, 540), 320)
    assert off[0] == 1920 - 320 and off[1] == 540 - 160
    small = Frame(np.zeros((100, 200), np.uint8))
    win, off = crop_clamped(small, (150, 50), 320)
    assert win.shape == (100, 200) and off == (0, 0)


def test_resize_examples():
    f = Frame(np.array([[0, 100], [0, 100]], np.uint8))
    assert resize_bilinear(f, 2, 2) == f
    assert resize_bilinear(f, 2, 1).pixels.tolist() == [[0, 100]]
    flat = Frame(np.full((5, 7), 77, np.uint8))
    assert np.all(resize_bilinear(flat, 32, 3).pixels == 77)


def test_resize_matches_loop():
    rng = np.random.default_rng(6)
    for _ in range(10):
        img = rng.integers(0, 256, (rng.integers(1, 15), rng.integers(1, 15)), dtype=np.uint8)
        ow, oh = (int(v) for v in rng.integers(1, 40, 2))
        got = resize_bilinear(Frame(img), ow, oh).pixels.astype(int)
        want, tie = resize_loop(img, ow, oh)
        assert np.array_equal(got[~tie], want[~tie].astype(int))
        assert np.all(np.abs(got[tie] - want[tie].astype(int)) <= 1)


@given(images, st.integers(1, 40), st.integers(1, 40))
def test_resize_within_input_range(px, ow, oh):
    out = resize_bilinear(Frame(px), ow, oh).pixels
    assert out.min() >= px.min() and out.max() <= px.max()
