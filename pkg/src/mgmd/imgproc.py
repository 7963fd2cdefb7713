"""Pixel-level primitives over single-channel 8-bit images.

Everything here is a pure function of its arguments. Heavy per-pixel work
is delegated to OpenCV where it is bit-exact with the plain definition
(absolute difference, binary morphology, connected components).
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import cv2
import numpy as np

from ._validation import check_image, check_same_shape, check_scalar
from .exceptions import InvalidInputError

__all__ = [
    "Frame", "BinaryMask", "BoundingBox", "Component",
    "abs_diff", "binarize", "mask_or", "mask_and",
    "morph_open", "morph_close", "erode", "dilate",
    "connected_components", "crop", "crop_clamped", "resize_bilinear",
    "luma",
]


def _frozen_copy(arr):
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


class Frame:
    """A grayscale image plus its ordinal in the stream.

    ``pixels`` is stored as a read-only ``(height, width)`` uint8 array.
    """

    __slots__ = ("pixels", "index")

    def __init__(self, pixels, index=0):
        arr = check_image(pixels, "frame")
        index = check_scalar(index, "index", lo=0, integer=True)
        object.__setattr__(self, "pixels",
                           arr if not arr.flags.writeable else _frozen_copy(arr))
        object.__setattr__(self, "index", index)

    @classmethod
    def _adopt(cls, arr, index):
        """Wrap a freshly computed uint8 array without copying it."""
        arr.flags.writeable = False
        obj = object.__new__(cls)
        object.__setattr__(obj, "pixels", arr)
        object.__setattr__(obj, "index", index)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("Frame is immutable")

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def shape(self):
        return self.pixels.shape

    def with_index(self, index):
        return Frame(self.pixels, index)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.pixels, other.pixels)

    __hash__ = None

    def __repr__(self):
        return f"Frame(index={self.index}, {self.width}x{self.height})"


class BinaryMask:
    """Boolean foreground flags, stored as a read-only ``(height, width)`` array."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        arr = np.asarray(bits)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise InvalidInputError(f"mask must be a non-empty 2-D array, got {arr.shape}")
        arr = arr.astype(bool, copy=False)
        object.__setattr__(self, "bits", arr if not arr.flags.writeable else _frozen_copy(arr))

    @classmethod
    def _adopt(cls, arr):
        """Wrap a freshly computed bool array without copying it."""
        arr.flags.writeable = False
        obj = object.__new__(cls)
        object.__setattr__(obj, "bits", arr)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("BinaryMask is immutable")

    @classmethod
    def empty(cls, width, height):
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def shape(self):
        return self.bits.shape

    def count(self):
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    __hash__ = None

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, {self.count()} set)"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in image coordinates: top-left corner plus extent."""

    x: float
    y: float
    w: float
    h: float

    @property
    def x2(self):
        return self.x + self.w

    @property
    def y2(self):
        return self.y + self.h

    @property
    def center(self):
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self):
        return self.w * self.h

    def corners(self):
        """The four corners, clockwise from top-left, as a (4, 2) array."""
        return np.array([[self.x, self.y], [self.x2, self.y],
                         [self.x2, self.y2], [self.x, self.y2]], dtype=np.float64)

    def translate(self, dx, dy):
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def clamp(self, width, height):
        """Intersect with the image rectangle; extents may shrink to zero."""
        x1 = min(max(self.x, 0.0), width)
        y1 = min(max(self.y, 0.0), height)
        x2 = min(max(self.x2, 0.0), width)
        y2 = min(max(self.y2, 0.0), height)
        return BoundingBox(x1, y1, x2 - x1, y2 - y1)

    def contains(self, other):
        return (self.x <= other.x and self.y <= other.y
                and other.x2 <= self.x2 and other.y2 <= self.y2)

    @classmethod
    def from_xyxy(cls, x1, y1, x2, y2):
        return cls(x1, y1, x2 - x1, y2 - y1)


class Component(NamedTuple):
    label: int
    area: int
    box: BoundingBox


# -- intensity arithmetic -------------------------------------------------

def luma(rgb):
    """Rec.601 luma of an ``(H, W, 3)`` RGB array, rounded to uint8."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"expected an (H, W, 3) RGB array, got {arr.shape}")
    y = 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)


def abs_diff(a, b):
    """Per-pixel ``|a - b|``; the result carries ``a.index``."""
    check_same_shape(a.pixels, b.pixels, "frames")
    return Frame._adopt(cv2.absdiff(a.pixels, b.pixels), a.index)


def binarize(d, threshold):
    """Foreground wherever the intensity is at least ``threshold``."""
    threshold = check_scalar(threshold, "threshold", lo=0, hi=255)
    return BinaryMask._adopt(d.pixels >= threshold)


def mask_or(a, b):
    check_same_shape(a.bits, b.bits, "masks")
    return BinaryMask._adopt(a.bits | b.bits)


def mask_and(a, b):
    check_same_shape(a.bits, b.bits, "masks")
    return BinaryMask._adopt(a.bits & b.bits)


# -- morphology -----------------------------------------------------------

_SHAPES = {"rect": cv2.MORPH_RECT, "cross": cv2.MORPH_CROSS}


def _kernel(shape, size=3):
    try:
        return cv2.getStructuringElement(_SHAPES[shape], (size, size))
    except KeyError:
        raise InvalidInputError(f"unknown structuring element {shape!r}") from None


def _morph(op, m, iterations, shape):
    iterations = check_scalar(iterations, "iterations", lo=1, integer=True)
    src = m.bits.view(np.uint8)
    # Constant-zero border: pixels outside the image count as background
    # for both erosion and dilation.
    out = op(src, _kernel(shape), iterations=iterations,
             borderType=cv2.BORDER_CONSTANT, borderValue=0)
    return BinaryMask._adopt(out.view(bool))


def erode(m, iterations=1, shape="rect"):
    return _morph(cv2.erode, m, iterations, shape)


def dilate(m, iterations=1, shape="rect"):
    return _morph(cv2.dilate, m, iterations, shape)


def morph_open(m, iterations=1, shape="rect"):
    """Erode ``iterations`` times, then dilate ``iterations`` times."""
    return dilate(erode(m, iterations, shape), iterations, shape)


def morph_close(m, iterations=1, shape="rect"):
    """Dilate ``iterations`` times, then erode ``iterations`` times."""
    return erode(dilate(m, iterations, shape), iterations, shape)


def connected_components(m, connectivity=8):
    """Label maximal connected foreground regions.

    Returns a list of :class:`Component` ordered by the (y, x) of each
    region's bounding box; ties keep label order.
    """
    if connectivity not in (4, 8):
        raise InvalidInputError("connectivity must be 4 or 8")
    if not m.bits.any():
        return []
    # Grana's block-based scan; several times faster than the default at 1080p.
    n, _, stats, _ = cv2.connectedComponentsWithStatsWithAlgorithm(
        m.bits.view(np.uint8), connectivity, cv2.CV_32S, cv2.CCL_GRANA)
    comps = []
    for label in range(1, n):
        x, y, w, h, area = (int(v) for v in stats[label])
        comps.append(Component(label, area, BoundingBox(x, y, w, h)))
    comps.sort(key=lambda c: (c.box.y, c.box.x, c.label))
    return comps


# -- geometry on frames ---------------------------------------------------

def crop(f, box):
    """Cut ``box`` out of ``f``. Fractional edges are rounded outward."""
    x0, y0 = math.floor(box.x), math.floor(box.y)
    x1, y1 = math.ceil(box.x2), math.ceil(box.y2)
    if x0 < 0 or y0 < 0 or x1 > f.width or y1 > f.height or x1 <= x0 or y1 <= y0:
        raise InvalidInputError(f"{box} is not a non-empty box inside {f.width}x{f.height}")
    return Frame(f.pixels[y0:y1, x0:x1], f.index)


def crop_clamped(f, center, size):
    """Cut a ``size`` x ``size`` window around ``center``, kept inside the image.

    The window is shifted, never shrunk, to stay in bounds (it is only
    smaller when the image itself is). Returns ``(crop, (x0, y0))`` where
    the offset is the window's top-left corner in ``f``.
    """
    size = check_scalar(size, "size", lo=1, integer=True)
    sw, sh = min(size, f.width), min(size, f.height)
    cx, cy = center
    x0 = int(math.floor(cx - sw / 2.0 + 0.5))
    y0 = int(math.floor(cy - sh / 2.0 + 0.5))
    x0 = min(max(x0, 0), f.width - sw)
    y0 = min(max(y0, 0), f.height - sh)
    return Frame(f.pixels[y0:y0 + sh, x0:x0 + sw], f.index), (x0, y0)


def _axis_weights(n_in, n_out):
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(f, out_w, out_h):
    """Bilinear resampling with half-pixel centres and edge clamping."""
    out_w = check_scalar(out_w, "out_w", lo=1, integer=True)
    out_h = check_scalar(out_h, "out_h", lo=1, integer=True)
    if (out_w, out_h) == (f.width, f.height):
        return f
    img = f.pixels.astype(np.float64)
    x0, x1, fx = _axis_weights(f.width, out_w)
    y0, y1, fy = _axis_weights(f.height, out_h)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    return Frame(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8), f.index)
