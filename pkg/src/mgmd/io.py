"""Image sequences, annotation and detection CSVs, annotated frames.

Sequences are directories of ``%06d.pgm`` or ``%06d.png`` files numbered
contiguously from 0. CSVs carry no header: ground truth is
``frame,id,x,y,w,h`` and detections are ``frame,x,y,w,h,confidence,stage``.
"""

import math
import re
from pathlib import Path

import cv2
import numpy as np

from .appearance import Detection, Stage
from .exceptions import InvalidInputError, ParseError
from .imgproc import BoundingBox, Frame, luma
from .metrics import as_frame_map
from .synth import GroundTruth

__all__ = [
    "load_sequence", "save_sequence", "list_sequence", "load_annotations", "save_annotations",
    "load_detections", "save_detections", "format_detections", "write_annotated",
]

_FRAME_NAME = re.compile(r"^(\d{6})\.(pgm|png)$")
_STAGES = {s.value: s for s in Stage}


# -- frame sequences ------------------------------------------------------

def list_sequence(path):
    """Sorted frame file paths of a sequence directory, checked for contiguity."""
    path = Path(path)
    if not path.is_dir():
        raise ParseError(path, None, "not a directory")
    found = {}
    for p in path.iterdir():
        m = _FRAME_NAME.match(p.name)
        if not m:
            continue
        idx = int(m.group(1))
        if idx in found:
            raise ParseError(p, None, f"frame {idx} exists as both {found[idx].name} and {p.name}")
        found[idx] = p
    if not found:
        raise ParseError(path, None, "no %06d.pgm or %06d.png frames found")
    for expect, idx in enumerate(sorted(found)):
        if idx != expect:
            raise ParseError(path, None, f"frame {expect:06d} is missing (next is {idx:06d})")
    return [found[i] for i in range(len(found))]


def _read_image(p, index):
    img = cv2.imread(str(p), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise ParseError(p, None, "unreadable image")
    if img.dtype != np.uint8:
        raise ParseError(p, None, f"expected 8-bit samples, got {img.dtype}")
    if img.ndim == 3:
        if img.shape[2] == 1:
            img = img[..., 0]
        else:
            # OpenCV hands back BGR(A); luma wants RGB.
            img = luma(img[..., 2::-1][..., :3])
    return Frame(img, index)


def load_sequence(path):
    """Read every frame of a sequence directory into memory as :class:`Frame`."""
    files = list_sequence(path)
    frames = [_read_image(p, i) for i, p in enumerate(files)]
    shape = frames[0].shape
    for p, f in zip(files, frames):
        if f.shape != shape:
            raise ParseError(p, None, f"size {f.shape} differs from the first frame's {shape}")
    return frames


def save_sequence(path, frames, ext="pgm"):
    """Write frames as ``%06d.<ext>`` numbered by position."""
    if ext not in ("pgm", "png"):
        raise InvalidInputError("ext must be 'pgm' or 'png'")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        px = f.pixels if isinstance(f, Frame) else np.asarray(f, dtype=np.uint8)
        if not cv2.imwrite(str(path / f"{i:06d}.{ext}"), px):
            raise OSError(f"could not write {path / f'{i:06d}.{ext}'}")


# -- CSV records -------------------------------------------------------------

def _num(v):
    """Shortest text that parses back to the same value."""
    v = float(v)
    if v.is_integer() and abs(v) < 2 ** 53:
        return str(int(v))
    return repr(v)


def _parse_num(text):
    try:
        return int(text)
    except ValueError:
        v = float(text)
        if not math.isfinite(v):
            raise ValueError(f"not finite: {text!r}") from None
        return v


def _records(path, n_fields):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, None, f"cannot read: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ParseError(path, None, "not UTF-8 text") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != n_fields:
            raise ParseError(path, lineno, f"expected {n_fields} fields, got {len(parts)}")
        yield lineno, parts


def load_annotations(path):
    """Parse a ground-truth CSV into :class:`GroundTruth`."""
    gt = GroundTruth()
    seen = set()
    for lineno, parts in _records(path, 6):
        try:
            frame, oid = int(parts[0]), int(parts[1])
            x, y, w, h = (_parse_num(p) for p in parts[2:])
        except ValueError as exc:
            raise ParseError(path, lineno, f"bad number: {exc}") from None
        if frame < 0:
            raise ParseError(path, lineno, "negative frame index")
        if w <= 0 or h <= 0:
            raise ParseError(path, lineno, "box extents must be positive")
        if (frame, oid) in seen:
            raise ParseError(path, lineno, f"object {oid} appears twice in frame {frame}")
        seen.add((frame, oid))
        gt.add(frame, oid, BoundingBox(x, y, w, h))
    if gt.frames:
        gt.length = max(gt.frames) + 1
    return gt


def save_annotations(path, gt):
    lines = []
    for frame in sorted(gt.frames):
        for oid, b in gt.frames[frame]:
            lines.append(f"{frame},{oid},{_num(b.x)},{_num(b.y)},{_num(b.w)},{_num(b.h)}")
    Path(path).write_text("".join(s + "\n" for s in lines), encoding="utf-8")


def format_detections(results):
    """Detection CSV text for FrameResults or a ``{frame: [Detection]}`` map."""
    frame_map = as_frame_map(results)
    out = []
    for frame in sorted(frame_map):
        for d in frame_map[frame]:
            b = d.box
            out.append(f"{frame},{_num(b.x)},{_num(b.y)},{_num(b.w)},{_num(b.h)},"
                       f"{_num(d.confidence)},{Stage(d.stage).value}\n")
    return "".join(out)


def save_detections(path, results):
    Path(path).write_text(format_detections(results), encoding="utf-8")


def load_detections(path):
    """Parse a detection CSV into ``{frame: [Detection]}`` in file order."""
    out = {}
    for lineno, parts in _records(path, 7):
        try:
            frame = int(parts[0])
            x, y, w, h = (_parse_num(p) for p in parts[1:5])
            conf = float(parts[5])
        except ValueError as exc:
            raise ParseError(path, lineno, f"bad number: {exc}") from None
        if parts[6] not in _STAGES:
            raise ParseError(path, lineno, f"unknown stage {parts[6]!r}")
        if frame < 0 or w < 0 or h < 0:
            raise ParseError(path, lineno, "negative frame index or extent")
        if not 0.0 <= conf <= 1.0:
            raise ParseError(path, lineno, f"confidence {conf} outside [0, 1]")
        out.setdefault(frame, []).append(Detection(BoundingBox(x, y, w, h), conf,
                                                   _STAGES[parts[6]]))
    return out


# -- visualisation ----------------------------------------------------------

_COLORS = {Stage.MOTION: (0, 200, 255), Stage.CLASSIFIED: (255, 160, 0),
           Stage.REFINED: (0, 220, 0)}


def write_annotated(path, frame, detections, truth_boxes=()):
    """Save ``frame`` as a colour PNG with detections (and optional GT in red) drawn."""
    img = cv2.cvtColor(frame.pixels, cv2.COLOR_GRAY2BGR)
    for b in truth_boxes:
        cv2.rectangle(img, (int(b.x), int(b.y)), (int(math.ceil(b.x2)) - 1,
                      int(math.ceil(b.y2)) - 1), (0, 0, 255), 1)
    for d in detections:
        b = d.box
        p1 = (int(math.floor(b.x)) - 1, int(math.floor(b.y)) - 1)
        p2 = (int(math.ceil(b.x2)), int(math.ceil(b.y2)))
        cv2.rectangle(img, p1, p2, _COLORS.get(Stage(d.stage), (255, 255, 255)), 1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), img):
        raise OSError(f"could not write {path}")
