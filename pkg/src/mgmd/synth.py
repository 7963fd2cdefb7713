"""Synthetic moving-camera clips with ground truth.

A seeded value-noise texture plays the static world. The camera translates,
rotates and zooms over it at constant per-frame rates. Small bright square
targets move in image space; distractors are anchored to the world but
wobble around their anchor, so alignment leaves residual motion that looks
like parallax (``parallax_sprite``, a dark pole) or a swaying tree
(``swaying_blob``, a dark round blob).
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .config import parse_kv_lines
from .exceptions import InvalidInputError, ParseError
from .imgproc import BoundingBox, Frame


@dataclass(frozen=True)
class TargetSpec:
    size: int = 8
    speed: float = 3.0
    path: str = "linear"
    contrast: float = 90.0


@dataclass(frozen=True)
class DistractorSpec:
    size: int = 10
    amplitude: float = 1.0
    kind: str = "parallax_sprite"
    period: float = 6.0


@dataclass
class SynthConfig:
    width: int = 640
    height: int = 480
    length: int = 60
    translation: tuple = (0.0, 0.0)
    rotation: float = 0.0
    zoom: float = 1.0
    texture_seed: int = None
    texture_contrast: float = 120.0
    noise_sigma: float = 1.0
    targets: list = field(default_factory=list)
    distractors: list = field(default_factory=list)

    def validate(self):
        if self.width < 16 or self.height < 16 or self.length < 1:
            raise InvalidInputError("clip must be at least 16x16 pixels and 1 frame long")
        if self.zoom <= 0:
            raise InvalidInputError("zoom must be positive")
        for t in self.targets:
            if t.size < 3 or t.speed < 0:
                raise InvalidInputError("targets need size >= 3 and speed >= 0")
            if t.path not in ("linear", "sinusoidal"):
                raise InvalidInputError(f"unknown target path {t.path!r}")
            if 2 * t.size + 4 > min(self.width, self.height):
                raise InvalidInputError("target does not fit in the frame")
        for d in self.distractors:
            if d.size < 3 or d.amplitude < 0 or d.period <= 0:
                raise InvalidInputError("distractors need size >= 3, amplitude >= 0, period > 0")
            if d.kind not in ("parallax_sprite", "swaying_blob"):
                raise InvalidInputError(f"unknown distractor kind {d.kind!r}")
        return self


@dataclass
class GroundTruth:
    """Per-frame ``(object_id, BoundingBox)`` lists."""

    frames: dict = field(default_factory=dict)
    length: int = None

    def boxes(self, frame_index):
        return [b for _, b in self.frames.get(frame_index, [])]

    def add(self, frame_index, object_id, box):
        self.frames.setdefault(frame_index, []).append((object_id, box))

    def __len__(self):
        return sum(len(v) for v in self.frames.values())


@dataclass
class SynthClip:
    frames: list
    truth: GroundTruth
    distractor_truth: GroundTruth
    camera: list


def value_noise(width, height, rng, cells=(96, 48, 24, 12, 6), falloff=0.6):
    """Sum of bicubically upsampled random grids, scaled to [-0.5, 0.5]."""
    acc = np.zeros((height, width), dtype=np.float32)
    amp = 1.0
    for cell in cells:
        gw = width // cell + 4
        gh = height // cell + 4
        grid = rng.random((gh, gw)).astype(np.float32)
        up = cv2.resize(grid, (gw * cell, gh * cell), interpolation=cv2.INTER_CUBIC)
        acc += amp * up[cell:cell + height, cell:cell + width]
        amp *= falloff
    acc -= acc.min()
    acc /= max(float(acc.max()), 1e-6)
    return acc - 0.5


def _camera(cfg, t, center_world):
    """2x3 world->image affine for frame ``t``."""
    tx, ty = cfg.translation
    c = (center_world[0] + tx * t, center_world[1] + ty * t)
    s = cfg.zoom ** t
    a = math.radians(cfg.rotation * t)
    r00, r01 = s * math.cos(a), -s * math.sin(a)
    r10, r11 = s * math.sin(a), s * math.cos(a)
    icx, icy = cfg.width / 2.0, cfg.height / 2.0
    return np.array([[r00, r01, icx - (r00 * c[0] + r01 * c[1])],
                     [r10, r11, icy - (r10 * c[0] + r11 * c[1])]])


def _apply(a, pt):
    return (a[0, 0] * pt[0] + a[0, 1] * pt[1] + a[0, 2],
            a[1, 0] * pt[0] + a[1, 1] * pt[1] + a[1, 2])


def _invert(a):
    m = np.vstack([a, [0, 0, 1]])
    return np.linalg.inv(m)[:2]


def _bounce(p, lo, hi):
    span = hi - lo
    if span <= 0:
        return lo
    q = (p - lo) % (2 * span)
    return lo + (q if q <= span else 2 * span - q)


def _target_positions(spec, cfg, rng):
    margin = 2
    lo_x, hi_x = margin, cfg.width - spec.size - margin
    lo_y, hi_y = margin, cfg.height - spec.size - margin
    x0 = rng.uniform(lo_x + 0.2 * (hi_x - lo_x), hi_x - 0.2 * (hi_x - lo_x))
    y0 = rng.uniform(lo_y + 0.2 * (hi_y - lo_y), hi_y - 0.2 * (hi_y - lo_y))
    ang = rng.uniform(0, 2 * math.pi)
    dx, dy = math.cos(ang), math.sin(ang)
    out = []
    for t in range(cfg.length):
        s = spec.speed * t
        px, py = x0 + dx * s, y0 + dy * s
        if spec.path == "sinusoidal":
            wob = 0.25 * min(hi_x - lo_x, hi_y - lo_y) * math.sin(2 * math.pi * t / 90.0)
            px, py = px - dy * wob, py + dx * wob
        out.append((_bounce(px, lo_x, hi_x), _bounce(py, lo_y, hi_y)))
    return out


def _sprite(spec):
    """Offset-free float patch (alpha, value delta) for a distractor."""
    if spec.kind == "parallax_sprite":
        w, h = max(3, spec.size // 3), spec.size
        alpha = np.ones((h, w), np.float32)
        delta = -70.0
    else:
        r = spec.size / 2.0
        yy, xx = np.mgrid[0:spec.size, 0:spec.size] + 0.5
        alpha = np.clip(r - np.hypot(xx - r, yy - r) + 0.5, 0, 1).astype(np.float32)
        delta = -60.0
    return alpha, delta


def synth_generate(cfg, seed=0):
    """Render ``cfg`` deterministically. Returns a :class:`SynthClip`."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    tex_rng = np.random.default_rng(seed if cfg.texture_seed is None else cfg.texture_seed)

    tx, ty = cfg.translation
    radius = math.hypot(cfg.width, cfg.height) / 2.0 / min(1.0, cfg.zoom ** (cfg.length - 1)) + 16
    span_x = abs(tx) * (cfg.length - 1)
    span_y = abs(ty) * (cfg.length - 1)
    tex_w = int(math.ceil(2 * radius + span_x)) + 2
    tex_h = int(math.ceil(2 * radius + span_y)) + 2
    center0 = (radius + 1 + (span_x if tx < 0 else 0), radius + 1 + (span_y if ty < 0 else 0))
    texture = 128.0 + cfg.texture_contrast * value_noise(tex_w, tex_h, tex_rng)

    paths = [_target_positions(spec, cfg, rng) for spec in cfg.targets]
    anchors = []
    for _ in cfg.distractors:
        anchors.append(None)
    phases = [rng.uniform(0, 2 * math.pi) for _ in cfg.distractors]
    sprites = [_sprite(d) for d in cfg.distractors]

    frames, camera = [], []
    truth, dtruth = GroundTruth(length=cfg.length), GroundTruth(length=cfg.length)
    for t in range(cfg.length):
        a = _camera(cfg, t, center0)
        camera.append(a)
        img = cv2.warpAffine(texture, a, (cfg.width, cfg.height), flags=cv2.INTER_LINEAR,
                             borderMode=cv2.BORDER_REFLECT).astype(np.float32)

        for j, spec in enumerate(cfg.distractors):
            alpha, delta = sprites[j]
            sh, sw = alpha.shape
            margin = 4 + spec.amplitude
            pos = None if anchors[j] is None else _apply(a, anchors[j])
            if pos is None or not (margin <= pos[0] <= cfg.width - sw - margin
                                   and margin <= pos[1] <= cfg.height - sh - margin):
                # (Re)spawn at a random visible spot anchored to the world.
                pos = (rng.uniform(margin, cfg.width - sw - margin),
                       rng.uniform(margin, cfg.height - sh - margin))
                anchors[j] = _apply(_invert(a), pos)
            off = spec.amplitude * math.sin(2 * math.pi * t / spec.period + phases[j])
            x, y = pos[0] + off, pos[1]
            m = np.array([[1, 0, x], [0, 1, y]], dtype=np.float64)
            cover = cv2.warpAffine(alpha, m, (cfg.width, cfg.height), flags=cv2.INTER_LINEAR,
                                   borderMode=cv2.BORDER_CONSTANT, borderValue=0)
            img += cover * delta
            x0, y0 = math.floor(x), math.floor(y)
            dtruth.add(t, j, BoundingBox(x0, y0, math.ceil(x + sw) - x0, math.ceil(y + sh) - y0))

        for i, spec in enumerate(cfg.targets):
            px, py = paths[i][t]
            x, y = int(round(px)), int(round(py))
            img[y:y + spec.size, x:x + spec.size] += spec.contrast
            truth.add(t, i, BoundingBox(x, y, spec.size, spec.size))

        if cfg.noise_sigma > 0:
            noise_rng = np.random.default_rng([seed, t])
            img += noise_rng.normal(0.0, cfg.noise_sigma, img.shape).astype(np.float32)
        frames.append(Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8), t))
    return SynthClip(frames, truth, dtruth, camera)


def interframe_homography(clip, t_from, t_to):
    """Exact homography carrying frame ``t_from`` coordinates into ``t_to``."""
    from .align import Homography

    def full(a):
        return np.vstack([a, [0, 0, 1]])
    # The renderer uses OpenCV's pixel-centre convention; convert to corners.
    shift = np.array([[1, 0, 0.5], [0, 1, 0.5], [0, 0, 1.0]])
    m = full(clip.camera[t_to]) @ np.linalg.inv(full(clip.camera[t_from]))
    return Homography(shift @ m @ np.linalg.inv(shift))


def acceptance_scene(length=300, n_distractors=3):
    """The 640x480 moving-camera scene used by the end-to-end checks."""
    return SynthConfig(
        width=640, height=480, length=length, translation=(2.0, 0.0), rotation=0.2,
        targets=[TargetSpec(8, 3.0, "linear"), TargetSpec(8, 3.0, "sinusoidal")],
        distractors=[DistractorSpec(12, 1.0, "parallax_sprite") for _ in range(n_distractors)],
    )


# -- text configuration -----------------------------------------------------

_SCALARS = {"width": int, "height": int, "length": int, "rotation": float, "zoom": float,
            "texture_seed": int, "texture_contrast": float, "noise_sigma": float}


def _fields(raw, n_min, n_max):
    parts = [p.strip() for p in raw.split(",")]
    if not n_min <= len(parts) <= n_max:
        raise ValueError(f"expected {n_min}..{n_max} comma-separated fields, got {len(parts)}")
    return parts


def synth_config_from_text(text, path="<synth config>"):
    """Parse flat ``key = value`` text into a :class:`SynthConfig`.

    Scalar keys: width, height, length, rotation, zoom, texture_seed,
    texture_contrast, noise_sigma; ``translation = tx, ty``. Objects are
    listed one per line, any number of times::

        target = size, speed, path[, contrast]
        distractor = size, amplitude, kind[, period]
    """
    cfg = SynthConfig()
    for lineno, key, raw in parse_kv_lines(text.splitlines(), path):
        try:
            if key in _SCALARS:
                setattr(cfg, key, _SCALARS[key](raw))
            elif key == "translation":
                tx, ty = _fields(raw, 2, 2)
                cfg.translation = (float(tx), float(ty))
            elif key == "target":
                p = _fields(raw, 3, 4)
                extra = (float(p[3]),) if len(p) == 4 else ()
                cfg.targets.append(TargetSpec(int(p[0]), float(p[1]), p[2], *extra))
            elif key == "distractor":
                p = _fields(raw, 3, 4)
                extra = (float(p[3]),) if len(p) == 4 else ()
                cfg.distractors.append(DistractorSpec(int(p[0]), float(p[1]), p[2], *extra))
            else:
                raise ParseError(path, lineno, f"unknown key {key!r}")
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(path, lineno, f"bad value for {key}: {exc}") from None
    try:
        cfg.validate()
    except InvalidInputError as exc:
        raise ParseError(path, None, str(exc)) from None
    return cfg


def load_synth_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, None, f"cannot read: {exc.strerror}") from None
    return synth_config_from_text(text, path)
