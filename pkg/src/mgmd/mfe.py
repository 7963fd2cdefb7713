"""Motion feature enhancement.

The current frame is differenced against the previous and next frames after
both are warped into its coordinates; the two binarised differences are
fused (OR by default), cleaned up morphologically and split into blobs.
"""

from dataclasses import dataclass

import numpy as np

from .align import warp_with_validity
from .config import FUSION_MODES, PipelineConfig
from .exceptions import InvalidInputError
from .imgproc import (
    BinaryMask, abs_diff, binarize, connected_components, mask_and, mask_or,
    morph_close, morph_open,
)


@dataclass(frozen=True)
class MotionCandidates:
    frame_index: int
    boxes: list
    mask: BinaryMask
    alignment_degraded: bool = False


def post_process(mask, cfg=None, valid=None):
    """Open, close, label, and drop blobs smaller than ``cfg.min_blob_area``.

    When ``valid`` is given, pixels outside it are cleared after morphology
    and blobs whose bounding box touches an invalid pixel are dropped.
    """
    cfg = cfg or PipelineConfig()
    m = morph_open(mask, cfg.morph_iterations, cfg.morph_shape)
    m = morph_close(m, cfg.morph_iterations, cfg.morph_shape)
    invalid = None
    if valid is not None:
        invalid = ~valid.bits
        if invalid.any():
            m = BinaryMask._adopt(m.bits & valid.bits)
        else:
            invalid = None
    boxes = []
    for comp in connected_components(m, 8):
        if comp.area < cfg.min_blob_area:
            continue
        b = comp.box
        if invalid is not None and invalid[b.y:b.y + b.h, b.x:b.x + b.w].any():
            continue
        boxes.append(b)
    return boxes


def fuse(d_prev, d_next, mode):
    if mode == "three_frame_or":
        return mask_or(d_prev, d_next)
    if mode == "three_frame_and":
        return mask_and(d_prev, d_next)
    if mode == "two_frame":
        return d_prev
    raise InvalidInputError(f"fusion must be one of {FUSION_MODES}")


def motion_mask(prev, cur, next, h_prev, h_next, cfg=None):
    """The fused, validity-restricted motion mask ``E_t`` and the validity mask.

    ``next``/``h_next`` may be ``None`` under ``two_frame`` fusion.
    """
    cfg = cfg or PipelineConfig()
    if prev.shape != cur.shape or (next is not None and next.shape != cur.shape):
        raise InvalidInputError("frames differ in size")
    if prev.index >= cur.index:
        raise InvalidInputError("previous frame must precede the current frame")
    step = cur.index - prev.index
    if step != cfg.k:
        raise InvalidInputError(f"frame stride {step} does not match k={cfg.k}")
    warped_prev, valid = warp_with_validity(prev, h_prev)
    d_prev = binarize(abs_diff(cur, warped_prev), cfg.diff_threshold)
    if cfg.fusion == "two_frame":
        fused = d_prev
    else:
        if next is None or h_next is None:
            raise InvalidInputError(f"{cfg.fusion} fusion needs the next frame")
        if next.index - cur.index != step:
            raise InvalidInputError("next frame is not k frames ahead of the current frame")
        warped_next, valid_next = warp_with_validity(next, h_next)
        d_next = binarize(abs_diff(cur, warped_next), cfg.diff_threshold)
        fused = fuse(d_prev, d_next, cfg.fusion)
        valid = mask_and(valid, valid_next)
    if not valid.bits.all():
        fused = BinaryMask._adopt(fused.bits & valid.bits)
    return fused, valid


def enhance(prev, cur, next, h_prev, h_next, cfg=None):
    """Candidate moving-object boxes for ``cur``.

    ``h_prev`` maps ``prev`` coordinates into ``cur``; ``h_next`` maps
    ``next`` coordinates into ``cur``.
    """
    cfg = cfg or PipelineConfig()
    fused, valid = motion_mask(prev, cur, next, h_prev, h_next, cfg)
    boxes = post_process(fused, cfg, valid)
    return MotionCandidates(cur.index, boxes, fused)


def empty_candidates(cur):
    return MotionCandidates(cur.index, [], BinaryMask(np.zeros(cur.shape, dtype=bool)), True)
