"""Pipeline configuration and its flat ``key = value`` file format."""

import dataclasses
import re
from dataclasses import dataclass, fields
from pathlib import Path

from ._validation import check_scalar
from .exceptions import InvalidInputError, ParseError

FUSION_MODES = ("two_frame", "three_frame_and", "three_frame_or")
METRIC_MODES = ("enclosing", "self_diag")
LK_METHODS = ("opencv", "numpy")
CLASSIFIER_BACKENDS = ("passthrough", "linear", "external")
DETECTOR_BACKENDS = ("centroid", "external")


@dataclass
class PipelineConfig:
    """Every tunable of the detector, with its default value."""

    # motion feature enhancement
    k: int = 1
    diff_threshold: int = 5
    fusion: str = "three_frame_or"
    morph_iterations: int = 1
    morph_shape: str = "rect"
    min_blob_area: int = 15
    # alignment
    grid_cols: int = 30
    grid_rows: int = 20
    lk_method: str = "opencv"
    lk_levels: int = 3
    lk_window: int = 21
    lk_max_iter: int = 30
    lk_eps: float = 0.01
    ransac_threshold: float = 3.0
    ransac_confidence: float = 0.995
    ransac_max_iters: int = 2000
    seed: int = 0
    # tracking
    iou_gate: float = 0.3
    max_age: int = 3
    min_hits: int = 1
    history_size: int = 16
    # trajectory filter
    tau_D: float = 0.25
    metric_mode: str = "enclosing"
    lookback: int = 3
    # local fine detection
    lac_threshold: float = 0.5
    lad_crop: int = 320
    lad_conf: float = 0.5
    lad_merge_iou: float = 0.5
    lad_overlap_only: bool = True
    lac_backend: str = "passthrough"
    lac_model: str = ""
    lac_command: str = ""
    lad_backend: str = "centroid"
    lad_command: str = ""
    # stage toggles
    enable_tf: bool = True
    enable_lac: bool = True
    enable_lad: bool = True

    def validate(self):
        """Check every field against its documented range; returns ``self``."""
        c = check_scalar
        c(self.k, "k", lo=1, integer=True)
        c(self.diff_threshold, "diff_threshold", lo=0, hi=255)
        _choice(self.fusion, "fusion", FUSION_MODES)
        c(self.morph_iterations, "morph_iterations", lo=1, integer=True)
        _choice(self.morph_shape, "morph_shape", ("rect", "cross"))
        c(self.min_blob_area, "min_blob_area", lo=0, integer=True)
        c(self.grid_cols, "grid_cols", lo=2, integer=True)
        c(self.grid_rows, "grid_rows", lo=2, integer=True)
        _choice(self.lk_method, "lk_method", LK_METHODS)
        c(self.lk_levels, "lk_levels", lo=1, integer=True)
        c(self.lk_window, "lk_window", lo=3, integer=True)
        if self.lk_window % 2 == 0:
            raise InvalidInputError("lk_window must be odd")
        c(self.lk_max_iter, "lk_max_iter", lo=1, integer=True)
        c(self.lk_eps, "lk_eps", lo=0, lo_inclusive=False)
        c(self.ransac_threshold, "ransac_threshold", lo=0, lo_inclusive=False)
        c(self.ransac_confidence, "ransac_confidence", lo=0, hi=1,
          lo_inclusive=False, hi_inclusive=False)
        c(self.ransac_max_iters, "ransac_max_iters", lo=1, integer=True)
        c(self.seed, "seed", lo=0, integer=True)
        c(self.iou_gate, "iou_gate", lo=0, hi=1)
        c(self.max_age, "max_age", lo=0, integer=True)
        c(self.min_hits, "min_hits", lo=1, integer=True)
        c(self.history_size, "history_size", lo=self.lookback + 1, integer=True)
        c(self.tau_D, "tau_D", lo=0)
        _choice(self.metric_mode, "metric_mode", METRIC_MODES)
        c(self.lookback, "lookback", lo=1, integer=True)
        c(self.lac_threshold, "lac_threshold", lo=0, hi=1)
        c(self.lad_crop, "lad_crop", lo=1, integer=True)
        c(self.lad_conf, "lad_conf", lo=0, hi=1)
        c(self.lad_merge_iou, "lad_merge_iou", lo=0, hi=1)
        _choice(self.lac_backend, "lac_backend", CLASSIFIER_BACKENDS)
        _choice(self.lad_backend, "lad_backend", DETECTOR_BACKENDS)
        if self.lac_backend == "linear" and not self.lac_model:
            raise InvalidInputError("lac_backend = linear needs lac_model")
        if self.lac_backend == "external" and not self.lac_command:
            raise InvalidInputError("lac_backend = external needs lac_command")
        if self.lad_backend == "external" and not self.lad_command:
            raise InvalidInputError("lad_backend = external needs lad_command")
        for name in ("enable_tf", "enable_lac", "enable_lad", "lad_overlap_only"):
            if not isinstance(getattr(self, name), bool):
                raise InvalidInputError(f"{name} must be a boolean")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _choice(value, name, options):
    if value not in options:
        raise InvalidInputError(f"{name} must be one of {options}, got {value!r}")


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _coerce(raw, typ):
    if typ is bool:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    return raw


_COMMENT = re.compile(r"(^|\s)#.*$")


def parse_kv_lines(lines, path="<config>"):
    """Yield ``(lineno, key, value)`` from flat ``key = value`` text.

    Blank lines and lines starting with ``#`` are skipped; a ``#`` preceded
    by whitespace starts a trailing comment.
    """
    for lineno, line in enumerate(lines, 1):
        text = _COMMENT.sub("", line).strip()
        if not text or text.startswith("#"):
            continue
        key, sep, value = text.partition("=")
        if not sep or not key.strip():
            raise ParseError(path, lineno, f"expected 'key = value', got {text!r}")
        yield lineno, key.strip(), value.strip()


def config_from_text(text, path="<config>"):
    types = {f.name: f.type for f in fields(PipelineConfig)}
    type_map = {"int": int, "float": float, "bool": bool, "str": str,
                int: int, float: float, bool: bool, str: str}
    values = {}
    for lineno, key, raw in parse_kv_lines(text.splitlines(), path):
        if key not in types:
            raise ParseError(path, lineno, f"unknown key {key!r}")
        try:
            values[key] = _coerce(raw, type_map[types[key]])
        except ValueError as exc:
            raise ParseError(path, lineno, f"bad value for {key}: {exc}") from None
    cfg = PipelineConfig(**values)
    try:
        cfg.validate()
    except InvalidInputError as exc:
        raise ParseError(path, None, str(exc)) from None
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, None, f"cannot read: {exc.strerror}") from None
    return config_from_text(text, path)


def config_to_text(cfg):
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(out) + "\n"
