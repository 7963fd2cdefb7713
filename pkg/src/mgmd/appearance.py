"""Local fine detection: crop classifiers and crop detectors.

Two roles, each with built-in baselines and an external-process backend:

* classifiers score a 32x32 crop with the probability that it shows a MAV
  (``PassthroughClassifier``, ``LinearCropClassifier``, ``ExternalClassifier``);
* detectors find refined boxes in a window of up to 320x320 pixels
  (``CentroidDetector``, ``ExternalDetector``).

The external protocol is line-oriented over the child's stdin/stdout:

    parent: MGD/1 CLS | MGD/1 DET          child: OK
    parent: CLS <id> 32 32 + 1024 bytes    child: CLS <id> <score>
    parent: DET <id> <w> <h> + w*h bytes   child: DET <id> <n>, then n lines
                                                  <x> <y> <w> <h> <conf>
"""

import enum
import math
import shlex
import struct
import subprocess
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import BackendError, InvalidInputError, ParseError
from .imgproc import BoundingBox, Frame

MODEL_MAGIC = b"MGDL1"
N_FEATURES = 20
N_GRAD_BINS = 16
GRAD_RANGE = 0.5
CROP_SIZE = 32


class Stage(str, enum.Enum):
    MOTION = "motion"
    CLASSIFIED = "classified"
    REFINED = "refined"


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    confidence: float
    stage: Stage


def _pixels(crop):
    return crop.pixels if isinstance(crop, Frame) else np.asarray(crop)


# -- features and the trainable baseline ----------------------------------

def extract_features(crop):
    """20 features of a crop: a 16-bin gradient-magnitude histogram (fractions),
    then mean, variance, min and max intensity, all on the [0, 1] scale."""
    img = _pixels(crop).astype(np.float64) / 255.0
    gy, gx = np.gradient(img) if min(img.shape) > 1 else (np.zeros_like(img),) * 2
    mag = np.hypot(gx, gy)
    bins = np.minimum((mag * (N_GRAD_BINS / GRAD_RANGE)).astype(np.intp), N_GRAD_BINS - 1)
    hist = np.bincount(bins.ravel(), minlength=N_GRAD_BINS) / mag.size
    return np.concatenate([hist, [img.mean(), img.var(), img.min(), img.max()]])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LinearCropClassifier(ClassifierMixin, BaseEstimator):
    """Logistic regression over :func:`extract_features`, fitted by batch
    gradient descent on standardised features.

    Standardisation is folded back into ``coef_``/``intercept_`` after
    fitting so the model is fully described by 21 numbers.
    """

    def __init__(self, learning_rate=0.1, n_epochs=500, l2=1e-4):
        self.learning_rate = learning_rate
        self.n_epochs = n_epochs
        self.l2 = l2

    def _features(self, X):
        return np.stack([extract_features(c) for c in X]) if len(X) else np.zeros((0, N_FEATURES))

    def fit(self, X, y):
        y = np.asarray(y)
        if len(X) != len(y) or len(y) == 0:
            raise InvalidInputError("need one label per crop")
        classes = np.unique(y)
        if not set(classes.tolist()) <= {0, 1}:
            raise InvalidInputError("labels must be 0 (clutter) or 1 (MAV)")
        if len(classes) < 2:
            raise InvalidInputError("training set must contain both classes")
        feats = self._features(X)
        mu = feats.mean(axis=0)
        sigma = feats.std(axis=0)
        sigma[sigma < 1e-12] = 1.0
        z = (feats - mu) / sigma
        t = y.astype(np.float64)
        w = np.zeros(N_FEATURES)
        b = 0.0
        n = len(t)
        self.loss_curve_ = []
        for _ in range(self.n_epochs):
            p = _sigmoid(z @ w + b)
            err = p - t
            w -= self.learning_rate * (z.T @ err / n + self.l2 * w)
            b -= self.learning_rate * err.mean()
        self.coef_ = w / sigma
        self.intercept_ = float(b - np.dot(w, mu / sigma))
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = N_FEATURES
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return self._features(X) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)

    def log_loss(self, X, y):
        p = np.clip(self.predict_proba(X)[:, 1], 1e-15, 1 - 1e-15)
        t = np.asarray(y, dtype=np.float64)
        return float(-np.mean(t * np.log(p) + (1 - t) * np.log(1 - p)))

    def score_crop(self, crop):
        check_is_fitted(self, "coef_")
        return float(_sigmoid(extract_features(crop) @ self.coef_ + self.intercept_))

    def save(self, path):
        check_is_fitted(self, "coef_")
        blob = MODEL_MAGIC + struct.pack("<21d", *self.coef_, self.intercept_)
        Path(path).write_bytes(blob)

    @classmethod
    def load(cls, path):
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise ParseError(path, None, f"cannot read: {exc.strerror}") from None
        if len(data) != len(MODEL_MAGIC) + 21 * 8 or not data.startswith(MODEL_MAGIC):
            raise ParseError(path, None, "not an MGDL1 linear model file")
        vals = struct.unpack("<21d", data[len(MODEL_MAGIC):])
        model = cls()
        model.coef_ = np.array(vals[:N_FEATURES])
        model.intercept_ = vals[N_FEATURES]
        model.classes_ = np.array([0, 1])
        model.n_features_in_ = N_FEATURES
        return model

    def close(self):
        pass


def train_linear_classifier(samples, **params):
    """Fit a :class:`LinearCropClassifier` on ``(crop, label)`` pairs."""
    if not samples:
        raise InvalidInputError("no training samples")
    crops = [_pixels(c) for c, _ in samples]
    labels = [int(lbl) for _, lbl in samples]
    return LinearCropClassifier(**params).fit(crops, labels)


class PassthroughClassifier:
    """Accepts every crop with score 1."""

    def score_crop(self, crop):
        return 1.0

    def close(self):
        pass


# -- built-in detector ----------------------------------------------------

class CentroidDetector:
    """Blob extractor for a local window.

    Subtracts a box-filtered local background, thresholds the absolute
    residual at Otsu's level and reports every 8-connected blob, most
    confident first. Confidence is the blob's mean residual over the
    residual spread outside all blobs, mapped to [0, 1) as
    ``snr / (snr + snr_half)``.
    """

    def __init__(self, background_window=15, min_contrast=8.0, snr_half=3.0, noise_floor=1.0):
        self.background_window = background_window
        self.min_contrast = min_contrast
        self.snr_half = snr_half
        self.noise_floor = noise_floor

    def detect(self, pixels):
        img = np.asarray(pixels, dtype=np.float32)
        h, w = img.shape
        bw = min(self.background_window, w, h)
        bg = cv2.blur(img, (bw, bw), borderType=cv2.BORDER_REFLECT)
        resid = np.abs(img - bg)
        if resid.max() < self.min_contrast:
            return []
        r8 = np.clip(np.rint(resid), 0, 255).astype(np.uint8)
        _, fg = cv2.threshold(r8, 0, 1, cv2.THRESH_BINARY | cv2.THRESH_OTSU)
        n, labels, stats, _ = cv2.connectedComponentsWithStats(fg, connectivity=8)
        if n <= 1:
            return []
        outside = resid[fg == 0]
        noise = max(float(outside.std()) if outside.size else 0.0, self.noise_floor)
        sums = np.bincount(labels.ravel(), weights=resid.ravel(), minlength=n)
        out = []
        for lbl in range(1, n):
            snr = sums[lbl] / stats[lbl, cv2.CC_STAT_AREA] / noise
            x, y, bw_, bh_ = (int(v) for v in stats[lbl, :4])
            out.append((x, y, bw_, bh_, float(snr / (snr + self.snr_half))))
        out.sort(key=lambda d: (-d[4], d[1], d[0]))
        return out

    def close(self):
        pass


# -- external processes ---------------------------------------------------

class _ExternalBackend:
    kind = None

    def __init__(self, command):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise InvalidInputError("empty backend command")
        try:
            self._proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as exc:
            raise BackendError(f"cannot start backend {argv[0]!r}: {exc}") from None
        self._next_id = 0
        self._send(f"MGD/1 {self.kind}\n".encode())
        if self._readline() != "OK":
            self._abort("handshake rejected")

    def _send(self, data):
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            self._abort(f"write failed: {exc}")

    def _readline(self):
        raw = self._proc.stdout.readline()
        if not raw.endswith(b"\n"):
            self._abort("backend closed its output")
        try:
            return raw[:-1].decode("ascii")
        except UnicodeDecodeError:
            self._abort("non-ASCII response")

    def _abort(self, why):
        self.close(kill=True)
        raise BackendError(f"{self.kind} backend: {why}")

    def _request_id(self):
        rid = self._next_id
        self._next_id += 1
        return rid

    def _expect_header(self, line, rid, n_fields):
        parts = line.split(" ")
        if len(parts) != n_fields or parts[0] != self.kind or parts[1] != str(rid):
            self._abort(f"malformed response {line!r}")
        return parts[2:]

    def close(self, kill=False):
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        self._proc = None
        try:
            if kill:
                proc.kill()
            else:
                proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, ValueError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()
        finally:
            for stream in (proc.stdin, proc.stdout):
                try:
                    stream.close()
                except (OSError, ValueError):
                    pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        self.close(kill=True)


class ExternalClassifier(_ExternalBackend):
    kind = "CLS"

    def score_crop(self, crop):
        if self._proc is None:
            raise BackendError("backend is closed")
        px = np.ascontiguousarray(_pixels(crop), dtype=np.uint8)
        if px.shape != (CROP_SIZE, CROP_SIZE):
            raise InvalidInputError(f"classifier crops must be 32x32, got {px.shape}")
        rid = self._request_id()
        self._send(f"CLS {rid} 32 32\n".encode() + px.tobytes())
        (raw,) = self._expect_header(self._readline(), rid, 3)
        try:
            score = float(raw)
        except ValueError:
            self._abort(f"bad score {raw!r}")
        if not 0.0 <= score <= 1.0:
            self._abort(f"score {score} outside [0, 1]")
        return score


class ExternalDetector(_ExternalBackend):
    kind = "DET"

    def detect(self, pixels):
        if self._proc is None:
            raise BackendError("backend is closed")
        px = np.ascontiguousarray(pixels, dtype=np.uint8)
        h, w = px.shape
        rid = self._request_id()
        self._send(f"DET {rid} {w} {h}\n".encode() + px.tobytes())
        (raw_n,) = self._expect_header(self._readline(), rid, 3)
        if not raw_n.isdigit():
            self._abort(f"bad detection count {raw_n!r}")
        out = []
        for _ in range(int(raw_n)):
            parts = self._readline().split(" ")
            try:
                x, y, bw, bh, conf = (float(p) for p in parts)
            except ValueError:
                self._abort(f"malformed detection line {' '.join(parts)!r}")
            if not all(map(math.isfinite, (x, y, bw, bh, conf))) or bw < 0 or bh < 0 \
                    or not 0.0 <= conf <= 1.0:
                self._abort("detection values out of range")
            out.append((x, y, bw, bh, conf))
        return out


# -- stage operations -----------------------------------------------------

def classify_crop(backend, crop):
    """Probability in [0, 1] that a 32x32 crop shows a MAV."""
    px = _pixels(crop)
    if px.shape != (CROP_SIZE, CROP_SIZE):
        raise InvalidInputError(f"classifier crops must be 32x32, got {px.shape}")
    return backend.score_crop(crop)


def detect_crop(backend, crop, offset, conf=0.5, image_size=None):
    """Run a detector on a window and return full-image :class:`Detection` objects.

    Boxes are clipped to the window, shifted by ``offset`` and kept only if
    their confidence is strictly above ``conf``.
    """
    px = _pixels(crop)
    h, w = px.shape
    ox, oy = offset
    if image_size is not None:
        iw, ih = image_size
        if ox < 0 or oy < 0 or ox + w > iw or oy + h > ih:
            raise InvalidInputError("window does not fit inside the image")
    dets = []
    for x, y, bw, bh, c in backend.detect(px):
        if not c > conf:
            continue
        box = BoundingBox(x, y, bw, bh).clamp(w, h)
        if box.w <= 0 or box.h <= 0:
            continue
        dets.append(Detection(box.translate(ox, oy), float(c), Stage.REFINED))
    return dets


def make_classifier(cfg):
    if cfg.lac_backend == "passthrough":
        return PassthroughClassifier()
    if cfg.lac_backend == "linear":
        return LinearCropClassifier.load(cfg.lac_model)
    return ExternalClassifier(cfg.lac_command)


def make_detector(cfg):
    if cfg.lad_backend == "centroid":
        return CentroidDetector()
    return ExternalDetector(cfg.lad_command)
