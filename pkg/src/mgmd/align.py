"""Frame-to-frame alignment: grid keypoints, pyramidal Lucas-Kanade, RANSAC homography.

Homographies map *source* frame coordinates into *target* frame coordinates.
Points are ``(x, y)`` with the origin at the top-left pixel's corner, so
pixel ``(i, j)`` has its centre at ``(j + 0.5, i + 0.5)`` for grids but is
addressed as integer ``(j, i)`` when sampling.
"""

import math
from dataclasses import dataclass

import cv2
import numpy as np

from ._validation import check_matrix3, check_random_state, check_same_shape, check_scalar
from .exceptions import EstimationError, InvalidInputError
from .imgproc import BinaryMask, BoundingBox, Frame

__all__ = [
    "Homography", "PointMatch", "sample_grid", "lk_track", "lk_track_points",
    "estimate_homography", "find_homography", "warp_perspective", "warp_with_validity",
    "compose", "invert", "transform_box", "SINGULAR_DET",
]

SINGULAR_DET = 1e-10


class Homography:
    """A 3x3 projective transform, normalised so ``m[2, 2] == 1`` when possible."""

    __slots__ = ("m",)

    def __init__(self, m):
        arr = check_matrix3(m)
        if abs(arr[2, 2]) > 1e-12:
            arr = arr / arr[2, 2]
        if abs(np.linalg.det(arr)) < SINGULAR_DET:
            raise InvalidInputError("homography is singular")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "m", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Homography is immutable")

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx, dy):
        return cls([[1, 0, dx], [0, 1, dy], [0, 0, 1]])

    @classmethod
    def similarity(cls, scale=1.0, angle_deg=0.0, tx=0.0, ty=0.0, center=(0.0, 0.0)):
        """Rotation and scaling about ``center`` followed by a translation."""
        a = math.radians(angle_deg)
        c, s = scale * math.cos(a), scale * math.sin(a)
        cx, cy = center
        return cls([[c, -s, cx - c * cx + s * cy + tx],
                    [s, c, cy - s * cx - c * cy + ty],
                    [0, 0, 1]])

    def apply(self, points):
        """Map an ``(N, 2)`` array of points."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        q = pts @ self.m[:, :2].T + self.m[:, 2]
        return q[:, :2] / q[:, 2:3]

    def __matmul__(self, other):
        return compose(self, other)

    def __eq__(self, other):
        if not isinstance(other, Homography):
            return NotImplemented
        return np.array_equal(self.m, other.m)

    __hash__ = None

    def __repr__(self):
        return f"Homography({np.array2string(self.m, precision=4, suppress_small=True)})"


def compose(a, b):
    """Apply ``b`` first, then ``a``."""
    return Homography(a.m @ b.m)


def invert(h):
    return Homography(np.linalg.inv(h.m))


def transform_box(h, box):
    """Axis-aligned hull of ``box``'s corners mapped through ``h``."""
    pts = h.apply(box.corners())
    x1, y1 = pts.min(axis=0)
    x2, y2 = pts.max(axis=0)
    return BoundingBox(float(x1), float(y1), float(x2 - x1), float(y2 - y1))


@dataclass(frozen=True)
class PointMatch:
    src: tuple
    dst: tuple
    tracked: bool


# -- keypoints and optical flow -------------------------------------------

def sample_grid(width, height, cols=30, rows=20):
    """Centres of a ``cols`` x ``rows`` uniform grid of cells, row-major, as (N, 2)."""
    cols = check_scalar(cols, "cols", lo=2, integer=True)
    rows = check_scalar(rows, "rows", lo=2, integer=True)
    if width < cols or height < rows:
        raise InvalidInputError(f"a {cols}x{rows} grid needs at least {cols}x{rows} pixels")
    xs = (np.arange(cols) + 0.5) * (width / cols)
    ys = (np.arange(rows) + 0.5) * (height / rows)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def _pyramid(img, levels):
    pyr = [img.astype(np.float32)]
    for _ in range(levels - 1):
        pyr.append(cv2.pyrDown(pyr[-1]))
    return pyr


def _gradients(img):
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = (img[:, 2:] - img[:, :-2]) * 0.5
    gy[1:-1, :] = (img[2:, :] - img[:-2, :]) * 0.5
    return gx, gy


def _sample(img, xs, ys):
    """Bilinear lookup with edge replication; xs/ys of any matching shape."""
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 2) if w > 1 else np.zeros(xs.shape, np.intp)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 2) if h > 1 else np.zeros(ys.shape, np.intp)
    fx = xs - x0
    fy = ys - y0
    flat = img.ravel()
    i00 = y0 * w + x0
    x1 = np.minimum(1, w - 1)
    y1 = w if h > 1 else 0
    v00 = flat[i00]
    v01 = flat[i00 + x1]
    v10 = flat[i00 + y1]
    v11 = flat[i00 + y1 + x1]
    return (v00 * (1 - fx) + v01 * fx) * (1 - fy) + (v10 * (1 - fx) + v11 * fx) * fy


def _lk_numpy(prev, cur, pts, levels, win, max_iter, eps, min_eig):
    half = win // 2
    oy, ox = np.mgrid[-half:half + 1, -half:half + 1]
    ox = ox.ravel().astype(np.float64)
    oy = oy.ravel().astype(np.float64)
    n = len(pts)
    ok = np.ones(n, dtype=bool)
    guess = np.zeros((n, 2))
    p_prev = _pyramid(prev, levels)
    p_cur = _pyramid(cur, levels)
    for lvl in range(levels - 1, -1, -1):
        img_p, img_c = p_prev[lvl], p_cur[lvl]
        gx_img, gy_img = _gradients(img_p)
        scale = 0.5 ** lvl
        # Pixel-centre convention: sample coordinates are point - 0.5.
        base = pts * scale - 0.5
        bx = base[:, :1] + ox
        by = base[:, 1:] + oy
        tmpl = _sample(img_p, bx, by)
        ix = _sample(gx_img, bx, by)
        iy = _sample(gy_img, bx, by)
        gxx = (ix * ix).sum(1)
        gxy = (ix * iy).sum(1)
        gyy = (iy * iy).sum(1)
        tr = gxx + gyy
        det = gxx * gyy - gxy * gxy
        lam_min = 0.5 * (tr - np.sqrt(np.maximum(tr * tr - 4 * det, 0.0)))
        ok &= lam_min / (win * win) >= min_eig
        inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        v = np.zeros((n, 2))
        active = ok.copy()
        for _ in range(max_iter):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            dx = guess[idx, 0] + v[idx, 0]
            dy = guess[idx, 1] + v[idx, 1]
            warped = _sample(img_c, bx[idx] + dx[:, None], by[idx] + dy[:, None])
            diff = tmpl[idx] - warped
            bx_ = (diff * ix[idx]).sum(1)
            by_ = (diff * iy[idx]).sum(1)
            ex = (gyy[idx] * bx_ - gxy[idx] * by_) * inv_det[idx]
            ey = (gxx[idx] * by_ - gxy[idx] * bx_) * inv_det[idx]
            v[idx, 0] += ex
            v[idx, 1] += ey
            done = ex * ex + ey * ey < eps * eps
            active[idx[done]] = False
        if lvl > 0:
            guess = 2.0 * (guess + v)
        else:
            guess = guess + v
    return pts + guess, ok


def lk_track_points(prev, cur, points, *, levels=3, window=21, max_iter=30, eps=0.01,
                    min_eig=1e-3, method="numpy"):
    """Track ``points`` (N, 2) from ``prev`` into ``cur``.

    Returns ``(dst, status)``. ``method="opencv"`` runs the same algorithm
    through ``cv2.calcOpticalFlowPyrLK``; ``"numpy"`` is the in-house
    implementation.
    """
    check_same_shape(prev.pixels, cur.pixels, "frames")
    levels = check_scalar(levels, "levels", lo=1, integer=True)
    window = check_scalar(window, "window", lo=3, integer=True)
    if window % 2 == 0:
        raise InvalidInputError("window must be odd")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return pts.copy(), np.zeros(0, dtype=bool)
    w, h = prev.width, prev.height
    if method == "numpy":
        dst, ok = _lk_numpy(prev.pixels, cur.pixels, pts, levels, window, max_iter, eps, min_eig)
    elif method == "opencv":
        # OpenCV uses integer-pixel-centred coordinates.
        p0 = (pts - 0.5).astype(np.float32).reshape(-1, 1, 2)
        p1, st, _ = cv2.calcOpticalFlowPyrLK(
            prev.pixels, cur.pixels, p0, None, winSize=(window, window), maxLevel=levels - 1,
            criteria=(cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT, max_iter, eps),
            minEigThreshold=min_eig / 64.0)
        dst = p1.reshape(-1, 2).astype(np.float64) + 0.5
        ok = st.ravel().astype(bool)
    else:
        raise InvalidInputError(f"unknown LK method {method!r}")
    ok &= np.all(np.isfinite(dst), axis=1)
    ok &= (dst[:, 0] >= 0) & (dst[:, 0] <= w) & (dst[:, 1] >= 0) & (dst[:, 1] <= h)
    return dst, ok


def lk_track(prev, cur, points, **kwargs):
    """Like :func:`lk_track_points` but returns a list of :class:`PointMatch`."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    dst, ok = lk_track_points(prev, cur, pts, **kwargs)
    return [PointMatch((float(s[0]), float(s[1])), (float(d[0]), float(d[1])), bool(t))
            for s, d, t in zip(pts, dst, ok)]


# -- RANSAC homography ----------------------------------------------------

def _normalizer(pts):
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / d if d > 1e-12 else 1.0
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _dlt(src, dst):
    """Normalised direct linear transform; None when degenerate."""
    ts, td = _normalizer(src), _normalizer(dst)
    a = src * ts[0, 0] + ts[:2, 2]
    b = dst * td[0, 0] + td[:2, 2]
    n = len(a)
    x, y, u, v = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    one, zero = np.ones(n), np.zeros(n)
    # A trailing zero row keeps vt square when n == 4 (8 equations).
    rows = np.zeros((max(2 * n, 9), 9))
    rows[0:2 * n:2] = np.column_stack([x, y, one, zero, zero, zero, -u * x, -u * y, -u])
    rows[1:2 * n:2] = np.column_stack([zero, zero, zero, x, y, one, -v * x, -v * y, -v])
    _, sv, vt = np.linalg.svd(rows, full_matrices=False)
    if n == 4 and sv[7] < 1e-9 * sv[0]:
        return None
    hn = vt[-1].reshape(3, 3)
    m = np.linalg.inv(td) @ hn @ ts
    if abs(m[2, 2]) < 1e-12:
        return None
    m = m / m[2, 2]
    if abs(np.linalg.det(m)) < SINGULAR_DET:
        return None
    return m


def _reproj_err(m, src, dst):
    q = src @ m[:, :2].T + m[:, 2]
    w = q[:, 2]
    bad = np.abs(w) < 1e-12
    w = np.where(bad, 1.0, w)
    err = np.hypot(q[:, 0] / w - dst[:, 0], q[:, 1] / w - dst[:, 1])
    err[bad] = np.inf
    return err


def _collinear(p, tol=1e-6):
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        e1 = p[j] - p[i]
        e2 = p[k] - p[i]
        area = abs(e1[0] * e2[1] - e1[1] * e2[0])
        scale = max(np.dot(e1, e1), np.dot(e2, e2), 1e-12)
        if area < tol * scale:
            return True
    return False


def find_homography(src, dst, *, threshold=3.0, confidence=0.995, max_iters=2000,
                    random_state=None):
    """RANSAC homography from ``src`` (N, 2) to ``dst`` (N, 2).

    Returns ``(Homography, inlier_flags)``. Raises :class:`EstimationError`
    with fewer than four correspondences or no model with four inliers.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if src.shape != dst.shape:
        raise InvalidInputError("src and dst must pair up")
    n = len(src)
    if n < 4:
        raise EstimationError(f"need at least 4 correspondences, got {n}")
    rng = check_random_state(random_state)

    best_count, best_cost, best_mask = 0, np.inf, None
    needed, it = max_iters, 0
    thr2 = threshold * threshold
    while it < min(max_iters, needed):
        it += 1
        idx = rng.choice(n, 4, replace=False)
        if _collinear(src[idx]) or _collinear(dst[idx]):
            continue
        m = _dlt(src[idx], dst[idx])
        if m is None:
            continue
        err = _reproj_err(m, src, dst)
        mask = err < threshold
        count = int(mask.sum())
        # MSAC-style tie break among equal inlier counts.
        cost = float(np.minimum(err * err, thr2).sum())
        if count > best_count or (count == best_count and cost < best_cost):
            best_count, best_cost, best_mask = count, cost, mask
            ratio = count / n
            if ratio >= 1.0:
                needed = 0
            elif ratio > 0.0:
                denom = math.log1p(-ratio ** 4)
                if denom < 0.0:
                    needed = math.ceil(math.log(1.0 - confidence) / denom)
    if best_mask is None or best_count < 4:
        raise EstimationError("no model reached 4 inliers")

    mask = best_mask
    m = None
    for _ in range(5):
        refit = _dlt(src[mask], dst[mask])
        if refit is None:
            break
        m = refit
        new_mask = _reproj_err(m, src, dst) < threshold
        if new_mask.sum() < 4 or np.array_equal(new_mask, mask):
            break
        mask = new_mask
    if m is None:
        raise EstimationError("inlier set is degenerate")
    return Homography(m), mask


def estimate_homography(matches, **kwargs):
    """RANSAC homography over the tracked entries of a list of :class:`PointMatch`.

    The returned inlier flags line up with ``matches``; untracked entries
    are always ``False``.
    """
    tracked = np.array([pm.tracked for pm in matches], dtype=bool)
    if tracked.sum() < 4:
        raise EstimationError(f"need at least 4 tracked matches, got {int(tracked.sum())}")
    src = np.array([pm.src for pm in matches], dtype=np.float64)[tracked]
    dst = np.array([pm.dst for pm in matches], dtype=np.float64)[tracked]
    h, inl = find_homography(src, dst, **kwargs)
    flags = np.zeros(len(matches), dtype=bool)
    flags[tracked] = inl
    return h, flags


# -- warping --------------------------------------------------------------

def _cv_matrix(h):
    # Shift between the corner-origin convention used here and OpenCV's
    # pixel-centre convention: p_cv = p - 0.5.
    t = np.array([[1, 0, 0.5], [0, 1, 0.5], [0, 0, 1.0]])
    ti = np.array([[1, 0, -0.5], [0, 1, -0.5], [0, 0, 1.0]])
    return ti @ h.m @ t


def warp_with_validity(f, h):
    """Resample ``f`` into the target frame of ``h``.

    Output pixel ``p`` takes the bilinear sample of ``f`` at ``h^-1 p``.
    Returns ``(frame, valid)`` where ``valid`` marks pixels whose source
    lies inside ``f``; invalid pixels are 0.
    """
    if abs(np.linalg.det(h.m)) < SINGULAR_DET:
        raise InvalidInputError("cannot warp by a singular homography")
    if np.array_equal(h.m, np.eye(3)):
        return f, BinaryMask(np.ones(f.shape, dtype=bool))
    m = _cv_matrix(h)
    size = (f.width, f.height)
    # Valid means the source point lies in [0, W) x [0, H). A nearest warp of
    # a ones plane decides that exactly; replicated borders keep the bilinear
    # taps of the outermost half pixel from mixing in black.
    out = cv2.warpPerspective(f.pixels, m, size, flags=cv2.INTER_LINEAR,
                              borderMode=cv2.BORDER_REPLICATE)
    ones = np.ones(f.shape, dtype=np.uint8)
    valid = cv2.warpPerspective(ones, m, size, flags=cv2.INTER_NEAREST,
                                borderMode=cv2.BORDER_CONSTANT, borderValue=0).astype(bool)
    out[~valid] = 0
    return Frame._adopt(out, f.index), BinaryMask._adopt(valid)


def warp_perspective(f, h):
    return warp_with_validity(f, h)[0]
