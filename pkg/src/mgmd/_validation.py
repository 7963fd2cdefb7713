"""Input validation helpers shared by the estimators and primitives."""

import numbers

import numpy as np

from .exceptions import InvalidInputError


def check_image(pixels, name="image"):
    """Return ``pixels`` as a 2-D uint8 array, raising on anything else.

    Float input is accepted only when every value is an integer in [0, 255].
    """
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInputError(f"{name} must have positive width and height")
    if arr.dtype == np.uint8:
        return arr
    if arr.dtype == bool:
        raise InvalidInputError(f"{name} must hold intensities, not booleans")
    if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 255:
        raise InvalidInputError(f"{name} values must lie in [0, 255]")
    if np.any(arr != np.round(arr)):
        raise InvalidInputError(f"{name} values must be integral")
    return arr.astype(np.uint8)


def check_same_shape(a, b, what="inputs"):
    if a.shape != b.shape:
        raise InvalidInputError(f"{what} differ in size: {a.shape} vs {b.shape}")


def check_scalar(value, name, *, lo=None, hi=None, integer=False,
                 lo_inclusive=True, hi_inclusive=True):
    """Range-check a scalar parameter and return it converted to int/float."""
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise InvalidInputError(
            f"{name} must be {'an integer' if integer else 'a real number'}, got {value!r}")
    if not integer and not np.isfinite(value):
        raise InvalidInputError(f"{name} must be finite")
    if lo is not None and (value < lo or (value == lo and not lo_inclusive)):
        raise InvalidInputError(f"{name}={value} is below its allowed range")
    if hi is not None and (value > hi or (value == hi and not hi_inclusive)):
        raise InvalidInputError(f"{name}={value} is above its allowed range")
    return int(value) if integer else float(value)


def check_matrix3(m, name="homography"):
    arr = np.asarray(m, dtype=np.float64)
    if arr.shape != (3, 3):
        raise InvalidInputError(f"{name} must be 3x3, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise InvalidInputError(f"cannot build a random generator from {seed!r}")
