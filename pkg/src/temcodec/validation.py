"""Small input-validation helpers shared by the estimators and free functions."""

import math

import numpy as np

from .exceptions import InvalidArgumentError


def check_positive(value, name, allow_zero=False):
    """Return ``value`` as a float, raising if it is not (strictly) positive."""
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name} must be a real number, got {value!r}") from None
    if not math.isfinite(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidArgumentError(f"{name} must be {bound}, got {value!r}")
    return value


def check_interval(lo, hi, name="interval", strict=True):
    lo, hi = float(lo), float(hi)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidArgumentError(f"{name} endpoints must be finite, got ({lo!r}, {hi!r})")
    if lo > hi or (strict and lo == hi):
        raise InvalidArgumentError(f"{name} must satisfy lo {'<' if strict else '<='} hi, got ({lo!r}, {hi!r})")
    return lo, hi


def check_bits(bits):
    if isinstance(bits, bool) or int(bits) != bits or bits < 1:
        raise InvalidArgumentError(f"bit budget must be an integer >= 1, got {bits!r}")
    if bits > 16:
        raise InvalidArgumentError(f"bit budget above 16 is not supported, got {bits!r}")
    return int(bits)


def check_1d(x, name="x", allow_empty=True):
    """Coerce ``x`` to a 1-D float64 array of finite values."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    elif arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise InvalidArgumentError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def check_increasing(times, name="times"):
    times = check_1d(times, name)
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise InvalidArgumentError(f"{name} must be strictly increasing")
    return times
