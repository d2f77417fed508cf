"""Circle arithmetic shared across the package.

All angular differences in event detection, clustering, and chart fitting go
through these helpers so that branch cuts are handled in exactly one place.
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_signed(x):
    """Reduce an angle (or array of angles) to the interval (-pi, pi].

    Uses fmod, which is exact in IEEE arithmetic, so wrapping never loses
    more than the representation error of the input itself.
    """
    if np.ndim(x) == 0:
        y = math.fmod(float(x), TWO_PI)
        if y < 0.0:
            y += TWO_PI
        if y > math.pi:
            y -= TWO_PI
        return y
    y = np.fmod(np.asarray(x, dtype=float), TWO_PI)
    y = np.where(y < 0.0, y + TWO_PI, y)
    return np.where(y > math.pi, y - TWO_PI, y)


def wrap_positive(x):
    """Reduce an angle (or array of angles) to [0, 2*pi)."""
    if np.ndim(x) == 0:
        y = math.fmod(float(x), TWO_PI)
        if y < 0.0:
            y += TWO_PI
        if y >= TWO_PI:
            y -= TWO_PI
        return y
    y = np.fmod(np.asarray(x, dtype=float), TWO_PI)
    y = np.where(y < 0.0, y + TWO_PI, y)
    return np.where(y >= TWO_PI, y - TWO_PI, y)


def wrapped_distance(a, b):
    """Distance on the circle between angles a and b, in [0, pi]."""
    return np.abs(wrap_signed(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
