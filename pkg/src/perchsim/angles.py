"""Angle helpers in degrees.

All yaw values at module boundaries live in the half-open interval (-180, 180].
"""

from __future__ import annotations

import math


def wrap_deg(angle: float) -> float:
    """Wrap ``angle`` into (-180, 180]."""
    a = math.fmod(angle, 360.0)
    if a <= -180.0:
        a += 360.0
    elif a > 180.0:
        a -= 360.0
    return a


def angle_diff_deg(a: float, b: float) -> float:
    """Signed shortest-arc difference ``a - b`` in (-180, 180]."""
    return wrap_deg(a - b)


def interp_deg(start: float, end: float, frac: float) -> float:
    """Move ``frac`` of the way from ``start`` to ``end`` along the shortest arc."""
    return wrap_deg(start + frac * angle_diff_deg(end, start))
