"""Homogeneous 2D affine transforms for the translation, rotation, mirror and
scale groups.

Matrices are dense 3x3 with the last row fixed to (0, 0, 1).  Rotations use
the row convention ``[[cos, sin], [-sin, cos]]`` so that a positive angle turns
(1, 0) into (cos t, -sin t).
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class InvalidGroupError(ValueError):
    """Raised when a group parameter lies outside its domain."""


class Point(NamedTuple):
    x: float
    y: float


class Transform:
    __slots__ = ("m",)

    def __init__(self, m):
        m = np.array(m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        m[2] = (0.0, 0.0, 1.0)
        self.m = m

    def __matmul__(self, other: "Transform") -> "Transform":
        return compose(self, other)

    def __eq__(self, other):
        if not isinstance(other, Transform):
            return NotImplemented
        return bool(np.array_equal(self.m, other.m))

    def __hash__(self):
        return hash(self.m.tobytes())

    def __repr__(self):
        rows = "; ".join(" ".join(f"{v:.6g}" for v in row) for row in self.m[:2])
        return f"Transform([{rows}])"

    def allclose(self, other: "Transform", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.m, other.m, rtol=0.0, atol=atol))


def identity() -> Transform:
    return Transform(np.eye(3))


def translation(axis: str, t: float) -> Transform:
    if not math.isfinite(t):
        raise InvalidGroupError(f"translation amount must be finite, got {t}")
    m = np.eye(3)
    if axis == "X":
        m[0, 2] = t
    elif axis == "Y":
        m[1, 2] = t
    else:
        raise InvalidGroupError(f"unknown axis {axis!r}")
    return Transform(m)


def rotation_continuous(theta: float) -> Transform:
    if not math.isfinite(theta):
        raise InvalidGroupError(f"rotation angle must be finite, got {theta}")
    c, s = math.cos(theta), math.sin(theta)
    return Transform([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation(n: int, k: int) -> Transform:
    """Element k of the n-fold rotation group, angle 2*pi*k/n."""
    if n < 2:
        raise InvalidGroupError(f"rotation order must be >= 2, got {n}")
    return rotation_continuous(2.0 * math.pi * (k % n) / n)


def mirror(k: int, axis: str = "X") -> Transform:
    """Reflection about the X axis (negates y) for odd k; axis="Y" negates x."""
    m = np.eye(3)
    if k % 2:
        if axis == "X":
            m[1, 1] = -1.0
        elif axis == "Y":
            m[0, 0] = -1.0
        else:
            raise InvalidGroupError(f"unknown axis {axis!r}")
    return Transform(m)


def scale(l: float, k: int) -> Transform:
    if not l > 0:
        raise InvalidGroupError(f"scale base must be positive, got {l}")
    f = float(l) ** k
    return Transform([[f, 0.0, 0.0], [0.0, f, 0.0], [0.0, 0.0, 1.0]])


def compose(a: Transform, b: Transform) -> Transform:
    """The transform that applies ``b`` first, then ``a``."""
    return Transform(a.m @ b.m)


def apply(t: Transform, p) -> Point:
    x, y = p
    m = t.m
    return Point(m[0, 0] * x + m[0, 1] * y + m[0, 2], m[1, 0] * x + m[1, 1] * y + m[1, 2])


def apply_points(t: Transform | np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply a transform (or a broadcastable stack of 3x3 matrices) to an
    (..., 2) array of points."""
    m = t.m if isinstance(t, Transform) else t
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    return np.stack(
        (
            m[..., 0, 0] * x + m[..., 0, 1] * y + m[..., 0, 2],
            m[..., 1, 0] * x + m[..., 1, 1] * y + m[..., 1, 2],
        ),
        axis=-1,
    )


# Batched element constructors used by the renderer.  Each returns an array of
# shape params.shape + (3, 3).


def translation_stack(axis: str, t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (3, 3))
    out[..., 0, 0] = out[..., 1, 1] = out[..., 2, 2] = 1.0
    out[..., 0 if axis == "X" else 1, 2] = t
    return out


def rotation_stack(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = s
    out[..., 1, 0] = -s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out
