"""Unfolding shapes into strokes, rasterizing them and blurring the result.

Model space has y pointing up; pixel space has y pointing down:
``x_px = width/2 + scale*x`` and ``y_px = height/2 - scale*y``.  Pixel column
``c`` covers ``[c, c+1)``.  Strokes are inked wherever a supersample point lies
within ``stroke_width/2`` of the geometry; each output pixel is the inked
fraction of its ``supersample**2`` sample points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Optional

import numpy as np
from numba import njit
from scipy.ndimage import correlate1d

from . import geometry
from .grammar import Interval, Mirror, Rot, RotFull, Scale, Shape, Trans, is_point_fiber
from .wreath_process import CIRCLE_POINTS, SEGMENT_POINTS, noise_array_shape


class UnsupportedFiberError(ValueError):
    """A continuous level acts on something other than a single point."""


@dataclass(frozen=True)
class RenderConfig:
    width: int = 64
    height: int = 64
    unit_scale: float = 10.0  # pixels per model unit
    stroke_width: float = 1.5
    supersample: int = 2
    segments: int = SEGMENT_POINTS
    circle_points: int = CIRCLE_POINTS

    def __post_init__(self):
        for name in ("width", "height", "unit_scale", "stroke_width", "supersample"):
            if not getattr(self, name) > 0:
                raise ValueError(f"RenderConfig.{name} must be positive")
        if self.segments < 2 or self.circle_points < 3:
            raise ValueError("need at least 2 segment points and 3 circle points")

    def with_scale(self, unit_scale: float) -> "RenderConfig":
        return replace(self, unit_scale=float(unit_scale))


@dataclass(frozen=True)
class BlurParams:
    w_b: int = 0  # half window, taps = 2*w_b + 1
    sigma_b: float = 1.0

    def __post_init__(self):
        if self.w_b < 0 or not self.sigma_b > 0:
            raise ValueError(f"invalid blur parameters w_b={self.w_b}, sigma_b={self.sigma_b}")


# -- strokes -------------------------------------------------------------------------


class Dot(NamedTuple):
    p: geometry.Point


class Polyline(NamedTuple):
    points: np.ndarray  # (k, 2), k >= 2


class Circle(NamedTuple):
    center: geometry.Point
    radius: float


@dataclass
class StrokeSet:
    """Strokes in model coordinates, stored as arrays."""

    dots: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    polylines: list = field(default_factory=list)
    circles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __len__(self):
        return len(self.dots) + len(self.polylines) + len(self.circles)

    def __iter__(self) -> Iterator:
        for x, y in self.dots:
            yield Dot(geometry.Point(float(x), float(y)))
        for pts in self.polylines:
            yield Polyline(pts)
        for x, y, r in self.circles:
            yield Circle(geometry.Point(float(x), float(y)), float(r))


# -- unfolding ------------------------------------------------------------------------


def _element_stack(level, params: np.ndarray) -> np.ndarray:
    g = level.group
    if isinstance(g, Trans):
        return geometry.translation_stack(g.axis, params)
    if isinstance(g, Rot):
        return geometry.rotation_stack(params)
    if isinstance(g, RotFull):
        return geometry.rotation_stack(params)
    if isinstance(g, Mirror):
        out = np.zeros(params.shape + (3, 3))
        out[..., 0, 0] = out[..., 2, 2] = 1.0
        out[..., 1, 1] = np.where(np.mod(params, 2) == 1, -1.0, 1.0)
        return out
    if isinstance(g, Scale):
        f = float(g.l) ** params
        out = np.zeros(params.shape + (3, 3))
        out[..., 0, 0] = out[..., 1, 1] = f
        out[..., 2, 2] = 1.0
        return out
    raise TypeError(f"unknown group {g!r}")


def _base_params(level) -> np.ndarray:
    vals = np.array(level.occ.indices, dtype=float)
    if isinstance(level.group, Rot):
        return 2.0 * np.pi * np.mod(vals, level.group.n) / level.group.n
    return vals


def unfold(
    shape: Shape,
    noise: Optional[tuple] = None,
    segments: int = SEGMENT_POINTS,
    circle_points: int = CIRCLE_POINTS,
) -> StrokeSet:
    """Unfold a shape from the origin, level by level, into strokes.

    Every occupied element of every level acts on its own copy of the fiber
    built so far; with a noise tree each such application is perturbed by its
    own entry.
    """
    levels = shape.levels
    n = len(levels)
    if noise is not None:
        if len(noise) != n:
            raise ValueError(f"noise tree has {len(noise)} levels, shape has {n}")
        for i, arr in enumerate(noise):
            expected = noise_array_shape(shape, i, segments, circle_points)
            if (arr is None) != (expected is None) or (arr is not None and arr.shape != expected):
                raise ValueError(f"level {i + 1}: noise shape {None if arr is None else arr.shape}, expected {expected}")

    cont = [i for i, l in enumerate(levels) if l.is_continuous]
    for i in cont:
        if not is_point_fiber(levels[:i]):
            raise UnsupportedFiberError(f"level {i + 1}: continuous occupancy over a fiber that is not a single point")
    c = cont[0] if cont else -1

    # transforms of every copy made by the levels above the sweep (or all levels)
    M = np.eye(3)
    for i in range(n - 1, c, -1):
        level = levels[i]
        params = _base_params(level)
        if noise is not None and noise[i] is not None:
            params = params + noise[i]
        M = M[..., None, :, :] @ _element_stack(level, params)
    if c < 0:
        pts = M[..., :2, 2].reshape(-1, 2)
        return StrokeSet(dots=pts.copy())

    M_flat = M.reshape(-1, 3, 3)
    ncopies = M_flat.shape[0]

    # fiber point of each copy, in the sweep level's own frame
    P = np.broadcast_to(np.eye(3), (ncopies, 3, 3))
    for j in range(c - 1, -1, -1):
        level = levels[j]
        params = np.broadcast_to(_base_params(level), (ncopies,)).copy()
        if noise is not None and noise[j] is not None:
            params = params + noise[j].reshape(ncopies)
        P = P @ _element_stack(level, params)
    p = P[:, :2, 2]

    level = levels[c]
    eps = None
    if noise is not None and noise[c] is not None:
        eps = noise[c].reshape(ncopies, -1)

    if isinstance(level.occ, Interval):
        axis = np.array([1.0, 0.0]) if level.group.axis == "X" else np.array([0.0, 1.0])
        perp = np.array([-axis[1], axis[0]])
        k = segments if eps is not None else 2
        t = np.linspace(level.occ.lo, level.occ.hi, k)
        local = p[:, None, :] + t[None, :, None] * axis
        if eps is not None:
            local = local + eps[:, :, None] * perp
        world = geometry.apply_points(M_flat[:, None], local)
        return StrokeSet(polylines=list(world))

    # full continuous rotation: the orbit of the fiber point is a circle
    r = np.hypot(p[:, 0], p[:, 1])
    if eps is None:
        centers = M_flat[:, :2, 2]
        det = np.abs(np.linalg.det(M_flat[:, :2, :2]))
        radii = r * np.sqrt(det)
        zero = radii <= 0
        return StrokeSet(
            dots=centers[zero].copy(),
            circles=np.column_stack((centers[~zero], radii[~zero])),
        )
    phase = np.arctan2(p[:, 1], p[:, 0])
    ang = phase[:, None] + 2.0 * np.pi * np.arange(circle_points) / circle_points
    rad = r[:, None] * (1.0 + eps)
    local = np.stack((rad * np.cos(ang), rad * np.sin(ang)), axis=-1)
    local = np.concatenate((local, local[:, :1]), axis=1)
    world = geometry.apply_points(M_flat[:, None], local)
    zero = r <= 0
    return StrokeSet(dots=M_flat[zero, :2, 2].copy(), polylines=[w for w, z in zip(world, zero) if not z])


# -- rasterization ---------------------------------------------------------------------


def _to_pixels(pts: np.ndarray, cfg: RenderConfig) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    out = np.empty_like(pts)
    out[..., 0] = cfg.width / 2.0 + cfg.unit_scale * pts[..., 0]
    out[..., 1] = cfg.height / 2.0 - cfg.unit_scale * pts[..., 1]
    # absorb rounding noise from trigonometry so ties resolve identically
    return np.round(out, 9)


@njit(cache=True)
def _window(lo, hi, s, n):
    a = max(int(math.ceil(lo * s - 0.5)), 0)
    b = min(int(math.floor(hi * s - 0.5)), n - 1)
    return a, b


@njit(cache=True)
def _draw_dots(ink, pts, r, s):
    H, W = ink.shape
    r2 = r * r
    for k in range(pts.shape[0]):
        x, y = pts[k, 0], pts[k, 1]
        c0, c1 = _window(x - r, x + r, s, W)
        r0, r1 = _window(y - r, y + r, s, H)
        for row in range(r0, r1 + 1):
            py = (row + 0.5) / s - y
            for col in range(c0, c1 + 1):
                px = (col + 0.5) / s - x
                if px * px + py * py <= r2:
                    ink[row, col] = True


@njit(cache=True)
def _draw_segments(ink, segs, r, s):
    H, W = ink.shape
    r2 = r * r
    for k in range(segs.shape[0]):
        ax, ay, bx, by = segs[k, 0], segs[k, 1], segs[k, 2], segs[k, 3]
        c0, c1 = _window(min(ax, bx) - r, max(ax, bx) + r, s, W)
        r0, r1 = _window(min(ay, by) - r, max(ay, by) + r, s, H)
        ux, uy = bx - ax, by - ay
        L2 = ux * ux + uy * uy
        for row in range(r0, r1 + 1):
            ys = (row + 0.5) / s
            py = ys - ay
            for col in range(c0, c1 + 1):
                xs = (col + 0.5) / s
                px = xs - ax
                if L2 == 0.0:
                    d2 = px * px + py * py
                else:
                    proj = px * ux + py * uy
                    if proj <= 0.0:
                        d2 = px * px + py * py
                    elif proj >= L2:
                        d2 = (xs - bx) ** 2 + (ys - by) ** 2
                    else:
                        # the cross product keeps axis-aligned distances exact
                        cross = px * uy - py * ux
                        d2 = cross * cross / L2
                if d2 <= r2:
                    ink[row, col] = True


@njit(cache=True)
def _draw_circles(ink, circ, r, s):
    H, W = ink.shape
    r2 = r * r
    for k in range(circ.shape[0]):
        cx, cy, rad = circ[k, 0], circ[k, 1], circ[k, 2]
        c0, c1 = _window(cx - rad - r, cx + rad + r, s, W)
        r0, r1 = _window(cy - rad - r, cy + rad + r, s, H)
        for row in range(r0, r1 + 1):
            py = (row + 0.5) / s - cy
            for col in range(c0, c1 + 1):
                px = (col + 0.5) / s - cx
                d = math.sqrt(px * px + py * py) - rad
                if d * d <= r2:
                    ink[row, col] = True


def _segments(polylines, cfg: RenderConfig) -> np.ndarray:
    if not polylines:
        return np.zeros((0, 4))
    parts = []
    for pts in polylines:
        px = _to_pixels(pts, cfg)
        parts.append(np.concatenate((px[:-1], px[1:]), axis=1))
    return np.ascontiguousarray(np.concatenate(parts))


def rasterize(strokes: StrokeSet, cfg: RenderConfig) -> np.ndarray:
    """Draw strokes into a (height, width) float image with values in [0, 1]."""
    s = int(cfg.supersample)
    ink = np.zeros((cfg.height * s, cfg.width * s), dtype=np.bool_)
    r = cfg.stroke_width / 2.0
    if len(strokes.dots):
        _draw_dots(ink, np.ascontiguousarray(_to_pixels(strokes.dots, cfg).reshape(-1, 2)), r, s)
    if strokes.polylines:
        _draw_segments(ink, _segments(strokes.polylines, cfg), r, s)
    if len(strokes.circles):
        circ = np.empty((len(strokes.circles), 3))
        circ[:, :2] = _to_pixels(strokes.circles[:, :2], cfg)
        circ[:, 2] = strokes.circles[:, 2] * cfg.unit_scale
        _draw_circles(ink, circ, r, s)
    return ink.reshape(cfg.height, s, cfg.width, s).mean(axis=(1, 3))


def gaussian_kernel(w_b: int, sigma_b: float) -> np.ndarray:
    x = np.arange(-w_b, w_b + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma_b) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, w_b: int, sigma_b: float) -> np.ndarray:
    """Separable truncated Gaussian blur with clamp-to-edge borders."""
    img = np.asarray(img, dtype=float)
    if w_b == 0:
        return img.copy()
    k = gaussian_kernel(w_b, sigma_b)
    out = correlate1d(img, k, axis=0, mode="nearest")
    out = correlate1d(out, k, axis=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def render(
    shape: Shape,
    noise: Optional[tuple],
    blur: Optional[BlurParams],
    cfg: RenderConfig,
) -> np.ndarray:
    img = rasterize(unfold(shape, noise, cfg.segments, cfg.circle_points), cfg)
    if blur is not None:
        img = gaussian_blur(img, blur.w_b, blur.sigma_b)
    return img
