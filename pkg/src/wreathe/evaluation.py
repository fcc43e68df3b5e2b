"""Recoverability metrics, shape equivalence and prior-sample datasets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import priors
from .grammar import UNIT_INTERVAL, Discrete, Full, Level, Mirror, Rot, RotFull, Shape, Trans, canonicalize, is_point_fiber
from .likelihood import binarize
from .priors import BlurParams, PriorConfig
from .renderer import RenderConfig, render, unfold
from .wreath_process import sample_hyper, sample_noise

# resolution of the render-identity clause of `equivalent`
EQUIV_SIZE = 512
EQUIV_LAMBDA = 50.0
EQUIV_STROKE = 1.0
# thicker strokes make IoU tolerant to sub-pixel differences
IOU_STROKE = 3.0


def _binary_render(shape: Shape, cfg: RenderConfig) -> Optional[np.ndarray]:
    try:
        img = render(shape, None, None, cfg)
    except ValueError:
        return None
    return img >= 0.5


def _equiv_render(shape: Shape) -> Optional[np.ndarray]:
    cfg = RenderConfig(EQUIV_SIZE, EQUIV_SIZE, EQUIV_LAMBDA, EQUIV_STROKE)
    return _binary_render(shape, cfg)


def _drawing_key(levels) -> frozenset:
    """The noiseless strokes of a level prefix as a set, rounded to 1e-9."""
    strokes = unfold(Shape(tuple(levels)))
    key = set()
    for x, y in np.round(strokes.dots, 9) + 0.0:
        key.add(("dot", x, y))
    for pts in strokes.polylines:
        ends = sorted(map(tuple, np.round(pts[[0, -1]], 9) + 0.0))
        key.add(("seg",) + tuple(ends))
    for x, y, r in np.round(strokes.circles, 9) + 0.0:
        key.add(("circle", x, y, r))
    return frozenset(key)


def _drawable(levels) -> bool:
    return all(not l.is_continuous or is_point_fiber(levels[:k]) for k, l in enumerate(levels))


def drop_idle_levels(shape: Shape) -> Shape:
    """Remove levels whose every occupied element maps the drawing below onto itself.

    Such a level only stacks copies on top of one another, so the noiseless
    drawing is unchanged without it (a full mirror of a segment lying on the
    mirror axis, a rotation of a dot at the origin)."""
    levels = list(canonicalize(shape).levels)
    if not _drawable(levels):
        return Shape(tuple(levels))  # nothing to compare
    i = 0
    while i < len(levels):
        rest = levels[:i] + levels[i + 1:]
        if _drawable(rest) and _drawing_key(levels[:i]) == _drawing_key(levels[: i + 1]):
            levels = list(canonicalize(Shape(tuple(rest))).levels)
            i = 0
        else:
            i += 1
    return Shape(tuple(levels))


def equivalent(a: Shape, b: Shape) -> bool:
    """Same reduced form, or same reduced level count and identical,
    non-blank high-resolution binary renders.

    The reduced form is the canonical form without idle levels.  Blank
    renders (for example sub-pixel dots) carry no evidence either way, so
    they never make two different forms equivalent."""
    ca, cb = drop_idle_levels(a), drop_idle_levels(b)
    if ca == cb:
        return True
    if len(ca) != len(cb):
        return False
    ra, rb = _equiv_render(a), _equiv_render(b)
    if ra is None or rb is None or not ra.any():
        return False
    return bool(np.array_equal(ra, rb))


def group_sequence(shape: Shape) -> tuple:
    return tuple(level.group for level in drop_idle_levels(shape).levels)


def fill_occupancy(shape: Shape) -> Shape:
    """Every finite group fully occupied, translations swept over the unit
    interval, continuous rotations over the whole circle."""
    out = []
    for level in shape.levels:
        g = level.group
        if isinstance(g, Rot):
            level = Level(g, Discrete(range(g.n)))
        elif isinstance(g, Mirror):
            level = Level(g, Discrete((0, 1)))
        elif isinstance(g, Trans):
            level = Level(g, UNIT_INTERVAL)
        elif isinstance(g, RotFull):
            level = Level(g, Full())
        out.append(level)
    return Shape(tuple(out))


def complete_copies(shape: Shape) -> Shape:
    """Switch on every copy of the rotation and mirror levels, keeping
    translations as they are so the result stays drawable.  A continuous
    rotation becomes the full circle only over a single point."""
    out = []
    for k, level in enumerate(shape.levels):
        g = level.group
        if isinstance(g, Rot):
            level = Level(g, Discrete(range(g.n)))
        elif isinstance(g, Mirror):
            level = Level(g, Discrete((0, 1)))
        elif isinstance(g, RotFull) and is_point_fiber(out):
            level = Level(g, Full())
        out.append(level)
    return Shape(tuple(out))


def equivalent_up_to_occupancy(a: Shape, b: Shape) -> bool:
    return equivalent(a, b) or equivalent(fill_occupancy(a), fill_occupancy(b))


def render_iou(
    a: Shape,
    b: Shape,
    lam_a: float = 10.0,
    lam_b: Optional[float] = None,
    width: int = 64,
    height: int = 64,
    stroke_width: float = IOU_STROKE,
) -> float:
    """Intersection over union of noiseless binarized renders (1.0 if both blank)."""
    lam_b = lam_a if lam_b is None else lam_b
    base = RenderConfig(width, height, lam_a, stroke_width)
    ra = _binary_render(a, base)
    rb = _binary_render(b, base.with_scale(lam_b))
    if ra is None or rb is None:
        return 0.0
    union = np.count_nonzero(ra | rb)
    if union == 0:
        return 1.0
    return np.count_nonzero(ra & rb) / union


@dataclass(frozen=True)
class EvalResult:
    full_recoverability: bool
    up_to_occupancy: bool
    render_iou: float


def recoverability(
    inferred: Shape,
    truth: Shape,
    lam_inferred: float = 10.0,
    lam_truth: Optional[float] = None,
    width: int = 64,
    height: int = 64,
) -> EvalResult:
    full = equivalent(inferred, truth)
    up = full or equivalent(fill_occupancy(inferred), fill_occupancy(truth))
    iou = render_iou(inferred, truth, lam_inferred, lam_truth, width, height)
    return EvalResult(full, up, float(iou))


@dataclass
class BatchSummary:
    n: int
    full_rate: float
    up_to_occupancy_rate: float
    mean_iou: float
    items: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"items={self.n}",
            f"full_recoverability={self.full_rate:.6f}",
            f"up_to_occupancy={self.up_to_occupancy_rate:.6f}",
            f"mean_render_iou={self.mean_iou:.6f}",
        ]
        for k, r in enumerate(self.items):
            lines.append(
                f"item={k}\tfull={int(r.full_recoverability)}\tup_to_occupancy={int(r.up_to_occupancy)}"
                f"\trender_iou={r.render_iou:.6f}"
            )
        return "\n".join(lines) + "\n"


def batch_evaluate(results: Sequence, width: int = 64, height: int = 64) -> BatchSummary:
    """Rates over (inferred, truth) pairs; pairs may carry (lam_inferred, lam_truth)
    as extra elements, and precomputed EvalResult objects are accepted as is."""
    items = []
    for r in results:
        if isinstance(r, EvalResult):
            items.append(r)
            continue
        inferred, truth, *lams = r
        items.append(recoverability(inferred, truth, *lams, width=width, height=height))
    if not items:
        raise ValueError("cannot evaluate an empty batch")
    n = len(items)
    return BatchSummary(
        n,
        sum(r.full_recoverability for r in items) / n,
        sum(r.up_to_occupancy for r in items) / n,
        float(np.mean([r.render_iou for r in items])),
        items,
    )


# -- datasets ----------------------------------------------------------------------


@dataclass
class DatasetItem:
    shape: Shape
    image: np.ndarray
    lam: float
    blur: BlurParams
    hyper: Optional[tuple] = None
    noise: Optional[tuple] = None


def usable_observation(img: np.ndarray, threshold: float = 0.5) -> bool:
    """Has ink after binarization and would not be taken for a dark-on-light scan."""
    raw = img >= threshold
    return bool(raw.any()) and bool(np.array_equal(binarize(img, threshold), raw.astype(np.uint8)))


def fits_canvas(shape: Shape, cfg: RenderConfig, margin: int = 2) -> bool:
    """The noiseless drawing lies inside the canvas, ``margin`` pixels clear of the edge."""
    pad = max(cfg.width, cfg.height)
    big = replace(cfg, width=cfg.width + 2 * pad, height=cfg.height + 2 * pad)
    ink = _binary_render(shape, big)
    if ink is None or not ink.any():
        return False
    rows = np.flatnonzero(ink.any(axis=1))
    cols = np.flatnonzero(ink.any(axis=0))
    return bool(
        rows[0] >= pad + margin
        and rows[-1] < pad + cfg.height - margin
        and cols[0] >= pad + margin
        and cols[-1] < pad + cfg.width - margin
    )


def levels_visible(shape: Shape, cfg: RenderConfig) -> bool:
    """Dropping any single level of the reduced form changes the noiseless render."""
    shape = drop_idle_levels(shape)
    full = _binary_render(shape, cfg)
    if full is None:
        return False
    for i in range(len(shape)):
        rest = Shape(shape.levels[:i] + shape.levels[i + 1:])
        other = _binary_render(rest, cfg)
        if other is not None and np.array_equal(full, other):
            return False
    return True


def make_dataset(
    n: int,
    cfg: PriorConfig = PriorConfig(),
    seed: int = 0,
    render_cfg: RenderConfig = RenderConfig(),
    use_noise: bool = True,
    max_tries: int = 1000,
    identifiable: bool = False,
) -> list:
    """Prior samples with noisy, blurred renders; deterministic per seed.

    Draws whose render is blank, or would be inverted by the polarity check,
    are redrawn.  With ``identifiable`` so are draws whose noiseless drawing
    leaves the canvas or has a level that changes nothing on it."""
    if n < 1:
        raise ValueError("dataset size must be positive")
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(n):
        for _ in range(max_tries):
            shape = priors.sample_shape_prior(cfg, rng)
            hyper = noise = None
            if use_noise:
                hyper = sample_hyper(shape, rng)
                noise = sample_noise(shape, hyper, rng, render_cfg.segments, render_cfg.circle_points)
            blur = priors.sample_blur(cfg, rng)
            lam = priors.sample_lambda(cfg, rng)
            if identifiable:
                scaled = render_cfg.with_scale(lam)
                if not (fits_canvas(shape, scaled) and levels_visible(shape, scaled)):
                    continue
            img = render(shape, noise, blur, render_cfg.with_scale(lam))
            if usable_observation(img):
                items.append(DatasetItem(shape, img, lam, blur, hyper, noise))
                break
        else:
            raise priors.PriorSamplingError(f"no usable render after {max_tries} draws")
    return items
