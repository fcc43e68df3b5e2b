"""The stochastic wreath process: per-copy noise aligned with a shape's
generative structure.

A noise tree holds one array per level.  The array for level ``i`` has one
axis per level ``n, n-1, ..., i`` (outermost first), each as long as that
level's occupancy, so every application of every occupied element of level
``i`` in every copy made by the levels above gets its own perturbation.  A
continuous sweep contributes an axis of length one and its entry is a vector
of control-point offsets (``segments`` for a line, ``circle_points`` for a
circle).  Mirror and scale levels carry no noise (``None``).

Perturbations are offsets along the translation axis (model units) for
translations and angle offsets (radians) for rotations.  Segment control
points are pushed perpendicular to the segment by Normal(0, sigma/sqrt(K))
draws; circle control points are pushed radially by ``radius * eps`` with
``eps`` von Mises distributed.
"""

from __future__ import annotations

import math

import numpy as np

from .grammar import Interval, Full, Rot, RotFull, Shape, Trans

SEGMENT_POINTS = 8
CIRCLE_POINTS = 32
WRAPPED_NORMAL_KAPPA = 700.0
MIN_SIGMA = 1e-12

_LOG_2PI = math.log(2.0 * math.pi)
_HALF_LOG_2PI = 0.5 * _LOG_2PI


class ShapeMismatchError(ValueError):
    """Noise tree or hyperparameters do not fit the shape."""


# -- Bessel function of order zero ---------------------------------------------

_SERIES_LIMIT = 15.0


def _i0_series(x: float) -> float:
    q = 0.25 * x * x
    term = total = 1.0
    m = 0
    while True:
        m += 1
        term *= q / (m * m)
        total += term
        if term < 1e-17 * total:
            return total


def _i0e_asymptotic(x: float) -> float:
    # e^-x I0(x) ~ (2 pi x)^-1/2 sum_k ((2k-1)!!)^2 / (k! (8x)^k)
    term = total = 1.0
    k = 0
    while True:
        k += 1
        nxt = term * (2 * k - 1) ** 2 / (k * 8.0 * x)
        if nxt > term or nxt < 1e-17 * total:
            break
        term = nxt
        total += term
    return total / math.sqrt(2.0 * math.pi * x)


def bessel_i0(x: float) -> float:
    """Modified Bessel function of the first kind, order zero."""
    x = abs(float(x))
    if x < _SERIES_LIMIT:
        return _i0_series(x)
    if x > 700.0:
        return math.inf
    return math.exp(x) * _i0e_asymptotic(x)


def bessel_i0e(x: float) -> float:
    """Exponentially scaled I0: exp(-|x|) * I0(x)."""
    x = abs(float(x))
    if x < _SERIES_LIMIT:
        return _i0_series(x) * math.exp(-x)
    return _i0e_asymptotic(x)


def log_bessel_i0(x: float) -> float:
    x = abs(float(x))
    if x < _SERIES_LIMIT:
        return math.log(_i0_series(x))
    return x + math.log(_i0e_asymptotic(x))


# -- von Mises -------------------------------------------------------------------


def sample_von_mises(kappa: float, size, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean von Mises draws (Best & Fisher rejection sampler).

    Large concentrations fall back to a wrapped Normal(0, kappa^-1/2).
    """
    size = (size,) if isinstance(size, int) else tuple(size)
    n = math.prod(size)
    if n == 0:
        return np.zeros(size)
    if kappa > WRAPPED_NORMAL_KAPPA:
        x = rng.normal(0.0, 1.0 / math.sqrt(kappa), n)
        return (np.mod(x + np.pi, 2 * np.pi) - np.pi).reshape(size)
    if kappa < 1e-8:
        return rng.uniform(-np.pi, np.pi, n).reshape(size)

    tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
    rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
    r = (1.0 + rho * rho) / (2.0 * rho)

    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 16)
        u1, u2, u3 = rng.random(m), rng.random(m), rng.random(m)
        z = np.cos(np.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        theta = np.sign(u3[ok] - 0.5) * np.arccos(np.clip(f[ok], -1.0, 1.0))
        take = min(len(theta), n - filled)
        out[filled : filled + take] = theta[:take]
        filled += take
    return out.reshape(size)


def von_mises_logpdf(eps, sigma: float):
    """log of exp(cos(eps)/sigma^2) / (2 pi I0(sigma^-2))."""
    kappa = 1.0 / (sigma * sigma)
    s = np.sin(0.5 * np.asarray(eps, dtype=float))
    return -2.0 * kappa * s * s - _LOG_2PI - (log_bessel_i0(kappa) - kappa)


def normal_logpdf(x, sigma: float):
    x = np.asarray(x, dtype=float)
    return -0.5 * (x / sigma) ** 2 - math.log(sigma) - _HALF_LOG_2PI


# -- hyperparameters ---------------------------------------------------------------


def noise_family(group) -> str | None:
    """Which hyperprior governs a level's sigma (None: no noise)."""
    if isinstance(group, Trans):
        return "trans"
    if isinstance(group, Rot):
        return "rot"
    if isinstance(group, RotFull):
        return "rotfull"
    return None


def _gamma_params(group, parametrization: str) -> tuple[float, float]:
    """(shape, scale) of the sigma hyperprior for a noise-bearing group."""
    if isinstance(group, Rot):
        k, b = math.pi / group.n, float(group.n) ** 2
    else:
        k, b = 1.0, 20.0
    if parametrization == "rate":
        return k, 1.0 / b
    if parametrization == "scale":
        return k, b
    raise ValueError(f"unknown gamma parametrization {parametrization!r}")


def sample_sigma(group, rng: np.random.Generator, parametrization: str = "rate") -> float:
    k, theta = _gamma_params(group, parametrization)
    return max(float(rng.gamma(k, theta)), MIN_SIGMA)


def log_prior_sigma(group, sigma: float, parametrization: str = "rate") -> float:
    k, theta = _gamma_params(group, parametrization)
    if not sigma > 0:
        return -math.inf
    return (k - 1.0) * math.log(sigma) - sigma / theta - math.lgamma(k) - k * math.log(theta)


def sample_hyper(shape: Shape, rng: np.random.Generator, parametrization: str = "rate") -> tuple:
    """One sigma per noise-bearing level, None for mirror and scale levels."""
    return tuple(
        sample_sigma(l.group, rng, parametrization) if noise_family(l.group) else None for l in shape.levels
    )


def log_prior_hyper(shape: Shape, hyper: tuple, parametrization: str = "rate") -> float:
    _check_hyper(shape, hyper)
    total = 0.0
    for level, sigma in zip(shape.levels, hyper):
        if sigma is not None:
            total += log_prior_sigma(level.group, sigma, parametrization)
    return total


def _check_hyper(shape: Shape, hyper: tuple) -> None:
    if len(hyper) != len(shape):
        raise ShapeMismatchError(f"{len(hyper)} hyperparameters for a {len(shape)}-level shape")
    for i, (level, sigma) in enumerate(zip(shape.levels, hyper), start=1):
        if (noise_family(level.group) is None) != (sigma is None):
            raise ShapeMismatchError(f"level {i}: hyperparameter presence does not match group {level.group}")


# -- noise trees ---------------------------------------------------------------------


def entry_kind(level, segments: int = SEGMENT_POINTS, circle_points: int = CIRCLE_POINTS):
    """(law, vector length) of a level's noise entries; None for noiseless levels."""
    g, occ = level.group, level.occ
    if isinstance(g, Trans):
        return ("segment", segments) if isinstance(occ, Interval) else ("trans", 0)
    if isinstance(g, (Rot, RotFull)):
        return ("circle", circle_points) if isinstance(occ, Full) else ("rot", 0)
    return None


def level_axes(shape: Shape, i: int) -> tuple:
    """Sizes of the copy axes of level index i (0-based), outermost level first."""
    return tuple(shape.levels[m].size() for m in range(len(shape) - 1, i - 1, -1))


def noise_array_shape(shape: Shape, i: int, segments: int = SEGMENT_POINTS, circle_points: int = CIRCLE_POINTS):
    kind = entry_kind(shape.levels[i], segments, circle_points)
    if kind is None:
        return None
    axes = level_axes(shape, i)
    return axes + (kind[1],) if kind[1] else axes


def draw_entries(kind, sigma: float, size, rng: np.random.Generator) -> np.ndarray:
    law, k = kind
    if law == "trans":
        return rng.normal(0.0, sigma, size)
    if law == "segment":
        return rng.normal(0.0, sigma / math.sqrt(k), size)
    return sample_von_mises(1.0 / (sigma * sigma), size, rng)


def entries_logpdf(kind, sigma: float, values: np.ndarray) -> np.ndarray:
    """Elementwise log density of noise values under a level's law."""
    law, k = kind
    if law == "trans":
        return normal_logpdf(values, sigma)
    if law == "segment":
        return normal_logpdf(values, sigma / math.sqrt(k))
    return von_mises_logpdf(values, sigma)


def sample_noise(
    shape: Shape,
    hyper: tuple,
    rng: np.random.Generator,
    segments: int = SEGMENT_POINTS,
    circle_points: int = CIRCLE_POINTS,
) -> tuple:
    _check_hyper(shape, hyper)
    out = []
    for i, (level, sigma) in enumerate(zip(shape.levels, hyper)):
        kind = entry_kind(level, segments, circle_points)
        if kind is None:
            out.append(None)
        else:
            out.append(draw_entries(kind, sigma, noise_array_shape(shape, i, segments, circle_points), rng))
    return tuple(out)


def check_noise(shape: Shape, hyper: tuple, noise: tuple, segments=SEGMENT_POINTS, circle_points=CIRCLE_POINTS):
    _check_hyper(shape, hyper)
    if len(noise) != len(shape):
        raise ShapeMismatchError(f"noise tree has {len(noise)} levels, shape has {len(shape)}")
    for i, arr in enumerate(noise):
        expected = noise_array_shape(shape, i, segments, circle_points)
        got = None if arr is None else np.shape(arr)
        if expected != got:
            raise ShapeMismatchError(f"level {i + 1}: noise entries have shape {got}, expected {expected}")
        if arr is not None and not np.all(np.isfinite(arr)):
            raise ShapeMismatchError(f"level {i + 1}: non-finite perturbation")


def log_density_noise(
    shape: Shape,
    hyper: tuple,
    noise: tuple,
    segments: int = SEGMENT_POINTS,
    circle_points: int = CIRCLE_POINTS,
) -> float:
    check_noise(shape, hyper, noise, segments, circle_points)
    total = 0.0
    for level, sigma, arr in zip(shape.levels, hyper, noise):
        if arr is not None and arr.size:
            total += float(np.sum(entries_logpdf(entry_kind(level, segments, circle_points), sigma, arr)))
    return total


def zero_noise(shape: Shape, segments: int = SEGMENT_POINTS, circle_points: int = CIRCLE_POINTS) -> tuple:
    return tuple(
        None if noise_array_shape(shape, i, segments, circle_points) is None
        else np.zeros(noise_array_shape(shape, i, segments, circle_points))
        for i in range(len(shape))
    )


def noise_to_json(noise: tuple) -> list:
    """Nested lists keyed by level position (1-based); noiseless levels are null."""
    return [None if a is None else np.asarray(a).tolist() for a in noise]


def noise_from_json(data: list) -> tuple:
    return tuple(None if a is None else np.asarray(a, dtype=float) for a in data)


# -- carrying noise across structural changes ---------------------------------------------


def remap_entries(old_arr, old_values, new_values, new_shape_arr):
    """Reindex a level's entries from old copy-axis values to new ones.

    ``old_values``/``new_values`` list, per axis (outermost first), the index
    values of that axis.  Returns ``(array, kept)`` where ``kept`` flags the
    copy positions that existed before; other positions are left as zeros.
    """
    maps = []
    for ov, nv in zip(old_values, new_values):
        lookup = {v: j for j, v in enumerate(ov)}
        maps.append(np.array([lookup.get(v, -1) for v in nv], dtype=int))
    kept = np.ones(tuple(len(m) for m in maps), dtype=bool)
    for ax, m in enumerate(maps):
        shape = [1] * len(maps)
        shape[ax] = len(m)
        kept &= (m >= 0).reshape(shape)
    out = np.zeros(new_shape_arr)
    if old_arr is not None and kept.any():
        idx = np.ix_(*[np.maximum(m, 0) for m in maps])
        out[kept] = old_arr[idx][kept]
    return out, kept


def _axis_keys(level, comparable: bool, tag: str) -> list:
    vals = level.values()
    return [(v,) for v in vals] if comparable else [(tag, j) for j in range(len(vals))]


def carry_noise(
    old_shape: Shape,
    old_hyper: tuple,
    old_noise: tuple,
    new_shape: Shape,
    correspondence,
    comparable,
    rng: np.random.Generator,
    parametrization: str = "rate",
    segments: int = SEGMENT_POINTS,
    circle_points: int = CIRCLE_POINTS,
):
    """Move hyperparameters and noise entries onto a structurally changed shape.

    ``correspondence[j]`` is the old level index matching new level ``j`` (or
    None).  Copy axes of corresponding levels are matched by index value when
    ``comparable[j]`` is true, otherwise nothing on that axis is shared.
    Entries and sigmas that find a counterpart are kept; the rest are drawn
    from the prior.  Returns ``(hyper, noise, log_q_reverse - log_q_forward)``:
    the log density of everything discarded minus that of everything drawn.
    """
    n_new, n_old = len(new_shape), len(old_shape)
    correspondence = tuple(correspondence)
    if len(correspondence) != n_new:
        raise ValueError("correspondence must list one entry per new level")
    corr_log = 0.0

    # sigmas
    hyper = []
    sigma_used = [False] * n_old
    for j, level in enumerate(new_shape.levels):
        fam = noise_family(level.group)
        if fam is None:
            hyper.append(None)
            continue
        o = correspondence[j]
        if o is not None and noise_family(old_shape.levels[o].group) == fam:
            hyper.append(old_hyper[o])
            sigma_used[o] = True
        else:
            sigma = sample_sigma(level.group, rng, parametrization)
            corr_log -= log_prior_sigma(level.group, sigma, parametrization)
            hyper.append(sigma)
    for o, level in enumerate(old_shape.levels):
        if old_hyper[o] is not None and not sigma_used[o]:
            corr_log += log_prior_sigma(level.group, old_hyper[o], parametrization)

    # axis keys of each new level, and of its old counterpart
    new_keys, old_keys = [], {}
    for j, level in enumerate(new_shape.levels):
        o = correspondence[j]
        comp = o is not None and bool(comparable[j])
        new_keys.append(_axis_keys(level, comp, "new"))
        if o is not None:
            old_keys[o] = _axis_keys(old_shape.levels[o], comp, "old")

    noise = []
    entries_used = [None] * n_old  # boolean masks of kept old entries
    for j, level in enumerate(new_shape.levels):
        kind = entry_kind(level, segments, circle_points)
        if kind is None:
            noise.append(None)
            continue
        target = noise_array_shape(new_shape, j, segments, circle_points)
        o = correspondence[j]
        new_axes = list(range(n_new - 1, j - 1, -1))
        arr, kept = None, None
        if (
            o is not None
            and old_noise[o] is not None
            and entry_kind(old_shape.levels[o], segments, circle_points) == kind
            and [correspondence[m] for m in new_axes] == list(range(n_old - 1, o - 1, -1))
        ):
            old_vals = [old_keys[correspondence[m]] for m in new_axes]
            new_vals = [new_keys[m] for m in new_axes]
            arr, kept = remap_entries(old_noise[o], old_vals, new_vals, target)
            # which old entries survived
            used = np.ones(old_noise[o].shape[: len(new_axes)], dtype=bool)
            for ax, (ov, nv) in enumerate(zip(old_vals, new_vals)):
                nv_set = set(nv)
                present = np.array([v in nv_set for v in ov], dtype=bool)
                shp = [1] * len(new_axes)
                shp[ax] = len(ov)
                used &= present.reshape(shp)
            entries_used[o] = used
        else:
            arr = np.zeros(target)
            kept = np.zeros(target[: len(new_axes)], dtype=bool)
        fresh = ~kept
        if fresh.any():
            vals = draw_entries(kind, hyper[j], (int(fresh.sum()),) + target[len(new_axes):], rng)
            arr[fresh] = vals
            corr_log -= float(np.sum(entries_logpdf(kind, hyper[j], vals)))
        noise.append(arr)

    for o, level in enumerate(old_shape.levels):
        arr = old_noise[o]
        if arr is None:
            continue
        kind = entry_kind(level, segments, circle_points)
        dropped = arr if entries_used[o] is None else arr[~entries_used[o]]
        if dropped.size:
            corr_log += float(np.sum(entries_logpdf(kind, old_hyper[o], dropped)))
    return tuple(hyper), tuple(noise), corr_log
