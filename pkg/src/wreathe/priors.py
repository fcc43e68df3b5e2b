"""Prior over shapes, blur parameters and the global scale.

A shape is drawn bottom up.  The level count is uniform, each level picks a
group family uniformly and then an occupancy mode (single, full or special).
A level that would break the continuous-fiber rule or push the number of
copies past ``max_copies`` is redrawn, so the exact log prior of a level
divides by the probability of drawing any acceptable level in its context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .grammar import Discrete, Full, Interval, Level, Mirror, Rot, RotFull, Shape, Trans, UNIT_INTERVAL
from .renderer import BlurParams

__all__ = [
    "BlurParams",
    "PriorConfig",
    "PriorSamplingError",
    "FAMILIES",
    "level_family",
    "occupancy_mode",
    "draw_group",
    "draw_occupancy",
    "draw_level",
    "raw_log_mass",
    "sample_level",
    "sample_levels",
    "log_prior_levels",
    "log_prior_level",
    "sample_shape_prior",
    "log_prior_shape",
    "sample_blur",
    "log_prior_blur",
    "sample_lambda",
    "log_prior_lambda",
]

FAMILIES = ("TransX", "TransY", "Rot", "RotFull", "Mirror")
MODES = ("single", "full", "special")


class PriorSamplingError(RuntimeError):
    """The rejection loop failed to produce an acceptable level."""


@dataclass(frozen=True)
class PriorConfig:
    p_single: float = 0.4
    p_full: float = 0.4
    b_max: int = 5
    max_levels: int = 8
    b_w: int = 6
    b_sigma: float = 2.0
    rot_orders: tuple = (2, 3, 4, 5, 6, 8)
    lambda_range: tuple = (1.0, 50.0)
    max_copies: int = 256
    angle_grid: int = 24  # single/special angles of the continuous rotation
    trans_step: float = 0.5  # grid of single translations

    def __post_init__(self):
        object.__setattr__(self, "rot_orders", tuple(sorted({int(n) for n in self.rot_orders})))
        object.__setattr__(self, "lambda_range", tuple(float(v) for v in self.lambda_range))
        if not (0 <= self.p_single <= 1 and 0 <= self.p_full <= 1 and self.p_single + self.p_full <= 1 + 1e-12):
            raise ValueError("need 0 <= p_single, p_full and p_single + p_full <= 1")
        if self.b_max < 1 or self.max_levels < 1 or self.b_w < 1 or not self.b_sigma > 0:
            raise ValueError("b_max, max_levels, b_w and b_sigma must be positive")
        if any(n < 2 for n in self.rot_orders) or not self.rot_orders:
            raise ValueError("rot_orders must be a nonempty set of integers >= 2")
        lo, hi = self.lambda_range
        if not 0 < lo < hi:
            raise ValueError("lambda_range must satisfy 0 < lo < hi")
        if self.max_copies < 1 or self.angle_grid < 1 or not self.trans_step > 0:
            raise ValueError("max_copies, angle_grid and trans_step must be positive")

    @property
    def p_special(self) -> float:
        return max(0.0, 1.0 - self.p_single - self.p_full)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


# -- classification --------------------------------------------------------------------


def level_family(level: Level) -> Optional[str]:
    g = level.group
    if isinstance(g, Trans):
        return "Trans" + g.axis
    if isinstance(g, Rot):
        return "Rot"
    if isinstance(g, RotFull):
        return "RotFull"
    if isinstance(g, Mirror):
        return "Mirror"
    return None


def occupancy_mode(level: Level) -> str:
    """Observable occupancy mode: one copy, the whole group, or anything else."""
    occ = level.occ
    if isinstance(occ, (Interval, Full)):
        return "full"
    if len(occ) == 1:
        return "single"
    if isinstance(level.group, Rot) and len(occ) == level.group.n:
        return "full"
    if isinstance(level.group, Mirror) and len(occ) == 2:
        return "full"
    return "special"


# -- per-family occupancy distributions ------------------------------------------------


def _subset_size_probs(m: int, q: float) -> np.ndarray:
    """P(size = k), k = 0..m, for independent inclusion with prob q, conditioned nonempty."""
    k = np.arange(m + 1)
    logc = gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1)
    p = np.exp(logc + k * math.log(q) + (m - k) * math.log1p(-q))
    p[0] = 0.0
    return p / p.sum()


def _subset_log_mass(m: int, q: float, k: int) -> float:
    """Log mass of one particular nonempty subset of size k out of m."""
    empty = (1.0 - q) ** m
    return k * math.log(q) + (m - k) * _log(1.0 - q) - math.log1p(-empty)


@lru_cache(maxsize=64)
def _family_outcomes(cfg: PriorConfig) -> tuple:
    """Each family as a list of (mass, copies, continuous, single) outcomes.

    Masses include the family choice; summing over everything gives 1."""
    fam = 1.0 / len(FAMILIES)
    ps, pf, pp = cfg.p_single, cfg.p_full, cfg.p_special
    out = []
    # translations
    for _ in range(2):
        items = [(fam * ps, 1, False, True), (fam * pf, 1, True, False)]
        for B in range(1, cfg.b_max + 1):
            sizes = _subset_size_probs(2 * B + 1, 0.5)
            for k in range(1, 2 * B + 2):
                items.append((fam * pp * sizes[k] / cfg.b_max, k, False, k == 1))
        out.append(items)
    # finite rotations
    items = []
    for n in cfg.rot_orders:
        w = fam / len(cfg.rot_orders)
        items += [(w * ps, 1, False, True), (w * pf, n, False, False)]
        sizes = _subset_size_probs(n, 1.0 / n)
        for k in range(1, n + 1):
            items.append((w * pp * sizes[k], k, False, k == 1))
    out.append(items)
    # continuous rotation
    items = [(fam * ps, 1, False, True), (fam * pf, 1, True, False)]
    sizes = _subset_size_probs(cfg.angle_grid, 1.0 / cfg.angle_grid)
    for k in range(1, cfg.angle_grid + 1):
        items.append((fam * pp * sizes[k], k, False, k == 1))
    out.append(items)
    # mirror
    items = [(fam * ps, 1, False, True), (fam * pf, 2, False, False)]
    sizes = _subset_size_probs(2, 0.5)
    for k in (1, 2):
        items.append((fam * pp * sizes[k], k, False, k == 1))
    out.append(items)
    return tuple(tuple(i) for i in out)


def _acceptable(copies: int, point_fiber: bool, n_copies: int, continuous: bool, cfg: PriorConfig) -> bool:
    if continuous:
        return point_fiber
    return copies * n_copies <= cfg.max_copies


@lru_cache(maxsize=4096)
def _accept_mass(cfg: PriorConfig, point_fiber: bool, copies: int) -> float:
    total = 0.0
    for items in _family_outcomes(cfg):
        for mass, k, cont, _ in items:
            if _acceptable(copies, point_fiber, k, cont, cfg):
                total += mass
    return total


def raw_log_mass(level: Level, cfg: PriorConfig) -> float:
    """Log probability that one unconditioned draw yields exactly this level."""
    g, occ = level.group, level.occ
    fam = math.log(1.0 / len(FAMILIES))
    ps, pf, pp = cfg.p_single, cfg.p_full, cfg.p_special

    if isinstance(g, Trans):
        if isinstance(occ, Interval):
            return fam + _log(pf) if (occ.lo, occ.hi) == (UNIT_INTERVAL.lo, UNIT_INTERVAL.hi) else -math.inf
        vals = occ.indices
        total = 0.0
        if len(vals) == 1:
            v = vals[0]
            steps = v / cfg.trans_step
            if abs(steps - round(steps)) < 1e-9:
                for B in range(max(1, math.ceil(abs(v) - 1e-9)), cfg.b_max + 1):
                    total += ps / cfg.b_max / (2 * round(B / cfg.trans_step) + 1)
        if all(float(v).is_integer() for v in vals):
            need = max(1, int(max(abs(v) for v in vals)))
            for B in range(need, cfg.b_max + 1):
                total += pp / cfg.b_max * math.exp(_subset_log_mass(2 * B + 1, 0.5, len(vals)))
        return fam + _log(total)

    if isinstance(g, (Rot, Mirror)):
        n = g.n if isinstance(g, Rot) else 2
        if isinstance(g, Rot):
            if n not in cfg.rot_orders:
                return -math.inf
            fam += math.log(1.0 / len(cfg.rot_orders))
        k = len(occ)
        total = pp * math.exp(_subset_log_mass(n, 1.0 / n, k)) if pp > 0 else 0.0
        if k == 1:
            total += ps / n
        if k == n:
            total += pf
        return fam + _log(total)

    if isinstance(g, RotFull):
        if isinstance(occ, Full):
            return fam + _log(pf)
        m = cfg.angle_grid
        for v in occ.indices:
            j = v * m / (2.0 * math.pi)
            if abs(j - round(j)) > 1e-9 or not 0 <= round(j) < m:
                return -math.inf
        k = len(occ)
        total = pp * math.exp(_subset_log_mass(m, 1.0 / m, k)) if pp > 0 else 0.0
        if k == 1:
            total += ps / m
        return fam + _log(total)

    return -math.inf  # scale levels are not part of the prior


def log_prior_level(level: Level, cfg: PriorConfig, point_fiber: bool = True, copies: int = 1) -> float:
    """Log probability of drawing ``level`` on top of a fiber in the given context."""
    if not _acceptable(copies, point_fiber, level.size(), level.is_continuous, cfg):
        return -math.inf
    lp = raw_log_mass(level, cfg)
    if lp == -math.inf:
        return lp
    return lp - math.log(_accept_mass(cfg, point_fiber, copies))


def angle_on_grid(j: int, m: int) -> float:
    return 2.0 * math.pi * j / m


def draw_group(cfg: PriorConfig, rng: np.random.Generator):
    fam = FAMILIES[rng.integers(len(FAMILIES))]
    if fam in ("TransX", "TransY"):
        return Trans(fam[-1])
    if fam == "Rot":
        return Rot(int(cfg.rot_orders[rng.integers(len(cfg.rot_orders))]))
    return RotFull() if fam == "RotFull" else Mirror()


def draw_occupancy(group, cfg: PriorConfig, rng: np.random.Generator) -> tuple[Level, str]:
    """Draw an occupancy for a fixed group; returns the level and the mode used."""
    u = rng.random()
    mode = "single" if u < cfg.p_single else ("full" if u < cfg.p_single + cfg.p_full else "special")
    g = group

    if isinstance(g, Trans):
        if mode == "full":
            return Level(g, UNIT_INTERVAL), mode
        B = int(rng.integers(1, cfg.b_max + 1))
        if mode == "single":
            steps = round(B / cfg.trans_step)
            return Level(g, Discrete([cfg.trans_step * int(rng.integers(-steps, steps + 1))])), mode
        vals = np.arange(-B, B + 1)
        while True:
            keep = rng.random(len(vals)) < 0.5
            if keep.any():
                return Level(g, Discrete(float(v) for v in vals[keep])), mode

    if isinstance(g, (Rot, Mirror)):
        n = g.n if isinstance(g, Rot) else 2
        if mode == "single":
            return Level(g, Discrete([int(rng.integers(n))])), mode
        if mode == "full":
            return Level(g, Discrete(range(n))), mode
        while True:
            keep = rng.random(n) < 1.0 / n
            if keep.any():
                return Level(g, Discrete(int(v) for v in np.flatnonzero(keep))), mode

    if isinstance(g, RotFull):
        m = cfg.angle_grid
        if mode == "full":
            return Level(g, Full()), mode
        if mode == "single":
            return Level(g, Discrete([angle_on_grid(int(rng.integers(m)), m)])), mode
        while True:
            keep = rng.random(m) < 1.0 / m
            if keep.any():
                return Level(g, Discrete(angle_on_grid(int(j), m) for j in np.flatnonzero(keep))), mode

    raise ValueError(f"the prior has no occupancy law for {g!r}")


def draw_level(cfg: PriorConfig, rng: np.random.Generator) -> tuple[Level, str]:
    """One unconditioned draw of a level (before the acceptability check)."""
    return draw_occupancy(draw_group(cfg, rng), cfg, rng)


def sample_level(
    cfg: PriorConfig,
    rng: np.random.Generator,
    point_fiber: bool = True,
    copies: int = 1,
    return_mode: bool = False,
    max_tries: int = 1000,
):
    """Draw one level acceptable on top of a fiber in the given context."""
    for _ in range(max_tries):
        level, mode = draw_level(cfg, rng)
        if _acceptable(copies, point_fiber, level.size(), level.is_continuous, cfg):
            return (level, mode) if return_mode else level
    raise PriorSamplingError(f"no acceptable level after {max_tries} draws")


def sample_levels(cfg: PriorConfig, rng: np.random.Generator, k: int, point_fiber: bool = True, copies: int = 1):
    """Draw ``k`` levels bottom up; returns (levels, point_fiber, copies)."""
    levels = []
    for _ in range(k):
        level = sample_level(cfg, rng, point_fiber, copies)
        levels.append(level)
        point_fiber = point_fiber and level.is_single
        copies *= level.size()
    return levels, point_fiber, copies


def log_prior_levels(levels, cfg: PriorConfig, point_fiber: bool = True, copies: int = 1) -> float:
    total = 0.0
    for level in levels:
        total += log_prior_level(level, cfg, point_fiber, copies)
        if total == -math.inf:
            return total
        point_fiber = point_fiber and level.is_single
        copies *= level.size()
    return total


def sample_shape_prior(cfg: PriorConfig, rng: np.random.Generator) -> Shape:
    n = int(rng.integers(1, cfg.max_levels + 1))
    levels, _, _ = sample_levels(cfg, rng, n)
    return Shape(tuple(levels))


def log_prior_shape(s: Shape, cfg: PriorConfig) -> float:
    n = len(s)
    if not 1 <= n <= cfg.max_levels:
        return -math.inf
    return -math.log(cfg.max_levels) + log_prior_levels(s.levels, cfg)


# -- blur and scale --------------------------------------------------------------------


def _beta12_cdf(x: float) -> float:
    x = min(max(x, 0.0), 1.0)
    return 1.0 - (1.0 - x) ** 2


def sample_blur(cfg: PriorConfig, rng: np.random.Generator) -> BlurParams:
    w = int(math.floor(cfg.b_w * rng.beta(1.0, 2.0) + 0.5))
    sigma = cfg.b_sigma * rng.exponential(1.0)
    return BlurParams(w, max(sigma, 1e-12))


def log_prior_blur_window(w_b: int, cfg: PriorConfig) -> float:
    # w_b = floor(b_w * u + 1/2) with u ~ Beta(1, 2)
    lo = (w_b - 0.5) / cfg.b_w
    hi = (w_b + 0.5) / cfg.b_w
    return _log(_beta12_cdf(hi) - _beta12_cdf(lo))


def log_prior_blur_sigma(sigma_b: float, cfg: PriorConfig) -> float:
    if not sigma_b > 0:
        return -math.inf
    return -math.log(cfg.b_sigma) - sigma_b / cfg.b_sigma


def log_prior_blur(bp: BlurParams, cfg: PriorConfig) -> float:
    return log_prior_blur_window(bp.w_b, cfg) + log_prior_blur_sigma(bp.sigma_b, cfg)


def sample_lambda(cfg: PriorConfig, rng: np.random.Generator) -> float:
    lo, hi = cfg.lambda_range
    return float(rng.uniform(lo, hi))


def log_prior_lambda(lam: float, cfg: PriorConfig) -> float:
    lo, hi = cfg.lambda_range
    if not lo <= lam <= hi:
        return -math.inf
    return -math.log(hi - lo)
