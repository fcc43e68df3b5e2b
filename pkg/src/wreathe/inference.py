"""Reversible-jump MCMC over (shape, hyperparameters, noise, blur, scale).

Every move draws its new coordinates from the prior (or from a symmetric
kernel), so most prior terms cancel and the returned correction carries only
what is left: move-selection probabilities and the density of auxiliary
values that enter or leave the state.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from . import priors
from .grammar import Discrete, Full, Level, Mirror, Rot, RotFull, Shape, Trans
from .likelihood import P_MIN, binarize, log_likelihood
from .priors import BlurParams, PriorConfig
from .renderer import RenderConfig, gaussian_blur, rasterize, unfold
from .wreath_process import (
    carry_noise,
    draw_entries,
    entry_kind,
    log_density_noise,
    log_prior_hyper,
    noise_array_shape,
    sample_hyper,
    sample_noise,
    sample_sigma,
)

log = logging.getLogger(__name__)

MOVES = ("noise", "blur", "lambda", "within", "transdim")

# within-shape mutations available for each group family
KINDS = {
    "Trans": ("toggle", "shift", "redraw_occ", "axis_flip", "redraw_level"),
    "Rot": ("toggle", "redraw_occ", "order_step", "redraw_level"),
    "RotFull": ("toggle", "redraw_occ", "redraw_level"),
    "Mirror": ("toggle", "redraw_occ", "redraw_level"),
    "Scale": ("redraw_level",),
}


@dataclass(frozen=True)
class MoveWeights:
    noise: float = 0.40
    blur: float = 0.10
    lam: float = 0.05
    within: float = 0.30
    transdim: float = 0.15

    def __post_init__(self):
        w = self.as_tuple()
        if any(v < 0 for v in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"move weights must be nonnegative and sum to 1, got {w}")

    def as_tuple(self) -> tuple:
        return (self.noise, self.blur, self.lam, self.within, self.transdim)


@dataclass(frozen=True)
class ModelConfig:
    prior: PriorConfig = field(default_factory=PriorConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    p_min: float = P_MIN
    use_noise: bool = True
    likelihood: str = "bernoulli"  # "constant" ignores the image entirely
    parametrization: str = "rate"
    lambda_step: float = 2.0  # sd of the random-walk half of the scale move

    def __post_init__(self):
        if self.likelihood not in ("bernoulli", "constant"):
            raise ValueError(f"unknown likelihood {self.likelihood!r}")
        if not 0.0 < self.p_min < 0.5:
            raise ValueError(f"p_min must lie in (0, 0.5), got {self.p_min}")


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 10000
    seed: int = 0
    thin: int = 10
    move_weights: MoveWeights = field(default_factory=MoveWeights)
    level_pick_decay: float = 0.5
    max_levels: Optional[int] = None  # restrict proposals (and the target) to this many levels
    within_levels: Optional[tuple] = None  # 0-based levels open to within-shape moves
    within_kinds: Optional[tuple] = None
    p_birth_death: float = 0.5  # share of trans-dimensional moves that add or remove one level
    p_swap: float = 0.1  # share of within-shape moves that swap two adjacent levels
    init_candidates: int = 1
    keep_noise: bool = False
    progress_every: int = 0
    cache_size: int = 256

    def __post_init__(self):
        if self.iterations < 1 or self.thin < 1 or self.init_candidates < 1:
            raise ValueError("iterations, thin and init_candidates must be >= 1")
        if not 0 < self.level_pick_decay < 1:
            raise ValueError("level_pick_decay must lie in (0, 1)")
        if self.max_levels is not None and self.max_levels < 1:
            raise ValueError("max_levels must be >= 1")
        if not (0 <= self.p_birth_death <= 1 and 0 <= self.p_swap <= 1):
            raise ValueError("p_birth_death and p_swap must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class ModelState:
    shape: Shape
    hyper: Optional[tuple]
    noise: Optional[tuple]
    blur: BlurParams
    lam: float
    noise_id: int
    raster: Optional[np.ndarray]  # before blur
    render: Optional[np.ndarray]
    loglik: float
    lp_shape: float
    lp_hyper: float
    lp_noise: float
    lp_blur: float
    lp_lam: float

    @property
    def logprior(self) -> float:
        return self.lp_shape + self.lp_hyper + self.lp_noise + self.lp_blur + self.lp_lam

    @property
    def logpost(self) -> float:
        return self.logprior + self.loglik


@dataclass
class PosteriorSample:
    iteration: int
    shape: Shape
    lam: float
    blur: BlurParams
    log_posterior: float
    log_likelihood: float
    noise: Optional[tuple] = None


@dataclass
class ChainResult:
    seed: int
    samples: list
    map_state: ModelState
    ml_state: ModelState
    final_state: ModelState
    proposed: dict
    accepted: dict
    visits: dict = field(default_factory=dict)  # shape -> (iterations spent there, best state)

    def acceptance_rate(self, move: str) -> float:
        return self.accepted[move] / self.proposed[move] if self.proposed[move] else float("nan")


@lru_cache(maxsize=65536)
def _log_prior_shape(shape: Shape, cfg: PriorConfig) -> float:
    return priors.log_prior_shape(shape, cfg)


def family_key(level: Level) -> str:
    g = level.group
    if isinstance(g, Trans):
        return "Trans"
    return type(g).__name__


def acceptance(current: float, proposed: float, correction: float) -> float:
    """Metropolis-Hastings-Green acceptance probability from log values."""
    if proposed == -math.inf or math.isnan(proposed):
        return 0.0
    a = proposed - current + correction
    return 1.0 if a >= 0 else math.exp(a)


def _geometric_log_probs(n: int, gamma: float) -> np.ndarray:
    w = gamma ** np.arange(n)
    return np.log(w / w.sum())


class Sampler:
    """One chain: owns its RNG, render cache and current state."""

    def __init__(self, obs, model: ModelConfig = ModelConfig(), chain: ChainConfig = ChainConfig()):
        self.obs = None if obs is None else np.asarray(obs)
        if self.obs is None and model.likelihood != "constant":
            raise ValueError("an observed image is required unless the likelihood is constant")
        render = model.render
        if self.obs is not None:
            h, w = self.obs.shape
            render = replace(render, width=w, height=h)
        self.model = replace(model, render=render)
        self.chain = chain
        self.rng = np.random.default_rng(chain.seed)
        self.max_levels = model.prior.max_levels if chain.max_levels is None else min(chain.max_levels, model.prior.max_levels)
        self._cache: OrderedDict = OrderedDict()
        self._ids = itertools.count(1)
        w = np.array(chain.move_weights.as_tuple(), dtype=float)
        if not model.use_noise:
            w[0] = 0.0
        if w.sum() <= 0:
            raise ValueError("no move has positive weight")
        self.weights = w / w.sum()
        self.proposed = dict.fromkeys(MOVES, 0)
        self.accepted = dict.fromkeys(MOVES, 0)

    # -- state construction -------------------------------------------------------

    def _raster(self, shape: Shape, noise, noise_id: int, lam: float) -> np.ndarray:
        key = (shape, noise_id, lam)
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        cfg = self.model.render.with_scale(lam)
        img = rasterize(unfold(shape, noise, cfg.segments, cfg.circle_points), cfg)
        self._cache[key] = img
        if len(self._cache) > self.chain.cache_size:
            self._cache.popitem(last=False)
        return img

    def build(self, shape, hyper, noise, blur, lam, noise_id=None, lp_shape=None) -> Optional[ModelState]:
        """Assemble a state, or None if it lies outside the prior support."""
        m = self.model
        if len(shape) > self.max_levels:
            return None
        lp_shape = _log_prior_shape(shape, m.prior) if lp_shape is None else lp_shape
        lp_lam = priors.log_prior_lambda(lam, m.prior)
        if lp_shape == -math.inf or lp_lam == -math.inf:
            return None
        if m.use_noise:
            lp_hyper = log_prior_hyper(shape, hyper, m.parametrization)
            lp_noise = log_density_noise(shape, hyper, noise, m.render.segments, m.render.circle_points)
            if noise_id is None:
                noise_id = next(self._ids)
        else:
            hyper = noise = None
            lp_hyper = lp_noise = 0.0
            noise_id = 0
        lp_blur = priors.log_prior_blur(blur, m.prior)
        if m.likelihood == "constant":
            raster = img = None
            loglik = 0.0
        else:
            raster = self._raster(shape, noise, noise_id, lam)
            img = gaussian_blur(raster, blur.w_b, blur.sigma_b)
            loglik = log_likelihood(self.obs, img, m.p_min)
        return ModelState(shape, hyper, noise, blur, float(lam), noise_id, raster, img, loglik,
                          lp_shape, lp_hyper, lp_noise, lp_blur, lp_lam)

    def initial_state(self) -> ModelState:
        """Best-likelihood state among ``init_candidates`` prior draws."""
        m, rng = self.model, self.rng
        best = None
        for _ in range(self.chain.init_candidates):
            n = int(rng.integers(1, self.max_levels + 1))
            levels, _, _ = priors.sample_levels(m.prior, rng, n)
            state = self.state_for(Shape(tuple(levels)))
            if best is None or state.loglik > best.loglik:
                best = state
        return best

    def state_for(self, shape: Shape, blur: Optional[BlurParams] = None, lam: Optional[float] = None,
                  hyper=None, noise=None) -> ModelState:
        """A state for ``shape`` with unspecified components drawn from the prior."""
        m, rng = self.model, self.rng
        if m.use_noise:
            if hyper is None:
                hyper = sample_hyper(shape, rng, m.parametrization)
            if noise is None:
                noise = sample_noise(shape, hyper, rng, m.render.segments, m.render.circle_points)
        blur = priors.sample_blur(m.prior, rng) if blur is None else blur
        lam = priors.sample_lambda(m.prior, rng) if lam is None else lam
        state = self.build(shape, hyper, noise, blur, lam)
        if state is None:
            raise ValueError(f"shape {shape} lies outside the prior support for this chain")
        return state

    def rescore(self, state: ModelState) -> float:
        """Log posterior recomputed from scratch, bypassing every cache.

        Terms are added in the same order as ``ModelState.logpost`` so the two
        agree bit for bit."""
        m = self.model
        lp_hyper = lp_noise = 0.0
        if m.use_noise:
            lp_hyper = log_prior_hyper(state.shape, state.hyper, m.parametrization)
            lp_noise = log_density_noise(state.shape, state.hyper, state.noise, m.render.segments, m.render.circle_points)
        lp = priors.log_prior_shape(state.shape, m.prior) + lp_hyper + lp_noise
        lp = lp + priors.log_prior_blur(state.blur, m.prior) + priors.log_prior_lambda(state.lam, m.prior)
        if m.likelihood == "constant":
            return lp + 0.0
        cfg = m.render.with_scale(state.lam)
        img = rasterize(unfold(state.shape, state.noise, cfg.segments, cfg.circle_points), cfg)
        img = gaussian_blur(img, state.blur.w_b, state.blur.sigma_b)
        return lp + log_likelihood(self.obs, img, m.p_min)

    # -- proposals ----------------------------------------------------------------

    def propose_noise(self, s: ModelState):
        m, rng = self.model, self.rng
        bearing = [i for i, a in enumerate(s.noise) if a is not None]
        if not bearing:
            return None, 0.0
        seg, circ = m.render.segments, m.render.circle_points
        u = rng.random()
        if u < 0.25:
            hyper = sample_hyper(s.shape, rng, m.parametrization)
            noise = sample_noise(s.shape, hyper, rng, seg, circ)
        else:
            i = bearing[rng.integers(len(bearing))]
            level = s.shape.levels[i]
            hyper, noise = list(s.hyper), list(s.noise)
            kind = entry_kind(level, seg, circ)
            if u < 0.5:
                hyper[i] = sample_sigma(level.group, rng, m.parametrization)
                noise[i] = draw_entries(kind, hyper[i], noise_array_shape(s.shape, i, seg, circ), rng)
            elif u < 0.75:
                noise[i] = draw_entries(kind, hyper[i], noise_array_shape(s.shape, i, seg, circ), rng)
            else:
                arr = noise[i].copy()
                lead = arr.shape[: len(s.shape) - i]
                pos = np.unravel_index(int(rng.integers(int(np.prod(lead)))), lead)
                arr[pos] = draw_entries(kind, hyper[i], arr[pos].shape, rng)
                noise[i] = arr
            hyper, noise = tuple(hyper), tuple(noise)
        # proposal = prior, so nothing is left over
        return self.build(s.shape, hyper, noise, s.blur, s.lam, lp_shape=s.lp_shape), 0.0

    def propose_blur(self, s: ModelState):
        blur = priors.sample_blur(self.model.prior, self.rng)
        return self.build(s.shape, s.hyper, s.noise, blur, s.lam, s.noise_id, s.lp_shape), 0.0

    def propose_lambda(self, s: ModelState):
        u = self.rng.random()
        if u < 1 / 3:
            lam = priors.sample_lambda(self.model.prior, self.rng)
        elif u < 2 / 3:
            lam = s.lam + self.model.lambda_step * self.rng.normal()
        else:
            return self.propose_zoom(s)
        return self.build(s.shape, s.hyper, s.noise, s.blur, lam, s.noise_id, s.lp_shape), 0.0

    def propose_zoom(self, s: ModelState):
        """Scale every discrete translation by c in {2, 1/2} and the scale by 1/c.

        Dots and circles stay where they are on the canvas, so the chain can
        trade a large scale for long translations in one step.  The map is its
        own inverse with c swapped; the Jacobian of the scale gives -log c."""
        c = 2.0 if self.rng.random() < 0.5 else 0.5
        levels, changed = [], False
        for level in s.shape.levels:
            if isinstance(level.group, Trans) and isinstance(level.occ, Discrete):
                level = Level(level.group, Discrete([v * c for v in level.occ.indices]))
                changed = True
            levels.append(level)
        if not changed:
            return None, 0.0
        shape = Shape(tuple(levels))
        lp_shape = _log_prior_shape(shape, self.model.prior)
        if lp_shape == -math.inf:
            return None, 0.0
        return self.build(shape, s.hyper, s.noise, s.blur, s.lam / c, lp_shape=lp_shape), -math.log(c)

    def _kinds(self, level: Level) -> tuple:
        kinds = KINDS[family_key(level)]
        if self.chain.within_kinds is not None:
            kinds = tuple(k for k in kinds if k in self.chain.within_kinds)
        return kinds

    def _mutate(self, level: Level, kind: str):
        """Returns (new level, extra log correction, axis values comparable) or None."""
        p, rng = self.model.prior, self.rng
        g, occ = level.group, level.occ
        if kind == "toggle":
            if not isinstance(occ, Discrete):
                return None
            if isinstance(g, Trans):
                v = float(rng.integers(-p.b_max, p.b_max + 1))
            elif isinstance(g, (Rot, Mirror)):
                v = int(rng.integers(g.n if isinstance(g, Rot) else 2))
            elif isinstance(g, RotFull):
                v = priors.angle_on_grid(int(rng.integers(p.angle_grid)), p.angle_grid)
            else:
                return None
            vals = set(occ.indices) ^ {v}
            if not vals:
                return None
            return Level(g, Discrete(vals)), 0.0, True
        if kind == "shift":
            if not level.is_single:
                return None
            step = p.trans_step if rng.random() < 0.5 else -p.trans_step
            return Level(g, Discrete([occ.indices[0] + step])), 0.0, True
        if kind == "axis_flip":
            return Level(Trans("Y" if g.axis == "X" else "X"), occ), 0.0, True
        if kind == "redraw_occ":
            new, _ = priors.draw_occupancy(g, p, rng)
            return new, priors.raw_log_mass(level, p) - priors.raw_log_mass(new, p), True
        if kind == "order_step":
            orders = p.rot_orders
            if g.n not in orders:
                return None
            j = orders.index(g.n) + (1 if rng.random() < 0.5 else -1)
            if not 0 <= j < len(orders):
                return None
            n2 = orders[j]
            idx = occ.indices
            if len(idx) == g.n:
                return Level(Rot(n2), Full()), 0.0, True
            # keep the set when that is reversible, otherwise give up
            if max(idx) < min(g.n, n2) and len(idx) < n2:
                return Level(Rot(n2), Discrete(idx)), 0.0, True
            return None
        if kind == "redraw_level":
            new, _ = priors.draw_level(p, rng)
            return new, priors.raw_log_mass(level, p) - priors.raw_log_mass(new, p), new.group == g
        raise ValueError(f"unknown move kind {kind!r}")

    def propose_within(self, s: ModelState):
        shape, rng = s.shape, self.rng
        n = len(shape)
        if self.chain.p_swap > 0 and self.chain.within_levels is None and rng.random() < self.chain.p_swap:
            return self.propose_swap(s)
        allowed = list(range(n)) if self.chain.within_levels is None else [i for i in self.chain.within_levels if i < n]
        if not allowed:
            return None, 0.0
        lp = _geometric_log_probs(len(allowed), self.chain.level_pick_decay)
        i = allowed[rng.choice(len(allowed), p=np.exp(lp))]
        level = shape.levels[i]
        kinds = self._kinds(level)
        if not kinds:
            return None, 0.0
        kind = kinds[rng.integers(len(kinds))]
        out = self._mutate(level, kind)
        if out is None:
            return None, 0.0
        new_level, corr, comparable = out
        if new_level == level:
            return None, 0.0
        back = self._kinds(new_level)
        if kind not in back:
            return None, 0.0
        corr += math.log(len(kinds)) - math.log(len(back))
        levels = list(shape.levels)
        levels[i] = new_level
        new_shape = Shape(tuple(levels))
        return self._restructure(s, new_shape, tuple(range(n)), [True] * i + [comparable] + [True] * (n - i - 1), corr)

    def propose_swap(self, s: ModelState):
        """Exchange levels i and i+1; picking i is symmetric so only noise enters."""
        n = len(s.shape)
        if n < 2:
            return None, 0.0
        i = int(self.rng.integers(n - 1))
        levels = list(s.shape.levels)
        if levels[i] == levels[i + 1]:
            return None, 0.0
        levels[i], levels[i + 1] = levels[i + 1], levels[i]
        corr_map = list(range(n))
        corr_map[i], corr_map[i + 1] = i + 1, i
        return self._restructure(s, Shape(tuple(levels)), tuple(corr_map), [True] * n, 0.0)

    def propose_birth_death(self, s: ModelState):
        """Insert a prior-drawn level at a uniform position, or delete a uniform level.

        Birth and death are each chosen with probability 1/2 and a position is
        picked uniformly among the n+1 (resp. n) slots, so the correction is
        just the proposal density of the level that appears or disappears."""
        p, rng = self.model.prior, self.rng
        n = len(s.shape)
        levels = list(s.shape.levels)
        if rng.random() < 0.5:
            if n + 1 > self.max_levels:
                return None, 0.0
            j = int(rng.integers(n + 1))
            new, _ = priors.draw_level(p, rng)
            levels.insert(j, new)
            corr = -priors.raw_log_mass(new, p)
            corr_map = tuple(list(range(j)) + [None] + list(range(j, n)))
        else:
            if n < 2:
                return None, 0.0
            j = int(rng.integers(n))
            old = levels.pop(j)
            corr = priors.raw_log_mass(old, p)
            corr_map = tuple(list(range(j)) + list(range(j + 1, n)))
        return self._restructure(s, Shape(tuple(levels)), corr_map, [True] * len(levels), corr)

    def propose_transdim(self, s: ModelState):
        if self.chain.p_birth_death > 0 and self.rng.random() < self.chain.p_birth_death:
            return self.propose_birth_death(s)
        return self.propose_cut(s)

    def propose_cut(self, s: ModelState):
        p, rng = self.model.prior, self.rng
        shape = s.shape
        n = len(shape)
        gamma = self.chain.level_pick_decay
        cut_lp = _geometric_log_probs(n, gamma)
        i = int(rng.choice(n, p=np.exp(cut_lp))) + 1  # replace levels 1..i
        top = shape.levels[i:]
        kmax = self.max_levels - len(top)
        if kmax < 1:
            return None, 0.0
        k = int(rng.integers(1, kmax + 1))
        fiber, _, _ = priors.sample_levels(p, rng, k)
        new_shape = Shape(tuple(fiber) + tuple(top))
        corr = _geometric_log_probs(len(new_shape), gamma)[k - 1] - cut_lp[i - 1]
        corr += priors.log_prior_levels(shape.levels[:i], p) - priors.log_prior_levels(fiber, p)
        corr_map = tuple([None] * k + [i + j for j in range(len(top))])
        return self._restructure(s, new_shape, corr_map, [True] * len(new_shape), corr)

    def _restructure(self, s: ModelState, new_shape: Shape, corr_map, comparable, corr: float):
        m = self.model
        if len(new_shape) > self.max_levels:
            return None, 0.0
        lp_shape = _log_prior_shape(new_shape, m.prior)
        if lp_shape == -math.inf:
            return None, 0.0
        hyper = noise = None
        if m.use_noise:
            hyper, noise, c = carry_noise(
                s.shape, s.hyper, s.noise, new_shape, corr_map, comparable, self.rng,
                m.parametrization, m.render.segments, m.render.circle_points,
            )
            corr += c
        return self.build(new_shape, hyper, noise, s.blur, s.lam, lp_shape=lp_shape), corr

    # -- driver -------------------------------------------------------------------

    def step(self, s: ModelState) -> ModelState:
        move = MOVES[int(self.rng.choice(len(MOVES), p=self.weights))]
        self.proposed[move] += 1
        proposer = {
            "noise": self.propose_noise,
            "blur": self.propose_blur,
            "lambda": self.propose_lambda,
            "within": self.propose_within,
            "transdim": self.propose_transdim,
        }[move]
        new, corr = proposer(s)
        if new is None:
            return s
        a = acceptance(s.logpost, new.logpost, corr)
        if a >= 1.0 or self.rng.random() < a:
            self.accepted[move] += 1
            return new
        return s

    def run(self, initial: Optional[ModelState] = None) -> ChainResult:
        c = self.chain
        state = self.initial_state() if initial is None else initial
        best_lik = state
        samples = []
        # visits per shape, with the best state seen for it (kept without images)
        visits: dict = {}
        for it in range(1, c.iterations + 1):
            state = self.step(state)
            entry = visits.get(state.shape)
            if entry is None:
                visits[state.shape] = [1, _light(state), it]
            else:
                entry[0] += 1
                if state.logpost > entry[1].logpost:
                    entry[1] = _light(state)
            if state.loglik > best_lik.loglik:
                best_lik = state
            if it % c.thin == 0:
                samples.append(
                    PosteriorSample(it, state.shape, state.lam, state.blur, state.logpost, state.loglik,
                                    state.noise if c.keep_noise else None)
                )
            if c.progress_every and it % c.progress_every == 0:
                log.info("seed %d iter %d logpost %.3f shape %s", c.seed, it, state.logpost, state.shape)
        # most visited shape; ties go to the higher posterior, then the earlier visit
        count, best, _ = max(visits.values(), key=lambda e: (e[0], e[1].logpost, -e[2]))
        return ChainResult(c.seed, samples, best, best_lik, state, dict(self.proposed), dict(self.accepted),
                           {k: (v[0], v[1]) for k, v in visits.items()})


def _light(state: ModelState) -> ModelState:
    return replace(state, raster=None, render=None)


def run_chain(obs, model: ModelConfig = ModelConfig(), chain: ChainConfig = ChainConfig(),
              initial_shape: Optional[Shape] = None) -> ChainResult:
    sampler = Sampler(obs, model, chain)
    initial = None if initial_shape is None else sampler.state_for(initial_shape)
    return sampler.run(initial)


def _run_one(args):
    return run_chain(*args)


def run_chains(obs, model: ModelConfig = ModelConfig(), chain: ChainConfig = ChainConfig(),
               n_chains: int = 4, workers: int = 1) -> list:
    """Independent chains with seeds ``chain.seed + k``; results in seed order."""
    jobs = [(obs, model, replace(chain, seed=chain.seed + k)) for k in range(n_chains)]
    if workers > 1 and n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n_chains)) as ex:
            return list(ex.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def best_state(results) -> ModelState:
    """MAP over several chains: the shape visited most often in total
    (ties go to the higher posterior), as its best-scoring state."""
    totals: dict = {}
    for r in results:
        for shape, (k, st) in r.visits.items():
            if shape in totals:
                prev_k, prev = totals[shape]
                totals[shape] = (prev_k + k, st if st.logpost > prev.logpost else prev)
            else:
                totals[shape] = (k, st)
    if not totals:
        return max((r.map_state for r in results), key=lambda s: s.logpost)
    return max(totals.values(), key=lambda e: (e[0], e[1].logpost))[1]


def prepare_observation(img, threshold: float = 0.5) -> np.ndarray:
    return binarize(img, threshold)
