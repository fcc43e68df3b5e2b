import math

import numpy as np
import pytest
from scipy import stats

from wreathe import priors
from wreathe.evaluation import equivalent
from wreathe.grammar import Discrete, Level, Mirror, Shape, parse
from wreathe.inference import (
    ChainConfig,
    ChainResult,
    ModelConfig,
    MoveWeights,
    Sampler,
    acceptance,
    best_state,
    run_chain,
    run_chains,
)
from wreathe.likelihood import binarize
from wreathe.priors import BlurParams, PriorConfig
from wreathe.renderer import RenderConfig, render

SQUARE = parse("[(Trans Y,[-0.5,0.5]); (Trans X,[0.5]); (Rot 4,[0..3])]")
RC = RenderConfig(32, 32, 10.0)


def square_obs():
    return binarize(render(SQUARE, None, None, RC))


def test_acceptance_rule():
    assert acceptance(-10.0, -10.0, 0.0) == 1.0
    assert acceptance(-10.0, -math.inf, 0.0) == 0.0
    assert acceptance(-10.0, math.nan, 0.0) == 0.0
    assert acceptance(-10.0, -12.0, 0.5) == pytest.approx(math.exp(-1.5))
    assert acceptance(-10.0, -12.0, 3.0) == 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        MoveWeights(0.5, 0.5, 0.5, 0.0, 0.0)
    with pytest.raises(ValueError):
        ChainConfig(iterations=0)
    with pytest.raises(ValueError):
        ChainConfig(level_pick_decay=1.0)
    with pytest.raises(ValueError):
        ModelConfig(likelihood="gaussian")
    with pytest.raises(ValueError):
        Sampler(None, ModelConfig())


def test_seed_determinism():
    c = ChainConfig(iterations=300, seed=7, thin=5, max_levels=3)
    a = run_chain(square_obs(), ModelConfig(render=RC), c)
    b = run_chain(square_obs(), ModelConfig(render=RC), c)
    assert [(s.iteration, s.shape, s.lam, s.blur, s.log_posterior) for s in a.samples] == [
        (s.iteration, s.shape, s.lam, s.blur, s.log_posterior) for s in b.samples
    ]
    assert a.map_state.shape == b.map_state.shape and a.accepted == b.accepted


def test_cache_coherence():
    s = Sampler(square_obs(), ModelConfig(render=RC), ChainConfig(seed=11, max_levels=4, cache_size=8))
    state = s.initial_state()
    for _ in range(400):
        state = s.step(state)
        assert s.rescore(state) == state.logpost


def test_restricted_levels_are_respected():
    r = run_chain(square_obs(), ModelConfig(render=RC), ChainConfig(iterations=500, seed=2, thin=1, max_levels=2))
    assert max(len(x.shape) for x in r.samples) <= 2


def test_blur_and_lambda_moves_touch_one_coordinate():
    s = Sampler(square_obs(), ModelConfig(render=RC), ChainConfig(seed=4))
    st = s.state_for(SQUARE)
    new, corr = s.propose_blur(st)
    assert corr == 0.0 and new.shape == st.shape and new.noise is st.noise and new.lam == st.lam
    new, corr = s.propose_lambda(st)
    assert corr == 0.0 and new.shape == st.shape and new.noise is st.noise and new.blur == st.blur


def _noiseless(obs=None, **chain):
    model = ModelConfig(render=RC, use_noise=False, likelihood="bernoulli" if obs is not None else "constant")
    return Sampler(obs, model, ChainConfig(**chain))


def _find_reverse(sampler, proposer, state, target_shape, tries=20000):
    for seed in range(tries):
        sampler.rng = np.random.default_rng(seed)
        new, corr = getattr(sampler, proposer)(state)
        if new is not None and new.shape == target_shape:
            return corr
    raise AssertionError("no reverse proposal found")


@pytest.mark.parametrize(
    "proposer, shape",
    [
        ("propose_birth_death", "[(Trans Y,[-0.5,0.5]); (Rot 4,[0..3])]"),
        ("propose_within", "[(Trans Y,[-0.5,0.5]); (Trans X,[1]); (Rot 5,[0,2])]"),
        ("propose_swap", "[(Trans Y,[-0.5,0.5]); (Mirror,[0,1]); (Rot 3,[1])]"),
        ("propose_cut", "[(Trans Y,[-0.5,0.5]); (Rot 4,[0..3])]"),
        ("propose_zoom", "[(Trans Y,[-0.5,0.5]); (Trans X,[1]); (Rot 4,[0..3])]"),
    ],
)
def test_corrections_are_antisymmetric(proposer, shape):
    s = _noiseless(max_levels=4)
    a = s.state_for(parse(shape), blur=BlurParams(0, 1.0), lam=10.0)
    checked = 0
    for seed in range(200):
        s.rng = np.random.default_rng(10_000 + seed)
        b, fwd = getattr(s, proposer)(a)
        if b is None or b.shape == a.shape:
            continue
        bwd = _find_reverse(s, proposer, b, a.shape)
        assert fwd == pytest.approx(-bwd, abs=1e-9)
        checked += 1
        if checked == 5:
            break
    assert checked == 5


def test_three_state_chain_matches_enumeration():
    # Mirror occupancy {0}, {1}, {0,1} over a segment fiber, only toggles
    obs = binarize(render(parse("[(Trans Y,[-0.5,0.5]); (Trans X,[1]); (Mirror,[0])]"), None, None, RC))
    model = ModelConfig(render=RC, use_noise=False, p_min=0.48)
    chain = ChainConfig(iterations=1, seed=9, move_weights=MoveWeights(0, 0, 0, 1, 0), within_levels=(2,),
                        within_kinds=("toggle",))
    s = Sampler(obs, model, chain)
    base = parse("[(Trans Y,[-0.5,0.5]); (Trans X,[1])]").levels
    subsets = [(0,), (1,), (0, 1)]
    states = [s.state_for(Shape(base + (Level(Mirror(), Discrete(k)),)), blur=BlurParams(0, 1.0), lam=10.0)
              for k in subsets]
    lp = np.array([st.logpost for st in states])
    exact = np.exp(lp - lp.max())
    exact /= exact.sum()
    counts = np.zeros(3)
    st = states[0]
    for _ in range(30000):
        st = s.step(st)
        counts[subsets.index(tuple(int(v) for v in st.shape.levels[2].occ.indices))] += 1
    tv = 0.5 * np.abs(counts / counts.sum() - exact).sum()
    assert tv < 0.03, (exact, counts)


def test_acceptance_rate_on_matched_target():
    r = run_chain(square_obs(), ModelConfig(render=RC), ChainConfig(iterations=1500, seed=3, max_levels=3),
                  initial_shape=SQUARE)
    rate = sum(r.accepted.values()) / sum(r.proposed.values())
    assert 0.05 < rate < 0.95


def test_best_state_pools_visits():
    s = Sampler(square_obs(), ModelConfig(render=RC), ChainConfig(seed=1))
    x = s.state_for(SQUARE)
    y = s.state_for(parse("[(Trans X,[-0.5,0.5])]"))
    x2 = s.state_for(SQUARE)

    def result(visits):
        st = next(iter(visits.values()))[1]
        return ChainResult(0, [], st, st, st, {}, {}, visits)

    # y wins each chain alone but x is visited more in total
    r1 = result({y.shape: (6, y), x.shape: (5, x)})
    r2 = result({y.shape: (1, y), x.shape: (5, x2)})
    b = best_state([r1, r2])
    assert b.shape == x.shape
    assert b.logpost == max(x.logpost, x2.logpost)


def test_chains_get_consecutive_seeds():
    rs = run_chains(square_obs(), ModelConfig(render=RC), ChainConfig(iterations=50, seed=20, max_levels=2), n_chains=3)
    assert [r.seed for r in rs] == [20, 21, 22]


def test_prior_recovery_level_count_smoke():
    model = ModelConfig(prior=PriorConfig(max_levels=3), likelihood="constant")
    s = Sampler(None, model, ChainConfig(seed=5))
    st = s.initial_state()
    counts = np.zeros(3)
    for i in range(6000):
        st = s.step(st)
        if i % 20 == 0:
            counts[len(st.shape) - 1] += 1
    assert np.all(np.abs(counts / counts.sum() - 1 / 3) < 0.1)


def test_level_marginal_of_prior_is_the_family_mass():
    # sanity of the analytic marginal used by the prior-recovery check
    cfg = PriorConfig()
    assert sum(math.exp(priors.log_prior_level(l, cfg)) for l in [
        Level(Mirror(), Discrete((0,))), Level(Mirror(), Discrete((1,))), Level(Mirror(), Discrete((0, 1)))
    ]) == pytest.approx(0.2)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="chains settle in heavily blurred star shapes; calibration reached 0 of 10")
def test_square_is_reached_by_most_seeds():
    hits = 0
    model = ModelConfig(render=RC)
    for seed in range(10):
        r = run_chain(square_obs(), model, ChainConfig(iterations=10000, seed=seed, max_levels=3, init_candidates=100))
        hits += any(equivalent(shape, SQUARE) for shape in r.visits)
    assert hits >= 7


def test_zoom_keeps_dots_in_place():
    s = _noiseless(obs=square_obs(), seed=0)
    a = s.state_for(parse("[(Trans Y,[1]); (Rot 8,[0..7])]"), blur=BlurParams(0, 1.0), lam=8.0)
    for seed in range(20):
        s.rng = np.random.default_rng(seed)
        b, corr = s.propose_zoom(a)
        if b is not None:
            break
    assert b.lam * float(b.shape.levels[0].occ.indices[0]) == pytest.approx(8.0)
    assert np.array_equal(b.raster, a.raster) and b.loglik == a.loglik
    assert corr == pytest.approx(-math.log(a.lam / b.lam))


def test_scale_moves_leave_the_prior_invariant():
    # only the scale move runs; zooming links (v, lam) with (2v, lam/2)
    cfg = PriorConfig()
    model = ModelConfig(prior=cfg, use_noise=False, likelihood="constant")
    s = Sampler(None, model, ChainConfig(seed=12, move_weights=MoveWeights(0, 0, 1, 0, 0)))
    st = s.state_for(parse("[(Trans Y,[1]); (Rot 4,[0])]"), blur=BlurParams(0, 1.0), lam=10.0)
    values = (0.5, 1.0, 2.0, 4.0)
    lams, counts = [], np.zeros(len(values))
    for i in range(60000):
        st = s.step(st)
        if i % 20 == 0:
            lams.append(st.lam)
            counts[values.index(float(st.shape.levels[0].occ.indices[0]))] += 1
    assert stats.kstest(lams, stats.uniform(1, 49).cdf).pvalue > 0.01
    mass = np.array([math.exp(priors.log_prior_level(parse(f"[(Trans Y,[{v}])]").levels[0], cfg)) for v in values])
    expected = mass / mass.sum() * counts.sum()
    assert stats.chisquare(counts, expected).pvalue > 0.01
