import numpy as np
import pytest
from stubs import BumpPath, LinearPath

from beacon_models.acquisition import (
    ReferenceSet,
    UgConstraint,
    acquisition_value,
    acquisition_value_and_grad,
    build_references,
    maximize_continuous,
    maximize_discrete,
    neighborhood_config,
    novelty_many,
    novelty_naive,
    novelty_sorted,
    novelty_value_and_grad,
)
from beacon_models.behavior import BehaviorSpace, OutcomeBox
from beacon_models.config import NoveltyConfig
from beacon_models.errors import PoolExhaustedError
from beacon_models.gp import Dataset, fit_posterior, posterior_mean
from beacon_models.kernels import KernelSpec
from beacon_models.sampling import draw_path


def _space(bins=4, lower=0.0, upper=1.0):
    return BehaviorSpace(OutcomeBox((lower,), (upper,)), (bins,))


def test_novelty_reference_examples(refs_1d):
    assert novelty_sorted([2.0], refs_1d, NoveltyConfig(k=2)) == pytest.approx(1.0)
    assert novelty_sorted([2.0], refs_1d, NoveltyConfig(k=1)) == pytest.approx(1.0)
    assert novelty_sorted([2.0], refs_1d, NoveltyConfig(k=3)) == pytest.approx(4.0 / 3.0)
    assert novelty_sorted([2.0], refs_1d, NoveltyConfig(k=10)) == pytest.approx(4.0 / 3.0)
    assert novelty_sorted([1.0], refs_1d, NoveltyConfig(k=1)) == 0.0


def test_descending_order_keeps_farthest(refs_1d):
    config = NoveltyConfig(k=1, sort_order="descending")
    assert novelty_sorted([2.0], refs_1d, config) == pytest.approx(2.0)
    assert novelty_naive([2.0], refs_1d, config) == pytest.approx(2.0)


def test_empty_references_are_rejected():
    empty = ReferenceSet(points=np.zeros((0, 1)), bins=[], dedup=True)
    with pytest.raises(ValueError):
        novelty_sorted([0.0], empty, NoveltyConfig())
    with pytest.raises(ValueError):
        novelty_naive([0.0], empty, NoveltyConfig())


def test_sorted_and_naive_agree_on_random_instances():
    rng = np.random.default_rng(0)
    for case in range(1000):
        n = int(rng.integers(1, 4))
        R = int(rng.integers(1, 201))
        refs = ReferenceSet(points=rng.normal(size=(R, n)), bins=np.arange(R), dedup=False)
        y = rng.normal(size=n) * 2
        config = NoveltyConfig(k=[1, 5, 10][case % 3], metric=["euclidean", "manhattan"][case % 2])
        assert abs(novelty_sorted(y, refs, config) - novelty_naive(y, refs, config)) <= 1e-12
        many = novelty_many(y[None, :], refs, config)[0]
        assert abs(many - novelty_naive(y, refs, config)) <= 1e-12


def test_novelty_never_increases_when_references_grow():
    rng = np.random.default_rng(1)
    config = NoveltyConfig(k=3)
    points = rng.normal(size=(20, 2))
    y = rng.normal(size=2)
    previous = np.inf
    for size in range(3, 21):
        value = novelty_sorted(y, ReferenceSet(points[:size], np.arange(size), dedup=False), config)
        assert value <= previous + 1e-12
        previous = value


def test_euclidean_novelty_scales_with_outcomes():
    rng = np.random.default_rng(2)
    points = rng.normal(size=(15, 3))
    y = rng.normal(size=3)
    config = NoveltyConfig(k=4)
    base = novelty_sorted(y, ReferenceSet(points, np.arange(15), dedup=False), config)
    scaled = novelty_sorted(3.5 * y, ReferenceSet(3.5 * points, np.arange(15), dedup=False), config)
    assert scaled == pytest.approx(3.5 * base, rel=1e-12)


def test_novelty_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    refs = ReferenceSet(rng.normal(size=(12, 2)), np.arange(12), dedup=False)
    config = NoveltyConfig(k=3)
    y = np.array([0.37, -0.21])
    value, grad = novelty_value_and_grad(y, refs, config)
    assert value == pytest.approx(novelty_sorted(y, refs, config))
    h = 1e-7
    for p in range(2):
        step = np.zeros(2)
        step[p] = h
        fd = (novelty_sorted(y + step, refs, config) - novelty_sorted(y - step, refs, config)) / (2 * h)
        assert grad[p] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def _noiseless_gp(X, Y):
    data = Dataset(np.asarray(X, dtype=float), np.asarray(Y, dtype=float))
    return fit_posterior(data, KernelSpec("squared_exponential", [1.0], 1.0, 1e-6)), data


def test_references_collapse_shared_bins():
    gp, data = _noiseless_gp([[0.0], [2.0], [4.0]], [[0.3], [0.31], [0.29]])
    refs = build_references(gp, data, _space(bins=2), NoveltyConfig(dedup=True))
    assert len(refs) == 1
    assert refs.bins.tolist() == [0]
    full = build_references(gp, data, _space(bins=2), NoveltyConfig(dedup=False))
    assert len(full) == 3


def test_references_keep_distinct_bins_in_order():
    gp, data = _noiseless_gp([[0.0], [1.0], [2.0], [3.0]], [[0.1], [0.35], [0.6], [0.85]])
    refs = build_references(gp, data, _space(bins=4), NoveltyConfig(dedup=True))
    assert refs.bins.tolist() == [0, 1, 2, 3]
    np.testing.assert_allclose(refs.points[:, 0], [0.1, 0.35, 0.6, 0.85], atol=1e-4)


def test_references_bounded_by_occupied_bins():
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(1000, 2))
    Y = np.floor(25 * X[:, :1]) / 25 + 0.02
    data = Dataset(X, Y)
    gp = fit_posterior(data, KernelSpec("matern52", [0.3, 0.3], 1.0, 0.1))
    space = _space(bins=25)
    refs = build_references(gp, data, space, NoveltyConfig(dedup=True))
    means = np.array([posterior_mean(gp, x) for x in X[:50]])
    assert len(refs) <= 25
    assert len(set(refs.bins.tolist())) == len(refs)
    assert set(space.project_many(means).tolist()) <= set(refs.bins.tolist())


def test_unconstrained_acquisition_is_novelty_of_path(refs_1d):
    path = LinearPath([[2.0]], [0.5])
    config = NoveltyConfig(k=2)
    assert acquisition_value([0.75], path, refs_1d, config) == pytest.approx(novelty_sorted([2.0], refs_1d, config))


def test_hard_and_soft_constraints():
    gp, _ = _noiseless_gp([[0.0], [1.0]], [[0.5], [0.5]])
    space = _space(bins=2)
    refs = ReferenceSet([[0.5]], [1], dedup=True)
    path = LinearPath([[1.0]], [0.0])
    config = NoveltyConfig(k=1)
    assert space.project(posterior_mean(gp, [0.3])) == 1
    hard = UgConstraint(forbidden_bins={1})
    assert acquisition_value([0.3], path, refs, config, hard, gp, space) == float("-inf")
    soft = UgConstraint(forbidden_bins={1}, mode="soft", soft_penalty=10.0)
    assert acquisition_value([0.3], path, refs, config, soft, gp, space) == pytest.approx(0.2 - 10.0)
    observed = UgConstraint(forbid_observed=True)
    assert observed.blocked(refs) == {1}
    assert acquisition_value([0.3], path, refs, config, observed, gp, space) == float("-inf")
    with pytest.raises(ValueError):
        acquisition_value([0.3], path, refs, config, hard)


def test_constraint_validation():
    with pytest.raises(ValueError):
        UgConstraint(forbidden_bins={7}).validate(_space(bins=4))
    with pytest.raises(ValueError):
        UgConstraint(mode="strict")


def test_continuous_maximizer_reaches_box_edge():
    refs = ReferenceSet([[0.0]], [0], dedup=True)
    path = LinearPath([[1.0]], [0.0])
    result = maximize_continuous(path, refs, NoveltyConfig(k=1), [[0.0, 1.0]], restarts=5, seed=0)
    grid = np.linspace(0.0, 1.0, 10001)
    assert result.value == pytest.approx(grid.max(), abs=1e-3)
    assert result.choice[0] == pytest.approx(1.0, abs=1e-3)
    assert result.feasible and not result.fallback


def test_constant_acquisition_is_returned_as_is():
    refs = ReferenceSet([[-1.0], [1.0]], [0, 1], dedup=False)
    path = LinearPath([[0.0, 0.0]], [0.0])
    result = maximize_continuous(path, refs, NoveltyConfig(k=2), [[0.0, 1.0], [0.0, 1.0]], restarts=3, seed=1)
    assert result.value == pytest.approx(1.0, abs=1e-9)


def test_continuous_maximizer_beats_random_probes():
    rng = np.random.default_rng(7)
    refs = ReferenceSet([[0.0], [-0.5], [-1.0]], [0, 1, 2], dedup=True)
    config = NoveltyConfig(k=1)
    for case in range(20):
        d = int(rng.integers(1, 4))
        path = BumpPath(rng.uniform(0.2, 0.8, size=d))
        bounds = np.tile([0.0, 1.0], (d, 1))
        result = maximize_continuous(path, refs, config, bounds, restarts=10, seed=case)
        probes = rng.uniform(size=(1024, d))
        best_probe = max(acquisition_value(x, path, refs, config) for x in probes)
        assert result.value >= best_probe - 1e-9
        assert np.all(result.choice >= 0.0) and np.all(result.choice <= 1.0)


def test_continuous_maximizer_falls_back_when_everything_is_blocked():
    gp, _ = _noiseless_gp([[0.0], [1.0]], [[0.5], [0.5]])
    space = _space(bins=2)
    refs = ReferenceSet([[0.5]], [1], dedup=True)
    path = LinearPath([[1.0]], [0.0])
    constraint = UgConstraint(forbidden_bins={1})
    result = maximize_continuous(
        path, refs, NoveltyConfig(k=1), [[0.0, 1.0]], restarts=4, seed=0, constraint=constraint, gp=gp, space=space
    )
    assert result.fallback and not result.feasible
    assert 0.0 <= result.choice[0] <= 1.0


def test_acquisition_gradient_on_sampled_path(make_data):
    data = make_data(N=10, d=2, n=2, seed=8)
    gp = fit_posterior(data, KernelSpec("matern52", [0.6, 0.6], 1.0, 0.01, np.eye(2)))
    path = draw_path(gp, 256, seed=1)
    refs = build_references(gp, data, BehaviorSpace(OutcomeBox((-2.0, -2.0), (2.0, 2.0)), (5, 5)), NoveltyConfig())
    config = NoveltyConfig(k=2)
    rng = np.random.default_rng(2)
    h = 1e-6
    checked = 0
    for _ in range(100):
        x = rng.uniform(size=2)
        dist = np.sort(np.linalg.norm(refs.points - path.evaluate(x), axis=1))
        if dist[0] < 1e-3 or (len(dist) > config.k and dist[config.k] - dist[config.k - 1] < 1e-3):
            continue
        value, grad = acquisition_value_and_grad(x, path, refs, config)
        assert value == pytest.approx(acquisition_value(x, path, refs, config), abs=1e-12)
        fd = np.zeros(2)
        for p in range(2):
            step = np.zeros(2)
            step[p] = h
            fd[p] = (
                acquisition_value(x + step, path, refs, config) - acquisition_value(x - step, path, refs, config)
            ) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-6)
        checked += 1
    assert checked > 50


def test_discrete_single_candidate_left():
    pool = np.arange(5, dtype=float)[:, None]
    refs = ReferenceSet([[0.0]], [0], dedup=True)
    sample = np.linspace(0, 1, 5)[:, None]
    result = maximize_discrete(sample, refs, NoveltyConfig(k=1), pool, evaluated={0, 1, 2, 4})
    assert result.choice == 3


def test_discrete_picks_largest_and_lowest_index_on_ties():
    pool = np.arange(10, dtype=float)[:, None]
    refs = ReferenceSet([[0.0]], [0], dedup=True)
    sample = np.zeros((10, 1))
    sample[3], sample[7] = 0.5, 0.7
    evaluated = set(range(10)) - {3, 7}
    assert maximize_discrete(sample, refs, NoveltyConfig(k=1), pool, evaluated).choice == 7
    tied = np.full((10, 1), 0.4)
    assert maximize_discrete(tied, refs, NoveltyConfig(k=1), pool, {0, 1}).choice == 2


def test_discrete_matches_exhaustive_scan():
    rng = np.random.default_rng(9)
    config = NoveltyConfig(k=3)
    for _ in range(100):
        size = int(rng.integers(2, 40))
        pool = rng.normal(size=(size, 2))
        sample = rng.normal(size=(size, 2))
        refs = ReferenceSet(rng.normal(size=(5, 2)), np.arange(5), dedup=False)
        evaluated = set(rng.choice(size, size=int(rng.integers(0, size)), replace=False).tolist())
        result = maximize_discrete(sample, refs, config, pool, evaluated)
        scores = [
            (novelty_naive(sample[i], refs, config), -i) for i in range(size) if i not in evaluated
        ]
        assert result.choice == -max(scores)[1]
        assert result.choice not in evaluated


def test_discrete_with_path_sampler():
    pool = np.linspace(0.0, 1.0, 11)[:, None]
    refs = ReferenceSet([[0.0]], [0], dedup=True)
    result = maximize_discrete(LinearPath([[1.0]], [0.0]), refs, NoveltyConfig(k=1), pool, evaluated={10})
    assert result.choice == 9


def test_discrete_exhausted_pool():
    pool = np.zeros((3, 1))
    refs = ReferenceSet([[0.0]], [0], dedup=True)
    with pytest.raises(PoolExhaustedError):
        maximize_discrete(np.zeros((3, 1)), refs, NoveltyConfig(), pool, evaluated={0, 1, 2})


def test_discrete_constraint_modes():
    pool = np.arange(4, dtype=float)[:, None]
    refs = ReferenceSet([[0.0]], [0], dedup=True)
    sample = np.array([[0.1], [0.9], [0.5], [0.3]])
    predicted = np.array([0, 2, 1, 1])
    config = NoveltyConfig(k=1)
    hard = maximize_discrete(sample, refs, config, pool, set(), UgConstraint(forbidden_bins={2}), predicted)
    assert hard.choice == 2 and hard.feasible
    soft = UgConstraint(forbidden_bins={2}, mode="soft", soft_penalty=0.1)
    assert maximize_discrete(sample, refs, config, pool, set(), soft, predicted).choice == 1
    everything = UgConstraint(forbidden_bins={0, 1, 2})
    fallback = maximize_discrete(sample, refs, config, pool, set(), everything, predicted)
    assert fallback.fallback and fallback.choice == 1
    with pytest.raises(ValueError):
        maximize_discrete(sample, refs, config, pool, set(), everything)


def test_neighborhood_shrinks_with_few_references():
    config = NoveltyConfig(k=10, metric="manhattan")
    assert neighborhood_config(config, 3).k == 1
    assert neighborhood_config(config, 12).k == 3
    assert neighborhood_config(config, 400) is config
    assert neighborhood_config(config, 12).metric == "manhattan"
    assert config.k == 10


def test_neighborhood_prefers_gaps_over_extremes():
    refs = ReferenceSet([[0.0], [1.0], [2.0], [4.0]], [0, 1, 2, 4], dedup=True)
    wide = NoveltyConfig(k=10)
    # averaging over every reference rewards repeating the extreme outcome
    assert novelty_sorted([4.0], refs, wide) > novelty_sorted([3.0], refs, wide)
    narrow = neighborhood_config(wide, len(refs))
    assert novelty_sorted([4.0], refs, narrow) == 0.0
    assert novelty_sorted([3.0], refs, narrow) == pytest.approx(1.0)
