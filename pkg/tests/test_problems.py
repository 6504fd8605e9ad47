import logging
import math

import numpy as np
import pytest

from beacon_models.errors import DimensionError, PoolFormatError
from beacon_models.problems import (
    ContinuousProblem,
    PoolProblem,
    RangeSpec,
    ackley,
    build_function_problem,
    estimate_range,
    load_pool,
    make_space,
    make_synthetic_pool,
    multi_output_plus,
    query,
    rosenbrock,
    save_pool,
    staircase,
    styblinski_tang,
    with_noise,
)


def _ackley_reference(x):
    d = len(x)
    s1 = sum(v * v for v in x) / d
    s2 = sum(math.cos(2 * math.pi * v) for v in x) / d
    return -20.0 * math.exp(-0.2 * math.sqrt(s1)) - math.exp(s2) + 20.0 + math.e


def test_known_minima():
    assert abs(ackley(np.zeros(4))) < 1e-12
    assert rosenbrock(np.ones(5)) == 0.0
    assert styblinski_tang(np.zeros(3)) == 0.0
    for d in (2, 4):
        assert styblinski_tang(np.full(d, -2.903534)) == pytest.approx(-39.166 * d, abs=0.01 * d)


def test_ackley_matches_reference_and_symmetry():
    assert ackley(np.ones(4)) == pytest.approx(_ackley_reference([1.0] * 4), rel=1e-12)
    x = np.array([0.3, -1.2, 2.5, 0.7])
    assert ackley(x) == pytest.approx(_ackley_reference(x.tolist()), rel=1e-12)
    assert ackley(x[::-1]) == pytest.approx(ackley(x), rel=1e-12)


@pytest.mark.parametrize("fn", [ackley, rosenbrock, styblinski_tang, staircase])
def test_vectorized_matches_scalar(fn):
    dim = 1 if fn is staircase else 3
    X = np.random.default_rng(0).uniform(-2, 2, size=(1000, dim))
    batch = fn(X)
    single = np.array([fn(x) for x in X])
    np.testing.assert_allclose(batch, single, rtol=1e-12, atol=1e-12)


def test_staircase_is_a_monotone_staircase():
    grid = np.linspace(0.0, 1.0, 501)[:, None]
    values = staircase(grid)
    assert values[0] < 1e-6
    assert values[-1] > 3.99
    assert np.all(np.diff(values) >= 0)


def test_multi_output_plus_shape_and_domain():
    assert np.allclose(multi_output_plus(np.zeros(6)), [0.0, 0.0])
    assert multi_output_plus(np.zeros((3, 6))).shape == (3, 2)
    with pytest.raises(ValueError):
        multi_output_plus(np.full(6, 5.5))
    with pytest.raises(DimensionError):
        multi_output_plus(np.zeros(4))


def test_multi_output_plus_occupancy_is_sparse():
    problem = build_function_problem("multi_output_plus", None, [-5.0, 5.0])
    space = make_space(problem, [10, 10], sample_count=10_000, seed=0)
    X = problem.sample_inputs(10_000, np.random.default_rng(1))
    bins = space.project_many(problem.evaluate_many(X))
    assert len(set(bins.tolist())) / space.num_bins < 0.5
    center = space.project(problem.evaluate(np.zeros(6)))
    assert np.sum(bins == center) >= 1000


def test_query_noise_statistics():
    problem = build_function_problem("multi_output_plus", None, [-5.0, 5.0], noise_std=[0.05, 0.2])
    rng = np.random.default_rng(3)
    x = np.full(6, 0.1)
    draws = np.array([query(problem, x, rng)[0] for _ in range(10_000)])
    clean = problem.evaluate(x)
    errors = draws - clean
    np.testing.assert_allclose(errors.std(axis=0), [0.05, 0.2], rtol=0.03)
    assert abs(np.corrcoef(errors.T)[0, 1]) < 0.05


def test_noiseless_query_is_exact():
    problem = build_function_problem("ackley", 2, [-32.768, 32.768])
    noisy, clean = problem.query([1.0, 2.0], np.random.default_rng(0))
    np.testing.assert_array_equal(noisy, clean)
    with pytest.raises(ValueError):
        problem.query([np.inf, 0.0], np.random.default_rng(0))


def test_auto_noise_is_one_percent_of_spread():
    problem = build_function_problem("styblinski_tang", 2, [-5.0, 5.0], noise_std="auto")
    assert problem.noise_std.shape == (1,)
    assert 0.0 < problem.noise_std[0] < 5.0


def test_build_function_problem_errors():
    with pytest.raises(KeyError):
        build_function_problem("himmelblau", 2, [-5.0, 5.0])
    with pytest.raises(DimensionError):
        build_function_problem("staircase", 3, [0.0, 1.0])
    with pytest.raises(ValueError):
        build_function_problem("ackley", None, [-1.0, 1.0])
    with pytest.raises(ValueError):
        build_function_problem("ackley", 2, [1.0, -1.0])


def test_make_space_auto_range():
    problem = build_function_problem("ackley", 4, [-32.768, 32.768])
    space = make_space(problem, [25], sample_count=5000)
    assert space.box.lower[0] >= 0.0
    assert space.num_bins == 25
    assert make_space(problem, [25], sample_count=5000) == space
    other = make_space(problem, [25], sample_count=5000, seed=1)
    assert other.box != space.box


def test_make_space_explicit_and_degenerate_ranges():
    problem = build_function_problem("staircase", None, [0.0, 1.0])
    space = make_space(problem, [5], [[-0.5, 4.5]])
    assert space.project(problem.evaluate([0.5])) == 1
    assert space.project(problem.evaluate([1.0])) == 4
    with pytest.raises(DimensionError):
        make_space(problem, [5], [[0.0, 1.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        make_space(problem, [5], "quantile")
    flat = ContinuousProblem("flat", [[0.0, 1.0]], 1, lambda X: np.zeros(len(X)))
    with pytest.raises(ValueError):
        make_space(flat, [5], sample_count=100)
    with pytest.raises(ValueError):
        RangeSpec((1.0,), (1.0,))


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_pool(tmp_path):
    path = _write(tmp_path / "pool.csv", "x1,x2,y1\n0.1,0.2,1.0\n0.3,0.4,2.0\n0.5,0.6,3.0\n")
    pool = load_pool(path, 2, 1)
    assert len(pool) == 3
    assert pool.name == "pool"
    np.testing.assert_array_equal(pool.outcomes[:, 0], [1.0, 2.0, 3.0])


def test_load_pool_reports_line_numbers(tmp_path):
    path = _write(tmp_path / "bad.csv", "x1,x2,y1\n0.1,0.2,1.0\n0.3,abc,2.0\n")
    with pytest.raises(PoolFormatError) as info:
        load_pool(path, 2, 1)
    assert info.value.line == 3
    assert "line 3" in str(info.value)
    header = _write(tmp_path / "header.csv", "a,b,c\n0.1,0.2,1.0\n")
    with pytest.raises(PoolFormatError) as info:
        load_pool(header, 2, 1)
    assert info.value.line == 1
    short = _write(tmp_path / "short.csv", "x1,x2,y1\n0.1,0.2\n")
    with pytest.raises(PoolFormatError):
        load_pool(short, 2, 1)
    empty = _write(tmp_path / "empty.csv", "x1,x2,y1\n")
    with pytest.raises(PoolFormatError):
        load_pool(empty, 2, 1)


def test_load_pool_drops_duplicates(tmp_path, caplog):
    path = _write(tmp_path / "dup.csv", "x1,y1\n0.1,1.0\n0.2,2.0\n0.1,5.0\n")
    with caplog.at_level(logging.WARNING, logger="beacon.problems"):
        pool = load_pool(path, 1, 1)
    assert len(pool) == 2
    np.testing.assert_array_equal(pool.outcomes[:, 0], [1.0, 2.0])
    assert "duplicate" in caplog.text


def test_save_and_load_pool_exactly(tmp_path):
    pool = make_synthetic_pool(size=80, dim=3, num_bins=10, seed=4)
    save_pool(tmp_path / "synthetic.csv", pool)
    loaded = load_pool(tmp_path / "synthetic.csv", 3, 1)
    np.testing.assert_array_equal(loaded.candidates, pool.candidates)
    np.testing.assert_array_equal(loaded.outcomes, pool.outcomes)


def test_pool_is_read_only_and_queries_rows():
    X = np.array([[0.0, 1.0], [1.0, 0.0]])
    pool = PoolProblem("tiny", X, [[3.0], [4.0]])
    assert X.flags.writeable
    with pytest.raises(ValueError):
        pool.candidates[0, 0] = 5.0
    noisy, clean = pool.query(1, np.random.default_rng(0))
    np.testing.assert_array_equal(noisy, [4.0])
    np.testing.assert_array_equal(clean, [4.0])
    with pytest.raises(IndexError):
        pool.query(2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        PoolProblem("dup", [[0.0], [0.0]], [[1.0], [2.0]])


def test_pool_noise_applies_per_query():
    pool = with_noise(PoolProblem("tiny", [[0.0], [1.0]], [[3.0], [4.0]]), 0.5)
    rng = np.random.default_rng(1)
    draws = np.array([pool.query(0, rng)[0][0] for _ in range(4000)])
    assert draws.mean() == pytest.approx(3.0, abs=0.05)
    assert draws.std() == pytest.approx(0.5, rel=0.05)


def test_synthetic_pool_has_long_tail():
    pool = make_synthetic_pool(size=2000, dim=4, num_bins=25, seed=0)
    assert len(pool) == 2000
    space = make_space(pool, [25])
    assert space.box.lower == (0.0,) and space.box.upper == (1.0,)
    counts = np.bincount(space.project_many(pool.outcomes), minlength=25)
    assert np.all(counts > 0)
    assert np.sum(counts < 0.01 * len(pool)) >= 5
    assert counts[0] > 10 * counts[-1]
    again = make_synthetic_pool(size=2000, dim=4, num_bins=25, seed=0)
    np.testing.assert_array_equal(again.candidates, pool.candidates)


def test_estimate_range_on_pool_uses_outcomes():
    pool = PoolProblem("tiny", [[0.0], [1.0], [2.0]], [[3.0], [-1.0], [4.0]])
    spec = estimate_range(pool)
    assert spec.lower == (-1.0,) and spec.upper == (4.0,)
    assert spec.provenance == "empirical"
