import numpy as np
import pytest

from realm.cma import CMAES, cma_es_minimize, default_popsize


def sphere(x):
    return float(np.sum(x**2))


def rosenbrock(x):
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def test_popsize_formula():
    assert default_popsize(14) == 11


def test_sphere_14d():
    x, f = cma_es_minimize(sphere, 3.0 * np.ones(14), 0.5, budget=6000, seed=1)
    assert f < 1e-10
    assert np.linalg.norm(x) < 1e-4


def test_rosenbrock_14d():
    x, f = cma_es_minimize(rosenbrock, np.zeros(14), 0.5, budget=60000, seed=2)
    assert f < 1e-6
    assert np.allclose(x, np.ones(14), atol=1e-2)


def test_deterministic_under_seed():
    calls_a, calls_b = [], []

    def fa(x):
        calls_a.append(x.copy())
        return sphere(x)

    def fb(x):
        calls_b.append(x.copy())
        return sphere(x)

    xa, fa_best = cma_es_minimize(fa, np.ones(6), 0.3, budget=500, seed=42)
    xb, fb_best = cma_es_minimize(fb, np.ones(6), 0.3, budget=500, seed=42)
    assert fa_best == fb_best
    assert np.array_equal(xa, xb)
    assert len(calls_a) == len(calls_b)
    for a, b in zip(calls_a, calls_b):
        assert np.array_equal(a, b)


def test_rank_based_selection_ignores_objective_shift():
    seen_plain, seen_shifted = [], []

    def plain(x):
        seen_plain.append(x.copy())
        return sphere(x)

    def shifted(x):
        seen_shifted.append(x.copy())
        return sphere(x) + 123.456

    _, f0 = cma_es_minimize(plain, 2.0 * np.ones(5), 0.4, budget=400, seed=7)
    _, f1 = cma_es_minimize(shifted, 2.0 * np.ones(5), 0.4, budget=400, seed=7)
    assert len(seen_plain) == len(seen_shifted)
    for a, b in zip(seen_plain, seen_shifted):
        assert np.array_equal(a, b)
    assert f1 == pytest.approx(f0 + 123.456, abs=1e-9)


def test_budget_must_cover_one_generation():
    with pytest.raises(ValueError):
        cma_es_minimize(sphere, np.ones(14), 0.5, budget=5, seed=0)


def test_result_never_worse_than_init_mean():
    init = np.full(3, 0.01)  # already nearly optimal
    x, f = cma_es_minimize(sphere, init, 5.0, budget=40, seed=3)
    assert f <= sphere(init)


def test_ask_shape_and_tell_updates_best():
    es = CMAES(np.zeros(4), 0.5, seed=0)
    xs = es.ask()
    assert xs.shape == (es.lam, 4)
    es.tell(xs, [sphere(x) for x in xs])
    assert np.isfinite(es.best_f)
