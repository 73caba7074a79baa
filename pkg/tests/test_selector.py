import math

import numpy as np
import pytest

from selcal.selector import (
    SelectorParams,
    choose_threshold,
    coverage_bound,
    init_selector,
    selector_backward,
    selector_forward,
)
from .oracles import rel_err


def zero_selector(embed_dim=3, hidden=(4,)):
    dims = [embed_dim, *hidden, 1]
    return SelectorParams(
        weights=[np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
        biases=[np.zeros(b) for b in dims[1:]],
        hidden_dims=list(hidden),
    )


def test_zero_params_give_half():
    params = zero_selector()
    scores = selector_forward(params, np.random.default_rng(0).normal(size=(5, 3)))
    assert np.allclose(scores, 0.5)


def test_forward_deterministic():
    params = init_selector(4, [8, 8], seed=1)
    x = np.random.default_rng(2).normal(size=(6, 4))
    assert (selector_forward(params, x) == selector_forward(params, x)).all()


def test_output_bias_shifts_score():
    params = zero_selector()
    params.biases[-1][:] = 10.0
    score = selector_forward(params, np.ones((1, 3)))[0]
    assert score == pytest.approx(1.0 / (1.0 + math.exp(-10.0)), abs=1e-9)


def test_dimension_mismatch_names_dims():
    params = init_selector(4, [8], seed=0)
    with pytest.raises(ValueError, match="3.*4|4.*3"):
        selector_forward(params, np.zeros((2, 3)))


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(7)
    params = init_selector(3, [5, 4], seed=3)
    X = rng.normal(size=(20, 3))
    dscore = rng.normal(size=20)

    def loss_at(p):
        return float(selector_forward(p, X) @ dscore)

    scores, cache = selector_forward(params, X, return_cache=True)
    w_grads, b_grads = selector_backward(params, cache, dscore)

    worst = 0.0
    step = 1e-5
    for arrays, grads in ((params.weights, w_grads), (params.biases, b_grads)):
        for a, g in zip(arrays, grads):
            flat_a, flat_g = a.reshape(-1), g.reshape(-1)
            for i in range(flat_a.size):
                orig = flat_a[i]
                flat_a[i] = orig + step
                up = loss_at(params)
                flat_a[i] = orig - step
                down = loss_at(params)
                flat_a[i] = orig
                worst = max(worst, rel_err(flat_g[i], (up - down) / (2 * step)))
    assert worst < 1e-4


def test_backward_zero_upstream():
    params = init_selector(3, [4], seed=5)
    X = np.random.default_rng(0).normal(size=(6, 3))
    _, cache = selector_forward(params, X, return_cache=True)
    w_grads, b_grads = selector_backward(params, cache, np.zeros(6))
    assert all((g == 0).all() for g in w_grads + b_grads)


def test_backward_additivity_over_identical_points():
    params = init_selector(3, [4], seed=6)
    x = np.random.default_rng(1).normal(size=(1, 3))
    batch = np.repeat(x, 5, axis=0)

    _, cache1 = selector_forward(params, x, return_cache=True)
    w1, b1 = selector_backward(params, cache1, np.ones(1))
    _, cache5 = selector_forward(params, batch, return_cache=True)
    w5, b5 = selector_backward(params, cache5, np.ones(5))
    for a, b in zip(w1 + b1, w5 + b5):
        assert np.allclose(5.0 * a, b, atol=1e-12)


def test_choose_threshold_examples():
    assert choose_threshold(np.array([0.1, 0.2, 0.3, 0.4]), 0.5) == pytest.approx(0.3)
    scores = np.array([0.4, 0.1, 0.3, 0.2])
    assert choose_threshold(scores, 1.0) == pytest.approx(0.1)
    tied = np.full(8, 0.7)
    tau = choose_threshold(tied, 0.25)
    assert tau == pytest.approx(0.7)
    assert (tied >= tau).mean() == 1.0


def test_choose_threshold_errors():
    with pytest.raises(ValueError):
        choose_threshold(np.array([]), 0.5)
    with pytest.raises(ValueError):
        choose_threshold(np.array([0.1]), 0.0)


def test_threshold_monotone_in_beta():
    rng = np.random.default_rng(3)
    scores = rng.random(57)
    betas = np.linspace(0.05, 1.0, 20)
    taus = [choose_threshold(scores, b) for b in betas]
    assert all(t1 >= t2 - 1e-15 for t1, t2 in zip(taus[:-1], taus[1:]))


def test_threshold_coverage_window():
    rng = np.random.default_rng(4)
    for trial in range(50):
        n = int(rng.integers(5, 200))
        scores = np.round(rng.random(n), 2)  # force duplicates
        beta = float(rng.uniform(0.05, 1.0))
        tau = choose_threshold(scores, beta)
        coverage = (scores >= tau).mean()
        ties = (scores == tau).sum()
        assert beta - 1e-12 <= coverage <= beta + ties / n + 1e-12


def test_coverage_bound_values():
    cb = coverage_bound(0.8, 10_000, 0.05)
    assert cb.epsilon == pytest.approx(math.sqrt(math.log(40.0) / 20_000), abs=1e-12)
    assert cb.epsilon == pytest.approx(0.013581, abs=1e-6)
    quad = coverage_bound(0.8, 40_000, 0.05)
    assert quad.epsilon == pytest.approx(cb.epsilon / 2.0, abs=1e-12)
    vac = coverage_bound(0.5, 1, 2.0 / math.e**2)
    assert vac.epsilon == pytest.approx(1.0, abs=1e-12)


def test_coverage_bound_errors():
    with pytest.raises(ValueError):
        coverage_bound(0.5, 0, 0.05)
    with pytest.raises(ValueError):
        coverage_bound(0.5, 10, 1.5)


def test_hoeffding_simulation_small():
    rng = np.random.default_rng(11)
    n_u, delta = 100, 0.05
    eps = coverage_bound(0.0, n_u, delta).epsilon
    for c in (0.5, 0.8, 0.9):
        hits = 0
        for _ in range(1000):
            beta_tilde = (rng.random(n_u) < c).mean()
            hits += abs(beta_tilde - c) <= eps
        assert hits / 1000 >= 1 - delta


def test_init_selector_seeded():
    a = init_selector(6, [16], seed=9)
    b = init_selector(6, [16], seed=9)
    c = init_selector(6, [16], seed=10)
    assert all((x == y).all() for x, y in zip(a.flat(), b.flat()))
    assert any((x != y).any() for x, y in zip(a.flat(), c.flat()))
    scores = selector_forward(a, np.random.default_rng(1).normal(size=(50, 6)))
    assert np.all(np.abs(scores - 0.5) < 0.4)
