import numpy as np
import pytest
from scipy.stats import spearmanr

from selcal.baselines import (
    Ranking,
    confidence_rank,
    iforest_fit,
    iforest_rank,
    iforest_score,
    mahalanobis_rank,
    select_at_coverage,
)


def test_confidence_rank_ordering():
    ranking = confidence_rank(np.array([0.9, 0.2, 0.5]))
    mask = select_at_coverage(ranking, 2.0 / 3.0)
    assert mask.tolist() == [True, False, True]


def test_select_all_at_full_coverage():
    ranking = confidence_rank(np.array([0.3, 0.1, 0.2]))
    assert select_at_coverage(ranking, 1.0).all()


def test_select_exact_count_and_tie_rule():
    ranking = Ranking(scores=np.array([0.5, 0.7, 0.5, 0.9]), method="t")
    mask = select_at_coverage(ranking, 0.75)
    # ceil(3) kept; the tied 0.5 at the lower index wins
    assert mask.tolist() == [True, True, False, True]


def test_select_exact_count_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 300))
        scores = np.round(rng.random(n), 1)
        beta = float(rng.uniform(0.01, 1.0))
        mask = select_at_coverage(Ranking(scores, "r"), beta)
        assert mask.sum() == int(np.ceil(beta * n - 1e-9))


def test_select_bad_beta():
    with pytest.raises(ValueError):
        select_at_coverage(Ranking(np.array([1.0]), "r"), 0.0)


def test_ranking_rejects_nonfinite():
    with pytest.raises(ValueError):
        Ranking(scores=np.array([1.0, np.nan]), method="r")


def test_iforest_planted_outliers():
    rng = np.random.default_rng(1)
    inliers = rng.normal(size=(1000, 8))
    directions = rng.normal(size=(10, 8))
    outliers = 10.0 * directions / np.linalg.norm(directions, axis=1, keepdims=True)
    X = np.vstack([inliers, outliers])
    for seed in range(5):
        model = iforest_fit(X, trees=100, psi=256, seed=seed)
        typ = iforest_score(model, X)
        cutoff = np.quantile(typ, 0.02)
        assert (typ[-10:] <= cutoff).all()


def test_iforest_score_range_and_determinism():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(100, 3))
    model = iforest_fit(X, trees=20, psi=32, seed=3)
    s1 = iforest_score(model, X[0])
    s2 = iforest_score(model, X[0])
    assert s1 == s2
    scores = iforest_score(model, X)
    assert np.all(scores > -1.0) and np.all(scores < 0.0)


def test_iforest_degenerate_two_points():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    model = iforest_fit(X, trees=1, psi=2, seed=0)
    scores = iforest_score(model, X)
    assert np.isfinite(scores).all()


def test_iforest_depth_cap():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(600, 2))
    psi = 256
    model = iforest_fit(X, trees=10, psi=psi, seed=5)
    cap = int(np.ceil(np.log2(psi)))

    def depth(node):
        if node.feature < 0:
            return 0
        return 1 + max(depth(node.left), depth(node.right))

    assert all(depth(t) <= cap for t in model.trees)


def test_iforest_needs_embeddings():
    with pytest.raises(ValueError):
        iforest_fit(np.zeros((10, 0)), seed=0)


def test_iforest_rank_wrapper():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(50, 2))
    model = iforest_fit(X, trees=10, psi=16, seed=0)
    ranking = iforest_rank(model, X)
    assert ranking.method == "iforest" and ranking.scores.shape == (50,)


def test_confidence_full_coverage_preserves_ece():
    from selcal.metrics import ece

    rng = np.random.default_rng(10)
    conf = rng.uniform(0.5, 1.0, size=400)
    corr = (rng.random(400) < conf).astype(float)
    mask = select_at_coverage(confidence_rank(conf), 1.0)
    assert ece(conf[mask], corr[mask], 1, 15) == ece(conf, corr, 1, 15)


def test_mahalanobis_isotropy():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(5000, 6))
    ranking = mahalanobis_rank(X)
    d2 = np.sum((X - X.mean(axis=0)) ** 2, axis=1)
    rho = spearmanr(ranking.scores, -d2)[0]
    assert rho > 0.99


def test_mahalanobis_mean_is_max():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(500, 3))
    X = np.vstack([X, X.mean(axis=0)])
    ranking = mahalanobis_rank(X)
    assert np.argmax(ranking.scores) == 500
    assert ranking.scores[500] == pytest.approx(0.0, abs=1e-9)


def test_mahalanobis_large_eps_is_euclidean():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(200, 4)) @ np.diag([1.0, 5.0, 0.2, 2.0])
    ranking = mahalanobis_rank(X, eps=1e12)
    d2 = np.sum((X - X.mean(axis=0)) ** 2, axis=1)
    assert (np.argsort(ranking.scores) == np.argsort(-d2)).all()
