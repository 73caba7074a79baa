"""Selection baselines: confidence ordering, isolation forest, Mahalanobis.

All baselines produce a Ranking whose scores are "higher = keep first";
select_at_coverage then keeps the ceil(beta * n) best-scored instances.
Per the evaluation protocol, confidences fed to confidence_rank are the
recalibrated ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.5772156649015329


@dataclass
class Ranking:
    scores: np.ndarray
    method: str

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("ranking scores must be finite")


@dataclass
class _Node:
    feature: int = -1            # -1 marks a leaf
    value: float = 0.0
    size: int = 0
    left: "_Node | None" = None
    right: "_Node | None" = None


@dataclass
class IsolationForestModel:
    trees: list[_Node]
    psi: int
    n_trees: int


def confidence_rank(top_conf) -> Ranking:
    return Ranking(scores=np.asarray(top_conf, dtype=np.float64), method="confidence")


def _avg_path(size: int) -> float:
    """Average unsuccessful-search path length c(n) in a BST of n points."""
    if size <= 1:
        return 0.0
    if size == 2:
        return 1.0
    return 2.0 * (math.log(size - 1) + EULER_GAMMA) - 2.0 * (size - 1) / size


def _grow(X: np.ndarray, depth: int, max_depth: int, rng) -> _Node:
    n = X.shape[0]
    if depth >= max_depth or n <= 1:
        return _Node(size=n)
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    usable = np.flatnonzero(hi > lo)
    if usable.size == 0:  # all duplicate points
        return _Node(size=n)
    feat = int(rng.choice(usable))
    split = float(rng.uniform(lo[feat], hi[feat]))
    mask = X[:, feat] < split
    return _Node(
        feature=feat,
        value=split,
        size=n,
        left=_grow(X[mask], depth + 1, max_depth, rng),
        right=_grow(X[~mask], depth + 1, max_depth, rng),
    )


def iforest_fit(embeddings: np.ndarray, trees: int = 100, psi: int = 256,
                seed: int = 0) -> IsolationForestModel:
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("isolation forest needs at least 2 instances")
    if X.shape[1] == 0:
        raise ValueError("isolation forest needs embed_dim > 0")
    psi = min(psi, X.shape[0])
    if psi < 2:
        raise ValueError("subsample size must be >= 2")
    max_depth = math.ceil(math.log2(psi))
    rng = np.random.default_rng(seed)
    grown = []
    for _ in range(trees):
        idx = rng.choice(X.shape[0], size=psi, replace=False)
        grown.append(_grow(X[idx], 0, max_depth, rng))
    return IsolationForestModel(trees=grown, psi=psi, n_trees=trees)


def _path_length(node: _Node, x: np.ndarray) -> float:
    depth = 0
    while node.feature >= 0:
        node = node.left if x[node.feature] < node.value else node.right
        depth += 1
    return depth + _avg_path(node.size)


def iforest_score(model: IsolationForestModel, embedding: np.ndarray):
    """Typicality score -2^(-E[path]/c(psi)); higher means more typical."""
    X = np.asarray(embedding, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    c = _avg_path(model.psi)
    paths = np.array([
        np.mean([_path_length(t, x) for t in model.trees]) for x in X
    ])
    scores = -np.power(2.0, -paths / c)
    return float(scores[0]) if single else scores


def iforest_rank(model: IsolationForestModel, embeddings: np.ndarray) -> Ranking:
    return Ranking(scores=iforest_score(model, embeddings), method="iforest")


def mahalanobis_rank(embeddings: np.ndarray, eps: float = 1e-3) -> Ranking:
    """Scores -(x-mu)' (Sigma + eps I)^-1 (x-mu); higher = more typical."""
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] == 0:
        raise ValueError("mahalanobis ranking needs >= 2 instances and embed_dim > 0")
    mu = X.mean(axis=0)
    centered = X - mu
    cov = centered.T @ centered / (X.shape[0] - 1)
    cov[np.diag_indices_from(cov)] += eps
    sol = np.linalg.solve(cov, centered.T)
    d2 = np.einsum("ij,ji->i", centered, sol)
    return Ranking(scores=-d2, method="mahalanobis")


def select_at_coverage(ranking: Ranking, beta: float) -> np.ndarray:
    """Boolean mask keeping exactly ceil(beta*n) top-scored; ties to lower index."""
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"coverage must be in (0, 1], got {beta}")
    n = ranking.scores.size
    keep = int(math.ceil(beta * n - 1e-9))
    order = np.argsort(-ranking.scores, kind="stable")
    mask = np.zeros(n, dtype=bool)
    mask[order[:keep]] = True
    return mask
