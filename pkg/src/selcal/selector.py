"""Soft selector MLP over embeddings, thresholding, and the coverage bound.

The selector is a ReLU MLP with a scalar sigmoid output. Forward/backward are
written directly in numpy so gradients are exact and dependency-free; the
backward pass consumes the activation cache produced by the forward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class SelectorParams:
    weights: list[np.ndarray]  # layer l: (fan_in, fan_out)
    biases: list[np.ndarray]   # layer l: (fan_out,)
    hidden_dims: list[int]
    tau: float | None = None

    @property
    def embed_dim(self) -> int:
        return self.weights[0].shape[0]

    def copy(self) -> "SelectorParams":
        return SelectorParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            hidden_dims=list(self.hidden_dims),
            tau=self.tau,
        )

    def flat(self) -> list[np.ndarray]:
        return self.weights + self.biases


@dataclass
class CoverageBound:
    beta_tilde: float
    epsilon: float
    delta: float
    n_u: int

    @property
    def interval(self) -> tuple[float, float]:
        return (self.beta_tilde - self.epsilon, self.beta_tilde + self.epsilon)


def init_selector(embed_dim: int, hidden_dims: list[int], seed: int) -> SelectorParams:
    """Glorot-uniform weights, zero biases, so the initial score is near 0.5."""
    if embed_dim < 1:
        raise ValueError("selector needs embed_dim >= 1")
    rng = np.random.default_rng(seed)
    dims = [embed_dim, *hidden_dims, 1]
    weights, biases = [], []
    for fi, fo in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (fi + fo))
        weights.append(rng.uniform(-bound, bound, size=(fi, fo)))
        biases.append(np.zeros(fo))
    return SelectorParams(weights=weights, biases=biases, hidden_dims=list(hidden_dims))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def selector_forward(params: SelectorParams, X: np.ndarray, return_cache: bool = False):
    """Scores in (0,1) for a batch of embeddings (n, embed_dim)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != params.embed_dim:
        raise ValueError(
            f"embedding dim {X.shape[1]} does not match selector input dim "
            f"{params.embed_dim}"
        )
    acts = [X]
    h = X
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    z = h @ params.weights[-1] + params.biases[-1]
    scores = _sigmoid(z[:, 0])
    if return_cache:
        return scores, (acts, scores)
    return scores


def selector_backward(params: SelectorParams, cache, dscore: np.ndarray):
    """Exact reverse-mode gradients of sum_i dscore_i * score_i.

    Returns (weight_grads, bias_grads) matching the parameter shapes.
    """
    acts, scores = cache
    if len(dscore) != len(scores):
        raise ValueError("upstream gradient length does not match the cached batch")
    dz = (dscore * scores * (1.0 - scores))[:, None]
    w_grads = [np.zeros_like(w) for w in params.weights]
    b_grads = [np.zeros_like(b) for b in params.biases]
    delta = dz
    for layer in range(len(params.weights) - 1, -1, -1):
        w_grads[layer] = acts[layer].T @ delta
        b_grads[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer].T) * (acts[layer] > 0)
    return w_grads, b_grads


def choose_threshold(scores: np.ndarray, beta: float) -> float:
    """Smallest tau with fraction(scores >= tau) >= beta; ties all accepted."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("cannot choose a threshold from empty scores")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"target coverage must be in (0, 1], got {beta}")
    n = scores.size
    keep = int(math.ceil(beta * n - 1e-9))
    k = n - keep  # 0-based index of tau in the ascending sort
    return float(np.sort(scores, kind="stable")[k])


def coverage_bound(beta_tilde: float, n_u: int, delta: float) -> CoverageBound:
    """Hoeffding radius eps = sqrt(log(2/delta) / (2 n_u)) around beta_tilde."""
    if n_u < 1:
        raise ValueError("tuning-set size must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"failure probability must be in (0, 1), got {delta}")
    eps = math.sqrt(math.log(2.0 / delta) / (2.0 * n_u))
    return CoverageBound(beta_tilde=float(beta_tilde), epsilon=eps, delta=delta, n_u=n_u)
