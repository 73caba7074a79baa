"""Training losses: S-TLBCE, S-MCE, S-MMCE, the coverage loss, and their sum.

Every loss comes in two flavours: a plain value, and a *_with_grads variant
returning analytic partial derivatives with respect to the selector scores g
and the recalibrated confidences h (or true-class probabilities for S-MCE).
Confidences are clamped to [1e-7, 1-1e-7] before logs; the clamp zeroes the
gradient outside that range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONF_CLAMP = 1e-7
MEAN_G_FLOOR = 1e-3

LOSS_KINDS = ("s-tlbce", "s-mce", "s-mmce")


@dataclass
class LossConfig:
    kind: str = "s-tlbce"
    q: float = 2.0
    kernel_bandwidth: float = 0.2
    lam: float = 32.0          # coverage weight, "lambda" in the JSON config
    beta: float = 0.8          # target coverage
    drop_denominator: bool = True

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.q < 1:
            raise ValueError(f"S-MMCE exponent must be >= 1, got {self.q}")
        if self.kernel_bandwidth <= 0:
            raise ValueError("kernel bandwidth must be positive")
        if self.lam < 0:
            raise ValueError("coverage weight must be >= 0")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"target coverage must be in (0, 1], got {self.beta}")


def _check_lengths(*arrays):
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError(f"length mismatch: {[len(a) for a in arrays]}")
    if n == 0:
        raise ValueError("empty batch")
    return n


def _as_arrays(*arrays):
    return tuple(np.asarray(a, dtype=np.float64) for a in arrays)


def _clamp(h: np.ndarray) -> np.ndarray:
    return np.clip(h, CONF_CLAMP, 1.0 - CONF_CLAMP)


def s_tlbce(g: np.ndarray, h: np.ndarray, correct: np.ndarray) -> float:
    """-(1/n) sum_i g_i [y_i log h_i + (1-y_i) log(1-h_i)]."""
    return s_tlbce_with_grads(g, h, correct)[0]


def s_tlbce_with_grads(g, h, correct):
    n = _check_lengths(g, h, correct)
    g, h, correct = _as_arrays(g, h, correct)
    hc = _clamp(h)
    bce = -(correct * np.log(hc) + (1 - correct) * np.log(1 - hc))
    value = float(np.sum(g * bce) / n)
    dg = bce / n
    dh = g * -(correct / hc - (1 - correct) / (1 - hc)) / n
    dh = np.where((h >= CONF_CLAMP) & (h <= 1 - CONF_CLAMP), dh, 0.0)
    return value, dg, dh


def s_mce(g: np.ndarray, probs: np.ndarray, labels: np.ndarray) -> float:
    """-(1/n) sum_i g_i log probs[i, labels[i]]."""
    return s_mce_with_grads(g, probs, labels)[0]


def s_mce_with_grads(g, probs, labels):
    """Returns (value, d/dg, d/dp_y) where p_y is the true-class probability."""
    n = _check_lengths(g, probs, labels)
    p_y = np.asarray(probs, dtype=np.float64)[np.arange(n), np.asarray(labels)]
    return weighted_nll_with_grads(g, p_y)


def weighted_nll_with_grads(g, p_y):
    """-(1/n) sum_i g_i log p_i with gradients in g and p."""
    n = _check_lengths(g, p_y)
    g, p_y = _as_arrays(g, p_y)
    pc = _clamp(p_y)
    nll = -np.log(pc)
    value = float(np.sum(g * nll) / n)
    dg = nll / n
    dpy = np.where(
        (p_y >= CONF_CLAMP) & (p_y <= 1 - CONF_CLAMP),
        -g / pc / n,
        0.0,
    )
    return value, dg, dpy


def s_mmce(g, h, correct, q: float = 2.0, bandwidth: float = 0.2) -> float:
    """Kernel pairwise loss [ (1/n^2) sum_ij r_i r_j g_i g_j phi(h_i,h_j) ]^(1/q)."""
    return s_mmce_with_grads(g, h, correct, q=q, bandwidth=bandwidth)[0]


def s_mmce_with_grads(g, h, correct, q: float = 2.0, bandwidth: float = 0.2):
    n = _check_lengths(g, h, correct)
    g, h, correct = _as_arrays(g, h, correct)
    resid = np.abs(correct - h)      # in (0,1): correct is 0/1 and h is clamped upstream
    r = resid**q
    phi = np.exp(-np.abs(h[:, None] - h[None, :]) / bandwidth)
    kern = (r * g)[:, None] * (r * g)[None, :] * phi
    S = float(kern.sum())
    value = (S / n**2) ** (1.0 / q)
    if S <= 0.0:
        return 0.0, np.zeros(n), np.zeros(n)
    # dS/dg_i = 2 r_i sum_j r_j g_j phi_ij  (diagonal included, phi_ii = 1)
    rg = r * g
    dS_dg = 2.0 * r * (phi @ rg)
    dr = q * resid ** (q - 1) * np.sign(h - correct)
    dphi_sign = -np.sign(h[:, None] - h[None, :]) / bandwidth
    dS_dh = 2.0 * dr * g * (phi @ rg) + 2.0 * rg * ((phi * dphi_sign) @ rg)
    scale = (1.0 / q) * (S / n**2) ** (1.0 / q - 1.0) / n**2
    return value, scale * dS_dg, scale * dS_dh


def coverage_loss(g: np.ndarray, beta: float) -> float:
    """(beta - mean(g))^2."""
    return coverage_loss_with_grads(g, beta)[0]


def coverage_loss_with_grads(g, beta):
    (g,) = _as_arrays(g)
    if g.size == 0:
        raise ValueError("empty selector-score vector")
    gap = beta - float(g.mean())
    value = gap * gap
    dg = np.full(g.size, -2.0 * gap / g.size)
    return value, dg


def total_loss(
    sel_value: float,
    cov_value: float,
    lam: float,
    mean_g: float | None = None,
    drop_denominator: bool = True,
) -> float:
    """sel + lam * cov; without drop_denominator, sel is divided by mean(g)."""
    if not drop_denominator:
        if mean_g is None:
            raise ValueError("mean selector score is required when keeping the denominator")
        sel_value = sel_value / max(mean_g, MEAN_G_FLOOR)
    return float(sel_value + lam * cov_value)
