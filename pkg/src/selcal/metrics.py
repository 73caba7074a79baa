"""Evaluation quantities: ECE_q over equal-mass bins, Brier score, selective
evaluation under a trained model, coverage-AUC curves, reliability tables.

ECE_q sorts instances by confidence, splits them into m contiguous groups
whose sizes differ by at most one (larger groups at the low-confidence end),
and takes the q-power mean of per-bin |accuracy - mean confidence| gaps.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .binning import group_slices
from .dataset import CalibrationDataset, derive
from .errors import ValidationError
from .recalibrate import recalibrated_top_conf
from .selector import choose_threshold, selector_forward
from .train import TrainedModel

DEFAULT_BINS = 15

_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2.0 fallback


@dataclass
class BinTable:
    mean_conf: np.ndarray
    accuracy: np.ndarray
    count: np.ndarray

    def rows(self):
        return list(zip(self.mean_conf, self.accuracy, self.count))


@dataclass
class EvalReport:
    beta_target: float
    coverage_achieved: float
    tau: float
    ece1: float
    ece2: float
    brier: float
    selective_accuracy: float
    n_accepted: int
    bins: BinTable
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "beta_target": self.beta_target,
            "coverage_achieved": self.coverage_achieved,
            "tau": self.tau,
            "ece1": self.ece1,
            "ece2": self.ece2,
            "brier": self.brier,
            "selective_accuracy": self.selective_accuracy,
            "n_accepted": self.n_accepted,
            "bins": [
                {"bin_index": i, "mean_conf": float(c), "accuracy": float(a), "count": int(k)}
                for i, (c, a, k) in enumerate(self.bins.rows())
            ],
            "flags": self.flags,
        }


@dataclass
class CoverageCurve:
    betas: np.ndarray
    ece1: np.ndarray
    ece2: np.ndarray
    brier: np.ndarray
    accuracy: np.ndarray
    auc: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "betas": self.betas.tolist(),
            "ece1": self.ece1.tolist(),
            "ece2": self.ece2.tolist(),
            "brier": self.brier.tolist(),
            "accuracy": self.accuracy.tolist(),
            "auc": self.auc,
        }


def _sorted_groups(top_conf: np.ndarray, correct: np.ndarray, m: int):
    conf = np.asarray(top_conf, dtype=np.float64)
    corr = np.asarray(correct, dtype=np.float64)
    if conf.shape != corr.shape or conf.ndim != 1:
        raise ValueError("confidences and correctness must be equal-length vectors")
    order = np.argsort(conf, kind="stable")
    return conf[order], corr[order], group_slices(len(conf), m)


def reliability_bins(top_conf, correct, m: int = DEFAULT_BINS) -> BinTable:
    """Per equal-mass bin: mean confidence, accuracy, member count."""
    cs, ys, slices = _sorted_groups(top_conf, correct, m)
    mean_conf = np.array([cs[s].mean() for s in slices])
    accuracy = np.array([ys[s].mean() for s in slices])
    count = np.array([s.stop - s.start for s in slices])
    return BinTable(mean_conf=mean_conf, accuracy=accuracy, count=count)


def ece(top_conf, correct, q: float = 1.0, m: int = DEFAULT_BINS) -> float:
    """Equal-mass expected calibration error with exponent q."""
    table = reliability_bins(top_conf, correct, m)
    gaps = np.abs(table.accuracy - table.mean_conf)
    return float(np.mean(gaps**q) ** (1.0 / q))


def brier(top_conf, correct) -> float:
    """Top-label Brier score: mean squared (confidence - correctness)."""
    conf = np.asarray(top_conf, dtype=np.float64)
    if conf.size == 0:
        raise ValueError("empty input")
    return float(np.mean((conf - np.asarray(correct, dtype=np.float64)) ** 2))


def selective_eval(model: TrainedModel, d: CalibrationDataset, beta: float,
                   m: int = DEFAULT_BINS, tau: float | None = None) -> EvalReport:
    """Score, threshold at target coverage, recalibrate, evaluate the accepted.

    When tau is given (e.g. chosen on a separate tuning split) it is used as
    is; otherwise it is chosen on this dataset's scores.
    """
    if d.n == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    der = derive(d)
    scores = selector_forward(model.selector, d.embeddings)
    if tau is None:
        tau = choose_threshold(scores, beta)
    accepted = scores >= tau
    n_acc = int(accepted.sum())
    if n_acc == 0:
        raise ValidationError("threshold rejects every instance")
    coverage = n_acc / d.n

    flags = []
    if n_acc > int(np.ceil(beta * d.n - 1e-9)):
        flags.append("degenerate_threshold_ties")
    if coverage < beta:
        flags.append("coverage_below_target")

    h = recalibrated_top_conf(model.recalibrator, d)[accepted]
    correct = der.correct[accepted]
    m_eff = min(m, n_acc)
    if m_eff < m:
        flags.append(f"bins_reduced_to_{m_eff}")

    bins = reliability_bins(h, correct, m_eff)
    gaps = np.abs(bins.accuracy - bins.mean_conf)
    return EvalReport(
        beta_target=beta,
        coverage_achieved=coverage,
        tau=tau,
        ece1=float(np.mean(gaps)),
        ece2=float(np.sqrt(np.mean(gaps**2))),
        brier=brier(h, correct),
        selective_accuracy=float(correct.mean()),
        n_accepted=n_acc,
        bins=bins,
        flags=flags,
    )


def _thread_cap() -> int:
    raw = os.environ.get("SELCAL_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    return cap if cap > 0 else (os.cpu_count() or 1)


def coverage_auc(model: TrainedModel, d: CalibrationDataset, grid,
                 m: int = DEFAULT_BINS) -> CoverageCurve:
    """Selective evaluation over a beta grid plus normalized trapezoid AUCs."""
    betas = np.asarray(list(grid), dtype=np.float64)
    if betas.size == 0:
        raise ValueError("empty beta grid")
    if np.any(betas < 0.5) or np.any(betas > 1.0):
        raise ValueError("beta grid must lie within [0.5, 1.0]")
    if betas.size > 1 and np.any(np.diff(betas) <= 0):
        raise ValueError("beta grid must be strictly increasing")

    workers = min(_thread_cap(), betas.size)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda b: selective_eval(model, d, b, m), betas))
    else:
        reports = [selective_eval(model, d, b, m) for b in betas]

    cols = {
        "ece1": np.array([r.ece1 for r in reports]),
        "ece2": np.array([r.ece2 for r in reports]),
        "brier": np.array([r.brier for r in reports]),
        "accuracy": np.array([r.selective_accuracy for r in reports]),
    }
    auc = {name: normalized_trapezoid(betas, vals) for name, vals in cols.items()}
    return CoverageCurve(betas=betas, auc=auc, **{k: v for k, v in cols.items()})


def normalized_trapezoid(betas: np.ndarray, values: np.ndarray) -> float:
    """Trapezoid integral divided by the grid span; a constant maps to itself."""
    betas = np.asarray(betas, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    span = betas[-1] - betas[0]
    if span == 0:
        return float(values[0])
    return float(_trapezoid(values, betas) / span)
